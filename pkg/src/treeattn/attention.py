"""Attention pooling over every node of an induced tree.

Each of the 2n - 1 node hidden states is mapped into a shared embedding
space by a ReLU layer, scored by a learned row vector, and the softmax of
those scores weights the original hidden states into one sentence vector.
Because every node (leaves included) contributes, gradients reach the
input through many paths instead of only through the root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ShapeError, concat, glorot, matmul, relu, softmax, weighted_sum


@dataclass
class AttentionParams:
    embed_weight: Tensor  # (D_a, H)
    score_weight: Tensor  # (1, D_a)


@dataclass
class AttentionOutput:
    """Pooled sentence vector plus the weights and per-node embeddings.

    ``sentence`` is exactly the weight-vector-weighted sum of the input
    hidden states; weights are nonnegative and sum to one.
    """

    sentence: Tensor
    weights: Tensor
    embeddings: list[Tensor]


def attend(nodes: list[Tensor], params: AttentionParams) -> AttentionOutput:
    """Pool node hidden states into one sentence vector.

    The score exponentials are normalized through a max-subtracted
    softmax, which is mathematically identical but immune to overflow
    from unbounded logits.
    """
    if not nodes:
        raise ShapeError("attend: no nodes to pool")
    embeddings = [relu(matmul(params.embed_weight, h)) for h in nodes]
    logits = concat([matmul(params.score_weight, e) for e in embeddings])
    weights = softmax(logits)
    sentence = weighted_sum(nodes, weights)
    return AttentionOutput(sentence, weights, embeddings)


def init_attention_params(rng: np.random.Generator, d_attn: int, hidden: int) -> AttentionParams:
    return AttentionParams(glorot(rng, d_attn, hidden), glorot(rng, 1, d_attn))
