"""Classification heads over pooled sentence vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (Tensor, ShapeError, absolute, add, concat, glorot, matmul,
                     mul, relu, sub)


@dataclass
class MlpParams:
    """One ReLU hidden layer plus a linear output layer."""

    hidden_weight: Tensor  # (D_clf, in_dim)
    hidden_bias: Tensor    # (D_clf,)
    out_weight: Tensor     # (num_classes, D_clf)
    out_bias: Tensor       # (num_classes,)


def featurize_pair(s1: Tensor, s2: Tensor) -> Tensor:
    """[s1, s2, |s1 - s2|, s1 * s2], dimension 4H."""
    if s1.shape != s2.shape:
        raise ShapeError(f"featurize_pair: shapes {s1.shape} and {s2.shape} differ")
    return concat([s1, s2, absolute(sub(s1, s2)), mul(s1, s2)])


def make_dropout_mask(rng: np.random.Generator, size: int, keep: float) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 or 1/keep."""
    if not 0 < keep <= 1:
        raise ValueError(f"keep probability must be in (0, 1], got {keep}")
    if keep == 1.0:
        return np.ones(size)
    return (rng.uniform(size=size) < keep) / keep


def classify(feature: Tensor, params: MlpParams,
             dropout_masks: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Logits for one feature vector.

    ``dropout_masks`` (input mask, hidden mask) are applied multiplicatively
    and are expected to carry the 1/keep scaling already; pass ``None`` at
    inference time.
    """
    x = feature
    if dropout_masks is not None:
        x = mul(x, Tensor(dropout_masks[0]))
    hidden = relu(add(matmul(params.hidden_weight, x), params.hidden_bias))
    if dropout_masks is not None:
        hidden = mul(hidden, Tensor(dropout_masks[1]))
    return add(matmul(params.out_weight, hidden), params.out_bias)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors; rejects zero vectors."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_similarity: zero vector")
    return float(np.dot(a, b) / (na * nb))


def init_mlp_params(rng: np.random.Generator, in_dim: int, d_clf: int,
                    num_classes: int) -> MlpParams:
    return MlpParams(glorot(rng, d_clf, in_dim),
                     Tensor(np.zeros(d_clf), requires_grad=True),
                     glorot(rng, num_classes, d_clf),
                     Tensor(np.zeros(num_classes), requires_grad=True))
