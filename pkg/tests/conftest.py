"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np

from treeattn.data import EmbeddingMatrix, Vocabulary
from treeattn.model import Model
from treeattn.tensor import Tensor, dot, finite_difference_check
from treeattn.trees import BinaryTree
from treeattn import tensor as T


def random_tree(rng: np.random.Generator, n: int, tokens=None) -> BinaryTree:
    """Uniformly random merge sequence over n leaves."""
    merges = tuple(int(rng.integers(0, n - 1 - t)) for t in range(n - 1))
    return BinaryTree(n, merges, tokens)


def oracle_spans(tree: BinaryTree) -> list[tuple[int, int]]:
    """Span extraction through an independent path: bracket counting over
    the exported string."""
    from treeattn.trees import export_bracketed
    stack, spans, position = [], [], 0
    for symbol in export_bracketed(tree).split():
        if symbol == "(":
            stack.append(position)
        elif symbol == ")":
            start = stack.pop()
            if position - start >= 2:
                spans.append((start, position))
        else:
            position += 1
    return spans


def oracle_f1(pred_tree: BinaryTree, ref_tree: BinaryTree) -> float:
    """Naive intersection count over the oracle span lists."""
    pred, ref = oracle_spans(pred_tree), oracle_spans(ref_tree)
    if pred_tree.n <= 2:
        return 100.0
    matches = sum(1 for s in pred if s in ref)
    if not pred or not ref or matches == 0:
        return 0.0
    p, r = matches / len(pred), matches / len(ref)
    return 200.0 * p * r / (p + r)


def tiny_pair_model(seed: int = 42, hidden: int = 8, d_attn: int = 6,
                    d_clf: int = 16, num_classes: int = 3, vocab_size: int = 10,
                    d_word: int = 5, leaf_kind: str = "affine",
                    task: str = "pair") -> Model:
    """Small randomly initialized model over a synthetic vocabulary."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_size)]
    vocab = Vocabulary.from_words(words)
    matrix = np.vstack([np.zeros(d_word),
                        rng.uniform(-0.05, 0.05, d_word),
                        rng.normal(0.0, 0.3, (vocab_size, d_word))])
    embedding = EmbeddingMatrix(Tensor(matrix), trainable=False)
    return Model.build(rng, task=task, num_classes=num_classes, hidden=hidden,
                       d_attn=d_attn, d_clf=d_clf, vocab=vocab,
                       embedding=embedding, leaf_kind=leaf_kind)


def op_gradient_cases(seed: int = 0):
    """(name, build) pairs where build(rng) returns (f, x): a scalar-valued
    function of one tensor plus the input to probe, with inputs kept away
    from the kinks of relu/abs and the domain edge of log."""
    def away_from_zero(rng, size):
        return rng.uniform(0.5, 1.5, size) * rng.choice([-1.0, 1.0], size)

    def via_dot(rng, size, op):
        r = rng.normal(size=size)
        return lambda x: dot(op(x), Tensor(r))

    cases = []

    def case(name):
        def wrap(fn):
            cases.append((name, fn))
            return fn
        return wrap

    @case("add")
    def _(rng):
        b = Tensor(rng.normal(size=6))
        return via_dot(rng, 6, lambda x: T.add(x, b)), Tensor(rng.normal(size=6))

    @case("sub")
    def _(rng):
        b = Tensor(rng.normal(size=6))
        return via_dot(rng, 6, lambda x: T.sub(x, b)), Tensor(rng.normal(size=6))

    @case("mul")
    def _(rng):
        b = Tensor(rng.normal(size=6))
        return via_dot(rng, 6, lambda x: T.mul(x, b)), Tensor(rng.normal(size=6))

    @case("abs")
    def _(rng):
        return via_dot(rng, 6, T.absolute), Tensor(away_from_zero(rng, 6))

    @case("matmul_vec")
    def _(rng):
        m = Tensor(rng.normal(size=(4, 6)))
        return via_dot(rng, 4, lambda x: T.matmul(m, x)), Tensor(rng.normal(size=6))

    @case("matmul_mat_left")
    def _(rng):
        b = Tensor(rng.normal(size=(5, 3)))
        r = Tensor(rng.normal(size=3))
        return (lambda x: T.mean(T.matmul(T.matmul(x, b), r)),
                Tensor(rng.normal(size=(4, 5))))

    @case("sigmoid")
    def _(rng):
        return via_dot(rng, 6, T.sigmoid), Tensor(rng.normal(size=6))

    @case("tanh")
    def _(rng):
        return via_dot(rng, 6, T.tanh), Tensor(rng.normal(size=6))

    @case("relu")
    def _(rng):
        return via_dot(rng, 6, T.relu), Tensor(away_from_zero(rng, 6))

    @case("exp")
    def _(rng):
        return via_dot(rng, 6, T.exp), Tensor(rng.normal(size=6))

    @case("log")
    def _(rng):
        return via_dot(rng, 6, T.log), Tensor(rng.uniform(0.2, 3.0, 6))

    @case("softmax")
    def _(rng):
        return via_dot(rng, 6, T.softmax), Tensor(rng.normal(size=6))

    @case("concat")
    def _(rng):
        b = Tensor(rng.normal(size=3))
        return via_dot(rng, 9, lambda x: T.concat([x, b])), Tensor(rng.normal(size=6))

    @case("weighted_sum_vectors")
    def _(rng):
        w = Tensor(rng.normal(size=3))
        vs = [Tensor(rng.normal(size=4)) for _ in range(2)]
        return (via_dot(rng, 4, lambda x: T.weighted_sum([x, *vs], w)),
                Tensor(rng.normal(size=4)))

    @case("weighted_sum_weights")
    def _(rng):
        vs = [Tensor(rng.normal(size=4)) for _ in range(3)]
        return (via_dot(rng, 4, lambda x: T.weighted_sum(vs, x)),
                Tensor(rng.normal(size=3)))

    @case("dot")
    def _(rng):
        b = Tensor(rng.normal(size=6))
        return lambda x: T.dot(x, b), Tensor(rng.normal(size=6))

    @case("mean")
    def _(rng):
        return T.mean, Tensor(rng.normal(size=(3, 4)))

    @case("cross_entropy")
    def _(rng):
        return lambda x: T.cross_entropy(x, 1), Tensor(rng.normal(size=5))

    @case("narrow")
    def _(rng):
        return via_dot(rng, 3, lambda x: T.narrow(x, 2, 3)), Tensor(rng.normal(size=8))

    @case("take_row")
    def _(rng):
        return via_dot(rng, 4, lambda x: T.take_row(x, 1)), Tensor(rng.normal(size=(3, 4)))

    return cases


def max_op_gradient_error(seed: int = 0, step: float = 1e-5) -> dict[str, float]:
    """Run the finite-difference check once per cataloged operation."""
    errors = {}
    for name, build in op_gradient_cases(seed):
        rng = np.random.default_rng(seed + hash(name) % 1000)
        f, x = build(rng)
        errors[name] = finite_difference_check(f, x, step)
    return errors
