"""Binary parse trees over token sequences.

A tree over ``n`` leaves is stored as the ordered list of ``n - 1`` merge
decisions taken while reducing the sentence bottom-up: the decision at
layer ``t`` names the left member of the adjacent pair merged while
``n - t`` nodes remain.  Different merge orders can describe the same
bracketing, so equality is structural (leaf tokens plus constituent
spans), and parsing a bracketed string always yields the canonical
leftmost-first order.
"""

from __future__ import annotations

from dataclasses import dataclass


class TreeFormatError(ValueError):
    """Raised for malformed bracketed tree text."""


@dataclass(eq=False)
class BinaryTree:
    n: int
    merges: tuple[int, ...]
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        self.merges = tuple(self.merges)
        if self.tokens is not None:
            self.tokens = tuple(self.tokens)
        if self.n < 1:
            raise ValueError(f"tree needs at least one leaf, got n={self.n}")
        if len(self.merges) != self.n - 1:
            raise ValueError(
                f"expected {self.n - 1} merges for {self.n} leaves, got {len(self.merges)}")
        for t, pos in enumerate(self.merges):
            if not 0 <= pos < self.n - 1 - t:
                raise ValueError(
                    f"merge {t} at position {pos} outside [0, {self.n - 1 - t})")
        if self.tokens is not None and len(self.tokens) != self.n:
            raise ValueError(
                f"{len(self.tokens)} tokens for {self.n} leaves")

    def children(self) -> list[tuple[int, int] | None]:
        """Per node id: ``None`` for leaves, ``(left, right)`` otherwise.

        Node ids follow creation order: leaves are ``0..n-1``, the merge at
        layer ``t`` creates node ``n + t``; the root is the last node.
        """
        out: list[tuple[int, int] | None] = [None] * self.n
        active = list(range(self.n))
        for t, pos in enumerate(self.merges):
            out.append((active[pos], active[pos + 1]))
            active[pos:pos + 2] = [self.n + t]
        return out

    def span_set(self) -> frozenset[tuple[int, int]]:
        """Half-open leaf intervals of all internal nodes (width >= 2)."""
        spans = []
        kids = self.children()
        lo = list(range(self.n)) + [0] * (self.n - 1)
        hi = [i + 1 for i in range(self.n)] + [0] * (self.n - 1)
        for node in range(self.n, 2 * self.n - 1):
            left, right = kids[node]
            lo[node], hi[node] = lo[left], hi[right]
            spans.append((lo[node], hi[node]))
        return frozenset(spans)

    def leaf_depths(self) -> list[int]:
        """Edge count from the root to each leaf, in leaf order."""
        depth = [0] * (2 * self.n - 1)
        kids = self.children()
        for node in range(2 * self.n - 2, self.n - 1, -1):
            left, right = kids[node]
            depth[left] = depth[node] + 1
            depth[right] = depth[node] + 1
        return depth[: self.n]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryTree):
            return NotImplemented
        return (self.n == other.n and self.tokens == other.tokens
                and self.span_set() == other.span_set())

    def __hash__(self) -> int:
        return hash((self.n, self.tokens, self.span_set()))


def export_bracketed(tree: BinaryTree) -> str:
    """Whitespace-delimited bracketing, e.g. ``( ( w1 w2 ) w3 )``.

    Exact inverse of :func:`parse_bracketed` for binary trees.  Trees
    without tokens are rendered with placeholder leaves ``w1..wn``.
    """
    tokens = tree.tokens or tuple(f"w{i + 1}" for i in range(tree.n))
    kids = tree.children()

    def render(node: int) -> str:
        if node < tree.n:
            return tokens[node]
        left, right = kids[node]
        return f"( {render(left)} {render(right)} )"

    if tree.n == 1:
        return f"( {tokens[0]} )"
    return render(2 * tree.n - 2)


def parse_bracketed(line: str) -> tuple[BinaryTree, int]:
    """Parse one bracketed tree; returns (tree, count of binarized nodes).

    Tokens and parentheses must be whitespace-delimited.  Nodes with more
    than two children are left-binarized; unary wrappers are collapsed.
    Both count toward the second return value.
    """
    symbols = line.split()
    if not symbols:
        raise TreeFormatError("empty tree line")

    def parse_node(pos: int):
        if symbols[pos] == ")":
            raise TreeFormatError("unbalanced parentheses: unexpected ')'")
        if symbols[pos] != "(":
            return symbols[pos], pos + 1
        children = []
        pos += 1
        while pos < len(symbols) and symbols[pos] != ")":
            child, pos = parse_node(pos)
            children.append(child)
        if pos >= len(symbols):
            raise TreeFormatError("unbalanced parentheses: missing ')'")
        if not children:
            raise TreeFormatError("empty constituent '( )'")
        return children, pos + 1

    nested, end = parse_node(0)
    if end != len(symbols):
        raise TreeFormatError("trailing content after the root constituent")

    fixups = 0

    def binarize(node):
        nonlocal fixups
        if isinstance(node, str):
            return node
        kids = [binarize(child) for child in node]
        if len(kids) == 1:
            if isinstance(node, list) and node is not nested:
                fixups += 1
            return kids[0]
        while len(kids) > 2:
            kids[0:2] = [(kids[0], kids[1])]
            fixups += 1
        return (kids[0], kids[1])

    shape = binarize(nested)
    tokens: list[str] = []
    spans: set[tuple[int, int]] = set()

    def collect(node) -> tuple[int, int]:
        if isinstance(node, str):
            tokens.append(node)
            return len(tokens) - 1, len(tokens)
        left = collect(node[0])
        right = collect(node[1])
        span = (left[0], right[1])
        spans.add(span)
        return span

    collect(shape)
    n = len(tokens)
    merges: list[int] = []
    active = [(i, i + 1) for i in range(n)]
    while len(active) > 1:
        for pos in range(len(active) - 1):
            candidate = (active[pos][0], active[pos + 1][1])
            if candidate in spans:
                merges.append(pos)
                active[pos:pos + 2] = [candidate]
                break
        else:  # pragma: no cover - spans always admit a merge
            raise TreeFormatError("inconsistent constituent spans")
    return BinaryTree(n, tuple(merges), tuple(tokens)), fixups
