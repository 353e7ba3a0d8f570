"""Word-vector files, vocabularies, and corpus ingestion.

Three line-oriented formats are understood: embedding files ("word v1 ..
vD" per line), JSON-record corpora for sentence pairs and single
sentences, and bracketed-tree files (one tree per line).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor
from .trees import BinaryTree, TreeFormatError, parse_bracketed

log = logging.getLogger(__name__)

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class CorpusError(ValueError):
    """Malformed corpus or embedding input; message names the line."""


@dataclass
class Vocabulary:
    """Dense word <-> index mapping with reserved PAD(0) and UNK(1)."""

    index_to_word: list[str]
    word_to_index: dict[str, int]

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        index_to_word = [PAD_TOKEN, UNK_TOKEN, *words]
        word_to_index = {w: i for i, w in enumerate(index_to_word)}
        if len(word_to_index) != len(index_to_word):
            raise CorpusError("duplicate words in vocabulary")
        return cls(index_to_word, word_to_index)

    def __len__(self) -> int:
        return len(self.index_to_word)

    def lookup(self, word: str) -> int:
        return self.word_to_index.get(word, UNK_INDEX)

    def encode(self, tokens) -> list[int]:
        return [self.lookup(t) for t in tokens]


@dataclass
class EmbeddingMatrix:
    """Word vectors as one (vocab, dim) tensor; row 0 (PAD) stays zero."""

    vectors: Tensor
    trainable: bool = False

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class PairExample:
    premise: list[int]
    hypothesis: list[int]
    label: int


@dataclass
class SentenceExample:
    tokens: list[int]
    label: int


@dataclass
class LoadStats:
    """Counts of records that were skipped or repaired during loading."""

    skipped_empty: int = 0
    skipped_long: int = 0
    binarized: int = 0


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on Unicode whitespace."""
    return text.lower().split()


def load_embeddings(path, vocab_limit: int | None = None, seed: int = 0,
                    trainable: bool = False) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Read a "word v1 .. vD" file into a vocabulary and vector matrix.

    Vocabulary order follows file order after the two reserved slots.  The
    PAD row is zero; the UNK row is a seeded uniform(-0.05, 0.05) draw so
    reloading the same file with the same seed is bit-reproducible.
    """
    words: list[str] = []
    rows: list[np.ndarray] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise CorpusError(f"{path}:{lineno}: no vector components")
            elif len(values) != dim:
                raise CorpusError(
                    f"{path}:{lineno}: expected {dim} components, got {len(values)}")
            try:
                row = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as err:
                raise CorpusError(f"{path}:{lineno}: {err}") from None
            words.append(word)
            rows.append(row)
            if vocab_limit is not None and len(words) >= vocab_limit:
                break
    if not rows:
        raise CorpusError(f"{path}: empty embedding file")
    rng = np.random.default_rng(seed)
    unk = rng.uniform(-0.05, 0.05, size=dim)
    matrix = np.vstack([np.zeros(dim), unk, *rows])
    vocab = Vocabulary.from_words(words)
    return vocab, EmbeddingMatrix(Tensor(matrix, requires_grad=trainable), trainable)


def _iter_json_records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{path}:{lineno}: bad record: {err}") from None


def _label_index(path, lineno, record, labels) -> int:
    label = record.get("label")
    if label not in labels:
        raise CorpusError(
            f"{path}:{lineno}: unknown label {label!r} (expected one of {list(labels)})")
    return labels.index(label)


def load_pair_corpus(path, vocab: Vocabulary, labels,
                     max_combined_len: int = 120,
                     stats: LoadStats | None = None) -> list[PairExample]:
    """Load premise/hypothesis/label records, preserving file order.

    Records whose sentences tokenize to nothing, or whose combined token
    count exceeds ``max_combined_len``, are skipped and counted.
    """
    stats = stats if stats is not None else LoadStats()
    labels = list(labels)
    examples: list[PairExample] = []
    for lineno, record in _iter_json_records(path):
        label = _label_index(path, lineno, record, labels)
        premise = tokenize(str(record.get("premise", "")))
        hypothesis = tokenize(str(record.get("hypothesis", "")))
        if not premise or not hypothesis:
            stats.skipped_empty += 1
            continue
        if len(premise) + len(hypothesis) > max_combined_len:
            stats.skipped_long += 1
            continue
        examples.append(PairExample(vocab.encode(premise), vocab.encode(hypothesis), label))
    if stats.skipped_empty or stats.skipped_long:
        log.warning("%s: skipped %d empty and %d over-length records",
                    path, stats.skipped_empty, stats.skipped_long)
    return examples


def load_sentence_corpus(path, vocab: Vocabulary, labels,
                         max_len: int = 120,
                         stats: LoadStats | None = None) -> list[SentenceExample]:
    """Load sentence/label records; same conventions as the pair loader."""
    stats = stats if stats is not None else LoadStats()
    labels = list(labels)
    examples: list[SentenceExample] = []
    for lineno, record in _iter_json_records(path):
        label = _label_index(path, lineno, record, labels)
        tokens = tokenize(str(record.get("sentence", "")))
        if not tokens:
            stats.skipped_empty += 1
            continue
        if len(tokens) > max_len:
            stats.skipped_long += 1
            continue
        examples.append(SentenceExample(vocab.encode(tokens), label))
    if stats.skipped_empty or stats.skipped_long:
        log.warning("%s: skipped %d empty and %d over-length records",
                    path, stats.skipped_empty, stats.skipped_long)
    return examples


def load_tree_corpus(path, stats: LoadStats | None = None) -> list[BinaryTree]:
    """Load one bracketed tree per line; non-binary nodes are left-binarized."""
    stats = stats if stats is not None else LoadStats()
    trees: list[BinaryTree] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tree, fixups = parse_bracketed(line)
            except TreeFormatError as err:
                raise CorpusError(f"{path}:{lineno}: {err}") from None
            stats.binarized += fixups
            trees.append(tree)
    if stats.binarized:
        log.warning("%s: left-binarized %d non-binary nodes", path, stats.binarized)
    return trees
