"""Corpus handling: tokenization, vocabulary, subsampling, negative sampling.

A corpus is plain text with one document per line. Tokens are lowercased,
split on whitespace, and stripped of surrounding punctuation. The vocabulary
assigns dense integer ids ordered by descending count.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

__all__ = [
    "tokenize",
    "Vocabulary",
    "build_vocab",
    "Document",
    "Corpus",
    "load_corpus",
    "corpus_from_lines",
    "keep_probability",
    "keep_probabilities",
    "NegativeTable",
    "negative_table",
]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token: str) -> str:
    start = 0
    end = len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(line: str) -> list[str]:
    """Lowercase, split on whitespace, and trim surrounding punctuation.

    Tokens that are empty after trimming (e.g. bare punctuation) are dropped.
    Internal punctuation such as hyphens and apostrophes is preserved.
    """
    out = []
    for raw in line.lower().split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


class Vocabulary:
    """Immutable token/id mapping with per-token counts.

    Ids are dense and ordered by descending count, ties broken by token
    string, so id 0 is always the most frequent token.
    """

    def __init__(self, tokens: list[str], counts: np.ndarray):
        if len(tokens) != len(counts):
            raise ValueError("tokens and counts must have equal length")
        self._tokens = list(tokens)
        self._counts = np.asarray(counts, dtype=np.int64).copy()
        if len(self._counts) and np.any(self._counts <= 0):
            raise ValueError("counts must be positive")
        self._index = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._total = int(self._counts.sum())

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        """Return the id for ``token``; KeyError if absent."""
        return self._index[token]

    def get(self, token: str) -> Optional[int]:
        return self._index.get(token)

    def token_of(self, word_id: int) -> str:
        if not 0 <= word_id < len(self._tokens):
            raise ValueError(f"unknown word id {word_id}")
        return self._tokens[word_id]

    def count(self, word_id: int) -> int:
        if not 0 <= word_id < len(self._tokens):
            raise ValueError(f"unknown word id {word_id}")
        return int(self._counts[word_id])

    @property
    def counts(self) -> np.ndarray:
        """Counts indexed by id (read-only view)."""
        v = self._counts.view()
        v.flags.writeable = False
        return v

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    @property
    def total_tokens(self) -> int:
        """Sum of all counts (corpus size after min-count filtering)."""
        return self._total

    def save(self, path: str) -> None:
        """Write ``token<TAB>count`` lines in id order (descending count)."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok, cnt in zip(self._tokens, self._counts):
                fh.write(f"{tok}\t{cnt}\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        tokens = []
        counts = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'token<TAB>count'")
                try:
                    cnt = int(parts[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: count is not an integer") from None
                tokens.append(parts[0])
                counts.append(cnt)
        prev = None
        for cnt in counts:
            if prev is not None and cnt > prev:
                raise ValueError(f"{path}: counts are not in descending order")
            prev = cnt
        return cls(tokens, np.asarray(counts, dtype=np.int64))


def build_vocab(lines: Iterable[str], min_count: int = 5) -> Vocabulary:
    """Count tokens across ``lines`` and keep those with count >= min_count."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    saw_any = False
    for line in lines:
        for tok in tokenize(line):
            saw_any = True
            counts[tok] = counts.get(tok, 0) + 1
    if not saw_any:
        raise ValueError("empty corpus")
    kept = [(tok, cnt) for tok, cnt in counts.items() if cnt >= min_count]
    if not kept:
        raise ValueError(f"no token reaches min_count={min_count}")
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    tokens = [tok for tok, _ in kept]
    arr = np.asarray([cnt for _, cnt in kept], dtype=np.int64)
    return Vocabulary(tokens, arr)


@dataclass
class Document:
    """One line of the corpus mapped to vocabulary ids (OOV tokens dropped)."""

    doc_id: int
    tokens: np.ndarray  # int32 word ids

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    vocab: Vocabulary
    documents: list[Document] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    @property
    def n_tokens(self) -> int:
        return sum(len(d) for d in self.documents)


def corpus_from_lines(lines: Iterable[str], vocab: Vocabulary) -> Corpus:
    """Map lines to id sequences against a fixed vocabulary.

    Out-of-vocabulary tokens are silently dropped; empty documents are kept
    so document ids stay aligned with input line numbers.
    """
    docs = []
    for doc_id, line in enumerate(lines):
        ids = [vocab.get(tok) for tok in tokenize(line)]
        arr = np.asarray([i for i in ids if i is not None], dtype=np.int32)
        docs.append(Document(doc_id, arr))
    return Corpus(vocab, docs)


def load_corpus(path: str, vocab: Vocabulary) -> Corpus:
    """Read a one-document-per-line file against ``vocab``.

    Raises ValueError naming the line number on undecodable input.
    """
    lines = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                lines.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid UTF-8 ({exc})") from None
    return corpus_from_lines(lines, vocab)


def keep_probability(vocab: Vocabulary, word_id: int, threshold: float = 1e-4) -> float:
    """Subsampling keep probability for one word.

    Words with frequency f above ``threshold`` t are kept with probability
    min(1, sqrt(t/f) + t/f); everything rarer is always kept.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    f = vocab.count(word_id) / vocab.total_tokens
    if f <= threshold:
        return 1.0
    return min(1.0, math.sqrt(threshold / f) + threshold / f)


def keep_probabilities(vocab: Vocabulary, threshold: float = 1e-4) -> np.ndarray:
    """Vector of keep probabilities indexed by word id."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    f = vocab.counts / vocab.total_tokens
    with np.errstate(divide="ignore"):
        p = np.sqrt(threshold / f) + threshold / f
    p = np.minimum(1.0, p)
    p[f <= threshold] = 1.0
    return p


class NegativeTable:
    """Draws negative samples from a fixed distribution over word ids."""

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(probs) == 0:
            raise ValueError("probs must be a non-empty 1-d array")
        if np.any(probs < 0) or not math.isclose(float(probs.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("probs must be non-negative and sum to 1")
        self.probs = probs
        self._cum = np.cumsum(probs)
        self._cum[-1] = 1.0  # guard against rounding past 1

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Sample word ids; deterministic given the generator state."""
        u = rng.random(size)
        return np.searchsorted(self._cum, u, side="right").astype(np.int64)


def negative_table(vocab: Vocabulary, power: float = 0.75) -> NegativeTable:
    """Unigram distribution raised to ``power`` and renormalized."""
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    if not 0 < power <= 1:
        raise ValueError("power must be in (0, 1]")
    w = vocab.counts.astype(np.float64) ** power
    return NegativeTable(w / w.sum())
