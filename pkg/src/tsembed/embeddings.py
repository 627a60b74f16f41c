"""Skipgram-with-negative-sampling trainer with topic-sensitive targets.

Four target representations share one objective:

* ``sge``: plain skipgram, one input row per word.
* ``htle``: one input row per observed (word, topic) pair; the target uses
  the row of its labeled pair.
* ``htleadd``: the pair row plus a generic per-word row; both receive the
  full gradient.
* ``stle``: a dense (word, topic) table; the target is the document-topic
  weighted sum of the word's rows and gradients are scaled by the weights.

Context (output) rows are always indexed by plain words. Training is
deterministic for a fixed seed in single-threaded mode; the multi-threaded
mode applies unsynchronized updates and is not reproducible.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from .corpus import Corpus, keep_probabilities, negative_table

__all__ = [
    "VARIANTS",
    "TrainConfig",
    "EmbeddingModel",
    "embed_target",
    "sgns_gradients",
    "sgns_step",
    "train",
    "nearest_neighbors",
    "load_model",
]

VARIANTS = ("sge", "htle", "htleadd", "stle")
_VARIANT_CODE = {v: i for i, v in enumerate(VARIANTS)}

_MAGIC = b"TSE1"
_FORMAT_VERSION = 1

TopicInfo = Union[None, int, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 100
    window: int = 10
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 1
    variant: str = "sge"
    stle_top_m: int = 10  # <= 0 means update every topic with nonzero probability
    subsample: float = 1e-4  # <= 0 disables subsampling
    negative_power: float = 0.75
    threads: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


class EmbeddingModel:
    """Trained lookup tables plus the word list they are indexed by.

    ``input_topic`` holds one row per (word, topic) entry: for htle/htleadd
    the observed pairs sorted by (word, topic), for stle the dense table in
    row order word * n_topics + topic. ``n_topics`` is 0 for sge.
    """

    def __init__(self, variant: str, dim: int, n_topics: int, words: list[str],
                 input_topic: Optional[np.ndarray],
                 input_generic: Optional[np.ndarray],
                 output: np.ndarray,
                 pair_key: Optional[np.ndarray] = None,
                 pair_counts: Optional[np.ndarray] = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.dim = dim
        self.n_topics = n_topics
        self.words = list(words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.input_topic = input_topic
        self.input_generic = input_generic
        self.output = output
        self.pair_key = pair_key  # word * n_topics + topic, sorted ascending
        self.pair_counts = pair_counts
        self.epoch_losses: list[float] = []
        self._nn_cache = None
        self._validate()

    def _validate(self):
        v = len(self.words)
        if self.output.shape != (v, self.dim):
            raise ValueError("output table shape mismatch")
        if self.variant == "sge":
            if self.input_generic is None or self.input_topic is not None:
                raise ValueError("sge needs a generic table and no topic table")
        elif self.variant == "htle":
            if self.input_topic is None or self.input_generic is not None:
                raise ValueError("htle needs a topic table and no generic table")
        elif self.variant == "htleadd":
            if self.input_topic is None or self.input_generic is None:
                raise ValueError("htleadd needs both topic and generic tables")
        else:
            if self.input_topic is None or self.input_generic is not None:
                raise ValueError("stle needs a dense topic table and no generic table")
            if self.input_topic.shape[0] != v * self.n_topics:
                raise ValueError("stle topic table must have vocab_size * n_topics rows")
        if self.variant in ("htle", "htleadd"):
            if self.pair_key is None or self.pair_counts is None:
                raise ValueError(f"{self.variant} needs pair keys and counts")
            if len(self.pair_key) != self.input_topic.shape[0]:
                raise ValueError("pair keys and topic table disagree on entry count")
        for name, table in (("input_topic", self.input_topic),
                            ("input_generic", self.input_generic),
                            ("output", self.output)):
            if table is not None and not np.isfinite(table).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def vocab_size(self) -> int:
        return len(self.words)

    def word_id(self, word: str) -> int:
        wid = self.word_index.get(word)
        if wid is None:
            raise KeyError(f"OOV word {word!r}")
        return wid

    def _check_word(self, word_id: int) -> None:
        if not 0 <= word_id < self.vocab_size:
            raise ValueError(f"OOV word id {word_id}")

    def _check_topic(self, topic: int) -> None:
        if not 0 <= topic < self.n_topics:
            raise ValueError(f"topic {topic} out of range [0, {self.n_topics})")

    def pair_row(self, word_id: int, topic: int) -> int:
        """Row index of the (word, topic) entry, -1 if it was never observed."""
        self._check_word(word_id)
        self._check_topic(topic)
        if self.variant == "stle":
            return word_id * self.n_topics + topic
        key = word_id * self.n_topics + topic
        pos = int(np.searchsorted(self.pair_key, key))
        if pos < len(self.pair_key) and self.pair_key[pos] == key:
            return pos
        return -1

    def word_pair_rows(self, word_id: int) -> np.ndarray:
        """All topic-entry rows belonging to a word (empty for sge)."""
        self._check_word(word_id)
        if self.variant == "sge":
            return np.empty(0, dtype=np.int64)
        if self.variant == "stle":
            start = word_id * self.n_topics
            return np.arange(start, start + self.n_topics, dtype=np.int64)
        lo = int(np.searchsorted(self.pair_key, word_id * self.n_topics))
        hi = int(np.searchsorted(self.pair_key, (word_id + 1) * self.n_topics))
        return np.arange(lo, hi, dtype=np.int64)

    def modal_row(self, word_id: int) -> int:
        """The word's most frequently labeled pair row (lowest topic on ties).

        Used as the fallback for (word, topic) pairs never seen in training.
        """
        rows = self.word_pair_rows(word_id)
        if len(rows) == 0:
            raise ValueError(f"word id {word_id} has no trained topic entries")
        counts = self.pair_counts[rows]
        return int(rows[int(np.argmax(counts))])

    # -- persistence --------------------------------------------------------

    def save(self, path: str) -> None:
        p = 0 if self.input_topic is None else self.input_topic.shape[0]
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sBBqqqq", _MAGIC, _FORMAT_VERSION,
                                 _VARIANT_CODE[self.variant], self.dim,
                                 self.n_topics, self.vocab_size, p))
            for w in self.words:
                b = w.encode("utf-8")
                fh.write(struct.pack("<I", len(b)))
                fh.write(b)
            if self.variant in ("htle", "htleadd"):
                fh.write(self.pair_key.astype("<i8").tobytes())
                fh.write(self.pair_counts.astype("<i8").tobytes())
            if self.input_topic is not None:
                fh.write(self.input_topic.astype("<f8").tobytes(order="C"))
            if self.input_generic is not None:
                fh.write(self.input_generic.astype("<f8").tobytes(order="C"))
            fh.write(self.output.astype("<f8").tobytes(order="C"))

    def pair_entry_names(self) -> list[str]:
        """Names of the topic-entry rows, in table row order."""
        names = []
        if self.variant in ("htle", "htleadd"):
            for key in self.pair_key:
                names.append(f"{self.words[int(key) // self.n_topics]}#{int(key) % self.n_topics}")
        elif self.variant == "stle":
            for w in self.words:
                for k in range(self.n_topics):
                    names.append(f"{w}#{k}")
        return names

    def neighbor_space(self) -> tuple[list[str], np.ndarray]:
        """The input space used for neighbor queries: per-word rows for sge,
        per-pair target embeddings otherwise (htleadd pairs are realized as
        topic row + generic row, matching what the model uses as h)."""
        if self.variant == "sge":
            return list(self.words), self.input_generic
        names = self.pair_entry_names()
        if self.variant == "htleadd":
            pair_words = (self.pair_key // self.n_topics).astype(np.int64)
            return names, self.input_topic + self.input_generic[pair_words]
        return names, self.input_topic

    def save_text(self, path: str) -> None:
        """word2vec-style text dump of the raw tables: input entries first
        (topic entries as word#k, generic entries as the plain word), then
        one output row per word."""
        names = self.pair_entry_names()
        tables = [self.input_topic] if self.input_topic is not None else []
        if self.input_generic is not None:
            names = names + list(self.words)
            tables.append(self.input_generic)
        matrix = np.vstack(tables) if tables else np.empty((0, self.dim))
        total = len(names) + self.vocab_size
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{total} {self.dim}\n")
            for name, row in zip(names, matrix):
                fh.write(name + " " + " ".join(f"{x:.6f}" for x in row) + "\n")
            for name, row in zip(self.words, self.output):
                fh.write(name + " " + " ".join(f"{x:.6f}" for x in row) + "\n")


def load_model(path: str) -> EmbeddingModel:
    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize("<4sBBqqqq")
    if len(data) < head:
        raise ValueError(f"{path}: truncated embedding model file")
    magic, version, vcode, dim, n_topics, v, p = struct.unpack_from("<4sBBqqqq", data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an embedding model file (magic {magic!r}, expected {_MAGIC!r})")
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: file is format version {version}, this reader supports version {_FORMAT_VERSION}")
    if vcode >= len(VARIANTS):
        raise ValueError(f"{path}: unknown variant code {vcode}")
    variant = VARIANTS[vcode]
    off = head
    words = []
    for _ in range(v):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        words.append(data[off:off + n].decode("utf-8"))
        off += n

    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).copy()
        off += count * 8
        return arr

    pair_key = pair_counts = None
    if variant in ("htle", "htleadd"):
        pair_key = np.frombuffer(data, dtype="<i8", count=p, offset=off).copy()
        off += p * 8
        pair_counts = np.frombuffer(data, dtype="<i8", count=p, offset=off).copy()
        off += p * 8
    input_topic = take(p * dim).reshape(p, dim) if variant != "sge" else None
    input_generic = take(v * dim).reshape(v, dim) if variant in ("sge", "htleadd") else None
    output = take(v * dim).reshape(v, dim)
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} unexpected trailing bytes")
    return EmbeddingModel(variant, int(dim), int(n_topics), words, input_topic,
                          input_generic, output, pair_key, pair_counts)


# ---------------------------------------------------------------------------
# Target composition
# ---------------------------------------------------------------------------


def _check_distribution(model: EmbeddingModel, dist: np.ndarray) -> np.ndarray:
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 1 or len(d) != model.n_topics:
        raise ValueError(f"malformed distribution: expected {model.n_topics} entries, got shape {d.shape}")
    if not np.isfinite(d).all() or np.any(d < 0):
        raise ValueError("malformed distribution: entries must be finite and non-negative")
    return d


def embed_target(model: EmbeddingModel, word_id: int, topic_info: TopicInfo) -> np.ndarray:
    """Compose the target-side vector for a word in a topic context.

    ``topic_info`` is ignored for sge, a hard topic id for htle/htleadd, and
    either a hard topic id (point mass) or a length-K weight vector for stle.
    Hard-topic lookups of a pair never seen in training fall back to the
    word's most frequent trained pair (htle) or to the generic row alone
    (htleadd). The result is linear in an stle weight vector and is not
    renormalized, so unnormalized weights scale the output.
    """
    model._check_word(word_id)
    if model.variant == "sge":
        return model.input_generic[word_id].copy()
    if model.variant == "stle":
        if isinstance(topic_info, (int, np.integer)):
            model._check_topic(int(topic_info))
            return model.input_topic[word_id * model.n_topics + int(topic_info)].copy()
        if topic_info is None:
            raise TypeError("stle needs a topic id or a topic distribution")
        d = _check_distribution(model, topic_info)
        rows = model.input_topic[word_id * model.n_topics:(word_id + 1) * model.n_topics]
        return d @ rows
    if not isinstance(topic_info, (int, np.integer)):
        raise TypeError(f"{model.variant} needs a hard topic id, got {type(topic_info).__name__}")
    topic = int(topic_info)
    row = model.pair_row(word_id, topic)
    if model.variant == "htle":
        if row < 0:
            row = model.modal_row(word_id)
        return model.input_topic[row].copy()
    # htleadd
    if row < 0:
        return model.input_generic[word_id].copy()
    return model.input_topic[row] + model.input_generic[word_id]


# ---------------------------------------------------------------------------
# Single-step reference implementation
# ---------------------------------------------------------------------------


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _stle_weights(model: EmbeddingModel, topic_info: TopicInfo) -> tuple[np.ndarray, np.ndarray]:
    """Resolve stle topic_info to (topic ids, weights) with nonzero weights."""
    if isinstance(topic_info, (int, np.integer)):
        model._check_topic(int(topic_info))
        return np.array([int(topic_info)]), np.array([1.0])
    d = _check_distribution(model, topic_info)
    nz = np.flatnonzero(d)
    if len(nz) == 0:
        raise ValueError("malformed distribution: all weights are zero")
    return nz, d[nz]


def sgns_gradients(model: EmbeddingModel, word_id: int, topic_info: TopicInfo,
                   context_id: int, negative_ids: Sequence[int]):
    """Loss and exact joint gradients of one negative-sampling step.

    Returns ``(loss, grads)`` where grads maps ("output", row) and
    variant-specific input keys ("topic", row) / ("generic", word) to
    ascent directions. Duplicate sample rows are accumulated, so applying
    ``lr * grad`` reproduces the true joint update.
    """
    model._check_word(context_id)
    negative_ids = [int(x) for x in negative_ids]
    for x in negative_ids:
        model._check_word(x)
    h = embed_target(model, word_id, topic_info)
    rows = [int(context_id)] + negative_ids
    f = np.array([float(np.dot(model.output[r], h)) for r in rows])
    loss = -_log_sigmoid(f[0]) - sum(_log_sigmoid(-x) for x in f[1:])
    coef = np.array([(1.0 if s == 0 else 0.0) - _sigmoid(float(x)) for s, x in enumerate(f)])
    grads: dict[tuple[str, int], np.ndarray] = {}
    for s, r in enumerate(rows):
        key = ("output", r)
        g = coef[s] * h
        grads[key] = grads.get(key, 0.0) + g
    hgrad = np.zeros(model.dim)
    for s, r in enumerate(rows):
        hgrad += coef[s] * model.output[r]
    if model.variant == "sge":
        grads[("generic", word_id)] = hgrad
    elif model.variant == "htle":
        row = model.pair_row(word_id, int(topic_info))
        if row < 0:
            row = model.modal_row(word_id)
        grads[("topic", row)] = hgrad
    elif model.variant == "htleadd":
        row = model.pair_row(word_id, int(topic_info))
        if row >= 0:
            grads[("topic", row)] = hgrad
        grads[("generic", word_id)] = hgrad.copy()
    else:
        topics, weights = _stle_weights(model, topic_info)
        for k, p in zip(topics, weights):
            grads[("topic", word_id * model.n_topics + int(k))] = p * hgrad
    return float(loss), grads


def sgns_step(model: EmbeddingModel, word_id: int, topic_info: TopicInfo,
              context_id: int, negative_ids: Sequence[int], lr: float) -> float:
    """Apply one gradient-ascent step in place; returns the loss before it.

    ``lr`` = 0 leaves every table bit-identical.
    """
    loss, grads = sgns_gradients(model, word_id, topic_info, context_id, negative_ids)
    if lr != 0.0:
        for (table, idx), g in grads.items():
            if table == "output":
                model.output[idx] += lr * g
            elif table == "generic":
                model.input_generic[idx] += lr * g
            else:
                model.input_topic[idx] += lr * g
    return loss


# ---------------------------------------------------------------------------
# Training kernel
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _nb_sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _nb_log_sigmoid(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def _train_doc(variant, tokens, pair_rows, st_topics, st_probs, n_topics,
               inp_topic, inp_generic, output, b_widths, negs, lr):
    """SGD over every skipgram pair of one document.

    The target vector is rebuilt from the tables at each pair because its
    rows move under SGD. Gradients within a pair are computed jointly from
    the pre-update tables, then applied.
    """
    n = tokens.shape[0]
    dim = output.shape[1]
    negatives = negs.shape[1]
    h = np.empty(dim)
    hgrad = np.empty(dim)
    f = np.empty(negatives + 1)
    coef = np.empty(negatives + 1)
    rows = np.empty(negatives + 1, dtype=np.int64)
    n_st = st_topics.shape[0]
    loss = 0.0
    pair_idx = 0
    for i in range(n):
        w = tokens[i]
        b = b_widths[i]
        lo = i - b
        if lo < 0:
            lo = 0
        hi = i + b
        if hi > n - 1:
            hi = n - 1
        for j in range(lo, hi + 1):
            if j == i:
                continue
            if variant == 0:
                for dd in range(dim):
                    h[dd] = inp_generic[w, dd]
            elif variant == 1:
                r = pair_rows[i]
                for dd in range(dim):
                    h[dd] = inp_topic[r, dd]
            elif variant == 2:
                r = pair_rows[i]
                for dd in range(dim):
                    h[dd] = inp_topic[r, dd] + inp_generic[w, dd]
            else:
                for dd in range(dim):
                    h[dd] = 0.0
                for ti in range(n_st):
                    p = st_probs[ti]
                    r = w * n_topics + st_topics[ti]
                    for dd in range(dim):
                        h[dd] += p * inp_topic[r, dd]
            rows[0] = tokens[j]
            for s in range(negatives):
                rows[s + 1] = negs[pair_idx, s]
            for s in range(negatives + 1):
                acc = 0.0
                o_row = rows[s]
                for dd in range(dim):
                    acc += h[dd] * output[o_row, dd]
                f[s] = acc
            loss += -_nb_log_sigmoid(f[0])
            for s in range(1, negatives + 1):
                loss += -_nb_log_sigmoid(-f[s])
            if lr != 0.0:
                for s in range(negatives + 1):
                    label = 1.0 if s == 0 else 0.0
                    coef[s] = label - _nb_sigmoid(f[s])
                for dd in range(dim):
                    hgrad[dd] = 0.0
                for s in range(negatives + 1):
                    cs = coef[s]
                    o_row = rows[s]
                    for dd in range(dim):
                        hgrad[dd] += cs * output[o_row, dd]
                for s in range(negatives + 1):
                    cs = lr * coef[s]
                    o_row = rows[s]
                    for dd in range(dim):
                        output[o_row, dd] += cs * h[dd]
                if variant == 0:
                    for dd in range(dim):
                        inp_generic[w, dd] += lr * hgrad[dd]
                elif variant == 1:
                    r = pair_rows[i]
                    for dd in range(dim):
                        inp_topic[r, dd] += lr * hgrad[dd]
                elif variant == 2:
                    r = pair_rows[i]
                    for dd in range(dim):
                        g = lr * hgrad[dd]
                        inp_topic[r, dd] += g
                        inp_generic[w, dd] += g
                else:
                    for ti in range(n_st):
                        p = lr * st_probs[ti]
                        r = w * n_topics + st_topics[ti]
                        for dd in range(dim):
                            inp_topic[r, dd] += p * hgrad[dd]
            pair_idx += 1
    return loss


_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_F64 = np.empty(0, dtype=np.float64)
_EMPTY_2D = np.empty((0, 1), dtype=np.float64)


def _window_pair_count(n: int, widths: np.ndarray) -> int:
    idx = np.arange(n)
    return int(np.minimum(idx, widths).sum() + np.minimum(n - 1 - idx, widths).sum())


def _truncate_dist(row: np.ndarray, top_m: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the top_m most probable topics (all nonzero ones when top_m <= 0)
    and renormalize the kept mass."""
    nz = np.flatnonzero(row > 0)
    if len(nz) == 0:
        raise ValueError("document topic distribution has no positive entries")
    if top_m > 0 and len(nz) > top_m:
        # sort by descending probability, ties by topic id
        order = np.lexsort((nz, -row[nz]))
        nz = np.sort(nz[order[:top_m]])
    probs = row[nz] / row[nz].sum()
    return nz.astype(np.int64), probs


def train(corpus: Corpus,
          labeling: Optional[list[np.ndarray]] = None,
          doc_topics: Optional[np.ndarray] = None,
          config: TrainConfig = TrainConfig(),
          n_topics: Optional[int] = None) -> EmbeddingModel:
    """Train an embedding model over ``corpus``.

    htle/htleadd require ``labeling`` (per-document token topic arrays,
    congruent with the corpus); stle requires ``doc_topics`` (one
    distribution row per document). ``n_topics`` pins the topic count for
    hard variants; by default it is inferred from the labeling, which can
    undershoot the source topic model if its last topics never appear.
    """
    variant = config.variant
    vocab = corpus.vocab
    v = len(vocab)
    if v == 0:
        raise ValueError("empty vocabulary")
    docs = corpus.documents

    if variant in ("htle", "htleadd"):
        if labeling is None:
            raise ValueError(f"{variant} requires a topic labeling")
        if len(labeling) != len(docs):
            raise ValueError("labeling and corpus have different document counts")
        for doc, z in zip(docs, labeling):
            if len(z) != len(doc):
                raise ValueError(f"label/token length mismatch in document {doc.doc_id}")
        max_label = max((int(z.max()) for z in labeling if len(z)), default=-1)
        if max_label < 0:
            raise ValueError("labeling covers no tokens")
        k_total = n_topics if n_topics is not None else max_label + 1
        if max_label >= k_total:
            raise ValueError(f"labeling uses topic {max_label} but n_topics={k_total}")
    elif variant == "stle":
        if doc_topics is None:
            raise ValueError("stle requires document topic distributions")
        doc_topics = np.asarray(doc_topics, dtype=np.float64)
        if doc_topics.ndim != 2 or doc_topics.shape[0] != len(docs):
            raise ValueError("doc_topics must have one row per document")
        k_total = doc_topics.shape[1]
        if n_topics is not None and n_topics != k_total:
            raise ValueError(f"doc_topics has {k_total} topics but n_topics={n_topics}")
    else:
        k_total = 0

    rng = np.random.default_rng(config.seed)
    dim = config.dim

    # initialization draws happen in a fixed order: topic table, then generic
    pair_key = pair_counts = None
    input_topic = input_generic = None
    if variant in ("htle", "htleadd"):
        counts: dict[int, int] = {}
        for doc, z in zip(docs, labeling):
            for w, k in zip(doc.tokens, z):
                key = int(w) * k_total + int(k)
                counts[key] = counts.get(key, 0) + 1
        pair_key = np.array(sorted(counts), dtype=np.int64)
        pair_counts = np.array([counts[k] for k in pair_key], dtype=np.int64)
        input_topic = (rng.random((len(pair_key), dim)) - 0.5) / dim
    elif variant == "stle":
        input_topic = (rng.random((v * k_total, dim)) - 0.5) / dim
    if variant in ("sge", "htleadd"):
        input_generic = (rng.random((v, dim)) - 0.5) / dim
    output = np.zeros((v, dim))

    model = EmbeddingModel(variant, dim, k_total, vocab.tokens, input_topic,
                           input_generic, output, pair_key, pair_counts)

    # per-document precomputation shared by all epochs
    vcode = _VARIANT_CODE[variant]
    doc_pair_rows: list[np.ndarray] = []
    doc_st: list[tuple[np.ndarray, np.ndarray]] = []
    if variant in ("htle", "htleadd"):
        key_lookup = {int(k): i for i, k in enumerate(pair_key)}
        for doc, z in zip(docs, labeling):
            rows = np.array([key_lookup[int(w) * k_total + int(k)]
                             for w, k in zip(doc.tokens, z)], dtype=np.int64)
            doc_pair_rows.append(rows)
    elif variant == "stle":
        for d in range(len(docs)):
            doc_st.append(_truncate_dist(doc_topics[d], config.stle_top_m))

    keep = (keep_probabilities(vocab, config.subsample) if config.subsample > 0
            else np.ones(v))
    neg = negative_table(vocab, config.negative_power)
    total_tokens = sum(len(d) for d in docs)
    if total_tokens == 0:
        raise ValueError("empty corpus")
    total_work = config.epochs * total_tokens
    lr0 = config.learning_rate
    lr_floor = 1e-4 * lr0

    def run_docs(doc_ids, doc_rng, processed_start, per_thread_total):
        """One epoch pass over the given documents; returns (loss, processed)."""
        processed = processed_start
        loss = 0.0
        for d in doc_ids:
            toks = docs[d].tokens
            nd = len(toks)
            lr = max(lr_floor, lr0 * (1.0 - processed / per_thread_total))
            processed += nd
            if nd == 0:
                continue
            u = doc_rng.random(nd)
            kept = np.flatnonzero(u < keep[toks])
            m = len(kept)
            if m < 2:
                continue
            ktoks = toks[kept].astype(np.int64)
            widths = doc_rng.integers(1, config.window + 1, size=m)
            n_pairs = _window_pair_count(m, widths)
            if n_pairs == 0:
                continue
            negs = neg.draw(doc_rng, (n_pairs, config.negatives))
            if vcode in (1, 2):
                p_rows = doc_pair_rows[d][kept]
                st_t, st_p = _EMPTY_I64, _EMPTY_F64
            elif vcode == 3:
                p_rows = _EMPTY_I64
                st_t, st_p = doc_st[d]
            else:
                p_rows = _EMPTY_I64
                st_t, st_p = _EMPTY_I64, _EMPTY_F64
            loss += _train_doc(
                vcode, ktoks, p_rows, st_t, st_p, k_total,
                input_topic if input_topic is not None else _EMPTY_2D,
                input_generic if input_generic is not None else _EMPTY_2D,
                output, widths, negs, lr)
        return loss, processed

    if config.threads == 1:
        processed = 0
        for _ in range(config.epochs):
            loss, processed = run_docs(range(len(docs)), rng, processed, total_work)
            model.epoch_losses.append(loss)
    else:
        t = config.threads
        shards = [list(range(s, len(docs), t)) for s in range(t)]
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(t)]
        shard_totals = [config.epochs * sum(len(docs[d]) for d in shard) for shard in shards]
        processed = [0] * t
        for _ in range(config.epochs):
            epoch_loss = [0.0] * t
            workers = []

            def work(s):
                epoch_loss[s], processed[s] = run_docs(
                    shards[s], rngs[s], processed[s], max(1, shard_totals[s]))

            for s in range(t):
                th = threading.Thread(target=work, args=(s,))
                th.start()
                workers.append(th)
            for th in workers:
                th.join()
            model.epoch_losses.append(sum(epoch_loss))
    return model


# ---------------------------------------------------------------------------
# Nearest neighbors
# ---------------------------------------------------------------------------


def nearest_neighbors(model: EmbeddingModel, word_id: int, topic_info: TopicInfo,
                      k: int = 10) -> list[tuple[str, float]]:
    """Top-k input-space entries by cosine to the composed query vector.

    The query's own entry is excluded; a distribution (or fallback) query
    excludes every entry of the query word. Ties break by entry id and k is
    clamped to the number of candidates.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = embed_target(model, word_id, topic_info)
    if model._nn_cache is None:
        names, matrix = model.neighbor_space()
        norms = np.linalg.norm(matrix, axis=1)
        model._nn_cache = (names, matrix, norms)
    names, matrix, norms = model._nn_cache

    exclude: set[int]
    if model.variant == "sge":
        exclude = {word_id}
    elif model.variant == "stle" and not isinstance(topic_info, (int, np.integer)):
        exclude = {int(r) for r in model.word_pair_rows(word_id)}
    elif model.variant in ("htle", "htleadd", "stle"):
        row = model.pair_row(word_id, int(topic_info))
        if row >= 0:
            exclude = {row}
        else:
            # fallback query vector: drop all of the word's entries
            exclude = {int(r) for r in model.word_pair_rows(word_id)}
    qn = np.linalg.norm(query)
    if qn == 0.0:
        sims = np.zeros(len(names))
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = (matrix @ query) / (norms * qn)
        sims[norms == 0.0] = 0.0
    candidates = [i for i in range(len(names)) if i not in exclude]
    candidates.sort(key=lambda i: (-sims[i], i))
    return [(names[i], float(sims[i])) for i in candidates[:k]]
