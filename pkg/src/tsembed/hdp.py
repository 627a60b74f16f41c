"""Nonparametric topic model with collapsed Gibbs sampling.

The sampler uses the direct-assignment scheme: each token carries a topic
assignment, the number of topics grows as needed up to a cap, and global
topic weights are resampled each iteration from table counts simulated with
a Chinese-restaurant process. Trained models label new text by folding in
with the topic-word counts frozen.

All randomness is drawn from a single ``numpy.random.Generator`` outside the
compiled kernels, so runs are bit-reproducible for a given seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .corpus import Corpus, Vocabulary

__all__ = [
    "HdpConfig",
    "TopicModel",
    "SweepState",
    "train_hdp",
    "label_tokens",
    "infer_doc_topics",
    "label_corpus",
    "corpus_log_likelihood",
    "save_labeling",
    "load_labeling",
    "save_doc_topics",
    "load_doc_topics",
]

_MAGIC = b"HDP1"


@dataclass(frozen=True)
class HdpConfig:
    """Hyperparameters: top-level concentration, doc-level concentration,
    topic-word smoothing, and the topic cap."""

    gamma: float = 1.0
    alpha0: float = 1.0
    eta: float = 0.01
    max_topics: int = 500

    def __post_init__(self):
        if self.gamma <= 0 or self.alpha0 <= 0 or self.eta <= 0:
            raise ValueError("gamma, alpha0 and eta must be positive")
        if self.max_topics < 1:
            raise ValueError("max_topics must be >= 1")


class TopicModel:
    """Frozen topic-word counts plus global topic weights.

    ``beta`` is recomputed as each topic's share of assigned tokens, so a
    save/load round trip reproduces it exactly.
    """

    def __init__(self, topic_word_count: np.ndarray, config: HdpConfig):
        counts = np.ascontiguousarray(topic_word_count, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 1:
            raise ValueError("topic_word_count must be a non-empty 2-d array")
        if np.any(counts < 0):
            raise ValueError("topic_word_count must be non-negative")
        self.topic_word_count = counts
        self.config = config
        self.topic_count = counts.sum(axis=1)
        total = int(self.topic_count.sum())
        if total == 0:
            raise ValueError("topic model has no assigned tokens")
        self.beta = self.topic_count / total

    @property
    def n_topics(self) -> int:
        return self.topic_word_count.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.topic_word_count.shape[1]

    def phi(self) -> np.ndarray:
        """Smoothed topic-word distributions, shape (n_topics, vocab_size)."""
        eta = self.config.eta
        denom = self.topic_count + eta * self.vocab_size
        return (self.topic_word_count + eta) / denom[:, None]

    def save(self, path: str) -> None:
        header = struct.pack(
            "<4sqqdddq",
            _MAGIC,
            self.n_topics,
            self.vocab_size,
            self.config.gamma,
            self.config.alpha0,
            self.config.eta,
            self.config.max_topics,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.topic_word_count.astype("<i8").tobytes(order="C"))

    @classmethod
    def load(cls, path: str) -> "TopicModel":
        with open(path, "rb") as fh:
            data = fh.read()
        head_size = struct.calcsize("<4sqqdddq")
        if len(data) < head_size:
            raise ValueError(f"{path}: truncated topic model file")
        magic, k, v, gamma, alpha0, eta, max_topics = struct.unpack_from("<4sqqdddq", data)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a topic model file (magic {magic!r}, expected {_MAGIC!r})")
        expected = head_size + k * v * 8
        if len(data) != expected:
            raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
        counts = np.frombuffer(data, dtype="<i8", offset=head_size).reshape(k, v)
        config = HdpConfig(gamma=gamma, alpha0=alpha0, eta=eta, max_topics=int(max_topics))
        return cls(counts.astype(np.int64), config)


# ---------------------------------------------------------------------------
# Gibbs kernels. Randomness is passed in as pre-drawn uniform arrays indexed
# by token position, which keeps the consumed stream identical regardless of
# how often a kernel is re-entered after capacity growth.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _hdp_sweep(tokens, doc_of, z, n_kw, n_k, n_dk, beta, beta_left, k_state,
               prob_buf, uniforms, stick_u, alpha0, eta, gamma, max_topics, start):
    """One Gibbs pass from token ``start``. Returns the stop position; a value
    below len(tokens) means topic capacity ran out and the caller must grow
    the arrays and re-enter."""
    cap = n_kw.shape[0]
    v = n_kw.shape[1]
    n = tokens.shape[0]
    k_active = k_state[0]
    for t in range(start, n):
        if k_active == cap and k_active < max_topics:
            k_state[0] = k_active
            return t
        d = doc_of[t]
        w = tokens[t]
        k_old = z[t]
        if k_old >= 0:
            n_kw[k_old, w] -= 1
            n_k[k_old] -= 1
            n_dk[d, k_old] -= 1
        total = 0.0
        for k in range(k_active):
            p = (n_dk[d, k] + alpha0 * beta[k]) * (n_kw[k, w] + eta) / (n_k[k] + eta * v)
            prob_buf[k] = p
            total += p
        p_new = 0.0
        if k_active < max_topics:
            p_new = alpha0 * beta_left[0] / v
        total += p_new
        u = uniforms[t] * total
        k_new = -1
        acc = 0.0
        for k in range(k_active):
            acc += prob_buf[k]
            if u <= acc:
                k_new = k
                break
        if k_new < 0:
            if k_active < max_topics:
                # split the leftover stick mass for the newborn topic
                b = 1.0 - (1.0 - stick_u[t]) ** (1.0 / gamma)
                beta[k_active] = b * beta_left[0]
                beta_left[0] = (1.0 - b) * beta_left[0]
                k_new = k_active
                k_active += 1
            else:
                k_new = k_active - 1  # numeric guard; p_new is 0 here
        z[t] = k_new
        n_kw[k_new, w] += 1
        n_k[k_new] += 1
        n_dk[d, k_new] += 1
    k_state[0] = k_active
    return n


@njit(cache=True)
def _table_counts(n_dk, beta, alpha0, k_active, uniforms, m_out):
    """Simulate per-document table counts; the i-th customer in a cell opens
    a new table with probability a/(a+i). Consumes at most len(uniforms)."""
    cursor = 0
    for d in range(n_dk.shape[0]):
        for k in range(k_active):
            n = n_dk[d, k]
            if n <= 0:
                continue
            a = alpha0 * beta[k]
            m = 1
            for i in range(1, n):
                if uniforms[cursor] < a / (a + i):
                    m += 1
                cursor += 1
            m_out[k] += m
    return cursor


@njit(cache=True)
def _fold_in(tokens, n_kw, n_k, beta, alpha0, eta, uniforms, sweeps, burn_in,
             collect, theta_sum):
    """Sample token topics for one document with topic-word counts frozen.

    When ``collect`` is set, the smoothed document-topic distribution is
    accumulated into ``theta_sum`` after each post-burn-in sweep. Returns the
    final assignments and the number of collected sweeps."""
    n = tokens.shape[0]
    k_active = n_kw.shape[0]
    v = n_kw.shape[1]
    z = np.full(n, -1, dtype=np.int32)
    ndk = np.zeros(k_active, dtype=np.int64)
    probs = np.empty(k_active, dtype=np.float64)
    collected = 0
    for s in range(sweeps):
        for i in range(n):
            w = tokens[i]
            if z[i] >= 0:
                ndk[z[i]] -= 1
            total = 0.0
            for k in range(k_active):
                p = (ndk[k] + alpha0 * beta[k]) * (n_kw[k, w] + eta) / (n_k[k] + eta * v)
                probs[k] = p
                total += p
            u = uniforms[s * n + i] * total
            k_new = k_active - 1
            acc = 0.0
            for k in range(k_active):
                acc += probs[k]
                if u <= acc:
                    k_new = k
                    break
            z[i] = k_new
            ndk[k_new] += 1
        if collect and s >= burn_in:
            for k in range(k_active):
                theta_sum[k] += (ndk[k] + alpha0 * beta[k]) / (n + alpha0)
            collected += 1
    return z, collected


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class SweepState:
    """Read-only snapshot handed to the per-iteration callback."""

    iteration: int
    n_topics: int
    topic_word_count: np.ndarray
    topic_count: np.ndarray
    doc_topic_count: np.ndarray
    assignments: np.ndarray
    beta: np.ndarray
    beta_leftover: float


def _flatten(corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    n = corpus.n_tokens
    tokens = np.empty(n, dtype=np.int32)
    doc_of = np.empty(n, dtype=np.int32)
    pos = 0
    for d, doc in enumerate(corpus.documents):
        m = len(doc)
        tokens[pos:pos + m] = doc.tokens
        doc_of[pos:pos + m] = d
        pos += m
    return tokens, doc_of


def train_hdp(corpus: Corpus,
              config: HdpConfig = HdpConfig(),
              iterations: int = 1000,
              seed: int = 1,
              prune_threshold: float = 1e-4,
              on_iteration: Optional[Callable[[SweepState], None]] = None) -> TopicModel:
    """Run collapsed Gibbs sampling and return the pruned topic model.

    ``iterations`` counts full passes after the incremental initialization
    pass. Topics whose final token share falls below ``prune_threshold`` are
    dropped (at least one topic is always kept); the model records the
    old-to-new index map in ``prune_remap``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0 <= prune_threshold < 1:
        raise ValueError("prune_threshold must be in [0, 1)")
    n = corpus.n_tokens
    if n == 0:
        raise ValueError("empty corpus")
    v = len(corpus.vocab)
    n_docs = len(corpus.documents)
    tokens, doc_of = _flatten(corpus)

    rng = np.random.default_rng(seed)
    cap = min(16, config.max_topics)
    z = np.full(n, -1, dtype=np.int32)
    n_kw = np.zeros((cap, v), dtype=np.int64)
    n_k = np.zeros(cap, dtype=np.int64)
    n_dk = np.zeros((n_docs, cap), dtype=np.int64)
    beta = np.zeros(cap, dtype=np.float64)
    beta_left = np.array([1.0])
    k_state = np.array([0], dtype=np.int64)

    def grow():
        nonlocal cap, n_kw, n_k, n_dk, beta
        new_cap = min(config.max_topics, max(cap * 2, cap + 8))
        n_kw = np.vstack([n_kw, np.zeros((new_cap - cap, v), dtype=np.int64)])
        n_k = np.concatenate([n_k, np.zeros(new_cap - cap, dtype=np.int64)])
        n_dk = np.hstack([n_dk, np.zeros((n_docs, new_cap - cap), dtype=np.int64)])
        beta = np.concatenate([beta, np.zeros(new_cap - cap)])
        cap = new_cap

    def run_sweep():
        start = 0
        while True:
            prob_buf = np.empty(cap, dtype=np.float64)
            stop = _hdp_sweep(tokens, doc_of, z, n_kw, n_k, n_dk, beta, beta_left,
                              k_state, prob_buf, uniforms, stick_u,
                              config.alpha0, config.eta, config.gamma,
                              config.max_topics, start)
            if stop >= n:
                return
            grow()
            start = stop

    def compact_empty():
        nonlocal z
        k = int(k_state[0])
        active = n_k[:k] > 0
        if active.all():
            return
        kept = np.flatnonzero(active)
        lost_mass = beta[:k][~active].sum()
        remap = np.full(k, -1, dtype=np.int32)
        remap[kept] = np.arange(len(kept), dtype=np.int32)
        z = remap[z]
        n_kw[:len(kept)] = n_kw[kept]
        n_kw[len(kept):k] = 0
        n_k[:len(kept)] = n_k[kept]
        n_k[len(kept):k] = 0
        n_dk[:, :len(kept)] = n_dk[:, kept]
        n_dk[:, len(kept):k] = 0
        beta[:len(kept)] = beta[kept]
        beta[len(kept):k] = 0.0
        beta_left[0] += lost_mass
        k_state[0] = len(kept)

    def resample_beta():
        k = int(k_state[0])
        m = np.zeros(k, dtype=np.int64)
        m_uniforms = rng.random(n)
        _table_counts(n_dk, beta, config.alpha0, k, m_uniforms, m)
        draws = rng.dirichlet(np.concatenate([m.astype(np.float64), [config.gamma]]))
        beta[:k] = draws[:k]
        beta_left[0] = draws[k]

    # initialization pass: tokens start unassigned and are sampled in order
    uniforms = rng.random(n)
    stick_u = rng.random(n)
    run_sweep()
    compact_empty()
    resample_beta()

    for it in range(iterations):
        uniforms = rng.random(n)
        stick_u = rng.random(n)
        run_sweep()
        compact_empty()
        resample_beta()
        if on_iteration is not None:
            k = int(k_state[0])
            on_iteration(SweepState(
                iteration=it,
                n_topics=k,
                topic_word_count=n_kw[:k],
                topic_count=n_k[:k],
                doc_topic_count=n_dk[:, :k],
                assignments=z,
                beta=beta[:k].copy(),
                beta_leftover=float(beta_left[0]),
            ))

    k = int(k_state[0])
    shares = n_k[:k] / n
    keep = shares >= prune_threshold
    if not keep.any():
        keep[int(np.argmax(shares))] = True
    kept = np.flatnonzero(keep)
    remap = np.full(k, -1, dtype=np.int32)
    remap[kept] = np.arange(len(kept), dtype=np.int32)
    model = TopicModel(n_kw[kept].copy(), config)
    model.prune_remap = remap
    return model


# ---------------------------------------------------------------------------
# Fold-in labeling and inference
# ---------------------------------------------------------------------------


def _check_token_ids(model: TopicModel, token_ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int32)
    if ids.ndim != 1:
        raise ValueError("token_ids must be 1-d")
    # id == vocab_size is the OOV sentinel; anything else out of range is a bug
    if len(ids) and (ids.min() < 0 or ids.max() > model.vocab_size):
        raise ValueError("token id out of range for this model")
    return ids


def label_tokens(model: TopicModel, token_ids: np.ndarray, seed: int = 0,
                 sweeps: int = 20) -> np.ndarray:
    """Sample a topic for every token with the model's topics frozen.

    ``token_ids`` may contain the sentinel id ``model.vocab_size`` for
    out-of-vocabulary tokens; those get the globally most probable topic and
    do not influence the document counts.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    ids = _check_token_ids(model, token_ids)
    labels = np.full(len(ids), int(np.argmax(model.beta)), dtype=np.int32)
    known = ids < model.vocab_size
    kn = ids[known]
    if len(kn):
        rng = np.random.default_rng(seed)
        uniforms = rng.random(sweeps * len(kn))
        theta_sum = np.zeros(model.n_topics)
        z, _ = _fold_in(kn, model.topic_word_count, model.topic_count, model.beta,
                        model.config.alpha0, model.config.eta, uniforms,
                        sweeps, 0, False, theta_sum)
        labels[known] = z
    return labels


def infer_doc_topics(model: TopicModel, token_ids: np.ndarray, seed: int = 0,
                     sweeps: int = 20, burn_in: int = 5) -> np.ndarray:
    """Posterior document-topic distribution averaged over post-burn-in sweeps.

    An empty document returns the global topic weights.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if not 0 <= burn_in < sweeps:
        raise ValueError("burn_in must be in [0, sweeps)")
    ids = _check_token_ids(model, token_ids)
    ids = ids[ids < model.vocab_size]
    if len(ids) == 0:
        return model.beta.copy()
    rng = np.random.default_rng(seed)
    uniforms = rng.random(sweeps * len(ids))
    theta_sum = np.zeros(model.n_topics)
    _, collected = _fold_in(ids, model.topic_word_count, model.topic_count,
                            model.beta, model.config.alpha0, model.config.eta,
                            uniforms, sweeps, burn_in, True, theta_sum)
    return theta_sum / collected


def label_corpus(model: TopicModel, corpus: Corpus, seed: int = 0,
                 sweeps: int = 20, burn_in: int = 5,
                 want_doc_topics: bool = False):
    """Label every token of ``corpus``; optionally also return the per-document
    topic distributions as a (n_docs, n_topics) matrix.

    Documents get independent seeds derived from ``seed``, so the labeling of
    one document does not depend on how many precede it.
    """
    if len(corpus.vocab) != model.vocab_size:
        raise ValueError(
            f"model/corpus vocabulary size mismatch: model has {model.vocab_size}, "
            f"corpus has {len(corpus.vocab)}")
    seeds = np.random.SeedSequence(seed).spawn(len(corpus.documents))
    labels = []
    thetas = np.empty((len(corpus.documents), model.n_topics)) if want_doc_topics else None
    for d, doc in enumerate(corpus.documents):
        ids = doc.tokens
        if len(ids) == 0:
            labels.append(np.empty(0, dtype=np.int32))
            if want_doc_topics:
                thetas[d] = model.beta
            continue
        rng = np.random.default_rng(seeds[d])
        if want_doc_topics:
            uniforms = rng.random(sweeps * len(ids))
            theta_sum = np.zeros(model.n_topics)
            z, collected = _fold_in(ids, model.topic_word_count, model.topic_count,
                                    model.beta, model.config.alpha0,
                                    model.config.eta, uniforms, sweeps,
                                    burn_in, True, theta_sum)
            labels.append(z)
            thetas[d] = theta_sum / collected
        else:
            uniforms = rng.random(sweeps * len(ids))
            theta_sum = np.zeros(model.n_topics)
            z, _ = _fold_in(ids, model.topic_word_count, model.topic_count,
                            model.beta, model.config.alpha0, model.config.eta,
                            uniforms, sweeps, 0, False, theta_sum)
            labels.append(z)
    if want_doc_topics:
        return labels, thetas
    return labels


def corpus_log_likelihood(model: TopicModel, corpus: Corpus,
                          labels: list[np.ndarray]) -> float:
    """Log-likelihood of the corpus under the smoothed topic-word
    distributions and the given token-topic assignments."""
    if len(labels) != len(corpus.documents):
        raise ValueError("labels and corpus have different document counts")
    eta = model.config.eta
    denom = model.topic_count + eta * model.vocab_size
    total = 0.0
    for doc, z in zip(corpus.documents, labels):
        if len(z) != len(doc):
            raise ValueError(f"label/token length mismatch in document {doc.doc_id}")
        if len(z) == 0:
            continue
        p = (model.topic_word_count[z, doc.tokens] + eta) / denom[z]
        total += float(np.log(p).sum())
    return total


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_labeling(path: str, corpus: Corpus, labels: list[np.ndarray]) -> None:
    """Write one line per document of space-separated ``word|topic`` tokens."""
    if len(labels) != len(corpus.documents):
        raise ValueError("labels and corpus have different document counts")
    vocab = corpus.vocab
    with open(path, "w", encoding="utf-8") as fh:
        for doc, z in zip(corpus.documents, labels):
            if len(z) != len(doc):
                raise ValueError(f"label/token length mismatch in document {doc.doc_id}")
            fh.write(" ".join(f"{vocab.token_of(int(w))}|{int(k)}"
                              for w, k in zip(doc.tokens, z)))
            fh.write("\n")


def load_labeling(path: str, vocab: Vocabulary) -> tuple[Corpus, list[np.ndarray]]:
    """Read a labeled corpus; returns the reconstructed corpus and labels.

    The topic separator is the last ``|`` in each token, so words containing
    pipes survive a round trip.
    """
    docs = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            ids = []
            ks = []
            if line:
                for item in line.split(" "):
                    word, sep, topic = item.rpartition("|")
                    if not sep or not topic.lstrip("-").isdigit():
                        raise ValueError(f"{path}:{lineno + 1}: malformed token {item!r}")
                    k = int(topic)
                    if k < 0:
                        raise ValueError(f"{path}:{lineno + 1}: negative topic in {item!r}")
                    wid = vocab.get(word)
                    if wid is None:
                        raise ValueError(f"{path}:{lineno + 1}: word {word!r} not in vocabulary")
                    ids.append(wid)
                    ks.append(k)
            from .corpus import Document
            docs.append(Document(lineno, np.asarray(ids, dtype=np.int32)))
            labels.append(np.asarray(ks, dtype=np.int32))
    return Corpus(vocab, docs), labels


def save_doc_topics(path: str, thetas: np.ndarray, min_prob: float = 1e-4) -> None:
    """Write ``doc_id topic:prob ...`` lines, keeping entries with
    probability >= ``min_prob`` and renormalizing the kept mass to 1."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2:
        raise ValueError("thetas must be 2-d")
    with open(path, "w", encoding="utf-8") as fh:
        for d in range(thetas.shape[0]):
            row = thetas[d]
            keep = np.flatnonzero(row >= min_prob)
            if len(keep) == 0:
                keep = np.array([int(np.argmax(row))])
            mass = row[keep].sum()
            parts = [f"{k}:{row[k] / mass:.9f}" for k in keep]
            fh.write(f"{d} " + " ".join(parts) + "\n")


def load_doc_topics(path: str, n_topics: Optional[int] = None) -> np.ndarray:
    """Read a doc-topic file into a dense (n_docs, n_topics) matrix.

    When ``n_topics`` is omitted it is inferred as the largest topic index
    plus one, which can undershoot if a trailing topic never clears the
    write threshold; pass the model's topic count when available.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            parts = line.split()
            if not parts:
                raise ValueError(f"{path}:{lineno + 1}: empty line")
            if int(parts[0]) != lineno:
                raise ValueError(f"{path}:{lineno + 1}: doc id {parts[0]} out of order")
            entries = []
            for item in parts[1:]:
                k_str, sep, p_str = item.partition(":")
                if not sep:
                    raise ValueError(f"{path}:{lineno + 1}: malformed entry {item!r}")
                entries.append((int(k_str), float(p_str)))
            if not entries:
                raise ValueError(f"{path}:{lineno + 1}: document has no topic entries")
            rows.append(entries)
    max_k = max(k for row in rows for k, _ in row)
    k_total = n_topics if n_topics is not None else max_k + 1
    if max_k >= k_total:
        raise ValueError(f"{path}: topic index {max_k} exceeds n_topics={k_total}")
    out = np.zeros((len(rows), k_total))
    for d, row in enumerate(rows):
        for k, p in row:
            out[d, k] = p
    return out
