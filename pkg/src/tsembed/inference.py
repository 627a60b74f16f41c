"""Context-aware similarity scoring.

Builds target vectors from an embedding model plus topic information
inferred by a topic model over the instance's context, then scores word
pairs (similarity-in-context) or substitution candidates (the sampled and
expected scorers, and the topic-free baseline that adds mean context-word
similarity).

All scorers are pure given (embedding model, topic model, seed): topic
sampling uses generators derived from the seed, never global state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .corpus import Vocabulary
from .embeddings import EmbeddingModel, embed_target
from .hdp import TopicModel, infer_doc_topics, label_tokens

__all__ = [
    "ScoredContext",
    "PairScore",
    "cosine",
    "context_from_words",
    "check_compatible",
    "sim_pair",
    "score_scws_pair",
    "sim_tse_sampled",
    "sim_tse_expected",
    "sim_sge_c",
]


@dataclass
class ScoredContext:
    """A token sequence with a marked target position.

    ``hard_topics`` (per-token topic ids) and ``topic_dist`` (a distribution
    over the topic model's K topics) are optional precomputed topic
    information; when absent, scorers infer them from the topic model.
    """

    tokens: np.ndarray
    target_index: int
    hard_topics: Optional[np.ndarray] = None
    topic_dist: Optional[np.ndarray] = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int32)
        if self.tokens.ndim != 1 or len(self.tokens) == 0:
            raise ValueError("context must be a non-empty token sequence")
        if not 0 <= self.target_index < len(self.tokens):
            raise ValueError(f"target_index {self.target_index} out of range")
        if self.hard_topics is not None:
            self.hard_topics = np.asarray(self.hard_topics, dtype=np.int32)
            if self.hard_topics.shape != self.tokens.shape:
                raise ValueError("hard_topics must align with tokens")
        if self.topic_dist is not None:
            self.topic_dist = np.asarray(self.topic_dist, dtype=np.float64)
            if abs(float(self.topic_dist.sum()) - 1.0) > 1e-9:
                raise ValueError("topic_dist must sum to 1")

    @property
    def target(self) -> int:
        return int(self.tokens[self.target_index])

    def window_ids(self, width: int) -> np.ndarray:
        """Context word ids within ``width`` positions of the target,
        excluding the target itself."""
        if width < 1:
            raise ValueError("window width must be >= 1")
        i = self.target_index
        lo = max(0, i - width)
        hi = min(len(self.tokens), i + width + 1)
        return np.concatenate([self.tokens[lo:i], self.tokens[i + 1:hi]])


class PairScore(NamedTuple):
    value: float
    oov: bool


def _seed_seq(seed) -> np.random.SeedSequence:
    """Accept an int seed or an already-spawned SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def context_from_words(words: list[str], target_index: int,
                       vocab: Vocabulary) -> Optional[ScoredContext]:
    """Map a raw tokenized context to vocabulary ids.

    Out-of-vocabulary context words are dropped (they never count toward the
    context term) and the target index is shifted accordingly. Returns None
    when the target itself is out of vocabulary.
    """
    if not 0 <= target_index < len(words):
        raise ValueError(f"target_index {target_index} out of range")
    ids = []
    new_target = None
    for pos, w in enumerate(words):
        wid = vocab.get(w)
        if pos == target_index:
            if wid is None:
                return None
            new_target = len(ids)
        if wid is not None:
            ids.append(wid)
    return ScoredContext(np.asarray(ids, dtype=np.int32), new_target)


def check_compatible(emb: EmbeddingModel, hdp: Optional[TopicModel]) -> None:
    """Fail fast when an embedding model and a topic model disagree on
    vocabulary size or topic count."""
    if hdp is None:
        if emb.variant != "sge":
            raise ValueError(f"variant {emb.variant} needs a topic model")
        return
    if emb.vocab_size != hdp.vocab_size:
        raise ValueError(
            f"model vocabulary size mismatch: embeddings have {emb.vocab_size}, "
            f"topic model has {hdp.vocab_size}")
    if emb.variant != "sge" and emb.n_topics != hdp.n_topics:
        raise ValueError(
            f"topic count mismatch: embeddings have {emb.n_topics}, "
            f"topic model has {hdp.n_topics}")


def _topic_info_for(emb: EmbeddingModel, hdp: Optional[TopicModel],
                    ctx: ScoredContext, seed, sweeps: int, burn_in: int):
    """Resolve the topic argument of embed_target for one context side."""
    if emb.variant == "sge":
        return None
    if emb.variant in ("htle", "htleadd"):
        if ctx.hard_topics is not None:
            return int(ctx.hard_topics[ctx.target_index])
        labels = label_tokens(hdp, ctx.tokens, seed=seed, sweeps=sweeps)
        return int(labels[ctx.target_index])
    if ctx.topic_dist is not None:
        return ctx.topic_dist
    return infer_doc_topics(hdp, ctx.tokens, seed=seed, sweeps=sweeps, burn_in=burn_in)


def sim_pair(emb: EmbeddingModel, hdp: Optional[TopicModel],
             ctx1: ScoredContext, ctx2: ScoredContext,
             sweeps: int = 20, burn_in: int = 5, seed: int = 0) -> float:
    """Similarity of two words in their contexts.

    Each context is treated as its own document: hard variants use the
    sampled topic at the target position, the soft variant uses the inferred
    document-topic distribution. The two sides may name the same word.
    """
    check_compatible(emb, hdp)
    s1, s2 = _seed_seq(seed).spawn(2)
    info1 = _topic_info_for(emb, hdp, ctx1, s1, sweeps, burn_in)
    info2 = _topic_info_for(emb, hdp, ctx2, s2, sweeps, burn_in)
    h1 = embed_target(emb, ctx1.target, info1)
    h2 = embed_target(emb, ctx2.target, info2)
    return cosine(h1, h2)


def score_scws_pair(emb: EmbeddingModel, hdp: Optional[TopicModel],
                    vocab: Vocabulary,
                    words1: list[str], target1: int,
                    words2: list[str], target2: int,
                    sweeps: int = 20, burn_in: int = 5, seed: int = 0) -> PairScore:
    """sim_pair over raw tokenized contexts; either target word being out of
    vocabulary yields score 0 with the oov flag set."""
    ctx1 = context_from_words(words1, target1, vocab)
    ctx2 = context_from_words(words2, target2, vocab)
    if ctx1 is None or ctx2 is None:
        return PairScore(0.0, True)
    return PairScore(sim_pair(emb, hdp, ctx1, ctx2, sweeps, burn_in, seed), False)


def _context_term(emb: EmbeddingModel, h_s: np.ndarray, ctx: ScoredContext,
                  eval_window: int) -> float:
    """Mean cosine between a substitute vector and the output rows of the
    window words; 0 when the effective window is empty."""
    ids = ctx.window_ids(eval_window)
    if len(ids) == 0:
        return 0.0
    return float(np.mean([cosine(h_s, emb.output[int(c)]) for c in ids]))


def sim_tse_sampled(emb: EmbeddingModel, hdp: Optional[TopicModel],
                    substitute: int, ctx: ScoredContext,
                    eval_window: int = 10, sweeps: int = 20, seed: int = 0,
                    reuse_target_topic: bool = False) -> float:
    """Substitutability by sampled topics.

    Samples a topic for the target in its context and for the substitute
    spliced into the target position (or reuses the target's topic when
    ``reuse_target_topic``), then scores
    cos(h_s, h_t) + mean_c cos(h_s, o(w_c)) over the window words.
    """
    check_compatible(emb, hdp)
    emb._check_word(substitute)
    s_t, s_s = _seed_seq(seed).spawn(2)
    ti = ctx.target_index
    if emb.variant == "sge":
        tau_t = tau_s = None
    else:
        if ctx.hard_topics is not None:
            tau_t = int(ctx.hard_topics[ti])
        else:
            tau_t = int(label_tokens(hdp, ctx.tokens, seed=s_t, sweeps=sweeps)[ti])
        if reuse_target_topic:
            tau_s = tau_t
        else:
            spliced = ctx.tokens.copy()
            spliced[ti] = substitute
            tau_s = int(label_tokens(hdp, spliced, seed=s_s, sweeps=sweeps)[ti])
    h_s = embed_target(emb, substitute, tau_s)
    h_t = embed_target(emb, ctx.target, tau_t)
    return cosine(h_s, h_t) + _context_term(emb, h_s, ctx, eval_window)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero so their cosines are 0."""
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def sim_tse_expected(emb: EmbeddingModel, hdp: Optional[TopicModel],
                     substitute: int, ctx: ScoredContext,
                     eval_window: int = 10, sweeps: int = 20, burn_in: int = 5,
                     seed: int = 0) -> float:
    """Substitutability in expectation over the context's topics.

    Uses one document-topic distribution p for both the substitute's and the
    target's topic: sum over topic pairs of p(a) p(b) cos(h_s^a, h_t^b), plus
    the context term with each substitute topic weighted by p(a).
    """
    check_compatible(emb, hdp)
    emb._check_word(substitute)
    if emb.variant == "sge":
        h_s = embed_target(emb, substitute, None)
        h_t = embed_target(emb, ctx.target, None)
        return cosine(h_s, h_t) + _context_term(emb, h_s, ctx, eval_window)
    if ctx.topic_dist is not None:
        p = ctx.topic_dist
    else:
        p = infer_doc_topics(hdp, ctx.tokens, seed=seed, sweeps=sweeps, burn_in=burn_in)
    active = np.flatnonzero(p > 0)
    pa = p[active]
    h_sub = _unit_rows(np.stack([embed_target(emb, substitute, int(k)) for k in active]))
    h_tgt = _unit_rows(np.stack([embed_target(emb, ctx.target, int(k)) for k in active]))
    first = float(pa @ (h_sub @ h_tgt.T) @ pa)
    ids = ctx.window_ids(eval_window)
    if len(ids) == 0:
        return first
    out = _unit_rows(emb.output[ids.astype(np.int64)])
    second = float(pa @ (h_sub @ out.T).mean(axis=1))
    return first + second


def sim_sge_c(emb: EmbeddingModel, substitute: int, ctx: ScoredContext,
              eval_window: int = 10) -> float:
    """Topic-free baseline: cos(h_s, h_t) plus the mean context term."""
    if emb.variant != "sge":
        raise ValueError(f"baseline scorer needs an sge model, got {emb.variant}")
    emb._check_word(substitute)
    h_s = embed_target(emb, substitute, None)
    h_t = embed_target(emb, ctx.target, None)
    return cosine(h_s, h_t) + _context_term(emb, h_s, ctx, eval_window)
