"""Metrics and benchmark drivers.

Implements rank correlation for similarity-in-context data, generalized
average precision for lexical substitution with a part-of-speech breakdown,
and the Mann-Whitney rank test used to mark significance between runs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import Vocabulary, tokenize
from .embeddings import EmbeddingModel
from .hdp import TopicModel, infer_doc_topics, label_tokens
from .inference import (ScoredContext, context_from_words, score_scws_pair,
                        sim_sge_c, sim_tse_expected, sim_tse_sampled)

__all__ = [
    "POS_TAGS",
    "SCORERS",
    "spearman",
    "gap",
    "MannWhitneyResult",
    "mann_whitney",
    "significance_marker",
    "ScwsInstance",
    "load_scws",
    "LexsubInstance",
    "LexsubDataset",
    "load_lexsub",
    "save_lexsub",
    "ScwsResult",
    "eval_scws",
    "InstanceGap",
    "LexsubResult",
    "eval_lexsub",
]

POS_TAGS = ("n.", "v.", "adj.", "adv.")
SCORERS = ("smp", "exp", "sgec")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of average-tie ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d and of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    rx = _ranks(x)
    ry = _ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ValueError("zero rank variance")
    return float(dx @ dy) / denom


def gap(system_ranking: Sequence[str], gold: Mapping[str, int]) -> float:
    """Generalized average precision of a ranking against weighted gold.

    With x_i the gold weight at rank i (0 for non-gold) and y the gold
    weights sorted descending, GAP is
    [sum over gold positions i of mean(x_1..x_i)] / [sum over j of
    mean(y_1..y_j)].
    """
    if not gold:
        raise ValueError("empty gold")
    for sub, w in gold.items():
        if w < 1:
            raise ValueError(f"gold weight for {sub!r} must be >= 1")
    ranking = list(system_ranking)
    if len(set(ranking)) != len(ranking):
        raise ValueError("ranking contains duplicates")
    missing = set(gold) - set(ranking)
    if missing:
        raise ValueError(f"ranking is missing gold substitutes: {sorted(missing)}")
    x = [gold.get(item, 0) for item in ranking]
    num = 0.0
    prefix = 0.0
    for i, xi in enumerate(x, start=1):
        prefix += xi
        if xi > 0:
            num += prefix / i
    y = sorted(gold.values(), reverse=True)
    den = 0.0
    prefix = 0.0
    for j, yj in enumerate(y, start=1):
        prefix += yj
        den += prefix / j
    return num / den


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    method: str  # "exact" or "normal"

    def marker(self) -> str:
        return significance_marker(self.p)


def significance_marker(p: float) -> str:
    """Table marker: filled triangle below .01, open triangle below .05."""
    if p < 0.01:
        return "▲"
    if p < 0.05:
        return "△"
    return ""


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def mann_whitney(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """Two-sided Mann-Whitney test of two independent samples.

    Exact p by enumerating all label arrangements when the pooled size is at
    most 16; otherwise a normal approximation with tie correction and 0.5
    continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = len(a), len(b)
    u = _u_statistic(a, b)
    nm = n_a * n_b
    if n_a + n_b <= 16:
        pooled = np.concatenate([a, b])
        n = len(pooled)
        # s[i, j] = win share of pooled[i] against pooled[j]
        s = (pooled[:, None] > pooled[None, :]).astype(np.float64)
        s += 0.5 * (pooled[:, None] == pooled[None, :])
        u_lo = min(u, nm - u)
        hits = 0
        total = 0
        all_idx = frozenset(range(n))
        for combo in itertools.combinations(range(n), n_a):
            rest = list(all_idx - set(combo))
            u_combo = float(s[np.ix_(list(combo), rest)].sum())
            if u_combo <= u_lo + 1e-9 or u_combo >= nm - u_lo - 1e-9:
                hits += 1
            total += 1
        return MannWhitneyResult(u, min(1.0, hits / total), "exact")
    n = n_a + n_b
    mu = nm / 2.0
    # tie correction over the pooled sample
    pooled = np.concatenate([a, b])
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum())
    var = nm / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return MannWhitneyResult(u, 1.0, "normal")
    z = (abs(u - mu) - 0.5) / math.sqrt(var)
    if z < 0.0:
        z = 0.0
    p = math.erfc(z / math.sqrt(2.0))
    return MannWhitneyResult(u, min(1.0, p), "normal")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class ScwsInstance:
    instance_id: str
    word1: str
    pos1: str
    word2: str
    pos2: str
    context1: list[str]
    target1: int
    context2: list[str]
    target2: int
    human_score: float


def _parse_marked_context(text: str, where: str) -> tuple[list[str], int]:
    """Tokenize a context whose target is wrapped in <b>...</b> marks."""
    pre, mark, rest = text.partition("<b>")
    if not mark:
        raise ValueError(f"{where}: context has no <b> target mark")
    target_raw, mark, post = rest.partition("</b>")
    if not mark:
        raise ValueError(f"{where}: unterminated <b> target mark")
    pre_words = tokenize(pre)
    target_words = tokenize(target_raw)
    if len(target_words) != 1:
        raise ValueError(f"{where}: marked target must be a single token, got {target_raw!r}")
    return pre_words + target_words + tokenize(post), len(pre_words)


def load_scws(path: str) -> list[ScwsInstance]:
    """Parse the similarity-in-context TSV: id, word1, pos1, word2, pos2,
    context1, context2, score. Contexts mark the target as <b>word</b>."""
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(parts)}")
            iid, w1, p1, w2, p2, c1, c2, score_str = parts
            try:
                score = float(score_str)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad score {score_str!r}") from None
            if not 0.0 <= score <= 10.0:
                raise ValueError(f"{path}:{lineno}: score {score} outside [0, 10]")
            ctx1, t1 = _parse_marked_context(c1, f"{path}:{lineno}")
            ctx2, t2 = _parse_marked_context(c2, f"{path}:{lineno}")
            instances.append(ScwsInstance(iid, w1.lower(), p1, w2.lower(), p2,
                                          ctx1, t1, ctx2, t2, score))
    return instances


@dataclass
class LexsubInstance:
    instance_id: str
    target: str
    pos: str
    tokens: list[str]
    target_index: int
    gold: dict[str, int]


@dataclass
class LexsubDataset:
    instances: list[LexsubInstance]
    dropped_multiword: int = 0  # multiword gold substitutes removed
    dropped_instances: int = 0  # instances whose gold became empty


def load_lexsub(path: str) -> LexsubDataset:
    """Parse the lexsub TSV: id, target, pos, target_index, space-separated
    context, gold as "sub:weight;sub:weight".

    Multiword substitutes are dropped and counted; instances left with no
    gold are dropped and counted separately.
    """
    instances = []
    dropped_multiword = 0
    dropped_instances = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
            iid, target, pos, idx_str, context, gold_str = parts
            if pos not in POS_TAGS:
                raise ValueError(f"{path}:{lineno}: unknown pos {pos!r}, expected one of {POS_TAGS}")
            tokens = context.split()
            if not tokens:
                raise ValueError(f"{path}:{lineno}: empty context")
            try:
                idx = int(idx_str)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad target index {idx_str!r}") from None
            if not 0 <= idx < len(tokens):
                raise ValueError(f"{path}:{lineno}: target index {idx} out of range")
            gold: dict[str, int] = {}
            for item in gold_str.split(";"):
                item = item.strip()
                if not item:
                    continue
                sub, sep, w_str = item.rpartition(":")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: malformed gold entry {item!r}")
                try:
                    w = int(w_str)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad gold weight in {item!r}") from None
                if w < 1:
                    raise ValueError(f"{path}:{lineno}: gold weight must be >= 1 in {item!r}")
                if " " in sub:
                    dropped_multiword += 1
                    continue
                gold[sub] = gold.get(sub, 0) + w
            if not gold:
                dropped_instances += 1
                continue
            instances.append(LexsubInstance(iid, target, pos, tokens, idx, gold))
    return LexsubDataset(instances, dropped_multiword, dropped_instances)


def save_lexsub(path: str, instances: list[LexsubInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            gold = ";".join(f"{s}:{w}" for s, w in sorted(inst.gold.items()))
            fh.write("\t".join([inst.instance_id, inst.target, inst.pos,
                                str(inst.target_index), " ".join(inst.tokens),
                                gold]) + "\n")


# ---------------------------------------------------------------------------
# Benchmark drivers
# ---------------------------------------------------------------------------


@dataclass
class ScwsResult:
    rho: float
    n_instances: int
    n_oov: int
    system_scores: list[float]
    human_scores: list[float]


def eval_scws(emb: EmbeddingModel, hdp: Optional[TopicModel], vocab: Vocabulary,
              instances: list[ScwsInstance], sweeps: int = 20, burn_in: int = 5,
              seed: int = 0) -> ScwsResult:
    """Score every pair in context and correlate with the human judgments.

    Pairs with an out-of-vocabulary target score 0 and are counted in
    ``n_oov``. Each instance draws its topic samples from a seed derived
    from its position, so scoring is order-independent.
    """
    if not instances:
        raise ValueError("empty dataset")
    seeds = np.random.SeedSequence(seed).spawn(len(instances))
    system = []
    human = []
    n_oov = 0
    for inst, s in zip(instances, seeds):
        score = score_scws_pair(emb, hdp, vocab,
                                inst.context1, inst.target1,
                                inst.context2, inst.target2,
                                sweeps=sweeps, burn_in=burn_in, seed=s)
        if score.oov:
            n_oov += 1
        system.append(score.value)
        human.append(inst.human_score)
    rho = spearman(system, human)
    return ScwsResult(rho, len(instances), n_oov, system, human)


@dataclass
class InstanceGap:
    instance_id: str
    pos: str
    gap: float
    fallback: bool  # no candidate was scorable; ranking fell back to lexicographic


@dataclass
class LexsubResult:
    scorer: str
    overall_gap: float
    pos_gap: dict[str, tuple[float, int]]  # pos -> (mean gap, instance count)
    instances: list[InstanceGap] = field(default_factory=list)
    fallback_count: int = 0

    def per_instance_gaps(self) -> list[float]:
        return [r.gap for r in self.instances]


def _candidate_pool(instances: list[LexsubInstance]) -> dict[tuple[str, str], list[str]]:
    """Candidates for a target lemma and pos: the union of gold substitutes
    across all of its instances, in sorted order."""
    pool: dict[tuple[str, str], set] = {}
    for inst in instances:
        pool.setdefault((inst.target, inst.pos), set()).update(inst.gold)
    return {key: sorted(subs) for key, subs in pool.items()}


def eval_lexsub(emb: EmbeddingModel, hdp: Optional[TopicModel], vocab: Vocabulary,
                instances: list[LexsubInstance], scorer: str,
                eval_window: int = 10, sweeps: int = 20, burn_in: int = 5,
                seed: int = 0, reuse_target_topic: bool = False) -> LexsubResult:
    """Rank pooled candidates per instance and aggregate GAP.

    ``scorer`` is "smp" (sampled topics), "exp" (expectation over the
    context's topic distribution), or "sgec" (topic-free baseline; requires
    an sge model). Scorable candidates are ranked by descending score with
    lexicographic tie-breaks; out-of-vocabulary candidates follow in
    lexicographic order. An instance with no scorable candidate falls back
    to a fully lexicographic ranking and is flagged.
    """
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}, expected one of {SCORERS}")
    if not instances:
        raise ValueError("empty dataset")
    pool = _candidate_pool(instances)
    inst_seeds = np.random.SeedSequence(seed).spawn(len(instances))
    records = []
    fallback_count = 0
    for i, inst in enumerate(instances):
        candidates = pool[(inst.target, inst.pos)]
        # the target vector uses the lemma when in vocabulary, else the
        # surface token at the marked position
        target_word = inst.target if inst.target in vocab else inst.tokens[inst.target_index]
        words = list(inst.tokens)
        words[inst.target_index] = target_word
        ctx = context_from_words(words, inst.target_index, vocab)
        scores: dict[str, float] = {}
        if ctx is not None:
            scorable = [c for c in candidates if c in vocab]
            if scorable:
                cand_seeds = inst_seeds[i].spawn(len(scorable) + 1)
                if scorer == "exp":
                    if emb.variant != "sge":
                        p = infer_doc_topics(hdp, ctx.tokens, seed=cand_seeds[0],
                                             sweeps=sweeps, burn_in=burn_in)
                        ctx = ScoredContext(ctx.tokens, ctx.target_index, topic_dist=p)
                    for c in scorable:
                        scores[c] = sim_tse_expected(emb, hdp, vocab.id_of(c), ctx,
                                                     eval_window=eval_window,
                                                     sweeps=sweeps, burn_in=burn_in)
                elif scorer == "smp":
                    if emb.variant != "sge":
                        tau_t = label_tokens(hdp, ctx.tokens, seed=cand_seeds[0],
                                             sweeps=sweeps)[ctx.target_index]
                        ctx = ScoredContext(ctx.tokens, ctx.target_index,
                                            hard_topics=np.full(len(ctx.tokens), tau_t,
                                                                dtype=np.int32))
                    for c, cs in zip(scorable, cand_seeds[1:]):
                        scores[c] = sim_tse_sampled(emb, hdp, vocab.id_of(c), ctx,
                                                    eval_window=eval_window,
                                                    sweeps=sweeps, seed=cs,
                                                    reuse_target_topic=reuse_target_topic)
                else:
                    for c in scorable:
                        scores[c] = sim_sge_c(emb, vocab.id_of(c), ctx,
                                              eval_window=eval_window)
        if scores:
            ranked = sorted(scores, key=lambda c: (-scores[c], c))
            ranked += sorted(c for c in candidates if c not in scores)
            fallback = False
        else:
            ranked = sorted(candidates)
            fallback = True
            fallback_count += 1
        records.append(InstanceGap(inst.instance_id, inst.pos,
                                   gap(ranked, inst.gold), fallback))
    overall = float(np.mean([r.gap for r in records]))
    pos_gap = {}
    for pos in POS_TAGS:
        vals = [r.gap for r in records if r.pos == pos]
        if vals:
            pos_gap[pos] = (float(np.mean(vals)), len(vals))
    return LexsubResult(scorer, overall, pos_gap, records, fallback_count)
