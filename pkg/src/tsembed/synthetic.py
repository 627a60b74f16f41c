"""Synthetic corpora with known structure.

Two generators:

* An admixture corpus with a fixed number of topics over disjoint
  vocabulary blocks, for checking that the topic sampler recovers known
  topic-word distributions.
* A pseudo-sense corpus: two domains with disjoint vocabularies, each built
  from small groups of interchangeable content words plus a Zipf-ish
  background. One frequent content word from each domain is fused into a
  single pseudoword, giving it two senses with known ground truth, and a
  lexical-substitution benchmark whose gold substitutes are the same-domain
  group siblings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import POS_TAGS, LexsubInstance

__all__ = [
    "LdaCorpus",
    "build_lda_corpus",
    "PseudoSenseData",
    "build_pseudo_corpus",
    "build_lexsub_benchmark",
]


# ---------------------------------------------------------------------------
# Fixed-topic admixture corpus
# ---------------------------------------------------------------------------


@dataclass
class LdaCorpus:
    lines: list[str]
    phi: np.ndarray  # true topic-word distributions, (n_topics, vocab_size)
    words: list[str]  # column i of phi is the distribution over words[i]


def build_lda_corpus(n_docs: int = 200, vocab_size: int = 30, doc_len: int = 100,
                     n_topics: int = 3, doc_alpha: float = 0.3,
                     seed: int = 0) -> LdaCorpus:
    """Generate documents from an admixture over topics with disjoint
    uniform vocabulary blocks."""
    if vocab_size % n_topics != 0:
        raise ValueError("vocab_size must be divisible by n_topics")
    block = vocab_size // n_topics
    words = [f"w{i:02d}" for i in range(vocab_size)]
    phi = np.zeros((n_topics, vocab_size))
    for k in range(n_topics):
        phi[k, k * block:(k + 1) * block] = 1.0 / block
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n_docs):
        theta = rng.dirichlet(np.full(n_topics, doc_alpha))
        z = rng.choice(n_topics, size=doc_len, p=theta)
        offsets = rng.integers(0, block, size=doc_len)
        lines.append(" ".join(words[int(k) * block + int(o)] for k, o in zip(z, offsets)))
    return LdaCorpus(lines, phi, words)


# ---------------------------------------------------------------------------
# Pseudo-sense corpus
# ---------------------------------------------------------------------------


@dataclass
class PseudoSenseData:
    lines: list[str]
    domain_of_doc: list[str]  # "a" or "b" per document
    pseudoword: str
    sources: dict[str, str]  # domain -> the content word fused into the pseudoword
    domain_words: dict[str, list[str]]  # per domain, all its words except the fused one
    groups: dict[str, list[list[str]]] = field(repr=False, default=None)
    params: dict = field(repr=False, default=None)


def _make_domain(prefix: str, n_groups: int, group_size: int, n_background: int):
    groups = [[f"{prefix}{g:02d}w{j}" for j in range(group_size)]
              for g in range(n_groups)]
    background = [f"{prefix}bg{i:03d}" for i in range(n_background)]
    ranks = np.arange(1, n_background + 1, dtype=np.float64)
    bg_weights = 1.0 / (ranks + 2.7) ** 1.05
    bg_cum = np.cumsum(bg_weights / bg_weights.sum())
    bg_cum[-1] = 1.0
    return groups, background, bg_cum


def _sample_doc(rng: np.random.Generator, groups, background, bg_cum,
                active_groups, content_prob: float,
                min_len: int, max_len: int) -> list[str]:
    content = [w for g in active_groups for w in groups[g]]
    length = int(rng.integers(min_len, max_len + 1))
    is_content = rng.random(length) < content_prob
    content_idx = rng.integers(0, len(content), size=length)
    bg_idx = np.searchsorted(bg_cum, rng.random(length), side="right")
    return [content[int(content_idx[i])] if is_content[i] else background[int(bg_idx[i])]
            for i in range(length)]


def build_pseudo_corpus(n_docs: int = 4200, n_groups: int = 50, group_size: int = 6,
                        n_background: int = 700, n_active: int = 3,
                        content_prob: float = 0.65, min_len: int = 80,
                        max_len: int = 160, fuse_group: int = 0,
                        pseudoword: str = "pwfused", seed: int = 1) -> PseudoSenseData:
    """Two-domain corpus with one cross-domain pseudoword.

    Documents alternate between the domains. Every document draws
    ``n_active`` content groups from its domain and mixes their words with
    a Zipf-ish domain background. All occurrences of group ``fuse_group``'s
    first word are replaced by ``pseudoword`` in both domains.
    """
    if not 2 <= group_size:
        raise ValueError("group_size must be >= 2")
    if not 0 <= fuse_group < n_groups:
        raise ValueError("fuse_group out of range")
    rng = np.random.default_rng(seed)
    domains = {}
    for prefix in ("a", "b"):
        domains[prefix] = _make_domain(prefix, n_groups, group_size, n_background)
    sources = {d: domains[d][0][fuse_group][0] for d in ("a", "b")}
    lines = []
    domain_of_doc = []
    for d in range(n_docs):
        domain = "a" if d % 2 == 0 else "b"
        groups, background, bg_cum = domains[domain]
        active = rng.choice(n_groups, size=n_active, replace=False)
        tokens = _sample_doc(rng, groups, background, bg_cum, active,
                             content_prob, min_len, max_len)
        src = sources[domain]
        tokens = [pseudoword if t == src else t for t in tokens]
        lines.append(" ".join(tokens))
        domain_of_doc.append(domain)
    domain_words = {}
    group_lists = {}
    for domain in ("a", "b"):
        groups, background, _ = domains[domain]
        words = [w for g in groups for w in g if w != sources[domain]]
        domain_words[domain] = words + background
        group_lists[domain] = groups
    return PseudoSenseData(
        lines=lines,
        domain_of_doc=domain_of_doc,
        pseudoword=pseudoword,
        sources=sources,
        domain_words=domain_words,
        groups=group_lists,
        params=dict(n_groups=n_groups, group_size=group_size,
                    n_background=n_background, n_active=n_active,
                    content_prob=content_prob, min_len=min_len,
                    max_len=max_len, fuse_group=fuse_group, seed=seed))


def _sibling_gold(group: list[str], source: str) -> dict[str, int]:
    """Graded gold: the other group members with descending weights."""
    siblings = [w for w in group if w != source]
    return {w: len(siblings) - i for i, w in enumerate(siblings)}


def build_lexsub_benchmark(data: PseudoSenseData, n_pseudo_each: int = 24,
                           n_plain_targets: int = 16, plain_instances_each: int = 3,
                           seed: int = 2) -> list[LexsubInstance]:
    """Substitution instances over fresh documents from the same generator.

    Pseudoword instances (pos "n.") appear in both domains with the
    same-domain group siblings as gold, so the pooled candidate set mixes
    both domains and a context-aware ranker must use the context to find
    the right half. Plain single-domain targets cycle through the four pos
    tags to exercise the pos breakdown.
    """
    p = data.params
    rng = np.random.default_rng(seed)
    rebuilt = {d: _make_domain(d, p["n_groups"], p["group_size"], p["n_background"])
               for d in ("a", "b")}

    def fresh_doc(domain: str, forced_group: int, forced_word: str):
        groups, background, bg_cum = rebuilt[domain]
        others = [g for g in range(p["n_groups"]) if g != forced_group]
        active = [forced_group] + list(rng.choice(others, size=p["n_active"] - 1,
                                                  replace=False))
        tokens = _sample_doc(rng, groups, background, bg_cum, active,
                             p["content_prob"], p["min_len"], p["max_len"])
        pos = int(rng.integers(0, len(tokens)))
        tokens[pos] = forced_word
        src = data.sources[domain]
        tokens = [data.pseudoword if t == src else t for t in tokens]
        return tokens, pos

    instances = []
    fuse_group = p["fuse_group"]
    for domain in ("a", "b"):
        group = data.groups[domain][fuse_group]
        src = data.sources[domain]
        gold = _sibling_gold(group, src)
        for i in range(n_pseudo_each):
            tokens, pos = fresh_doc(domain, fuse_group, src)
            # the forced occurrence was fused along with any natural ones
            assert tokens[pos] == data.pseudoword
            instances.append(LexsubInstance(
                instance_id=f"pw-{domain}-{i}",
                target=data.pseudoword,
                pos="n.",
                tokens=tokens,
                target_index=pos,
                gold=dict(gold)))
    for t in range(n_plain_targets):
        domain = "a" if t % 2 == 0 else "b"
        g = 1 + t // 2
        if g >= p["n_groups"] or g == fuse_group:
            raise ValueError("not enough groups for the requested plain targets")
        group = data.groups[domain][g]
        target = group[0]
        gold = _sibling_gold(group, target)
        pos_tag = POS_TAGS[t % len(POS_TAGS)]
        for i in range(plain_instances_each):
            tokens, pos = fresh_doc(domain, g, target)
            instances.append(LexsubInstance(
                instance_id=f"plain-{target}-{i}",
                target=target,
                pos=pos_tag,
                tokens=tokens,
                target_index=pos,
                gold=dict(gold)))
    return instances
