"""Builders for the small deterministic fixtures shared across test modules."""

import numpy as np

from tsembed.corpus import Vocabulary, build_vocab, corpus_from_lines
from tsembed.embeddings import EmbeddingModel


def vocab_from_counts(items):
    """Vocabulary from (token, count) pairs already in descending count order."""
    tokens = [t for t, _ in items]
    counts = np.asarray([c for _, c in items], dtype=np.int64)
    return Vocabulary(tokens, counts)


def toy_corpus(lines, min_count=1):
    vocab = build_vocab(lines, min_count=min_count)
    return corpus_from_lines(lines, vocab)


def make_model(variant, v=6, k=3, dim=4, seed=0, pairs=None, pair_counts=None,
               scale=1.0, zero_output=False):
    """A small random embedding model built directly from tables.

    ``pairs`` restricts the observed (word, topic) entries of the hard
    variants; the default is every combination. ``pair_counts`` overrides the
    per-pair observation counts (used to pin the modal-topic fallback).
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(v)]
    output = np.zeros((v, dim)) if zero_output else scale * rng.normal(size=(v, dim))
    if variant == "sge":
        return EmbeddingModel("sge", dim, 0, words, None,
                              scale * rng.normal(size=(v, dim)), output)
    if variant == "stle":
        return EmbeddingModel("stle", dim, k, words,
                              scale * rng.normal(size=(v * k, dim)), None, output)
    if pairs is None:
        pairs = [(w, t) for w in range(v) for t in range(k)]
    key = np.asarray(sorted(w * k + t for w, t in pairs), dtype=np.int64)
    if pair_counts is None:
        pair_counts = np.arange(1, len(key) + 1, dtype=np.int64)
    else:
        pair_counts = np.asarray(pair_counts, dtype=np.int64)
    topic = scale * rng.normal(size=(len(key), dim))
    if variant == "htle":
        return EmbeddingModel("htle", dim, k, words, topic, None, output,
                              key, pair_counts)
    if variant == "htleadd":
        return EmbeddingModel("htleadd", dim, k, words, topic,
                              scale * rng.normal(size=(v, dim)), output,
                              key, pair_counts)
    raise ValueError(f"unknown variant {variant!r}")


def copy_model(model):
    """Deep copy of every table so in-place updates can be compared."""
    return EmbeddingModel(
        model.variant, model.dim, model.n_topics, list(model.words),
        None if model.input_topic is None else model.input_topic.copy(),
        None if model.input_generic is None else model.input_generic.copy(),
        model.output.copy(),
        None if model.pair_key is None else model.pair_key.copy(),
        None if model.pair_counts is None else model.pair_counts.copy())


def greedy_tv_alignment(true_phi, learned_phi):
    """Mean total-variation distance after greedily pairing each generator
    topic with its closest unused learned topic (closest pairs claimed first)."""
    pairs = sorted((0.5 * float(np.abs(t - l).sum()), i, j)
                   for i, t in enumerate(true_phi)
                   for j, l in enumerate(learned_phi))
    used_true = set()
    used_learned = set()
    dists = []
    for d, i, j in pairs:
        if i in used_true or j in used_learned:
            continue
        used_true.add(i)
        used_learned.add(j)
        dists.append(d)
        if len(used_true) == len(true_phi):
            break
    return float(np.mean(dists))


def models_equal(a, b):
    """Bit-exact equality of all tables and metadata."""
    if (a.variant, a.dim, a.n_topics, a.words) != (b.variant, b.dim, b.n_topics, b.words):
        return False
    for x, y in ((a.input_topic, b.input_topic),
                 (a.input_generic, b.input_generic),
                 (a.pair_key, b.pair_key),
                 (a.pair_counts, b.pair_counts)):
        if (x is None) != (y is None):
            return False
        if x is not None and not np.array_equal(x, y):
            return False
    return np.array_equal(a.output, b.output)
