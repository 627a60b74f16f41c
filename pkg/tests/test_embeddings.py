"""Embedding model tests: target composition, gradients, training, queries, IO."""

import math
import struct
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsembed.corpus import (build_vocab, corpus_from_lines, keep_probabilities,
                            negative_table)
from tsembed.embeddings import (VARIANTS, EmbeddingModel, TrainConfig,
                                _log_sigmoid, _sigmoid, _truncate_dist,
                                _window_pair_count, embed_target, load_model,
                                nearest_neighbors, sgns_gradients, sgns_step,
                                train)

from helpers import copy_model, make_model, models_equal, toy_corpus


def random_labeling(corpus, k, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, k, size=len(d)).astype(np.int32)
            for d in corpus.documents]


def random_doc_topics(corpus, k, seed=0):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.full(k, 0.5), size=len(corpus.documents))


class TestTrainConfig:
    def test_defaults_are_valid(self):
        cfg = TrainConfig()
        assert cfg.variant in VARIANTS

    @pytest.mark.parametrize("kwargs", [
        {"dim": 0}, {"window": 0}, {"negatives": 0}, {"epochs": 0},
        {"learning_rate": 0.0}, {"variant": "bogus"}, {"threads": 0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestEmbeddingModelValidation:
    def test_table_combinations_enforced(self):
        base = make_model("htleadd", v=3, k=2, dim=2)
        with pytest.raises(ValueError):
            EmbeddingModel("sge", 2, 0, base.words, base.input_topic, None,
                           base.output)
        with pytest.raises(ValueError):
            EmbeddingModel("htle", 2, 2, base.words, None, base.input_generic,
                           base.output)
        with pytest.raises(ValueError):
            EmbeddingModel("htleadd", 2, 2, base.words, base.input_topic, None,
                           base.output, base.pair_key, base.pair_counts)

    def test_hard_variants_need_pair_keys(self):
        base = make_model("htle", v=3, k=2, dim=2)
        with pytest.raises(ValueError, match="pair"):
            EmbeddingModel("htle", 2, 2, base.words, base.input_topic, None,
                           base.output)

    def test_stle_table_must_be_dense(self):
        with pytest.raises(ValueError, match="rows"):
            EmbeddingModel("stle", 2, 3, ["a", "b"],
                           np.zeros((5, 2)), None, np.zeros((2, 2)))

    def test_rejects_non_finite_tables(self):
        bad = np.zeros((2, 2))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingModel("sge", 2, 0, ["a", "b"], None, bad, np.zeros((2, 2)))

    def test_output_shape_checked(self):
        with pytest.raises(ValueError, match="output"):
            EmbeddingModel("sge", 2, 0, ["a", "b"], None, np.zeros((2, 2)),
                           np.zeros((3, 2)))


class TestPairRows:
    def test_lookup_and_missing(self):
        model = make_model("htle", v=3, k=3, pairs=[(0, 0), (0, 2), (1, 1)])
        assert model.pair_row(0, 0) == 0
        assert model.pair_row(0, 2) == 1
        assert model.pair_row(1, 1) == 2
        assert model.pair_row(0, 1) == -1
        assert model.pair_row(2, 0) == -1

    def test_word_pair_rows(self):
        model = make_model("htle", v=3, k=3, pairs=[(0, 0), (0, 2), (1, 1)])
        assert model.word_pair_rows(0).tolist() == [0, 1]
        assert model.word_pair_rows(2).tolist() == []

    def test_modal_row_prefers_highest_count(self):
        model = make_model("htle", v=2, k=3, pairs=[(0, 0), (0, 1), (0, 2)],
                           pair_counts=[2, 9, 4])
        assert model.modal_row(0) == 1

    def test_modal_row_tie_takes_lowest_topic(self):
        model = make_model("htle", v=2, k=3, pairs=[(0, 1), (0, 2)],
                           pair_counts=[7, 7])
        assert model.modal_row(0) == 0  # row 0 holds topic 1, the lower one

    def test_modal_row_without_entries_errors(self):
        model = make_model("htle", v=2, k=2, pairs=[(0, 0)])
        with pytest.raises(ValueError, match="no trained topic entries"):
            model.modal_row(1)


class TestEmbedTarget:
    def test_sge_returns_generic_copy(self):
        model = make_model("sge", v=3, dim=4)
        vec = embed_target(model, 1, None)
        np.testing.assert_array_equal(vec, model.input_generic[1])
        vec[0] = 99.0
        assert model.input_generic[1, 0] != 99.0

    def test_htle_exact_pair(self):
        model = make_model("htle", v=3, k=2)
        np.testing.assert_array_equal(embed_target(model, 1, 1),
                                      model.input_topic[model.pair_row(1, 1)])

    def test_htle_missing_pair_falls_back_to_modal(self):
        model = make_model("htle", v=3, k=3, pairs=[(0, 0), (0, 1)],
                           pair_counts=[3, 8])
        np.testing.assert_array_equal(embed_target(model, 0, 2),
                                      model.input_topic[1])

    def test_htleadd_sums_pair_and_generic(self):
        model = make_model("htleadd", v=3, k=2)
        row = model.pair_row(2, 1)
        np.testing.assert_array_equal(
            embed_target(model, 2, 1),
            model.input_topic[row] + model.input_generic[2])

    def test_htleadd_zero_pair_row_is_generic(self):
        model = make_model("htleadd", v=3, k=2)
        model.input_topic[model.pair_row(1, 0)] = 0.0
        np.testing.assert_array_equal(embed_target(model, 1, 0),
                                      model.input_generic[1])

    def test_htleadd_missing_pair_is_generic_alone(self):
        model = make_model("htleadd", v=3, k=2, pairs=[(0, 0)])
        np.testing.assert_array_equal(embed_target(model, 2, 1),
                                      model.input_generic[2])

    def test_stle_point_mass_is_exact_row(self):
        model = make_model("stle", v=3, k=3)
        dist = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(embed_target(model, 1, dist),
                                      model.input_topic[1 * 3 + 1])
        np.testing.assert_array_equal(embed_target(model, 1, 1),
                                      model.input_topic[1 * 3 + 1])

    def test_stle_uniform_mixture_by_hand(self):
        model = make_model("stle", v=1, k=2, dim=3)
        model.input_topic[0] = [1.0, 2.0, 3.0]
        model.input_topic[1] = [5.0, 7.0, 9.0]
        vec = embed_target(model, 0, np.array([0.5, 0.5]))
        np.testing.assert_allclose(vec, [3.0, 4.5, 6.0], rtol=0, atol=1e-15)

    @given(st.integers(0, 2),
           st.lists(st.floats(0, 10, allow_nan=False), min_size=3, max_size=3),
           st.lists(st.floats(0, 10, allow_nan=False), min_size=3, max_size=3))
    def test_stle_is_linear_in_weights(self, word, p, q):
        """Unnormalized weights scale the output, so the composition is
        additive: embed(p) + embed(q) = embed(p + q)."""
        model = make_model("stle", v=3, k=3, dim=4, seed=1)
        p = np.asarray(p)
        q = np.asarray(q)
        lhs = embed_target(model, word, p) + embed_target(model, word, q)
        rhs = embed_target(model, word, p + q)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_malformed_distribution_errors(self):
        model = make_model("stle", v=2, k=3)
        for bad in (np.array([0.5, 0.5]),       # wrong length
                    np.array([0.5, 0.6, -0.1]),  # negative entry
                    np.array([np.nan, 0.5, 0.5])):
            with pytest.raises(ValueError, match="malformed distribution"):
                embed_target(model, 0, bad)
        with pytest.raises(TypeError):
            embed_target(model, 0, None)

    def test_hard_variant_rejects_distribution(self):
        model = make_model("htle", v=2, k=2)
        with pytest.raises(TypeError, match="hard topic id"):
            embed_target(model, 0, np.array([0.5, 0.5]))

    def test_oov_word_errors(self):
        model = make_model("sge", v=2)
        with pytest.raises(ValueError, match="OOV"):
            embed_target(model, 2, None)

    def test_topic_out_of_range_errors(self):
        model = make_model("htle", v=2, k=2)
        with pytest.raises(ValueError, match="topic"):
            embed_target(model, 0, 5)


class TestSigmoidHelpers:
    def test_midpoint(self):
        assert _sigmoid(0.0) == 0.5
        assert math.isclose(_log_sigmoid(0.0), math.log(0.5), rel_tol=1e-15)

    def test_matches_log_of_sigmoid(self):
        for x in np.linspace(-30, 30, 601):
            assert math.isclose(_log_sigmoid(x), math.log(_sigmoid(x)),
                                rel_tol=1e-12, abs_tol=1e-12)

    def test_extremes_stay_finite(self):
        assert _sigmoid(800.0) == 1.0
        assert _sigmoid(-800.0) == 0.0
        assert math.isfinite(_log_sigmoid(-800.0))
        assert _log_sigmoid(800.0) <= 0.0


class TestTruncateDist:
    def test_keeps_top_entries_renormalized(self):
        topics, probs = _truncate_dist(np.array([0.1, 0.6, 0.05, 0.25]), 2)
        assert topics.tolist() == [1, 3]
        np.testing.assert_allclose(probs, [0.6 / 0.85, 0.25 / 0.85])
        assert math.isclose(probs.sum(), 1.0)

    def test_nonpositive_limit_keeps_all_positive(self):
        topics, probs = _truncate_dist(np.array([0.5, 0.0, 0.5]), 0)
        assert topics.tolist() == [0, 2]
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_tie_prefers_lower_topic(self):
        topics, _ = _truncate_dist(np.array([0.4, 0.4, 0.2]), 1)
        assert topics.tolist() == [0]

    def test_all_zero_errors(self):
        with pytest.raises(ValueError, match="no positive"):
            _truncate_dist(np.zeros(3), 2)


class TestSgnsGradients:
    def test_symmetric_coefficients_at_zero_score(self):
        """With a zero output table every dot is 0, so the positive sample's
        coefficient is 1 - 0.5 and each negative's is -0.5."""
        model = make_model("sge", v=4, dim=3, zero_output=True)
        h = embed_target(model, 0, None)
        loss, grads = sgns_gradients(model, 0, None, 1, [2, 3])
        assert math.isclose(loss, -3 * math.log(0.5), rel_tol=1e-12)
        np.testing.assert_allclose(grads[("output", 1)], 0.5 * h)
        np.testing.assert_allclose(grads[("output", 2)], -0.5 * h)
        # zero output rows feed back nothing into the input side
        np.testing.assert_allclose(grads[("generic", 0)], 0.0)

    def test_duplicate_rows_accumulate(self):
        model = make_model("sge", v=4, dim=3, seed=2)
        _, grads = sgns_gradients(model, 0, None, 1, [1, 2])
        _, ref = sgns_gradients(model, 0, None, 1, [3, 2])
        h = embed_target(model, 0, None)
        f1 = float(model.output[1] @ h)
        expect = (1 - _sigmoid(f1)) * h + (-_sigmoid(f1)) * h
        np.testing.assert_allclose(grads[("output", 1)], expect, rtol=1e-12)
        # the non-duplicated negative is unaffected by the overlap
        np.testing.assert_allclose(grads[("output", 2)], ref[("output", 2)],
                                   rtol=1e-12)

    def test_htleadd_routes_full_gradient_to_both_tables(self):
        model = make_model("htleadd", v=4, k=2, dim=3, seed=3)
        _, grads = sgns_gradients(model, 1, 1, 2, [3])
        np.testing.assert_array_equal(grads[("topic", model.pair_row(1, 1))],
                                      grads[("generic", 1)])

    def test_stle_scales_gradient_by_topic_weight(self):
        model = make_model("stle", v=3, k=3, dim=3, seed=4)
        dist = np.array([0.2, 0.0, 0.8])
        _, grads = sgns_gradients(model, 1, dist, 2, [0])
        g0 = grads[("topic", 1 * 3 + 0)]
        g2 = grads[("topic", 1 * 3 + 2)]
        assert ("topic", 1 * 3 + 1) not in grads
        np.testing.assert_allclose(g2, 4.0 * g0, rtol=1e-9)

    def test_all_zero_distribution_errors(self):
        model = make_model("stle", v=2, k=2)
        with pytest.raises(ValueError, match="all weights are zero"):
            sgns_gradients(model, 0, np.zeros(2), 1, [0])

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_finite_difference_spot_check(self, variant):
        """Analytic gradients against central differences on one small
        configuration per variant (the broad sweep lives in the acceptance
        suite)."""
        rng = np.random.default_rng(7)
        model = make_model(variant, v=5, k=3, dim=4, seed=8, scale=0.6)
        word, ctx = 1, 3
        negs = [0, 2, 3]
        if variant == "sge":
            info = None
        elif variant == "stle":
            info = rng.dirichlet(np.ones(3))
        else:
            info = 1
        loss, grads = sgns_gradients(model, word, info, ctx, negs)
        eps = 1e-6
        tables = {"output": model.output, "generic": model.input_generic,
                  "topic": model.input_topic}
        for (table, row), g in grads.items():
            arr = tables[table]
            for d in range(model.dim):
                orig = arr[row, d]
                arr[row, d] = orig + eps
                up, _ = sgns_gradients(model, word, info, ctx, negs)
                arr[row, d] = orig - eps
                down, _ = sgns_gradients(model, word, info, ctx, negs)
                arr[row, d] = orig
                fd = (up - down) / (2 * eps)
                # grads are ascent directions on the log-likelihood
                assert abs(fd - (-g[d])) <= 1e-6 * max(1.0, abs(fd), abs(g[d]))


class TestSgnsStep:
    def test_zero_learning_rate_is_identity(self):
        model = make_model("htleadd", v=4, k=2, seed=5)
        before = copy_model(model)
        loss = sgns_step(model, 1, 0, 2, [3, 0], lr=0.0)
        assert loss > 0
        assert models_equal(model, before)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_step_applies_exactly_the_gradients(self, variant):
        model = make_model(variant, v=5, k=3, seed=6)
        manual = copy_model(model)
        info = {"sge": None, "htle": 2, "htleadd": 2,
                "stle": np.array([0.3, 0.7, 0.0])}[variant]
        lr = 0.05
        loss_g, grads = sgns_gradients(manual, 1, info, 3, [0, 4])
        for (table, idx), g in grads.items():
            {"output": manual.output, "generic": manual.input_generic,
             "topic": manual.input_topic}[table][idx] += lr * g
        loss_s = sgns_step(model, 1, info, 3, [0, 4], lr=lr)
        assert loss_s == loss_g
        assert models_equal(model, manual)


@pytest.fixture(scope="module")
def train_corpus():
    rng = np.random.default_rng(13)
    words = [f"t{i}" for i in range(12)]
    lines = [" ".join(rng.choice(words, size=rng.integers(6, 15)))
             for _ in range(6)]
    return toy_corpus(lines, min_count=1)


def reference_train(corpus, config, labeling=None, doc_topics=None,
                    n_topics=None):
    """Single-stepping mirror of train(): identical initialization draws and
    per-document randomness order (subsampling uniforms, then window widths,
    then the negatives block), driving sgns_step for every window pair."""
    vocab = corpus.vocab
    v = len(vocab)
    docs = corpus.documents
    variant = config.variant
    dim = config.dim
    rng = np.random.default_rng(config.seed)

    pair_key = pair_counts = None
    input_topic = input_generic = None
    if variant in ("htle", "htleadd"):
        max_label = max(int(z.max()) for z in labeling if len(z))
        k_total = n_topics if n_topics is not None else max_label + 1
        pair_count_map = {}
        for doc, z in zip(docs, labeling):
            for w, k in zip(doc.tokens, z):
                key = int(w) * k_total + int(k)
                pair_count_map[key] = pair_count_map.get(key, 0) + 1
        pair_key = np.asarray(sorted(pair_count_map), dtype=np.int64)
        pair_counts = np.asarray([pair_count_map[k] for k in pair_key],
                                 dtype=np.int64)
        input_topic = (rng.random((len(pair_key), dim)) - 0.5) / dim
    elif variant == "stle":
        k_total = doc_topics.shape[1]
        input_topic = (rng.random((v * k_total, dim)) - 0.5) / dim
    else:
        k_total = 0
    if variant in ("sge", "htleadd"):
        input_generic = (rng.random((v, dim)) - 0.5) / dim
    model = EmbeddingModel(variant, dim, k_total, vocab.tokens, input_topic,
                           input_generic, np.zeros((v, dim)), pair_key,
                           pair_counts)

    keep = (keep_probabilities(vocab, config.subsample) if config.subsample > 0
            else np.ones(v))
    neg = negative_table(vocab, config.negative_power)
    total_work = config.epochs * sum(len(d) for d in docs)
    lr0 = config.learning_rate
    processed = 0
    losses = []
    for _ in range(config.epochs):
        epoch_loss = 0.0
        for d, doc in enumerate(docs):
            toks = doc.tokens
            nd = len(toks)
            lr = max(1e-4 * lr0, lr0 * (1.0 - processed / total_work))
            processed += nd
            if nd == 0:
                continue
            u = rng.random(nd)
            kept = np.flatnonzero(u < keep[toks])
            m = len(kept)
            if m < 2:
                continue
            ktoks = toks[kept].astype(np.int64)
            widths = rng.integers(1, config.window + 1, size=m)
            n_pairs = _window_pair_count(m, widths)
            if n_pairs == 0:
                continue
            negs = neg.draw(rng, (n_pairs, config.negatives))
            if variant in ("htle", "htleadd"):
                z = labeling[d][kept]
            elif variant == "stle":
                topics, probs = _truncate_dist(doc_topics[d], config.stle_top_m)
                dist = np.zeros(k_total)
                dist[topics] = probs
            pair_idx = 0
            for i in range(m):
                b = int(widths[i])
                for j in range(max(0, i - b), min(m - 1, i + b) + 1):
                    if j == i:
                        continue
                    if variant == "sge":
                        info = None
                    elif variant == "stle":
                        info = dist
                    else:
                        info = int(z[i])
                    epoch_loss += sgns_step(model, int(ktoks[i]), info,
                                            int(ktoks[j]), negs[pair_idx], lr)
                    pair_idx += 1
        losses.append(epoch_loss)
    model.epoch_losses = losses
    return model


class TestTrain:
    def test_missing_topic_inputs_error(self, train_corpus):
        with pytest.raises(ValueError, match="labeling"):
            train(train_corpus, config=TrainConfig(variant="htle", dim=4))
        with pytest.raises(ValueError, match="doc"):
            train(train_corpus, config=TrainConfig(variant="stle", dim=4))

    def test_labeling_shape_checked(self, train_corpus):
        labeling = random_labeling(train_corpus, 3)
        with pytest.raises(ValueError, match="document counts"):
            train(train_corpus, labeling=labeling[:-1],
                  config=TrainConfig(variant="htle", dim=4))
        broken = [z[:-1] for z in labeling]
        with pytest.raises(ValueError, match="length mismatch"):
            train(train_corpus, labeling=broken,
                  config=TrainConfig(variant="htle", dim=4))

    def test_labeling_topic_overflow_checked(self, train_corpus):
        labeling = random_labeling(train_corpus, 4)
        with pytest.raises(ValueError, match="n_topics"):
            train(train_corpus, labeling=labeling, n_topics=2,
                  config=TrainConfig(variant="htle", dim=4))

    def test_doc_topics_shape_checked(self, train_corpus):
        theta = random_doc_topics(train_corpus, 3)
        with pytest.raises(ValueError, match="one row per document"):
            train(train_corpus, doc_topics=theta[:-1],
                  config=TrainConfig(variant="stle", dim=4))

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_deterministic_single_thread(self, train_corpus, variant):
        cfg = TrainConfig(variant=variant, dim=6, window=3, negatives=3,
                          epochs=2, seed=21, subsample=0)
        kwargs = {}
        if variant in ("htle", "htleadd"):
            kwargs["labeling"] = random_labeling(train_corpus, 3, seed=1)
        elif variant == "stle":
            kwargs["doc_topics"] = random_doc_topics(train_corpus, 3, seed=1)
        a = train(train_corpus, config=cfg, **kwargs)
        b = train(train_corpus, config=cfg, **kwargs)
        assert models_equal(a, b)
        assert a.epoch_losses == b.epoch_losses

    def test_single_topic_collapses_to_baseline(self, train_corpus):
        """With one topic the pair table is indexed exactly like the word
        table and consumes the same initialization draws, so the run is
        bit-identical to the baseline variant."""
        labeling = [np.zeros(len(d), dtype=np.int32) for d in train_corpus]
        cfg = TrainConfig(variant="htle", dim=6, window=3, negatives=3,
                          epochs=2, seed=9, subsample=0)
        topical = train(train_corpus, labeling=labeling, config=cfg, n_topics=1)
        flat = train(train_corpus, config=replace(cfg, variant="sge"))
        assert np.array_equal(topical.input_topic, flat.input_generic)
        assert np.array_equal(topical.output, flat.output)
        assert topical.epoch_losses == flat.epoch_losses

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("subsample", [0.0, 0.05])
    def test_kernel_matches_stepwise_reference(self, train_corpus, variant,
                                               subsample):
        """The compiled trainer must agree with a pure single-step replay of
        the same randomness (tolerance covers summation-order differences)."""
        cfg = TrainConfig(variant=variant, dim=5, window=3, negatives=2,
                          epochs=2, learning_rate=0.05, seed=31,
                          subsample=subsample, stle_top_m=2)
        kwargs = {}
        if variant in ("htle", "htleadd"):
            kwargs["labeling"] = random_labeling(train_corpus, 3, seed=2)
        elif variant == "stle":
            kwargs["doc_topics"] = random_doc_topics(train_corpus, 3, seed=2)
        fast = train(train_corpus, config=cfg, **kwargs)
        slow = reference_train(train_corpus, cfg, **kwargs)
        np.testing.assert_allclose(fast.output, slow.output,
                                   rtol=1e-9, atol=1e-12)
        if fast.input_topic is not None:
            np.testing.assert_allclose(fast.input_topic, slow.input_topic,
                                       rtol=1e-9, atol=1e-12)
        if fast.input_generic is not None:
            np.testing.assert_allclose(fast.input_generic, slow.input_generic,
                                       rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(fast.epoch_losses, slow.epoch_losses,
                                   rtol=1e-9)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_loss_decreases_over_epochs(self, variant):
        """Final-epoch loss beats first-epoch loss on a mid-sized corpus."""
        rng = np.random.default_rng(17)
        words = [f"v{i}" for i in range(40)]
        lines = [" ".join(rng.choice(words, size=100)) for _ in range(200)]
        corpus = toy_corpus(lines, min_count=1)
        cfg = TrainConfig(variant=variant, dim=16, window=4, negatives=5,
                          epochs=3, seed=3, subsample=0)
        kwargs = {}
        if variant in ("htle", "htleadd"):
            kwargs["labeling"] = random_labeling(corpus, 4, seed=4)
        elif variant == "stle":
            kwargs["doc_topics"] = random_doc_topics(corpus, 4, seed=4)
        model = train(corpus, config=cfg, **kwargs)
        assert len(model.epoch_losses) == 3
        assert model.epoch_losses[-1] < model.epoch_losses[0]

    def test_pair_vocabulary_matches_labeling(self, train_corpus):
        labeling = random_labeling(train_corpus, 3, seed=5)
        observed = {(int(w), int(k))
                    for doc, z in zip(train_corpus.documents, labeling)
                    for w, k in zip(doc.tokens, z)}
        model = train(train_corpus, labeling=labeling,
                      config=TrainConfig(variant="htle", dim=4, epochs=1))
        assert model.input_topic.shape[0] == len(observed)
        assert len(observed) <= len(train_corpus.vocab) * 3
        got = {(int(k) // 3, int(k) % 3) for k in model.pair_key}
        assert got == observed

    def test_threaded_mode_runs(self, train_corpus):
        cfg = TrainConfig(variant="sge", dim=4, epochs=2, threads=2, seed=1)
        model = train(train_corpus, config=cfg)
        assert len(model.epoch_losses) == 2
        assert np.isfinite(model.input_generic).all()
        assert np.isfinite(model.output).all()


class TestNearestNeighbors:
    def test_identical_row_ranks_first(self):
        model = make_model("htle", v=4, k=2, seed=11)
        model.input_topic[model.pair_row(1, 0)] = model.input_topic[model.pair_row(0, 0)]
        got = nearest_neighbors(model, 0, 0, k=1)
        assert got[0][0] == "w1#0"
        assert math.isclose(got[0][1], 1.0, rel_tol=1e-12)

    def test_ties_break_by_entry_order(self):
        model = make_model("htle", v=4, k=1, seed=12)
        query = model.input_topic[0].copy()
        # power-of-two scalings keep the cosine bit-identical, forcing a tie
        model.input_topic[2] = 2.0 * query
        model.input_topic[3] = 0.5 * query
        got = nearest_neighbors(model, 0, 0, k=2)
        assert [name for name, _ in got] == ["w2#0", "w3#0"]
        assert got[0][1] == got[1][1]

    def test_query_entry_excluded(self):
        model = make_model("sge", v=3, seed=13)
        names = [name for name, _ in nearest_neighbors(model, 1, None, k=10)]
        assert "w1" not in names
        assert len(names) == 2

    def test_k_clamps_to_candidates(self):
        model = make_model("htle", v=3, k=2, seed=14)
        got = nearest_neighbors(model, 0, 0, k=100)
        assert len(got) == 3 * 2 - 1

    def test_fallback_query_excludes_all_own_entries(self):
        model = make_model("htle", v=3, k=3, pairs=[(0, 0), (0, 1), (1, 0), (2, 2)],
                           pair_counts=[1, 5, 2, 2])
        # topic 2 was never observed for word 0: the modal row stands in and
        # every entry of word 0 is excluded from the candidates
        names = [name for name, _ in nearest_neighbors(model, 0, 2, k=10)]
        assert names and all(not n.startswith("w0#") for n in names)

    def test_htleadd_space_realizes_pairs(self):
        model = make_model("htleadd", v=3, k=2, seed=15)
        names, matrix = model.neighbor_space()
        assert len(names) == matrix.shape[0] == model.input_topic.shape[0]
        row = model.pair_row(2, 1)
        np.testing.assert_array_equal(
            matrix[row], model.input_topic[row] + model.input_generic[2])

    def test_zero_norm_rows_score_zero(self):
        model = make_model("sge", v=3, seed=16)
        model.input_generic[2] = 0.0
        got = dict(nearest_neighbors(model, 0, None, k=10))
        assert got["w2"] == 0.0

    def test_k_validation(self):
        model = make_model("sge", v=2)
        with pytest.raises(ValueError):
            nearest_neighbors(model, 0, None, k=0)


class TestModelIO:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_roundtrip_is_bit_exact(self, tmp_path, variant):
        model = make_model(variant, v=5, k=3, dim=4, seed=20,
                           pairs=[(0, 0), (1, 2), (3, 1)] if variant in ("htle", "htleadd") else None)
        path = str(tmp_path / f"{variant}.tse")
        model.save(path)
        loaded = load_model(path)
        assert models_equal(model, loaded)

    def test_unicode_words_survive(self, tmp_path):
        model = make_model("sge", v=2)
        model.words = ["naïve", "日本語"]
        model.word_index = {w: i for i, w in enumerate(model.words)}
        path = str(tmp_path / "uni.tse")
        model.save(path)
        assert load_model(path).words == ["naïve", "日本語"]

    def test_load_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tse"
        path.write_bytes(b"WHAT" + bytes(50))
        with pytest.raises(ValueError, match="not an embedding model"):
            load_model(str(path))

    def test_load_rejects_version_mismatch(self, tmp_path):
        path = tmp_path / "future.tse"
        path.write_bytes(struct.pack("<4sBBqqqq", b"TSE1", 9, 0, 2, 0, 0, 0))
        with pytest.raises(ValueError, match=r"version 9.*version 1"):
            load_model(str(path))

    def test_load_rejects_trailing_bytes(self, tmp_path):
        model = make_model("sge", v=2)
        path = tmp_path / "pad.tse"
        model.save(str(path))
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(ValueError, match="trailing"):
            load_model(str(path))

    def test_text_export_format(self, tmp_path):
        model = make_model("htleadd", v=3, k=2, dim=4, seed=21,
                           pairs=[(0, 0), (1, 1), (2, 0)])
        path = tmp_path / "model.txt"
        model.save_text(str(path))
        lines = path.read_text().splitlines()
        n_entries = 3 + 3  # pair entries plus generic rows
        assert lines[0] == f"{n_entries + 3} 4"
        assert len(lines) == 1 + n_entries + 3
        assert lines[1].split()[0] == "w0#0"
        assert lines[4].split()[0] == "w0"  # generic section follows pairs
        assert all(len(l.split()) == 5 for l in lines[1:])
        value = float(lines[1].split()[1])
        assert math.isclose(value, model.input_topic[0, 0], abs_tol=5e-7)
