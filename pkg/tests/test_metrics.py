import numpy as np
import pytest

import beamsense as bs
from beamsense.channel import SampleSet
from beamsense.metrics import (
    SplitSpec,
    accuracy,
    gain_loss_db,
    make_eval_report,
    percentile_loss,
    required_measurements,
    subset_codebook_sweep,
    validate_and_split,
)


def make_sampleset(labels, n_features=4):
    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(0)
    return SampleSet(
        features=rng.random((n, n_features)),
        labels=labels,
        alphas=np.full(n, 0.2),
        aoas=np.zeros((n, 1)),
    )


class TestValidateAndSplit:
    def test_uniform_split_counts(self):
        ss = make_sampleset(np.repeat(np.arange(5), 200))
        train, test, kept = validate_and_split(ss, SplitSpec(144, split_seed=1))
        assert len(kept) == 5
        assert train.n_samples == 5 * 144
        assert test.n_samples == 5 * 56
        for l in range(5):
            assert np.sum(train.labels == l) == 144
            assert np.sum(test.labels == l) == 56

    def test_sparse_labels_dropped_and_reindexed(self):
        labels = np.concatenate([np.zeros(150), np.full(10, 3), np.full(160, 7)])
        ss = make_sampleset(labels.astype(int))
        train, test, kept = validate_and_split(ss, SplitSpec(144))
        assert kept == {0: 0, 7: 1}
        assert set(train.labels) == {0, 1}
        assert 3 not in kept

    def test_all_dropped_rejected(self):
        ss = make_sampleset([0, 0, 1])
        with pytest.raises(ValueError):
            validate_and_split(ss, SplitSpec(144))

    def test_split_deterministic(self):
        ss = make_sampleset(np.repeat(np.arange(3), 200))
        t1, _, _ = validate_and_split(ss, SplitSpec(100, split_seed=7))
        t2, _, _ = validate_and_split(ss, SplitSpec(100, split_seed=7))
        assert np.array_equal(t1.features, t2.features)
        t3, _, _ = validate_and_split(ss, SplitSpec(100, split_seed=8))
        assert not np.array_equal(t1.features, t3.features)

    def test_no_drops_test_size_arithmetic(self):
        ss = make_sampleset(np.repeat(np.arange(4), 150))
        train, test, kept = validate_and_split(ss, SplitSpec(144))
        assert test.n_samples == ss.n_samples - 144 * len(kept)


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_disjoint(self):
        assert accuracy([1, 2], [3, 4]) == 0.0

    def test_two_thirds(self):
        assert accuracy([0, 1, 2], [0, 1, 0]) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([1], [1, 2])


class TestGainLoss:
    def test_all_correct_zero(self):
        P = np.array([[4.0, 1.0], [1.0, 9.0]])
        loss = gain_loss_db(P, [0, 1], [0, 1])
        assert np.allclose(loss, 0.0)

    def test_factor_four_is_6db(self):
        P = np.array([[4.0, 1.0]])
        loss = gain_loss_db(P, [0], [1])
        assert loss[0] == pytest.approx(10 * np.log10(4), abs=1e-6)
        assert loss[0] == pytest.approx(6.021, abs=1e-3)

    def test_zero_selected_power_inf(self):
        P = np.array([[4.0, 0.0]])
        loss = gain_loss_db(P, [0], [1])
        assert np.isinf(loss[0])

    def test_percentile_matches_sort_oracle(self):
        rng = np.random.default_rng(2)
        losses = rng.random(1001) * 20
        got = percentile_loss(losses, 90)
        s = np.sort(losses)
        k = 0.9 * 1000  # exactly the 900th order statistic here
        assert got == pytest.approx(s[int(k)], rel=1e-12)

    def test_loss_nonnegative_for_genie_labels(self):
        rng = np.random.default_rng(3)
        P = rng.random((50, 8)) + 0.01
        t = np.argmax(P, axis=1)
        p = rng.integers(0, 8, 50)
        assert np.all(gain_loss_db(P, t, p) >= 0)


class TestEvalReport:
    def test_accuracy_one_implies_zero_percentile_loss(self):
        rng = np.random.default_rng(4)
        P = rng.random((30, 5)) + 0.01
        t = np.argmax(P, axis=1)
        rep = make_eval_report("genie", P, t, t, kept_labels=5)
        assert rep.accuracy == 1.0
        assert rep.gain_loss_db_percentiles[90.0] == 0.0

    def test_percentile_curve_monotone(self):
        rng = np.random.default_rng(5)
        P = rng.random((200, 6)) + 0.01
        t = np.argmax(P, axis=1)
        p = rng.integers(0, 6, 200)
        rep = make_eval_report("rand", P, t, p, kept_labels=6,
                               percentiles=(10, 50, 90, 99))
        vals = [rep.gain_loss_db_percentiles[q] for q in (10.0, 50.0, 90.0, 99.0)]
        assert vals == sorted(vals)

    def test_json_export(self, tmp_path):
        P = np.array([[2.0, 1.0]])
        rep = make_eval_report("x", P, [0], [0], kept_labels=2)
        path = tmp_path / "rep.json"
        rep.save_json(path)
        import json
        d = json.loads(path.read_text())
        assert d["algorithm"] == "x"
        assert d["accuracy"] == 1.0


class TestRequiredMeasurements:
    def test_monotone_curve(self):
        req = required_measurements({"a": {4: 5.0, 8: 2.0}}, 3.0, 90)
        assert req == {"a": 8}

    def test_unmet(self):
        req = required_measurements({"a": {4: 9.0, 8: 7.0}}, 3.0, 90)
        assert req == {"a": None}

    def test_raw_losses_accepted(self):
        losses = np.array([0.0] * 95 + [10.0] * 5)
        req = required_measurements({"a": {6: losses}}, 3.0, 90)
        assert req == {"a": 6}

    def test_nonincreasing_in_threshold(self):
        curves = {"a": {2: 8.0, 4: 5.0, 8: 1.0}}
        r_tight = required_measurements(curves, 2.0, 90)["a"]
        r_loose = required_measurements(curves, 6.0, 90)["a"]
        assert r_loose <= r_tight

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            required_measurements({"a": {}}, 3.0, 90)


class TestSubsetSweep:
    def _pools(self):
        g = bs.ArrayGeometry(36)
        centers = (np.arange(10) - 4.5) * 9.0
        return {
            "pn": bs.pn_codebook(g, 4, seed=0),
            "sa": bs.sa_codebook(g, bs.SaParams(3, 25.0), centers),
        }

    def test_one_pn_plus_sa_composition(self):
        pools = self._pools()
        (cb,) = subset_codebook_sweep(pools, [6], {"pn": 1, "sa": None})
        assert cb.n_beams == 6
        kinds = [m["source_kind"] for m in cb.beam_meta]
        assert kinds.count("PN") == 1 and kinds.count("SA") == 5

    def test_full_pool_identity(self):
        pools = self._pools()
        (cb,) = subset_codebook_sweep(pools, [14], {"pn": None, "sa": 10})
        assert cb.n_beams == 14

    def test_nestedness(self):
        pools = self._pools()
        books = subset_codebook_sweep(pools, [3, 6, 9, 12], {"pn": 2, "sa": None})
        for small, large in zip(books, books[1:]):
            small_cols = {tuple(np.round(small.weights[:, i], 12))
                          for i in range(small.n_beams)}
            large_cols = {tuple(np.round(large.weights[:, i], 12))
                          for i in range(large.n_beams)}
            assert small_cols <= large_cols

    def test_sa_taken_center_out(self):
        pools = self._pools()
        (cb,) = subset_codebook_sweep(pools, [2], {"sa": None}.copy())
        centers = sorted(m["center_deg"] for m in cb.beam_meta)
        assert centers == [-4.5, 4.5]

    def test_m_exceeding_pool_rejected(self):
        pools = self._pools()
        with pytest.raises(ValueError):
            subset_codebook_sweep(pools, [99], {"pn": 1, "sa": None})
