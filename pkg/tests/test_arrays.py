import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

import beamsense as bs
from beamsense.arrays import (
    beam_pattern,
    export_pattern_csv,
    feature_correlation,
    qpd_quadratic_phase,
)


def response_loop_oracle(n, spacing, angle_deg, impairment=None):
    """Independent per-element evaluation of the array response."""
    out = np.empty(n, dtype=complex)
    for i in range(n):
        a = 1.0 if impairment is None else impairment[i]
        out[i] = a * np.exp(1j * 2 * np.pi * i * np.sin(np.deg2rad(angle_deg)) * spacing)
    return out


class TestArrayResponse:
    def test_broadside_is_all_ones(self):
        g = bs.ArrayGeometry(4)
        assert np.allclose(bs.array_response(g, 0.0), np.ones(4))

    def test_two_element_30deg(self):
        # second element: exp(j*2pi*1*0.5*sin(30deg)) = exp(j*pi/2) = j
        g = bs.ArrayGeometry(2)
        r = bs.array_response(g, 30.0)
        assert r[1] == pytest.approx(1j, abs=1e-12)

    def test_matches_elementwise_oracle(self):
        g = bs.ArrayGeometry(36)
        r = bs.array_response(g, 10.0)
        assert np.max(np.abs(r - response_loop_oracle(36, 0.5, 10.0))) < 1e-12

    def test_impairment_scales_magnitudes(self):
        imp = np.array([1.0, 0.5 + 0.5j, 2.0])
        g = bs.ArrayGeometry(3, impairment=imp)
        r = bs.array_response(g, 17.0)
        assert np.allclose(np.abs(r), np.abs(imp))

    @pytest.mark.parametrize("bad", [90.0, -90.0, 123.0])
    def test_angle_domain_error(self, bad):
        with pytest.raises(ValueError):
            bs.array_response(bs.ArrayGeometry(4), bad)


class TestPencil:
    def test_64_beam_codebook_shape(self):
        cb = bs.pencil_codebook(bs.ArrayGeometry(36), np.linspace(-45, 45, 64))
        assert cb.weights.shape == (36, 64)
        assert cb.kind == "Pencil"

    def test_broadside_beam_is_all_ones(self):
        cb = bs.pencil_codebook(bs.ArrayGeometry(8), [0.0])
        assert np.allclose(cb.weights[:, 0], 1.0)

    def test_matched_gain_is_n_elements(self):
        g = bs.ArrayGeometry(36)
        cb = bs.pencil_codebook(g, [-30.0, 12.5, 44.0])
        for i, a in enumerate([-30.0, 12.5, 44.0]):
            gain = np.abs(cb.weights[:, i].conj() @ bs.array_response(g, a))
            assert gain == pytest.approx(36.0, abs=1e-9)

    def test_empty_angle_list_rejected(self):
        with pytest.raises(ValueError):
            bs.pencil_codebook(bs.ArrayGeometry(4), [])

    def test_steering_correctness_on_fine_grid(self):
        # argmax of the pattern within one 0.05deg step of the steering angle
        g = bs.ArrayGeometry(36)
        angles = [-37.0, -5.0, 0.0, 21.5, 44.0]
        cb = bs.pencil_codebook(g, angles)
        grid = np.arange(-60, 60.0001, 0.05)
        for i, a in enumerate(angles):
            pat = beam_pattern(cb, i, grid)
            assert abs(grid[np.argmax(pat)] - a) <= 0.05 + 1e-9


class TestPn:
    def test_phases_exactly_two_bit(self):
        cb = bs.pn_codebook(bs.ArrayGeometry(36), 36, seed=7)
        assert cb.weights.shape == (36, 36)
        allowed = {1 + 0j, 1j, -1 + 0j, -1j}
        assert set(np.round(cb.weights, 12).ravel().tolist()) <= allowed

    def test_deterministic_for_seed(self):
        a = bs.pn_codebook(bs.ArrayGeometry(36), 36, seed=7)
        b = bs.pn_codebook(bs.ArrayGeometry(36), 36, seed=7)
        assert np.array_equal(a.weights, b.weights)

    def test_phase_histogram_uniform(self):
        cb = bs.pn_codebook(bs.ArrayGeometry(100), 100, seed=1)
        phases = np.round(np.mod(np.angle(cb.weights.ravel()), 2 * np.pi), 6)
        _, counts = np.unique(phases, return_counts=True)
        assert len(counts) == 4
        assert chisquare(counts).pvalue > 0.01


class TestSa:
    def test_shape_and_block_structure(self):
        g = bs.ArrayGeometry(36)
        params = bs.SaParams(3, 25.0)
        centers = (np.arange(10) - 4.5) * 9.0
        cb = bs.sa_codebook(g, params, centers)
        assert cb.weights.shape == (36, 10)
        sub = bs.ArrayGeometry(12)
        for b, c in enumerate(centers):
            fingers = cb.beam_meta[b]["finger_angles_deg"]
            assert fingers == pytest.approx([c - 25, c, c + 25])
            for i, th in enumerate(fingers):
                block = cb.weights[12 * i:12 * (i + 1), b]
                expect = bs.pencil_codebook(sub, [th]).weights[:, 0]
                assert np.array_equal(block, expect)

    def test_single_subarray_degenerates_to_pencil(self):
        g = bs.ArrayGeometry(12)
        cb = bs.sa_codebook(g, bs.SaParams(1, 25.0), [10.0])
        pencil = bs.pencil_codebook(g, [10.0])
        assert np.allclose(cb.weights, pencil.weights)

    def test_nondivisible_rejected(self):
        with pytest.raises(ValueError):
            bs.sa_codebook(bs.ArrayGeometry(36), bs.SaParams(5, 25.0), [0.0])

    def test_pattern_has_lobes_near_each_finger(self):
        g = bs.ArrayGeometry(36)
        cb = bs.sa_codebook(g, bs.SaParams(3, 25.0), [0.0])
        grid = np.arange(-60, 60.0001, 0.1)
        pat = beam_pattern(cb, 0, grid)
        peak = pat.max()
        for th in (-25.0, 0.0, 25.0):
            window = np.abs(grid - th) < 5.0
            local_argmax = grid[window][np.argmax(pat[window])]
            # a lobe peaks near each finger (sub-array beamwidth ~8deg, and
            # inter-sub-array interference shifts peaks slightly)
            assert abs(local_argmax - th) < 3.5
            assert pat[window].max() > peak - 6.0


class TestQpd:
    def test_quadratic_phase_first_element(self):
        # n=1, N=36, Phi=pi: 4*pi*(35/74)^2
        q = qpd_quadratic_phase(36, np.pi)
        assert q[0] == pytest.approx(4 * np.pi * (35 / 74) ** 2, abs=1e-12)
        assert q[0] == pytest.approx(2.8110, abs=5e-4)

    def test_center_element_zero_for_odd_n(self):
        q = qpd_quadratic_phase(35, np.pi)
        assert q[17] == 0.0

    def test_quadratic_phase_symmetric(self):
        for n in (35, 36):
            q = qpd_quadratic_phase(n, np.pi)
            assert np.allclose(q, q[::-1], atol=1e-12)

    def test_wider_and_lower_than_pencil(self):
        g = bs.ArrayGeometry(36)
        qpd = bs.qpd_codebook(g, [bs.QpdParams(np.pi, 0.0)])
        pencil = bs.pencil_codebook(g, [0.0])
        grid = np.arange(-45, 45.0001, 0.05)
        pq = beam_pattern(qpd, 0, grid)
        pp = beam_pattern(pencil, 0, grid)
        assert pq.max() < pp.max()

        def width_3db(p):
            peak = p.max()
            return 0.05 * np.sum(p >= peak - 3.0)

        assert width_3db(pq) > width_3db(pp)


class TestBeamPattern:
    def test_pencil_peak_gain(self):
        cb = bs.pencil_codebook(bs.ArrayGeometry(36), [0.0])
        pat = beam_pattern(cb, 0, [0.0])
        assert pat[0] == pytest.approx(20 * np.log10(36), abs=1e-9)

    def test_pn_flatter_than_pencil(self):
        g = bs.ArrayGeometry(36)
        grid = np.arange(-45, 45.0001, 0.5)
        pn = beam_pattern(bs.pn_codebook(g, 1, seed=5), 0, grid)
        pencil = beam_pattern(bs.pencil_codebook(g, [0.0]), 0, grid)
        assert pn.max() - pn.min() < pencil.max() - pencil.min()

    def test_index_out_of_range(self):
        cb = bs.pencil_codebook(bs.ArrayGeometry(4), [0.0])
        with pytest.raises(IndexError):
            beam_pattern(cb, 1, [0.0])

    def test_export_csv(self, tmp_path):
        grid = np.array([-1.0, 0.0, 1.0])
        cb = bs.pencil_codebook(bs.ArrayGeometry(4), [0.0])
        pat = beam_pattern(cb, 0, grid)
        out = tmp_path / "pattern.csv"
        export_pattern_csv(out, grid, pat)
        lines = out.read_text().splitlines()
        assert lines[0] == "angle_deg,gain_db"
        assert len(lines) == 4


class TestUnitModulus:
    @settings(max_examples=25, deadline=None)
    @given(
        n=st.sampled_from([12, 24, 36]),
        seed=st.integers(0, 10_000),
        angle=st.floats(-89.0, 89.0),
    )
    def test_all_families_unit_modulus(self, n, seed, angle):
        g = bs.ArrayGeometry(n)
        books = [
            bs.pencil_codebook(g, [angle]),
            bs.pn_codebook(g, 4, seed),
            bs.sa_codebook(g, bs.SaParams(3, 25.0), [angle / 2]),
            bs.qpd_codebook(g, [bs.QpdParams(np.pi, angle / 2)]),
        ]
        for cb in books:
            assert np.max(np.abs(np.abs(cb.weights) - 1.0)) <= 1e-12


class TestMixedAndJson:
    def test_mixed_concatenation_and_meta(self):
        g = bs.ArrayGeometry(36)
        pn = bs.pn_codebook(g, 2, seed=0)
        sa = bs.sa_codebook(g, bs.SaParams(3, 25.0), [0.0, 9.0])
        mix = bs.mixed_codebook(pn, sa)
        assert mix.kind == "Mixed"
        assert mix.n_beams == 4
        assert [m["source_kind"] for m in mix.beam_meta] == ["PN", "PN", "SA", "SA"]
        assert np.array_equal(mix.weights[:, :2], pn.weights)

    def test_json_roundtrip(self, tmp_path):
        g = bs.ArrayGeometry(36)
        cb = bs.mixed_codebook(
            bs.pn_codebook(g, 3, seed=2),
            bs.qpd_codebook(g, [bs.QpdParams(np.pi, -9.0)]),
        )
        path = tmp_path / "cb.json"
        cb.save_json(path)
        loaded = bs.Codebook.load_json(path)
        assert loaded.kind == cb.kind
        assert np.allclose(loaded.weights, cb.weights, atol=1e-12)
        d = json.loads(path.read_text())
        assert set(d) == {"n_elements", "spacing", "kind", "beams"}


class TestFeatureCorrelation:
    def test_duplicated_columns_fully_correlated(self):
        rng = np.random.default_rng(0)
        col = rng.random(50)
        feats = np.column_stack([col, col])
        corr = feature_correlation(feats)
        assert corr[0, 1] == pytest.approx(1.0)
        assert np.allclose(np.diag(corr), 1.0)

    def test_independent_features_near_zero(self):
        rng = np.random.default_rng(1)
        feats = rng.random((10_000, 5))
        corr = feature_correlation(feats)
        off = corr[~np.eye(5, dtype=bool)]
        assert np.max(np.abs(off)) < 0.05

    def test_constant_column_flagged(self):
        feats = np.column_stack([np.ones(10), np.arange(10.0)])
        with pytest.warns(UserWarning, match="constant feature"):
            corr = feature_correlation(feats)
        assert corr[0, 1] == 0.0
        assert corr[0, 0] == 1.0

    def test_sa_qpd_more_neighbor_correlated_than_pn(self):
        # L=2, alpha=0.2 channel batch: directional-family features correlate
        g = bs.ArrayGeometry(36)
        centers = (np.arange(10) - 4.5) * 9.0
        books = {
            "pn": bs.pn_codebook(g, 10, seed=3),
            "sa": bs.sa_codebook(g, bs.SaParams(3, 25.0), centers),
            "qpd": bs.qpd_codebook(g, [bs.QpdParams(np.pi, c) for c in centers]),
        }
        feats = {k: [] for k in books}
        for t in range(400):
            rng = np.random.default_rng(t)
            phi1 = rng.uniform(-45, 45)
            phi2 = phi1 + np.clip(rng.uniform(2, 30), 2, 30) * rng.choice([-1, 1])
            phi2 = float(np.clip(phi2, -44, 44))
            if abs(phi2 - phi1) < 2:
                continue
            ch = bs.realize_channel(
                g, bs.ChannelParams(2, 0.2, (phi1, phi2))
            )
            for k, cb in books.items():
                feats[k].append(np.abs(cb.weights.conj().T @ ch.h))
        neighbor = {}
        for k in books:
            corr = feature_correlation(np.array(feats[k]))
            neighbor[k] = np.mean(np.abs(np.diag(corr, 1)))
        assert neighbor["sa"] > neighbor["pn"]
        assert neighbor["qpd"] > neighbor["pn"]
