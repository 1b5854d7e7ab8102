import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agingprint.identify import CycleFingerprint
from agingprint.mapping import (LOOKUP_MAGIC, NON_DECREASING, NON_INCREASING,
                                IsotonicCurve, LookupTable, MappingConfig,
                                MappingError, build_lookup, curves_table,
                                isotonic_fit, map_fingerprints, pava,
                                query_lookup, weights_rdyn, weights_rw)

from conftest import isotonic_brute_force

values = st.lists(st.floats(-10, 10), min_size=1, max_size=30)


@st.composite
def weighted(draw, max_size=30):
    y = draw(st.lists(st.floats(-10, 10), min_size=1, max_size=max_size))
    w = draw(st.lists(st.floats(0.01, 100), min_size=len(y), max_size=len(y)))
    return np.array(y), np.array(w)


class TestWeights:
    def test_rdyn(self):
        np.testing.assert_allclose(weights_rdyn([0.0, 1e-6], 1e-6), [1e6, 5e5])

    def test_rdyn_rejects_nonpositive_floor(self):
        with pytest.raises(MappingError):
            weights_rdyn([0.0], 0.0)

    def test_rw_floor(self):
        np.testing.assert_allclose(weights_rw([0.0, 0.3], 0.01), [0.01, 0.3])


class TestPava:
    def test_reverse_triplet(self):
        np.testing.assert_allclose(pava([3, 1, 2]), [2, 2, 2])

    def test_weighted_pair(self):
        np.testing.assert_allclose(pava([2, 1], [3, 1]), [1.75, 1.75])

    def test_decreasing(self):
        np.testing.assert_allclose(pava([1, 3, 2], increasing=False), [2, 2, 2])

    @pytest.mark.parametrize("y, w", [([], None), ([1, 2], [1]), ([1, 2], [1, 0])])
    def test_invalid(self, y, w):
        with pytest.raises(MappingError):
            pava(y, w)

    @given(values)
    def test_sorted_input_unchanged(self, y):
        y = np.sort(y)
        np.testing.assert_array_equal(pava(y), y)

    @given(weighted())
    def test_monotone_and_mean_preserving(self, yw):
        y, w = yw
        fit = pava(y, w)
        assert np.all(np.diff(fit) >= -1e-9)
        assert np.dot(w, fit) == pytest.approx(np.dot(w, y), rel=1e-9, abs=1e-9)

    @given(weighted())
    def test_idempotent(self, yw):
        y, w = yw
        fit = pava(y, w)
        np.testing.assert_allclose(pava(fit, w), fit, rtol=1e-12, atol=1e-12)

    @given(weighted(max_size=7), st.booleans())
    def test_matches_partition_search(self, yw, inc):
        y, w = yw
        np.testing.assert_allclose(pava(y, w, inc), isotonic_brute_force(y, w, inc),
                                   rtol=1e-9, atol=1e-9)


class TestIsotonicFit:
    def test_ties_are_pooled(self):
        c = isotonic_fit([0.9, 0.9, 0.8], [1.0, 3.0, 5.0], [1.0, 1.0, 1.0])
        assert c.s.tolist() == [0.8, 0.9]
        np.testing.assert_allclose(c.y, [5.0, 2.0])
        np.testing.assert_allclose(c.weights, [1.0, 2.0])

    def test_non_increasing_in_soh(self):
        rng = np.random.default_rng(2)
        s = rng.uniform(0.8, 1.0, 50)
        y = 0.2 - 0.1 * s + rng.normal(0, 0.005, 50)
        c = isotonic_fit(s, y)
        assert np.all(np.diff(c.y) <= 0)

    def test_step_evaluation(self):
        c = IsotonicCurve(np.array([0.8, 0.9, 1.0]), np.array([3.0, 2.0, 1.0]),
                          NON_INCREASING)
        assert c(0.85) == 3.0
        assert c(0.9) == 2.0
        assert c(0.5) == 3.0 and c(1.2) == 1.0
        np.testing.assert_array_equal(c([0.8, 0.95]), [3.0, 2.0])

    def test_bad_direction(self):
        with pytest.raises(MappingError):
            isotonic_fit([1.0], [1.0], direction="up")


def make_table(k=25):
    c_dyn = isotonic_fit([0.8, 0.9, 1.0], [0.10, 0.08, 0.06])
    c_w = isotonic_fit([0.8, 0.9, 1.0], [0.05, 0.03, 0.01])
    return c_dyn, c_w, build_lookup(c_dyn, c_w, MappingConfig(k=k))


class TestLookup:
    def test_reference_spacing(self):
        _, _, tbl = make_table()
        assert tbl.soh_refs.size == 25
        np.testing.assert_allclose(np.diff(tbl.soh_refs), 0.2 / 24, rtol=1e-12)
        assert (tbl.soh_refs[0], tbl.soh_refs[-1]) == (0.8, 1.0)

    def test_entries_match_curve(self):
        c_dyn, c_w, tbl = make_table()
        for s, rd, rw in zip(tbl.soh_refs, tbl.r_dyn, tbl.r_w):
            assert (rd, rw) == (c_dyn(s), c_w(s))

    def test_constant_curve(self):
        c = isotonic_fit([0.85, 0.95], [0.07, 0.07])
        tbl = build_lookup(c, c)
        assert np.all(tbl.r_dyn == 0.07)

    def test_query_at_node_and_midpoint(self):
        _, _, tbl = make_table()
        assert query_lookup(tbl, tbl.soh_refs[3]) == (tbl.r_dyn[3], tbl.r_w[3])
        mid = 0.5 * (tbl.soh_refs[3] + tbl.soh_refs[4])
        rd, rw = query_lookup(tbl, mid)
        assert rd == pytest.approx(0.5 * (tbl.r_dyn[3] + tbl.r_dyn[4]), rel=1e-12)
        assert rw == pytest.approx(0.5 * (tbl.r_w[3] + tbl.r_w[4]), rel=1e-12)

    def test_query_clamps(self):
        _, _, tbl = make_table()
        assert query_lookup(tbl, 0.5) == (tbl.r_dyn[0], tbl.r_w[0])
        assert query_lookup(tbl, 1.5) == (tbl.r_dyn[-1], tbl.r_w[-1])

    @given(st.floats(0.7, 1.1), st.floats(0.7, 1.1))
    def test_query_monotone(self, a, b):
        _, _, tbl = make_table()
        lo, hi = sorted((a, b))
        assert query_lookup(tbl, hi)[0] <= query_lookup(tbl, lo)[0]
        assert query_lookup(tbl, hi)[1] <= query_lookup(tbl, lo)[1]

    def test_json_round_trip(self):
        _, _, tbl = make_table()
        back = LookupTable.loads(tbl.dumps())
        np.testing.assert_array_equal(back.r_dyn, tbl.r_dyn)
        np.testing.assert_array_equal(back.soh_refs, tbl.soh_refs)
        assert json.loads(tbl.dumps())["format"] == LOOKUP_MAGIC

    def test_rejects_foreign_json(self):
        with pytest.raises(MappingError):
            LookupTable.loads('{"soh_refs": []}')


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"eps0": 0.0}, {"f_min": 1.5}, {"k": 1}, {"soh_range": (1.0, 0.8)},
        {"direction_w": "sideways"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(MappingError):
            MappingConfig(**kwargs)


def fp(cycle, soh, R_dyn, R_W, eps1=1e-4, frac=0.2):
    return CycleFingerprint(cycle, R_dyn, R_W, eps1, 0.0, frac, soh_hat=soh,
                            cell_id="short-00")


class TestMapFingerprints:
    def test_end_to_end(self):
        fps = [fp(k, 1.0 - 0.005 * k, 0.06 + 0.0005 * k, 0.01 + 0.0004 * k)
               for k in range(40)]
        c_dyn, c_w, tbl = map_fingerprints(fps, cell_id="short-00")
        assert tbl.built_from["cycles"] == 40
        assert np.all(np.diff(tbl.r_dyn) <= 0) and np.all(np.diff(tbl.r_w) <= 0)
        assert query_lookup(tbl, 0.9)[0] == pytest.approx(0.07, abs=5e-4)

    def test_untrusted_cycle_has_little_pull(self):
        fps = [fp(1, 0.95, 0.07, 0.02), fp(2, 0.95, 0.07, 0.50, frac=0.0)]
        _, c_w, _ = map_fingerprints(fps)
        assert c_w(0.95) == pytest.approx((0.02 * 0.2 + 0.5 * 0.01) / 0.21)

    def test_needs_soh(self):
        with pytest.raises(MappingError):
            map_fingerprints([fp(1, None, 0.07, 0.02)])

    def test_empty(self):
        with pytest.raises(MappingError):
            map_fingerprints([])

    def test_curves_table(self):
        c_dyn, c_w, _ = make_table()
        rows = curves_table([("a", c_dyn, c_w)], [0.8, 0.9])
        assert [r["R_dyn_ohm"] for r in rows] == [0.10, 0.08]


def test_non_decreasing_option():
    c = isotonic_fit([0.8, 0.9], [0.2, 0.1], direction=NON_DECREASING)
    np.testing.assert_allclose(c.y, [0.15, 0.15])
