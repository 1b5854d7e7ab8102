import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agingprint.physics import (EcmParams, FoecmParams, OcvModel, ParameterError,
                                coulomb_count, cpe_branch_currents, default_ocv,
                                gl_weights, ocv, simulate_cpe_parallel, simulate_ecm,
                                simulate_foecm, simulate_warburg)
from agingprint.synth import generate_cycle, preset

currents = st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=40).map(np.array)


def binomial_weight(alpha, j):
    # (-1)^j * C(alpha, j) via the generalised binomial coefficient
    return (-1) ** j * math.gamma(alpha + 1) / (math.gamma(j + 1) * math.gamma(alpha - j + 1))


class TestOcv:
    m = OcvModel(np.array([0.0, 0.5, 1.0]), np.array([2.0, 3.0, 3.2]))

    def test_knot_identity(self):
        assert ocv(0.5, self.m) == 3.0

    def test_linear_midpoint(self):
        assert ocv(0.75, self.m) == pytest.approx(3.1, abs=1e-15)

    @pytest.mark.parametrize("soc, expected", [(-0.1, 2.0), (1.3, 3.2)])
    def test_clamped(self, soc, expected):
        assert ocv(soc, self.m) == expected

    @pytest.mark.parametrize("soc, v", [
        ([0.0, 0.5], [2.0, 3.0]),            # must cover [0, 1]
        ([0.0, 0.6, 0.5, 1.0], [2, 3, 3, 3]),  # not increasing
        ([0.0, 1.0], [3.0, 2.0]),            # falling voltage
    ])
    def test_invalid_knots(self, soc, v):
        with pytest.raises(ParameterError):
            OcvModel(np.array(soc, dtype=float), np.array(v, dtype=float))

    def test_csv_round_trip(self, tmp_path):
        m = default_ocv()
        path = tmp_path / "ocv.csv"
        m.to_csv(path)
        assert path.read_text().splitlines()[0] == "soc,ocv_V"
        back = OcvModel.from_csv(path)
        np.testing.assert_array_equal(back.soc_knots, m.soc_knots)
        np.testing.assert_array_equal(back.v_knots, m.v_knots)

    def test_default_spans_cell_range(self):
        m = default_ocv()
        assert ocv(0.0, m) == 2.0 and ocv(1.0, m) == 3.3


class TestCoulombCount:
    def test_one_c_empties_in_an_hour(self):
        soc = coulomb_count(np.full(3601, 1.1), 1.0, 1.0, 1.1)
        assert soc[-1] == pytest.approx(0.0, abs=1e-12)

    def test_zero_current(self):
        np.testing.assert_array_equal(coulomb_count(np.zeros(5), 2.0, 0.7, 1.1), 0.7)

    def test_ramp_matches_closed_form(self):
        dt, a, b = 3.0, 0.5, 0.002
        t = np.arange(200) * dt
        soc = coulomb_count(a + b * t, dt, 1.0, 1.1)
        exact = 1.0 - (a * t + 0.5 * b * t ** 2) / (3600 * 1.1)
        np.testing.assert_allclose(soc, exact, rtol=1e-12)

    def test_not_clamped(self):
        assert coulomb_count(np.full(10, 100.0), 100.0, 1.0, 1.1)[-1] < 0

    @pytest.mark.parametrize("Q", [0.0, -1.0])
    def test_bad_capacity(self, Q):
        with pytest.raises(ParameterError):
            coulomb_count(np.ones(3), 1.0, 1.0, Q)


class TestGlWeights:
    @pytest.mark.parametrize("alpha, expected", [
        (0.5, [1, -0.5, -0.125, -0.0625]),
        (-0.5, [1, 0.5, 0.375, 0.3125]),
        (1.0, [1, -1, 0, 0]),
    ])
    def test_values(self, alpha, expected):
        np.testing.assert_allclose(gl_weights(alpha, 4).weights, expected, atol=1e-15)

    @pytest.mark.parametrize("alpha", [0.3, 0.7, -0.5, 0.95])
    def test_binomial_oracle(self, alpha):
        w = gl_weights(alpha, 12).weights
        oracle = [binomial_weight(alpha, j) for j in range(12)]
        np.testing.assert_allclose(w, oracle, rtol=1e-12, atol=1e-15)

    @given(st.floats(-0.99, 0.99), st.integers(2, 60))
    def test_recursion_identity(self, alpha, L):
        w = gl_weights(alpha, L).weights
        assert w[0] == 1.0
        for j in range(1, L):
            assert w[j] == w[j - 1] * (1 - (alpha + 1) / j)

    def test_scale(self):
        k = gl_weights(0.7, 3, dt=2.0)
        assert k.L == 3 and k.scale == 2.0 ** -0.7


class TestEcm:
    def test_zero_current(self):
        m = default_ocv()
        p = EcmParams(0.02, [(0.05, 100.0)], 1.1, 0.8)
        np.testing.assert_array_equal(simulate_ecm(np.zeros(20), 1.0, p, m), ocv(0.8, m))

    def test_steady_state(self):
        m = OcvModel(np.array([0.0, 1.0]), np.array([3.3, 3.3]))
        R1, C1, I0 = 0.05, 20.0, 2.0
        p = EcmParams(0.0, [(R1, C1)], 1e6, 1.0)
        V = simulate_ecm(np.full(400, I0), 0.5, p, m)
        assert 3.3 - V[-1] == pytest.approx(I0 * R1, rel=1e-3)

    def test_step_response_exact(self):
        m = OcvModel(np.array([0.0, 1.0]), np.array([3.3, 3.3]))
        R1, C1, I0, dt = 0.05, 20.0, 4.4, 0.7
        p = EcmParams(0.0, [(R1, C1)], 1e9, 1.0)
        I = np.full(300, I0)
        v1 = 3.3 - simulate_ecm(I, dt, p, m)
        t = np.arange(300) * dt
        # step switched on at t = 0 and held, so the pair starts charging then
        np.testing.assert_allclose(v1, I0 * R1 * (1 - np.exp(-t / (R1 * C1))),
                                   rtol=0, atol=1e-10)

    def test_invalid_pairs(self):
        with pytest.raises(ParameterError):
            EcmParams(0.0, [], 1.1)
        with pytest.raises(ParameterError):
            EcmParams(0.0, [(0.0, 10.0)], 1.1)


class TestCpe:
    def test_zero_input(self):
        np.testing.assert_array_equal(simulate_cpe_parallel(np.zeros(30), 2.0, 0.07, 50, 0.7), 0)

    def test_short_circuit(self):
        np.testing.assert_array_equal(simulate_cpe_parallel(np.ones(30), 2.0, 0.0, 50, 0.7), 0)

    def test_dc_limit(self):
        I0, R = 4.4, 0.07
        v = simulate_cpe_parallel(np.full(3000, I0), 2.0, R, 50.0, 0.7)
        assert v[-1] == pytest.approx(I0 * R, rel=0.01)

    def test_integer_order_limit_matches_rc(self):
        # GL at order one is a backward difference, so the step must be small
        # against R*C (3.5 s here) for the two discretisations to agree
        dt, n, R, C = 0.05, 1200, 0.07, 50.0
        I = np.full(n, 4.4)
        v_cpe = simulate_cpe_parallel(I, dt, R, C, 1 - 1e-6)
        m = OcvModel(np.array([0.0, 1.0]), np.array([3.3, 3.3]))
        v_rc = 3.3 - simulate_ecm(I, dt, EcmParams(0.0, [(R, C)], 1e9, 1.0), m)
        assert np.max(np.abs(v_cpe - v_rc)) <= 0.005 * np.max(np.abs(v_rc))

    def test_branch_currents_sum(self):
        I = np.full(50, 4.4)
        v = simulate_cpe_parallel(I, 2.0, 0.07, 50.0, 0.7)
        I_R, I_C = cpe_branch_currents(v, 0.07, I)
        np.testing.assert_allclose(I_R + I_C, I)
        assert I_C[-1] < I_C[1]

    @pytest.mark.parametrize("Q, alpha", [(0.0, 0.7), (50.0, 0.0), (50.0, 1.2)])
    def test_invalid(self, Q, alpha):
        with pytest.raises(ParameterError):
            simulate_cpe_parallel(np.ones(5), 1.0, 0.07, Q, alpha)

    def test_memory_cap(self):
        I = np.full(200, 4.4)
        full = simulate_cpe_parallel(I, 2.0, 0.07, 50.0, 0.7)
        short = simulate_cpe_parallel(I, 2.0, 0.07, 50.0, 0.7, L=20)
        np.testing.assert_array_equal(full[:20], short[:20])
        assert not np.array_equal(full, short)


class TestWarburg:
    def test_zero_input(self):
        np.testing.assert_array_equal(simulate_warburg(np.zeros(20), 2.0, 0.03, 600.0), 0)

    @pytest.mark.parametrize("dt", [0.5, 2.0, 6.0])
    def test_step_matches_inverse_laplace(self, dt):
        I0, R_W, tau = 4.4, 0.03, 600.0
        n = 500
        v = simulate_warburg(np.full(n, I0), dt, R_W, tau)
        t = np.arange(n) * dt
        exact = 2 * I0 * R_W * np.sqrt(t / (math.pi * tau))
        np.testing.assert_allclose(v[10:], exact[10:], rtol=0.01)

    def test_doubling(self):
        I = np.random.default_rng(0).uniform(0, 5, 80)
        np.testing.assert_array_equal(simulate_warburg(2 * I, 2.0, 0.03, 600.0),
                                      2 * simulate_warburg(I, 2.0, 0.03, 600.0))

    @pytest.mark.parametrize("tau", [0.0, -5.0])
    def test_bad_tau(self, tau):
        with pytest.raises(ParameterError):
            simulate_warburg(np.ones(4), 1.0, 0.03, tau)

    def test_ramp_uses_fractional_integral(self):
        # I = t has the half-integral t^1.5 / Gamma(2.5)
        dt, n = 1.0, 400
        t = np.arange(n) * dt
        v = simulate_warburg(t, dt, 1.0, 1.0)
        exact = t ** 1.5 / math.gamma(2.5)
        np.testing.assert_allclose(v[100:], exact[100:], rtol=0.01)


class TestFoecm:
    def test_loss_free_is_ocv(self):
        p = FoecmParams(R0=0.0, R_dyn=0.0, R_W=0.0)
        I = np.full(100, 4.4)
        V = simulate_foecm(I, 2.0, p)
        np.testing.assert_array_equal(V, ocv(coulomb_count(I, 2.0, 1.0, 1.1), p.ocv))

    def test_without_tail_is_stage_one_predictor(self):
        p = FoecmParams(R_W=0.0)
        I = np.full(100, 4.4)
        soc = coulomb_count(I, 2.0, 1.0, p.Q)
        expected = ocv(soc, p.ocv) - I * p.R0 - simulate_cpe_parallel(
            I, 2.0, p.R_dyn, p.cpe_Q, p.cpe_alpha)
        np.testing.assert_array_equal(simulate_foecm(I, 2.0, p), expected)

    def test_reproduces_synthetic_trace(self):
        prof = preset("medium", noise_sigma=0.0)
        log, truth, _ = generate_cycle(prof, 500, seed=1)
        V = simulate_foecm(log.I, prof.dt, truth)
        np.testing.assert_allclose(V, log.V, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kwargs", [
        {"cpe_alpha": 0.0}, {"cpe_alpha": 1.0}, {"tau_W": 0.0}, {"Q": 0.0},
        {"R_dyn": -0.1},
    ])
    def test_invalid_params(self, kwargs):
        with pytest.raises(ParameterError):
            FoecmParams(**kwargs)

    def test_with_fingerprint(self):
        p = FoecmParams().with_fingerprint(0.08, 0.03)
        assert (p.R_dyn, p.R_W) == (0.08, 0.03)


@given(currents, st.integers(1, 39))
def test_causality(I, k):
    k = min(k, I.size - 1)
    p = FoecmParams()
    ecm = EcmParams(0.02, [(0.05, 40.0)], 1.1)
    for sim in (lambda x: simulate_foecm(x, 2.0, p),
                lambda x: simulate_ecm(x, 2.0, ecm, p.ocv),
                lambda x: simulate_cpe_parallel(x, 2.0, 0.07, 50.0, 0.7),
                lambda x: simulate_warburg(x, 2.0, 0.03, 600.0)):
        np.testing.assert_array_equal(sim(I)[:k], sim(I[:k]))


@given(currents, st.floats(-3.0, 3.0))
def test_linearity(I, a):
    m = OcvModel(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    ecm = EcmParams(0.0, [(0.05, 40.0)], 1e12)
    pairs = [
        lambda x: simulate_warburg(x, 2.0, 0.03, 600.0),
        lambda x: simulate_cpe_parallel(x, 2.0, 0.07, 50.0, 0.7),
        lambda x: -simulate_ecm(x, 2.0, ecm, m),
    ]
    for sim in pairs:
        np.testing.assert_allclose(sim(a * I), a * sim(I), rtol=1e-12, atol=1e-13)


def test_replace_keeps_validation():
    with pytest.raises(ParameterError):
        replace(FoecmParams(), cpe_alpha=1.5)
