import warnings

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from vivrom import ssmodel as ss
from vivrom.exceptions import DegenerateReferenceError, DimensionError, NumericError, ParameterError
from vivrom.signals import TimeSeries, best_fit
from vivrom.synth import MotionSpec, make_dataset, reference_drag_model
from vivrom.sysid import (InlineForcing, NlsProblem, PemProblem, compare_forcings,
                          estimate_initial_state, identify_crossflow, identify_inline, inline_input,
                          pem_identify, scale_gain, trf_minimize)
from vivrom.sysid.trf import fd_jacobian
from vivrom.wake import VdpParams, integrate_wake

from systems import random_stable_system

TABLE6 = VdpParams(68.29, 1.18, 2117.0, 70.68)
TABLE8 = VdpParams(88.60, 1.35, 3540.0, 34.94)


def rosenbrock(p):
    return np.array([1 - p[0], 10 * (p[1] - p[0] ** 2)])


def scaled(p: VdpParams, f: float) -> VdpParams:
    return VdpParams.from_array(p.as_array() * f)


class TestTrf:
    def test_linear_residual(self):
        # target inside the initial trust region, so the Gauss-Newton step is taken whole
        c = np.array([1.5, 2.3, -1.4])
        p, rep = trf_minimize(NlsProblem(lambda p: p - c, [1.0, 2.0, -1.0]))
        np.testing.assert_allclose(p, c, atol=1e-10)
        assert rep.iterations <= 2 and rep.converged

    def test_rosenbrock(self):
        p, rep = trf_minimize(NlsProblem(rosenbrock, [-1.2, 1.0]))
        np.testing.assert_allclose(p, [1, 1], atol=1e-6)
        assert rep.iterations <= 100 and rep.converged

    def test_bound_active(self):
        p, rep = trf_minimize(NlsProblem(lambda p: p + 1.0, [2.0], lower=[0.0], upper=[np.inf]))
        assert 0.0 < p[0] < 1e-6
        assert all(x[0] > 0 for x in rep.iterates)

    def test_monotone_descent(self):
        _, rep = trf_minimize(NlsProblem(rosenbrock, [-1.2, 1.0]))
        c = np.asarray(rep.cost_history)
        assert np.all(np.diff(c) <= 0)

    @settings(max_examples=50)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    @example(1.7476123259498424e-19, 0.0, 0.0625, 1.0)  # start next to the origin
    def test_iterates_stay_inside(self, x0, y0, wx, wy):
        lo = np.array([x0 - wx, y0 - wy])
        hi = np.array([x0 + wx, y0 + wy])
        p, rep = trf_minimize(NlsProblem(rosenbrock, [x0, y0], lo, hi, max_iter=60))
        for it in rep.iterates + [p]:
            assert np.all(it > lo) and np.all(it < hi)
        assert np.all(np.diff(rep.cost_history) <= 0)

    def test_start_next_to_origin(self):
        lo, hi = np.array([-0.0625, -1.0]), np.array([0.0625, 1.0])
        p, rep = trf_minimize(NlsProblem(rosenbrock, [1e-19, 0.0], lo, hi))
        assert rep.converged and p[0] == pytest.approx(0.0625, rel=1e-6)

    def test_gives_up_with_flag(self):
        p, rep = trf_minimize(NlsProblem(rosenbrock, [-1.2, 1.0], max_iter=2))
        assert not rep.converged and np.all(np.isfinite(p))

    def test_non_finite_start(self):
        with pytest.raises(NumericError):
            trf_minimize(NlsProblem(lambda p: np.array([np.nan]), [1.0]))

    def test_start_outside_bounds(self):
        with pytest.raises(ParameterError):
            NlsProblem(rosenbrock, [0.0, 0.0], [0.0, -1.0], [1.0, 1.0])

    def test_fd_jacobian_first_order_accuracy(self):
        fun = lambda p: np.array([np.sin(p[0]) * p[1], p[0] ** 3 - np.exp(p[1])])  # noqa: E731
        p = np.array([0.3, -0.7])
        J = fd_jacobian(fun, p, fun(p), np.full(2, -np.inf), np.full(2, np.inf))
        errs = []
        for eps in (1e-2, 1e-3):
            d = eps * np.array([0.6, -0.8])
            errs.append(np.linalg.norm(J @ d - (fun(p + d) - fun(p))) / eps)
        assert errs[1] < errs[0] / 5
        exact = np.array([[np.cos(0.3) * -0.7, np.sin(0.3)], [3 * 0.09, -np.exp(-0.7)]])
        np.testing.assert_allclose(J, exact, rtol=1e-7)


class TestPem:
    @pytest.fixture
    def data(self):
        r = np.random.default_rng(7)
        m = random_stable_system(2, r)
        u = TimeSeries(0, 1.0, r.standard_normal(1000))
        return m, u, ss.simulate(m, u)

    def test_truth_is_fixed_point(self, data):
        m, u, y = data
        mi, rep = pem_identify(PemProblem(u, y, 2, m))
        assert rep.best_fit_percent >= 99.9
        np.testing.assert_allclose(ss.markov_from_model(mi, 20).h, ss.markov_from_model(m, 20).h, atol=1e-8)
        assert rep.cost_history[-1] <= rep.cost_history[0]

    def test_era_seed(self, data):
        m, u, y = data
        h = ss.markov_from_data(u, y, 60)
        seed = ss.era_realize(ss.build_hankel(h, 30, 30), ss.build_hankel(h, 30, 30, 1), 2, 1.0, h.h[0])
        mi, rep = pem_identify(PemProblem(u, y, 2, seed))
        assert rep.best_fit_percent >= 99.0

    def test_perturbed_seed_improves(self, data):
        m, u, y = data
        seed = ss.StateSpaceModel(m.A * 0.9, m.B * 1.1, m.C, m.D + 0.05, False, 1.0)
        y_seed = ss.simulate(seed, u)
        mi, rep = pem_identify(PemProblem(u, y, 2, seed))
        assert rep.best_fit_percent >= best_fit(y, y_seed)
        assert np.all(np.diff(rep.cost_history) <= 0)

    def test_static_gain(self, rng):
        u = TimeSeries(0, 1.0, rng.standard_normal(200))
        y = u * 2.5 + TimeSeries(0, 1.0, 0.1 * rng.standard_normal(200))
        m, rep = pem_identify(PemProblem(u, y, 0))
        assert m.D == pytest.approx((u.values @ y.values) / (u.values @ u.values), rel=1e-12)

    def test_too_little_data(self, rng):
        u = TimeSeries(0, 1.0, rng.standard_normal(50))
        with pytest.raises(DimensionError):
            pem_identify(PemProblem(u, u, 2, random_stable_system(2, rng)))


def riser_dataset(truth=TABLE6, kind="acceleration", seed=0, noise=0.0, T=2.0):
    return make_dataset(truth, kind, None, "lc2", MotionSpec(), 1e-3, T, 2.0, noise, seed)


class TestCrossflow:
    @pytest.mark.parametrize("truth", [TABLE6, TABLE8], ids=["table6", "table8"])
    @pytest.mark.parametrize("factor", [1.2, 0.8])
    def test_recovers_parameters(self, truth, factor):
        d = riser_dataset(truth)
        p, rep = identify_crossflow(d["d_CF"], d["L_c"], "acceleration", scaled(truth, factor))
        np.testing.assert_allclose(p.as_array(), truth.as_array(), rtol=0.01)
        assert rep.converged and rep.best_fit_percent > 99.9
        assert rep.variant == "acceleration"

    def test_zero_motion_flags_gain(self):
        d = make_dataset(TABLE6, "acceleration", None, "lc2", MotionSpec(kind="none"), 1e-3, 1.0, 1.0)
        assert np.all(d["d_CF"].values == 0)
        with pytest.warns(RuntimeWarning, match="gain"):
            _, rep = identify_crossflow(d["d_CF"], d["L_c"], "acceleration", scaled(TABLE6, 1.1))
        assert "gain" in rep.diagnostics["unidentifiable"]
        assert rep.diagnostics["sensitivity"]["gain"] < 1e-8

    def test_holdout_reported(self):
        d = riser_dataset(TABLE6)
        _, rep = identify_crossflow(d["d_CF"], d["L_c"], "acceleration", scaled(TABLE6, 1.1), holdout=0.25)
        assert rep.diagnostics["holdout_best_fit"] > 99.0

    def test_divergent_trials_are_penalized(self):
        d = riser_dataset(TABLE6, T=0.5)
        bad = VdpParams(68.29, 1.18, 2117.0, 7.0e6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            p, rep = identify_crossflow(d["d_CF"], d["L_c"], "acceleration", bad, max_iter=5)
        assert np.isfinite(rep.residual_norm)

    def test_initial_state_estimate(self):
        lc, rate = integrate_wake(TABLE6, None, ic=(0.3, 5.0), dt=1e-3, T=0.1, return_rate=True)
        x1, x2 = estimate_initial_state(lc)
        assert x1 == 0.3 and x2 == pytest.approx(5.0, rel=1e-2)

    def test_gain_rescaling_matches_rms(self):
        d = riser_dataset(TABLE6, T=1.0)["d_CF"]
        from vivrom.wake import forcing_signal
        p = scale_gain(TABLE6, d, "acceleration", "displacement")
        ra = np.sqrt(np.mean(forcing_signal(d, "acceleration").values ** 2))
        rd = np.sqrt(np.mean(d.values ** 2))
        assert p.gain * rd == pytest.approx(TABLE6.gain * ra, rel=1e-12)


class TestInline:
    @pytest.fixture
    def clean(self):
        return riser_dataset(TABLE6)

    def test_round_trip(self, clean):
        m, rep = identify_inline(clean["L_c"], clean["D_c_fluct"], "lc2")
        assert rep.best_fit_percent >= 99.0 and m.order == 2
        assert rep.diagnostics["hankel_order"] == 2

    @pytest.mark.parametrize("seed", [0, 3])
    def test_noisy_drag(self, seed):
        d = riser_dataset(TABLE6, seed=seed)
        y = d["D_c_fluct"]
        r = np.random.default_rng(seed)
        noisy = y + TimeSeries(0, y.dt, 0.05 * np.sqrt(np.mean(y.values ** 2)) * r.standard_normal(len(y)))
        m, rep = identify_inline(d["L_c"], noisy, "lc2", rel_threshold=1e-2)
        assert rep.best_fit_percent >= 90.0
        assert m.order == 2

    def test_noise_on_both_channels(self):
        d = riser_dataset(TABLE6, noise=0.05, seed=3)
        m, rep = identify_inline(d["L_c"], d["D_c_fluct"], "lc2", rel_threshold=1e-2)
        assert rep.best_fit_percent >= 90.0
        assert m.order <= 3

    def test_zero_drag_is_degenerate(self, clean):
        zero = clean["D_c_fluct"].with_values(np.zeros(len(clean["D_c_fluct"])))
        with pytest.raises(DegenerateReferenceError):
            identify_inline(clean["L_c"], zero, "lc2")

    def test_input_functions(self):
        lc = TimeSeries(0, 1e-3, np.sin(np.arange(100) * 0.05))
        np.testing.assert_array_equal(inline_input(lc, "lc2").values, lc.values ** 2)
        prod = inline_input(lc, InlineForcing.LC_LCDOT).values
        assert prod[50] == pytest.approx(lc.values[50] * np.cos(2.5) * 50, rel=1e-3)

    def test_unknown_variant(self):
        with pytest.raises(ParameterError):
            InlineForcing.parse("lc3")

    def test_holdout(self, clean):
        _, rep = identify_inline(clean["L_c"], clean["D_c_fluct"], "lc2", holdout=0.3)
        assert rep.diagnostics["holdout_best_fit"] >= 99.0


class TestCompare:
    def test_acceleration_truth(self):
        res = compare_forcings(riser_dataset(TABLE6, seed=1), scaled(TABLE6, 1.1))
        assert res.inline_winner == "lc2" and res.crossflow_winner == "acceleration"
        table = res.table().splitlines()
        assert table[0] == "| Name | Best Fit |" and len(table) == 7

    def test_velocity_truth(self):
        truth = VdpParams(68.29, 1.18, 2117.0, 2.5)
        d = riser_dataset(truth, "velocity", seed=2)
        res = compare_forcings(d, truth, "velocity")
        assert res.crossflow_winner == "velocity"

    def test_missing_channel(self):
        d = riser_dataset(TABLE6, T=0.5)
        del d["D_c_fluct"]
        with pytest.raises(DimensionError):
            compare_forcings(d)


def test_reference_drag_has_zero_dc_gain():
    m = ss.to_discrete(reference_drag_model(), 1e-3)
    dc = m.C @ np.linalg.solve(np.eye(2) - m.A, m.B) + m.D
    assert abs(dc) < 1e-12
