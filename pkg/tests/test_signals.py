import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from vivrom.exceptions import DegenerateReferenceError, DimensionError, ParameterError
from vivrom.signals import (Spectrum, TimeSeries, best_fit, derivative, dominant_frequency,
                            read_csv, resample, welch_psd, write_csv)


def ts(values, dt=1.0):
    return TimeSeries(0.0, dt, values)


def sine(f, dt, T, amp=1.0):
    t = np.arange(int(round(T / dt))) * dt
    return ts(amp * np.sin(2 * np.pi * f * t), dt)


class TestTimeSeries:
    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ParameterError):
            TimeSeries(0.0, 0.0, [1, 2])

    def test_values_are_read_only(self):
        s = ts([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 3.0

    def test_window_shifts_t0(self):
        s = TimeSeries(1.0, 0.5, np.arange(10))
        w = s.window(4, 8)
        assert w.t0 == 3.0 and len(w) == 4


class TestBestFit:
    def test_perfect_prediction(self):
        z = ts([0.3, -1.0, 2.0, 5.0])
        assert best_fit(z, z) == 100.0

    def test_mean_predictor_scores_zero(self):
        z = ts([1.0, 4.0, -2.0, 3.0])
        assert best_fit(z, ts(np.full(4, z.values.mean()))) == pytest.approx(0.0, abs=1e-12)

    def test_hand_example(self):
        assert best_fit(ts([1, 2, 3]), ts([1, 2, 4])) == pytest.approx((1 - 1 / np.sqrt(2)) * 100, rel=1e-9)

    def test_can_be_negative(self):
        assert best_fit(ts([1, 2, 3]), ts([10, -5, 7])) < 0

    def test_mismatched_length(self):
        with pytest.raises(DimensionError):
            best_fit(ts([1, 2, 3]), ts([1, 2]))

    def test_mismatched_dt(self):
        with pytest.raises(DimensionError):
            best_fit(ts([1, 2, 3], 0.1), ts([1, 2, 3], 0.2))

    def test_constant_reference(self):
        with pytest.raises(DegenerateReferenceError):
            best_fit(ts([2, 2, 2]), ts([1, 2, 3]))

    @given(arrays(float, 16, elements=st.floats(-100, 100)),
           arrays(float, 16, elements=st.floats(-100, 100)),
           st.floats(-1e3, 1e3))
    def test_shift_invariance(self, z, zhat, c):
        if np.ptp(z) < 1e-3:
            return
        a = best_fit(ts(z), ts(zhat))
        b = best_fit(ts(z + c), ts(zhat + c))
        assert b == pytest.approx(a, abs=1e-9 * max(1.0, abs(a)))

    @given(arrays(float, 12, elements=st.floats(-1e3, 1e3)))
    def test_self_fit_is_exact(self, z):
        if np.ptp(z) < 1e-6:
            return
        assert best_fit(ts(z), ts(z)) == 100.0


class TestDerivative:
    def test_constant(self):
        d = derivative(ts(np.full(20, 3.3), 0.1))
        assert np.all(d.values == 0.0)

    def test_ramp(self):
        t = np.arange(50) * 0.1
        d = derivative(ts(t, 0.1))
        np.testing.assert_allclose(d.values, 1.0, rtol=1e-12)

    def test_second_derivative_of_sine(self):
        s = sine(1.0, 1e-3, 2.0)
        d2 = derivative(s, 2).values[1:-1]
        ref = -(2 * np.pi) ** 2 * s.values[1:-1]
        assert np.max(np.abs(d2 - ref)) / np.max(np.abs(ref)) < 1e-4

    def test_length_preserved(self):
        assert len(derivative(ts(np.arange(7.0)), 2)) == 7

    def test_too_short(self):
        with pytest.raises(DimensionError):
            derivative(ts([1, 2, 3, 4]))

    def test_bad_order(self):
        with pytest.raises(ParameterError):
            derivative(ts(np.arange(10.0)), 3)

    def test_recovers_signal_from_cumulative_sum(self):
        errs = []
        for dt in (1e-2, 5e-3):
            t = np.arange(int(2 / dt)) * dt
            x = np.cos(3 * t)
            integ = np.concatenate([[0.0], np.cumsum(0.5 * (x[1:] + x[:-1])) * dt])
            d = derivative(ts(integ, dt)).values
            errs.append(np.max(np.abs(d[1:-1] - x[1:-1])))
        assert errs[1] < errs[0] / 3.5


class TestWelch:
    def test_single_tone_peak(self):
        sp = welch_psd(sine(2.0, 1e-2, 60.0))
        df = sp.frequencies[1] - sp.frequencies[0]
        assert abs(dominant_frequency(sp) - 2.0) <= df

    def test_white_noise_is_flat(self, rng):
        s = ts(rng.standard_normal(2**16), 1e-2)
        a = welch_psd(s, 256).amplitudes[1:-1]
        assert a.max() / a.min() < 3.0

    def test_two_tone_power_ratio(self):
        dt, T = 1e-2, 200.0
        t = np.arange(int(T / dt)) * dt
        s = ts(np.sin(2 * np.pi * 2 * t) + 0.5 * np.sin(2 * np.pi * 4 * t), dt)
        sp = welch_psd(s, 2000)
        f, p = sp.frequencies, sp.amplitudes
        df = f[1] - f[0]

        def power(f0):
            band = np.abs(f - f0) <= 4 * df
            return p[band].sum() * df

        assert power(2.0) / power(4.0) == pytest.approx(4.0, rel=0.1)
        assert dominant_frequency(sp) == pytest.approx(2.0, abs=df)

    @given(st.integers(0, 2**32 - 1))
    def test_parseval(self, seed):
        r = np.random.default_rng(seed)
        t = np.arange(2**14) * 0.01
        x = r.standard_normal(t.size) + 2.0 * np.sin(2 * np.pi * r.uniform(1, 20) * t + r.uniform(0, 6))
        sp = welch_psd(ts(x, 0.01))
        df = sp.frequencies[1] - sp.frequencies[0]
        assert np.sum(sp.amplitudes) * df == pytest.approx(np.var(x), rel=0.05)

    def test_frequencies_within_nyquist(self):
        sp = welch_psd(sine(3.0, 0.01, 10))
        assert sp.frequencies[0] >= 0 and sp.frequencies[-1] <= 50.0 + 1e-12

    def test_segment_longer_than_series(self):
        with pytest.raises(DimensionError):
            welch_psd(ts(np.ones(10)), 20)

    def test_bad_overlap(self):
        with pytest.raises(ParameterError):
            welch_psd(ts(np.ones(64)), 16, 1.0)

    def test_asd_is_root_psd(self):
        sp = welch_psd(sine(3.0, 0.01, 20))
        np.testing.assert_array_equal(sp.to_asd().amplitudes, np.sqrt(sp.amplitudes))


class TestDominantFrequency:
    def test_single_peak(self):
        assert dominant_frequency(Spectrum([0, 1, 2, 3], [0, 0.1, 5, 0.2])) == 2.0

    def test_tie_goes_low(self):
        assert dominant_frequency(Spectrum([0, 1, 2, 3], [0, 4, 1, 4])) == 1.0

    def test_empty(self):
        with pytest.raises(DimensionError):
            dominant_frequency(Spectrum([], []))


class TestResample:
    def test_identity(self):
        s = sine(1.0, 1e-3, 1.0)
        r = resample(s, 1e-3)
        np.testing.assert_array_equal(r.values, s.values)

    def test_ramp_exact(self):
        s = ts(np.arange(101) * 0.01, 0.01)
        r = resample(s, 0.0037)
        np.testing.assert_allclose(r.values, r.times, atol=1e-12)

    def test_sine_error_bound(self):
        s = sine(1.0, 1e-3, 2.0)
        r = resample(s, 2e-3)
        assert np.max(np.abs(r.values - np.sin(2 * np.pi * r.times))) < 1e-5

    def test_nonpositive_dt(self):
        with pytest.raises(ParameterError):
            resample(ts([1.0, 2.0]), 0.0)


class TestCsv:
    def test_round_trip(self, tmp_path):
        a = TimeSeries(0.5, 0.01, np.linspace(0, 1, 30))
        write_csv(tmp_path / "x.csv", {"a": a, "b": a * 2})
        back = read_csv(tmp_path / "x.csv")
        assert list(back) == ["a", "b"]
        np.testing.assert_allclose(back["b"].values, 2 * a.values, rtol=1e-9)
        assert back["a"].dt == pytest.approx(0.01) and back["a"].t0 == 0.5

    def test_non_uniform_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("time,a\n0,1\n0.1,2\n0.3,3\n")
        with pytest.raises(DimensionError):
            read_csv(p)

    def test_tolerates_rounding(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("time,a\n0,1\n0.1000000001,2\n0.2,3\n")
        assert read_csv(p)["a"].dt == pytest.approx(0.1)

    def test_header_must_start_with_time(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("t,a\n0,1\n1,2\n")
        with pytest.raises(DimensionError):
            read_csv(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("")
        with pytest.raises(DimensionError):
            read_csv(p)
