import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerayns.decay import (
    detect_monotone_onset,
    duhamel_reconstruction,
    duhamel_residual,
    duhamel_self_convergence,
    fit_decay_exponent,
    heat_flow_difference_series,
    interpolation_consistency,
    scaled_norm_series,
    validity_window,
)
from lerayns.grid import Grid
from lerayns.initial_data import InitialDataSpec
from lerayns.series import NormSeries
from lerayns.solver import SolverConfig, run


def power_series(exponent, amplitude=3.0, t=None):
    t = np.geomspace(1.0, 100.0, 30) if t is None else t
    return NormSeries(t, {"l2": amplitude * t**exponent})


@pytest.fixture(scope="module")
def blob_run():
    cfg = SolverConfig(
        Grid(3, 32, 16 * math.pi), 2.0, InitialDataSpec("localized_random", seed=3, k0=0.5, energy=5.0, width=2.0),
        dt_max=0.05, extra_norms=("l4",),
    )
    return run(cfg)


@pytest.fixture(scope="module")
def faint_run():
    cfg = SolverConfig(
        Grid(3, 16, 8 * math.pi), 1.0, InitialDataSpec("localized_random", seed=3, k0=0.5, energy=1e-14, width=2.0),
        dt_max=0.05,
    )
    return run(cfg)


class TestFit:
    # r^2 is undefined for a flat series, so exponents near zero are excluded
    @given(st.floats(-3.0, -0.01) | st.floats(0.01, 1.0), st.floats(1e-3, 1e3))
    def test_recovers_power_law(self, exponent, amplitude):
        fit = fit_decay_exponent(power_series(exponent, amplitude), "l2", (1.0, 100.0))
        assert fit.exponent == pytest.approx(exponent, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.samples == 30

    def test_constant_series(self):
        fit = fit_decay_exponent(power_series(0.0), "l2", (1.0, 100.0))
        assert fit.exponent == 0.0 and fit.stderr == 0.0

    def test_window_restricts_samples(self):
        fit = fit_decay_exponent(power_series(-1.25), "l2", (2.0, 50.0))
        assert fit.samples < 30 and fit.window == (2.0, 50.0)

    @pytest.mark.parametrize(
        "window, match", [((0.0, 10.0), "t_b > t_a > 0"), ((10.0, 5.0), "t_b > t_a"), ((1.0, 3.0), "span|samples")]
    )
    def test_rejects_bad_windows(self, window, match):
        with pytest.raises(ValueError, match=match):
            fit_decay_exponent(power_series(-1.0), "l2", window)

    def test_rejects_non_positive(self):
        s = power_series(-1.0)
        s.columns["l2"][5] = 0.0
        with pytest.raises(ValueError, match="non-positive"):
            fit_decay_exponent(s, "l2", (1.0, 100.0))


class TestScaledSeries:
    @given(st.floats(-2.0, 2.0), st.floats(0.0, 5.0))
    def test_identity(self, exponent, offset):
        t = np.linspace(0.5, 10.0, 20)
        s = NormSeries(t, {"l2": 1.0 + t})
        out = scaled_norm_series(s, exponent, offset)
        kept = t > offset
        assert out.notes["dropped"] == int(np.count_nonzero(~kept))
        np.testing.assert_allclose(out["l2"], (1.0 + t[kept]) * (t[kept] - offset) ** exponent, rtol=1e-14)

    def test_inverse(self):
        s = power_series(-0.75)
        back = scaled_norm_series(scaled_norm_series(s, 0.75), -0.75)
        np.testing.assert_allclose(back["l2"], s["l2"], rtol=1e-14)

    def test_flattens_matching_power(self):
        out = scaled_norm_series(power_series(-1.25, 2.0), 1.25)
        np.testing.assert_allclose(out["l2"], 2.0, rtol=1e-13)

    def test_negative_offset(self):
        with pytest.raises(ValueError):
            scaled_norm_series(power_series(-1.0), 1.0, -1.0)


class TestOnset:
    def test_decaying_gradient_starts_at_first_sample(self):
        t = np.linspace(0.0, 1.0, 11)
        s = NormSeries(t, {"l2": np.exp(-t), "dl2": np.exp(-2 * t)})
        rep = detect_monotone_onset(s)
        assert rep.onset_detected == 0.0 and rep.satisfied

    def test_onset_after_last_rise(self):
        t = np.arange(6.0)
        s = NormSeries(t, {"l2": np.ones(6), "dl2": np.array([1.0, 2.0, 1.5, 1.8, 1.2, 1.0])})
        assert detect_monotone_onset(s).onset_detected == 3.0

    def test_rising_at_end(self):
        t = np.arange(4.0)
        s = NormSeries(t, {"l2": np.ones(4), "dl2": np.array([3.0, 2.0, 1.0, 2.0])})
        rep = detect_monotone_onset(s)
        assert rep.onset_detected is None and not rep.satisfied

    def test_rounding_level_rise_ignored(self):
        t = np.arange(3.0)
        s = NormSeries(t, {"l2": np.ones(3), "dl2": np.array([1.0, 1.0 + 1e-13, 0.5])})
        assert detect_monotone_onset(s).onset_detected == 0.0

    def test_bound_and_gate(self):
        t = np.arange(3.0)
        s = NormSeries(t, {"l2": np.full(3, 2.0), "dl2": np.array([1e6, 1.0, 0.5])})
        rep = detect_monotone_onset(s)
        assert rep.bound == pytest.approx(0.000753026 * 16)
        assert rep.gate_time == 1.0 and rep.gate_persistent and rep.gate_satisfied is False

    def test_taylor_green_decays_from_start(self):
        cfg = SolverConfig(Grid(2, 32), 0.5, InitialDataSpec("taylor_green_2d"), dt=0.05)
        rep = detect_monotone_onset(run(cfg).norms)
        assert rep.onset_detected == 0.0 and rep.gate_time == 0.0


class TestWindow:
    def test_localized_run(self, blob_run):
        vw = validity_window(blob_run)
        assert not vw.empty
        assert vw.t_a >= 10 * blob_run.nominal_dt0
        assert vw.t_a in blob_run.snapshots.times

    def test_small_box_is_empty(self):
        cfg = SolverConfig(
            Grid(3, 16, 2 * math.pi), 1.0, InitialDataSpec("localized_random", seed=1, k0=1.0, energy=1.0, width=0.4),
            delta=0.0, dt_max=0.05,
        )
        assert validity_window(run(cfg), transient_steps=10).empty

    def test_zero_field(self):
        cfg = SolverConfig(Grid(3, 8), 1.0, InitialDataSpec("zero"), dt_max=0.05)
        vw = validity_window(run(cfg))
        assert vw.t_a == 0.5 and vw.t_b == 1.0 and vw.to_dict()["empty"] is False


class TestDuhamel:
    def test_trivial_interval(self, blob_run):
        assert duhamel_residual(blob_run, 0.5, 0.5, 1) == 0.0

    def test_rejects_reversed(self, blob_run):
        with pytest.raises(ValueError):
            duhamel_reconstruction(blob_run, 1.0, 0.5, 1)

    def test_non_snapshot_time(self, blob_run):
        with pytest.raises(KeyError, match="nearest snapshot"):
            duhamel_residual(blob_run, 0.3, 2.0, 1)

    def test_linear_regime(self, faint_run):
        # the source is quadratic, so the heat term alone reproduces the run
        assert duhamel_residual(faint_run, 0.0, 1.0, 1) < 1e-10

    def test_reconstructs_solution(self, blob_run):
        assert duhamel_residual(blob_run, 0.0, 2.0, 4) < 1e-3

    def test_self_convergence_order(self, blob_run):
        sc = duhamel_self_convergence(blob_run, 0.0, 2.0, (1, 2, 4))
        assert sc.expected_order == 4
        assert all(b < a for a, b in zip(sc.increments, sc.increments[1:]))
        assert sc.order > 3


class TestHeatFlowDifference:
    def test_starts_at_zero(self, blob_run):
        s = heat_flow_difference_series(blob_run, 0.25)
        assert s.times[0] == 0.25 and s.notes["t0"] == 0.25
        assert s["l2"][0] == 0.0 and s["sup"][0] == 0.0
        assert np.all(s["u_l2"] > 0) and np.all(s["v_l2"] > 0)

    def test_faint_data(self, faint_run):
        s = heat_flow_difference_series(faint_run, 0.0)
        assert np.max(s["l2"]) <= 1e-10 * faint_run.u0_l2

    def test_unknown_anchor(self, blob_run):
        with pytest.raises(KeyError):
            heat_flow_difference_series(blob_run, 0.3)


class TestInterpolation:
    @pytest.mark.parametrize("q", [2.0, 4.0, math.inf])
    def test_pointwise(self, blob_run, q):
        reports = interpolation_consistency(blob_run, [q], window=(0.1, 2.0))
        point = reports[0]
        assert point.name == f"interpolation_l{q:g}"
        assert point.passed
        if q == 2.0 or q == math.inf:
            assert point.lhs == pytest.approx(point.rhs, rel=1e-12)

    def test_exponent_check_inconclusive_without_samples(self, blob_run):
        reports = interpolation_consistency(blob_run, [4.0], window=(1.0, 2.0))
        assert reports[1].status == "inconclusive"
