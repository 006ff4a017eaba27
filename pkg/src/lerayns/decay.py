"""Post-processing of trajectories: Duhamel reconstruction, heat-flow comparisons,
power-law fits and the monotone-gradient onset."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bounds import CONSTANTS, BoundReport, regularity_time_bound
from .grid import Grid
from .norms import NormSpec, norm_of_array
from .operators import source_array
from .series import NormSeries, scaled_norm_series
from .solver import Trajectory

__all__ = [
    "DecayFit",
    "RegularityReport",
    "ValidityWindow",
    "detect_monotone_onset",
    "duhamel_reconstruction",
    "duhamel_residual",
    "duhamel_self_convergence",
    "fit_decay_exponent",
    "heat_flow_difference_series",
    "interpolation_consistency",
    "scaled_norm_series",
    "validity_window",
]

MIN_FIT_SAMPLES = 8
MIN_FIT_SPAN = 4.0
ONSET_HYSTERESIS = 1e-9


# ---------------------------------------------------------------------------
# Duhamel reconstruction


def _lagrange_weights(nodes: np.ndarray, s: float) -> np.ndarray:
    w = np.ones(nodes.size)
    for a in range(nodes.size):
        for b in range(nodes.size):
            if a != b:
                w[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
    return w


def duhamel_reconstruction(traj: Trajectory, t0: float, t: float, n_quad: int, points: int = 2) -> np.ndarray:
    """Coefficients of ``exp((t-t0)Lap) u(t0) + int_{t0}^{t} exp((t-s)Lap) Q_delta(u(s)) ds``.

    The integral is split at every snapshot between ``t0`` and ``t``; each
    snapshot interval is cut into ``n_quad`` equal panels carrying a
    ``points``-node Gauss-Legendre rule (order ``2*points``).  The velocity at
    a node is the cubic Lagrange interpolant through the four snapshots
    nearest to that interval, so the integrand is smooth on every panel.
    """
    if n_quad < 1:
        raise ValueError("n_quad must be >= 1")
    store = traj.snapshots
    times = store.times
    i0 = store.index_of(t0)
    i1 = store.index_of(t)
    if i1 < i0:
        raise ValueError("t must not precede t0")
    grid = traj.grid
    k2 = grid.k_squared
    base = store.get(i0).coeffs * np.exp(-(times[i1] - times[i0]) * k2)
    if i1 == i0:
        return base
    if times.size < 4:
        raise ValueError(f"Duhamel reconstruction needs at least 4 snapshots, trajectory has {times.size}")
    gl_x, gl_w = np.polynomial.legendre.leggauss(points)
    delta = traj.delta
    dealias = traj.config.dealias
    t_end = times[i1]
    acc = np.zeros_like(base)
    for k in range(i0, i1):
        lo = min(max(k - 1, 0), times.size - 4)
        stencil = list(range(lo, lo + 4))
        nodes = times[stencil]
        fields = [store.get(j).coeffs for j in stencil]
        a, b = times[k], times[k + 1]
        edges = np.linspace(a, b, n_quad + 1)
        for pa, pb in zip(edges[:-1], edges[1:]):
            half = 0.5 * (pb - pa)
            mid = 0.5 * (pb + pa)
            for x, w in zip(gl_x, gl_w):
                s = mid + half * x
                lw = _lagrange_weights(nodes, s)
                us = lw[0] * fields[0]
                for c, f in zip(lw[1:], fields[1:]):
                    us = us + c * f
                q = source_array(grid, us, delta, dealias)
                acc += (w * half) * np.exp(-(t_end - s) * k2) * q
    return base + acc


def duhamel_residual(traj: Trajectory, t0: float, t: float, n_quad: int, points: int = 2) -> float:
    """``|u(t) - reconstruction| / |u(t)|`` in L2 (0 when ``u(t) = 0`` and the reconstruction vanishes)."""
    grid = traj.grid
    target = traj.snapshots.at(t).coeffs
    rec = duhamel_reconstruction(traj, t0, t, n_quad, points)
    num = norm_of_array(grid, target - rec, NormSpec.l2())
    den = norm_of_array(grid, target, NormSpec.l2())
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


@dataclass(frozen=True)
class SelfConvergence:
    n_quads: tuple[int, ...]
    residuals: tuple[float, ...]
    increments: tuple[float, ...]
    order: float
    expected_order: int

    def to_dict(self) -> dict:
        return {
            "n_quads": list(self.n_quads),
            "residuals": list(self.residuals),
            "increments": list(self.increments),
            "order": self.order,
            "expected_order": self.expected_order,
        }


def duhamel_self_convergence(
    traj: Trajectory, t0: float, t: float, n_quads=(1, 2, 4, 8), points: int = 2
) -> SelfConvergence:
    """Residuals for successively doubled panel counts and the observed order.

    The order is fitted to the increments ``|R_n - R_2n|`` between successive
    reconstructions, which isolates the quadrature error from interpolation
    error in the snapshots.
    """
    n_quads = tuple(int(n) for n in n_quads)
    if len(n_quads) < 3:
        raise ValueError("self-convergence needs at least three panel counts")
    grid = traj.grid
    target = traj.snapshots.at(t).coeffs
    den = norm_of_array(grid, target, NormSpec.l2()) or 1.0
    recs = [duhamel_reconstruction(traj, t0, t, n, points) for n in n_quads]
    residuals = tuple(norm_of_array(grid, target - r, NormSpec.l2()) / den for r in recs)
    increments = tuple(
        norm_of_array(grid, recs[i + 1] - recs[i], NormSpec.l2()) / den for i in range(len(recs) - 1)
    )
    x = np.log(np.array(n_quads[:-1], dtype=float))
    y = np.log(np.array(increments))
    slope = float(np.polyfit(x, y, 1)[0])
    return SelfConvergence(n_quads, residuals, increments, -slope, 2 * points)


# ---------------------------------------------------------------------------
# heat-flow comparison


def heat_flow_difference_series(traj: Trajectory, t0: float, norms=("l2", "sup")) -> NormSeries:
    """``|u(t) - exp((t-t0)Lap) u(t0)|`` at every snapshot ``t >= t0``.

    Columns: the difference under each requested norm label, plus ``u_<label>``
    and ``v_<label>`` for the solution and the heat flow themselves.
    """
    store = traj.snapshots
    i0 = store.index_of(t0)
    times = store.times
    grid = traj.grid
    specs = [(label, NormSpec.parse(label)) for label in norms]
    anchor = store.get(i0).coeffs
    ta = times[i0]
    cols: dict[str, list[float]] = {}
    for label, _ in specs:
        for prefix in ("", "u_", "v_"):
            cols[prefix + label] = []
    out_t = []
    for i in range(i0, times.size):
        u = store.get(i).coeffs
        v = anchor * np.exp(-(times[i] - ta) * grid.k_squared)
        uv = grid.inverse(u)
        vv = grid.inverse(v)
        for label, spec in specs:
            cols[label].append(norm_of_array(grid, u - v, spec, uv - vv))
            cols["u_" + label].append(norm_of_array(grid, u, spec, uv))
            cols["v_" + label].append(norm_of_array(grid, v, spec, vv))
        out_t.append(times[i])
    series = NormSeries(np.array(out_t), {k: np.array(v) for k, v in cols.items()}, traj.norms.provenance)
    series.notes["t0"] = float(ta)
    return series


# ---------------------------------------------------------------------------
# exponent fits and validity window


@dataclass(frozen=True)
class DecayFit:
    window: tuple[float, float]
    exponent: float
    stderr: float
    r_squared: float
    samples: int
    norm: str = ""

    def to_dict(self) -> dict:
        return {
            "norm": self.norm,
            "window": list(self.window),
            "exponent": self.exponent,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "samples": self.samples,
        }


def fit_decay_exponent(series: NormSeries, norm_name: str, window: tuple[float, float]) -> DecayFit:
    """Least-squares slope of ``log(norm)`` against ``log(t)`` over ``window``."""
    t_a, t_b = float(window[0]), float(window[1])
    if not (t_b > t_a > 0):
        raise ValueError(f"fit window must satisfy t_b > t_a > 0, got [{t_a}, {t_b}]")
    sel = series.window(t_a, t_b)
    y = sel[norm_name]
    t = sel.times
    if t.size < MIN_FIT_SAMPLES:
        raise ValueError(f"fit window [{t_a:g}, {t_b:g}] holds {t.size} samples; need {MIN_FIT_SAMPLES}")
    if t[-1] < MIN_FIT_SPAN * t[0] * (1 - 1e-12):
        raise ValueError(f"fit window spans a factor {t[-1] / t[0]:.3g} in t; need {MIN_FIT_SPAN:g}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError(f"column {norm_name!r} has non-positive values in the fit window")
    lx, ly = np.log(t), np.log(y)
    if np.ptp(ly) == 0.0:
        return DecayFit((t_a, t_b), 0.0, 0.0, 1.0, int(t.size), norm_name)
    res = stats.linregress(lx, ly)
    return DecayFit((t_a, t_b), float(res.slope), float(res.stderr), float(res.rvalue**2), int(t.size), norm_name)


@dataclass(frozen=True)
class ValidityWindow:
    t_a: float
    t_b: float

    @property
    def empty(self) -> bool:
        return not self.t_b > self.t_a

    def to_dict(self) -> dict:
        return {"t_a": self.t_a, "t_b": self.t_b, "empty": self.empty}


def validity_window(traj: Trajectory, threshold: float = 0.01, transient_steps: float = 10.0) -> ValidityWindow:
    """Time span in which the run can stand in for whole-space flow.

    ``t_b`` is the first recorded time at which more than ``threshold`` of the
    energy sits in the outer shell (``t_end`` when that never happens);
    ``t_a`` is the first snapshot at or after ``transient_steps`` nominal steps.
    """
    s = traj.norms
    leak = np.nonzero(s["shell"] > threshold)[0]
    t_b = float(s.times[leak[0]]) if leak.size else float(s.times[-1])
    snaps = traj.snapshots.times
    later = snaps[(snaps >= transient_steps * traj.nominal_dt0) & (snaps > 0)]
    t_a = float(later[0]) if later.size else math.inf
    return ValidityWindow(t_a, t_b)


# ---------------------------------------------------------------------------
# monotone onset


@dataclass(frozen=True)
class RegularityReport:
    """Onset of monotone decay of ``|Du|_2`` compared with the regularity-time bound.

    ``gate_time`` is the first recorded time at which
    ``K3^3 |u|_2^{1/2} |Du|_2^{1/2} < 1``; past it the gradient norm must decay.
    """

    onset_detected: float | None
    bound: float
    satisfied: bool
    gate_time: float | None
    gate_satisfied: bool | None
    gate_persistent: bool
    u0_l2: float

    def to_dict(self) -> dict:
        return {
            "t_mono": self.onset_detected,
            "bound": self.bound,
            "satisfied": self.satisfied,
            "gate_time": self.gate_time,
            "gate_satisfied": self.gate_satisfied,
            "gate_persistent": self.gate_persistent,
            "u0_l2": self.u0_l2,
        }


def detect_monotone_onset(series: NormSeries, u0_l2: float | None = None) -> RegularityReport:
    t = series.times
    d = series["dl2"]
    if u0_l2 is None:
        u0_l2 = float(series["l2"][0])
    bound = regularity_time_bound(u0_l2)
    onset = None
    if t.size == 1:
        onset = float(t[0])
    elif t.size > 1:
        rising = d[1:] > d[:-1] * (1.0 + ONSET_HYSTERESIS)
        if not rising[-1]:
            idx = np.nonzero(rising)[0]
            onset = float(t[idx[-1] + 1]) if idx.size else float(t[0])
    gate = CONSTANTS.K3**3 * np.sqrt(series["l2"] * d) < 1.0
    hits = np.nonzero(gate)[0]
    gate_time = float(t[hits[0]]) if hits.size else None
    persistent = bool(hits.size and np.all(gate[hits[0]:]))
    return RegularityReport(
        onset,
        bound,
        onset is not None and onset <= bound,
        gate_time,
        None if gate_time is None else gate_time <= bound,
        persistent,
        float(u0_l2),
    )


# ---------------------------------------------------------------------------
# interpolation between L2 and sup


def interpolation_consistency(traj: Trajectory, q_list, window: tuple[float, float] | None = None) -> list[BoundReport]:
    """``|u|_q <= |u|_2^{2/q} |u|_inf^{1-2/q}`` at every record, and the matching exponent check.

    The exponent check fits all three norms over ``window`` (the validity
    window by default) and requires the fitted ``L^q`` exponent not to exceed
    the interpolated combination by more than the combined standard error.
    """
    s = traj.norms
    reports = []
    if window is None:
        vw = validity_window(traj)
        window = (vw.t_a, vw.t_b)
    for q in q_list:
        q = float(q)
        label = NormSpec.lq(q).label if math.isfinite(q) else "sup"
        theta = 2.0 / q if math.isfinite(q) else 0.0
        if label == "l2":
            lq = s["l2"]
        elif label == "sup":
            lq = s["sup"]
        else:
            lq = s[label]
        rhs = s["l2"] ** theta * s["sup"] ** (1.0 - theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lq / rhs, np.where(lq > 0, np.inf, 0.0))
        worst = int(np.argmax(ratio))
        tol = 1e-12 * float(rhs[worst])
        reports.append(
            BoundReport(f"interpolation_l{q:g}", {"q": q, "t": float(s.times[worst]), "samples": len(s)},
                        float(lq[worst]), float(rhs[worst]), tolerance=tol)
        )
        try:
            fq = fit_decay_exponent(s, "l2" if label == "l2" else ("sup" if label == "sup" else label), window)
            f2 = fit_decay_exponent(s, "l2", window)
            fi = fit_decay_exponent(s, "sup", window)
        except ValueError as exc:
            reports.append(BoundReport(f"interpolation_exponent_l{q:g}", {"q": q, "reason": str(exc)},
                                       math.nan, math.nan, status="inconclusive"))
            continue
        combo = theta * f2.exponent + (1.0 - theta) * fi.exponent
        err = math.sqrt(fq.stderr**2 + (theta * f2.stderr) ** 2 + ((1 - theta) * fi.stderr) ** 2)
        reports.append(
            BoundReport(
                f"interpolation_exponent_l{q:g}",
                {"q": q, "window": list(window), "combined_stderr": err},
                fq.exponent,
                combo,
                tolerance=err,
            )
        )
    return reports
