"""Explicit constants, closed-form bounds and their numerical verification."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .fields import VelocityField
from .grid import Grid
from .norms import NormSpec, compute_norm, norm_of_array, outer_shell_fraction

LOCALIZATION_LIMIT = 0.01


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the semigroup, interpolation and regularity-time estimates.

    ``K0`` and ``K3`` are upper bounds for the sharp constants, and the verifiers use them as such.
    """

    K: float = (8.0 * math.pi) ** -0.75
    Gamma: float = (4.0 * math.pi) ** -1.5
    K0: float = 0.678
    K1: float = 1.0
    K3: float = 0.581862001307
    t_reg_coeff: float = 0.000753026

    @property
    def K2(self) -> float:
        return self.K0 * math.sqrt(self.K1)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "Gamma": self.Gamma,
            "K0": self.K0,
            "K1": self.K1,
            "K2": self.K2,
            "K3": self.K3,
            "t_reg_coeff": self.t_reg_coeff,
        }


CONSTANTS = BoundConstants()


@dataclass
class BoundReport:
    """One inequality ``lhs <= rhs``.

    ``status`` is ``pass``, ``fail``, ``box-limited`` (the field leaks into the
    outer shell, so the whole-space inequality is not testable) or
    ``inconclusive`` (a quadrature did not converge).
    """

    name: str
    params: dict
    lhs: float
    rhs: float
    tolerance: float = 0.0
    status: str = field(default="")

    def __post_init__(self) -> None:
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.params = {k: (float(v) if isinstance(v, np.floating) else v) for k, v in self.params.items()}
        if not self.status:
            self.status = "pass" if self.margin >= -self.tolerance else "fail"

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance)

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "status": self.status,
        }


def _positive_gap(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"time gap must be positive, got {dt}")


def bound_semigroup_l2(dt: float, l2: float, dl2: float) -> float:
    """``K dt^{-3/4} |u|_2 |Du|_2``: L2 bound on the heat-propagated transport source."""
    _positive_gap(dt)
    return CONSTANTS.K * dt**-0.75 * l2 * dl2


def bound_semigroup_sup(dt: float, sup: float, dl2: float) -> float:
    """``K dt^{-3/4} |u|_inf |Du|_2``: sup-norm bound on the heat-propagated transport source."""
    _positive_gap(dt)
    return CONSTANTS.K * dt**-0.75 * sup * dl2


def bound_heatflow_pair(t: float, t0: float, t0_tilde: float, u0_l2: float, norm: str = "l2") -> float:
    """Bound on ``|v(t) - w(t)|`` for heat flows started from one solution at ``t0 < t0_tilde``."""
    if not (t > t0_tilde > t0 >= 0):
        raise ValueError(f"need t > t0_tilde > t0 >= 0, got t={t}, t0_tilde={t0_tilde}, t0={t0}")
    base = u0_l2**2 * math.sqrt(t0_tilde - t0) / math.sqrt(2.0)
    if norm == "l2":
        return CONSTANTS.K * base * (t - t0_tilde) ** -0.75
    if norm == "sup":
        return CONSTANTS.Gamma * base * (t - t0_tilde) ** -1.5
    raise ValueError(f"norm must be 'l2' or 'sup', got {norm!r}")


def regularity_time_bound(u0_l2: float) -> float:
    """Upper bound on the time after which ``|Du|_2`` decreases monotonically."""
    if not u0_l2 >= 0:
        raise ValueError("u0_l2 must be >= 0")
    return CONSTANTS.t_reg_coeff * u0_l2**4


# ---------------------------------------------------------------------------
# field-level verifiers


def is_box_limited(u: VelocityField, values: np.ndarray | None = None) -> bool:
    values = u.physical() if values is None else values
    return outer_shell_fraction(u.grid, values) > LOCALIZATION_LIMIT


def _status(report: BoundReport, box_limited: bool) -> BoundReport:
    if box_limited:
        report.status = "box-limited"
    return report


def verify_heatflow_pair(traj, t0: float, t0_tilde: float, ts=None) -> list[BoundReport]:
    """Measure ``|v(t) - w(t)|`` for heat flows ``v`` from ``u(t0)`` and ``w`` from ``u(t0_tilde)``.

    ``ts`` defaults to every snapshot after ``t0_tilde``.  One report per
    sample time and norm; samples where the run has leaked into the outer
    shell are marked box-limited.
    """
    store = traj.snapshots
    grid = traj.grid
    i0, i1 = store.index_of(t0), store.index_of(t0_tilde)
    s0, s1 = float(store.times[i0]), float(store.times[i1])
    if s1 < s0:
        raise ValueError("t0_tilde must not precede t0")
    if ts is None:
        ts = [float(t) for t in store.times if t > s1]
    a0, a1 = store.get(i0).coeffs, store.get(i1).coeffs
    u0_l2 = traj.u0_l2
    shell_t, shell = traj.norms.times, traj.norms["shell"]
    reports = []
    for t in ts:
        if not t > s1:
            raise ValueError(f"sample time {t} must exceed t0_tilde={s1}")
        diff = a0 * np.exp(-(t - s0) * grid.k_squared) - a1 * np.exp(-(t - s1) * grid.k_squared)
        values = grid.inverse(diff)
        leak = float(np.interp(t, shell_t, shell))
        for norm, spec in (("l2", NormSpec.l2()), ("sup", NormSpec.sup())):
            lhs = norm_of_array(grid, diff, spec, values)
            rhs = 0.0 if s1 == s0 else bound_heatflow_pair(t, s0, s1, u0_l2, norm)
            rep = BoundReport(
                f"heatflow_pair_{norm}",
                {"t": t, "t0": s0, "t0_tilde": s1, "u0_l2": u0_l2, "shell": leak},
                lhs,
                rhs,
                tolerance=1e-13 * u0_l2 if s1 == s0 else 0.0,
            )
            reports.append(_status(rep, leak > LOCALIZATION_LIMIT))
    return reports


def verify_semigroup_estimate(u: VelocityField, taus, which: str = "l2", delta: float = 0.0) -> list[BoundReport]:
    """Compare ``|exp(tau Lap) Q(u)|`` with the semigroup bound for each ``tau``.

    ``which="l2"`` measures the propagated source in L2 against
    ``K tau^{-3/4}|u|_2|Du|_2``; ``which="sup"`` measures it in the Euclidean
    sup norm against ``K tau^{-3/4}|u|_inf|Du|_2``.
    """
    from .heat import heat_multiplier
    from .operators import source_array

    if which not in ("l2", "sup"):
        raise ValueError("which must be 'l2' or 'sup'")
    g = u.grid
    values = u.physical()
    box = is_box_limited(u, values)
    q = source_array(g, u.coeffs, delta)
    l2 = norm_of_array(g, u.coeffs, NormSpec.l2())
    dl2 = norm_of_array(g, u.coeffs, NormSpec.dl2())
    sup = norm_of_array(g, u.coeffs, NormSpec.sup(), values)
    out = []
    for tau in taus:
        prop = q * heat_multiplier(g, tau)
        if which == "l2":
            lhs = norm_of_array(g, prop, NormSpec.l2())
            rhs = bound_semigroup_l2(tau, l2, dl2)
        else:
            lhs = norm_of_array(g, prop, NormSpec.sup())
            rhs = bound_semigroup_sup(tau, sup, dl2)
        rep = BoundReport(f"semigroup_{which}", {"tau": float(tau), "delta": delta, "norm": "euclidean" if which == "sup" else "l2"}, lhs, rhs)
        out.append(_status(rep, box))
    return out


def triple_gradient_sum(u: VelocityField) -> float:
    """``int sum_{i,j,l} |D_l u_i| |D_l u_j| |D_j u_i| dx`` by collocation."""
    g = u.grid
    kd = g.derivative_wavenumbers
    grads = np.empty((g.dim, g.dim) + g.shape)
    for i in range(g.dim):
        for l in range(g.dim):
            grads[i, l] = np.abs(g.inverse(1j * kd[l] * u.coeffs[i]))
    total = np.einsum("il...,jl...,ij...->...", grads, grads, grads, optimize=True)
    return float(np.sum(total)) * g.cell_volume


def verify_sng(u: VelocityField) -> list[BoundReport]:
    """The four interpolation inequalities with the stored ceilings (3-D only).

    The gradient inequality is Cauchy-Schwarz in Fourier space and is attained
    by single modes, so its report carries a rounding allowance of a few ulps.
    """
    g = u.grid
    if g.dim != 3:
        raise ValueError("the interpolation constants are three-dimensional")
    c = CONSTANTS
    values = u.physical()
    box = is_box_limited(u, values)
    l2 = compute_norm(u, NormSpec.l2())
    dl2 = compute_norm(u, NormSpec.dl2())
    d2l2 = compute_norm(u, NormSpec.d2l2())
    sup = norm_of_array(g, u.coeffs, NormSpec.sup(), values)
    reports = [
        BoundReport("sng_sup", {"norm": "euclidean", "K0": c.K0}, sup, c.K0 * l2**0.25 * d2l2**0.75),
        BoundReport(
            "sng_gradient", {"K1": c.K1}, dl2, c.K1 * math.sqrt(l2 * d2l2),
            tolerance=8 * np.finfo(float).eps * max(dl2, 1e-300),
        ),
        BoundReport("sng_product", {"norm": "euclidean", "K2": c.K2}, sup * math.sqrt(dl2), c.K2 * math.sqrt(l2) * d2l2),
        BoundReport("sng_triple", {"K3": c.K3}, triple_gradient_sum(u), c.K3**3 * dl2**1.5 * d2l2**1.5),
    ]
    return [_status(r, box) for r in reports]


# ---------------------------------------------------------------------------
# scalar integrals


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool


def certified_quad(f, a: float, b: float, alpha: float = 0.0, beta: float = 0.0, tol: float = 1e-10) -> QuadResult:
    """``int_a^b f(s) (s-a)^alpha (b-s)^beta ds`` with the endpoint powers handled exactly.

    Uses QUADPACK's algebraic-weight rule, which resolves integrable endpoint
    singularities without a change of variables.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if alpha == 0.0 and beta == 0.0:
            res = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-13, limit=500, full_output=1)
        else:
            res = integrate.quad(
                f, a, b, weight="alg", wvar=(alpha, beta), epsabs=tol, epsrel=1e-13, limit=500, full_output=1
            )
    value, err = res[0], res[1]
    ok = len(res) == 3 and err <= tol and math.isfinite(value)
    return QuadResult(float(value), float(err), ok)


BETA_QUARTER = special.gamma(0.25) ** 2 / special.gamma(0.5)
EIGHT_ROOT_TWO = 8.0 * math.sqrt(2.0)
SIX_FOURTH_ROOT_TWO = 6.0 * 2.0**0.25
SWEEP_T0 = (0.01, 0.1, 1.0, 10.0)
_GAPS = tuple(np.concatenate([[0.0], np.logspace(-3, 4, 29)]))


def _sweep(name: str, points, evaluate) -> BoundReport:
    """Run ``evaluate(**p) -> (lhs, rhs, converged)`` over points; report the worst ratio."""
    worst = None
    inconclusive = 0
    for p in points:
        lhs, rhs, ok = evaluate(**p)
        if not ok:
            inconclusive += 1
            continue
        ratio = lhs / rhs
        if worst is None or ratio > worst[0]:
            worst = (ratio, lhs, rhs, p)
    if worst is None:
        return BoundReport(name, {"points": len(points)}, math.nan, math.nan, status="inconclusive")
    ratio, lhs, rhs, p = worst
    params = {**{k: float(v) for k, v in p.items()}, "points": len(points), "worst_ratio": ratio}
    status = "inconclusive" if inconclusive else ""
    if inconclusive:
        params["unconverged"] = inconclusive
    return BoundReport(name, params, lhs, rhs, status=status)


def _sqrt_kernel_integral(t0: float, t: float) -> QuadResult:
    # int_{t0}^{t} (t-s)^{-3/4} s^{-1/2} ds
    if t0 == 0.0:
        return certified_quad(lambda s: 1.0, 0.0, t, -0.5, -0.75)
    return certified_quad(lambda s: s**-0.5, t0, t, 0.0, -0.75)


def constant_reports() -> list[BoundReport]:
    c = CONSTANTS
    return [
        BoundReport("K", {"formula": "(8 pi)^(-3/4)"}, c.K, c.K, status="pass"),
        BoundReport("Gamma", {"formula": "(4 pi)^(-3/2)"}, c.Gamma, c.Gamma, status="pass"),
        BoundReport("K2_below_one", {"K0": c.K0, "K1": c.K1}, c.K2, 1.0, status="pass" if c.K2 < 1 else "fail"),
        BoundReport(
            "K3_regularity_coefficient",
            {"K3": c.K3, "K3^12/2": c.K3**12 / 2},
            c.K3**12 / 2,
            c.t_reg_coeff,
        ),
    ]


def verify_scalar_integral_bounds(t0_values=SWEEP_T0) -> list[BoundReport]:
    c = CONSTANTS
    reports = []

    def six_root(t0, t):
        q = _sqrt_kernel_integral(t0, t)
        return q.value, SIX_FOURTH_ROOT_TWO, q.converged

    pts = [{"t0": t0, "t": t0 + 1.0 + gap} for t0 in t0_values for gap in _GAPS]
    reports.append(_sweep("kernel_integral_6_root4_2", pts, six_root))

    def coeff_0636(t_eps, t):
        q = _sqrt_kernel_integral(t_eps, t)
        return c.K * t**0.25 * q.value, 0.636 * t**0.25 * (t - t_eps) ** -0.25, q.converged

    pts = [{"t_eps": t0, "t": t0 + gap} for t0 in t0_values for gap in _GAPS[1:]]
    reports.append(_sweep("decay_coefficient_0.636", pts, coeff_0636))

    # Beta-function kernel: (t-t1)^{1/2} int_{t1}^t (t-s)^{-3/4}(s-t1)^{-3/4} ds = B(1/4,1/4)
    beta_pts = [{"t1": 1.0 + t0, "t": 1.0 + t0 + gap} for t0 in t0_values for gap in _GAPS[1:]]
    worst_dev = 0.0
    beta_ok = True
    beta_max = 0.0
    for p in beta_pts:
        q = certified_quad(lambda s: 1.0, p["t1"], p["t"], -0.75, -0.75)
        beta_ok &= q.converged
        scaled = q.value * (p["t"] - p["t1"]) ** 0.5
        beta_max = max(beta_max, scaled)
        worst_dev = max(worst_dev, abs(scaled - BETA_QUARTER))
    reports.append(
        BoundReport(
            "beta_quarter_identity",
            {"B(1/4,1/4)": BETA_QUARTER, "points": len(beta_pts)},
            worst_dev,
            1e-8,
            status="" if beta_ok else "inconclusive",
        )
    )
    reports.append(
        BoundReport("beta_quarter_ceiling_8_root2", {"points": len(beta_pts)}, beta_max, EIGHT_ROOT_TWO,
                    status="" if beta_ok else "inconclusive")
    )

    eps41 = 0.5
    # Coefficient via the 8 sqrt2 ceiling, worst case t1 = 1.
    reports.append(
        BoundReport(
            "sup_contraction_0.504",
            {"epsilon": eps41, "t1": 1.0, "route": "8 sqrt2 ceiling"},
            EIGHT_ROOT_TWO * c.K * eps41,
            0.504,
        )
    )

    def kernel_0504(t1, t):
        q = certified_quad(lambda s: 1.0, t1, t, -0.75, -0.75)
        return c.K * eps41 * t1**-0.5 * (t - t1) ** 0.75 * q.value, 0.504, q.converged

    pts = [{"t1": 1.0 + t0, "t": (1.0 + t0) * (1.0 + f)} for t0 in t0_values for f in np.linspace(0.01, 1.0, 12)]
    reports.append(_sweep("sup_contraction_kernel_0.504", pts, kernel_0504))
    reports.append(
        BoundReport("sup_fixed_point_0.180", {"epsilon": 1.0, "contraction": 0.504}, c.K / (1.0 - 0.504), 0.180)
    )

    eps42 = 1.0

    def j2_0090(t_eps, t):
        mu = 0.5 * (t + t_eps)
        q = certified_quad(lambda s: s**-0.5, t_eps, mu)
        lhs = (2.0 * math.pi) ** -1.5 * t * (t - t_eps) ** -1.5 * eps42**2 * q.value
        return lhs, 0.090 * eps42 * t / (t - t_eps), q.converged

    pts = [{"t_eps": t0, "t": t0 + gap} for t0 in t0_values for gap in _GAPS[1:]]
    reports.append(_sweep("middle_interval_0.090", pts, j2_0090))

    def j3_0713(t_eps, t):
        mu = 0.5 * (t + t_eps)
        q = certified_quad(lambda s: s**-1.25, mu, t, 0.0, -0.75)
        return c.K * t * eps42**2 * q.value, 0.713 * eps42 * t / (t - t_eps), q.converged

    reports.append(_sweep("final_interval_0.713", pts, j3_0713))
    return reports


def all_scalar_reports() -> list[BoundReport]:
    return constant_reports() + verify_scalar_integral_bounds()
