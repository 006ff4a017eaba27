"""The heat semigroup as a Fourier multiplier, and heat flows anchored on a state."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from .fields import FieldError, SpectralField, VelocityField
from .grid import Grid
from .norms import NormSpec, compute_norm, outer_shell_fraction

F = TypeVar("F", SpectralField, VelocityField)


def smoothing_constant(dim: int) -> float:
    """``(pi/2)^{d/4}``: L2 norm of ``exp(-tau |k|^2)`` over whole space at ``tau = 1``."""
    return (math.pi / 2.0) ** (dim / 4.0)


def heat_multiplier(grid: Grid, tau: float) -> np.ndarray:
    return np.exp(-tau * grid.k_squared)


def heat_propagate(f: F, tau: float) -> F:
    if not tau >= 0:
        raise ValueError(f"heat propagation needs tau >= 0 (no backward flow), got {tau}")
    if tau == 0:
        return f
    mult = heat_multiplier(f.grid, tau)
    if isinstance(f, VelocityField):
        # The multiplier is radial, so it commutes with the projector and the
        # certificate carries over without being recomputed.
        return VelocityField(f.grid, f.coeffs * mult, f.divergence_free, _checked=True)
    return SpectralField(f.grid, f.coeffs * mult)


@dataclass(frozen=True, eq=False)
class HeatFlow:
    """``v(t) = exp((t - anchor_time) Laplacian) anchor_state`` for ``t >= anchor_time``."""

    anchor_time: float
    anchor_state: VelocityField

    def __post_init__(self) -> None:
        if not self.anchor_time >= 0:
            raise ValueError("anchor time must be >= 0")
        if not self.anchor_state.divergence_free:
            raise FieldError("heat flow anchor must carry a divergence-free certificate")

    @property
    def grid(self) -> Grid:
        return self.anchor_state.grid


def evaluate_heat_flow(h: HeatFlow, t: float) -> VelocityField:
    if t < h.anchor_time:
        raise ValueError(f"cannot evaluate heat flow at t={t} before its anchor t0={h.anchor_time}")
    return heat_propagate(h.anchor_state, t - h.anchor_time)


def continuum_transform_sup(f: VelocityField | SpectralField) -> float:
    """``max_k |v^(k)|`` for the whole-space transform with ``(2 pi)^{-d/2}`` normalisation.

    Box coefficients ``c_k = L^{-d/2} int f exp(-ik.x) dx`` relate to the
    continuum transform by ``v^(k) = (L / 2 pi)^{d/2} c_k``.
    """
    g = f.grid
    c = f.coeffs if isinstance(f, VelocityField) else f.coeffs[np.newaxis]
    peak = float(np.sqrt(np.max(np.sum(np.abs(c) ** 2, axis=0))))
    return (g.length / (2.0 * math.pi)) ** (g.dim / 2.0) * peak


@dataclass(frozen=True)
class SmoothingCheck:
    tau: float
    kind: str
    lhs: float
    rhs: float
    box_limited: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def sup_smoothing_check(u: VelocityField, tau: float) -> SmoothingCheck:
    """``|e^{tau Lap} u|_inf <= K tau^{-3/4} |u|_2`` (3-D constant ``(8 pi)^{-3/4}``)."""
    from .bounds import CONSTANTS

    if u.grid.dim != 3:
        raise ValueError("the sup smoothing constant is the 3-D one")
    v = heat_propagate(u, tau)
    lhs = compute_norm(v, NormSpec.sup())
    rhs = CONSTANTS.K * tau ** -0.75 * compute_norm(u, NormSpec.l2())
    return SmoothingCheck(tau, "sup_from_l2", lhs, rhs, _box_limited(u))


def l2_smoothing_check(u: VelocityField, tau: float) -> SmoothingCheck:
    """``|e^{tau Lap} u|_2 <= (pi/2)^{3/4} tau^{-3/4} sup_k |u^(k)|``."""
    v = heat_propagate(u, tau)
    lhs = compute_norm(v, NormSpec.l2())
    rhs = smoothing_constant(u.grid.dim) * tau ** (-u.grid.dim / 4.0) * continuum_transform_sup(u)
    return SmoothingCheck(tau, "l2_from_transform_sup", lhs, rhs, _box_limited(u))


def _box_limited(u: VelocityField, threshold: float = 0.01) -> bool:
    return outer_shell_fraction(u.grid, u.physical()) > threshold
