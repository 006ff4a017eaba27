"""Spectral differential operators, the Leray projector and the transport source."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fields import FieldError, SpectralField, VelocityField
from .grid import Grid


@dataclass(frozen=True)
class MollifierSpec:
    """Gaussian mollifier width; ``delta = 0`` is the identity."""

    delta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"mollifier width must be >= 0, got {self.delta}")

    def check_resolution(self, grid: Grid) -> None:
        if 0 < self.delta < 2 * grid.spacing:
            warnings.warn(
                f"mollifier width {self.delta:.4g} is below two grid spacings ({2 * grid.spacing:.4g})",
                stacklevel=3,
            )


class SourceOrigin(str, enum.Enum):
    EXACT = "exact"
    MOLLIFIED = "mollified"


@dataclass(frozen=True, eq=False)
class NonlinearSource:
    field: VelocityField
    origin: SourceOrigin
    delta: float = 0.0


def apply_derivative(f: SpectralField, axis: int) -> SpectralField:
    g = f.grid
    if not 0 <= axis < g.dim:
        raise ValueError(f"axis {axis} out of range for a {g.dim}-D grid")
    return SpectralField(g, 1j * g.derivative_wavenumbers[axis] * f.coeffs)


def project_array(grid: Grid, w: np.ndarray) -> np.ndarray:
    """``(I - k k^T / |k|^2) w`` on component-first coefficients; ``k = 0`` untouched."""
    ks = grid.wavenumbers
    kdotw = ks[0] * w[0]
    for j in range(1, grid.dim):
        kdotw = kdotw + ks[j] * w[j]
    kdotw *= grid.inverse_k_squared
    out = np.empty_like(w)
    for i in range(grid.dim):
        out[i] = w[i] - ks[i] * kdotw
    return out


def helmholtz_project(w: VelocityField) -> VelocityField:
    return VelocityField(w.grid, project_array(w.grid, w.coeffs), divergence_free=True)


def mollifier_multiplier(grid: Grid, delta: float) -> np.ndarray | float:
    if delta == 0:
        return 1.0
    return np.exp(-0.5 * delta * delta * grid.k_squared)


def mollify(u: VelocityField, m: MollifierSpec | float) -> VelocityField:
    m = m if isinstance(m, MollifierSpec) else MollifierSpec(float(m))
    m.check_resolution(u.grid)
    if m.delta == 0:
        return u
    return u.with_coeffs(u.coeffs * mollifier_multiplier(u.grid, m.delta))


def transport_array(grid: Grid, uh: np.ndarray, delta: float, dealias: bool = True) -> np.ndarray:
    """Coefficients of ``(G_delta * u) . grad u`` (not projected, not negated).

    With ``dealias`` the inputs are truncated to the 2/3 band before entering
    physical space and the product is truncated again afterwards.
    """
    mask = grid.dealias_mask if dealias else None
    if mask is not None:
        uh = uh * mask
    adv = uh * mollifier_multiplier(grid, delta) if delta else uh
    adv_x = grid.inverse(adv)
    kd = grid.derivative_wavenumbers
    out = np.empty_like(uh)
    for i in range(grid.dim):
        acc = None
        for j in range(grid.dim):
            grad = grid.inverse(1j * kd[j] * uh[i])
            grad *= adv_x[j]
            acc = grad if acc is None else acc + grad
        out[i] = grid.forward(acc)
    if mask is not None:
        out *= mask
    return out


def source_array(grid: Grid, uh: np.ndarray, delta: float, dealias: bool = True) -> np.ndarray:
    """``P(-(G_delta * u) . grad u)`` on raw coefficients; the solver's right-hand side."""
    out = project_array(grid, transport_array(grid, uh, delta, dealias))
    np.negative(out, out=out)
    return out


def _require_solenoidal(u: VelocityField) -> None:
    if not u.divergence_free:
        raise FieldError("the transport source needs a divergence-free velocity")


def nonlinear_source(u: VelocityField, dealias: bool = True) -> NonlinearSource:
    _require_solenoidal(u)
    q = VelocityField(u.grid, source_array(u.grid, u.coeffs, 0.0, dealias), divergence_free=True)
    return NonlinearSource(q, SourceOrigin.EXACT)


def mollified_nonlinear_source(
    u: VelocityField, m: MollifierSpec | float, dealias: bool = True
) -> NonlinearSource:
    _require_solenoidal(u)
    m = m if isinstance(m, MollifierSpec) else MollifierSpec(float(m))
    m.check_resolution(u.grid)
    q = VelocityField(u.grid, source_array(u.grid, u.coeffs, m.delta, dealias), divergence_free=True)
    return NonlinearSource(q, SourceOrigin.MOLLIFIED, m.delta)
