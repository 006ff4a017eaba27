"""Scalar and vector fields in physical and spectral form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

DIVERGENCE_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-10


class FieldError(ValueError):
    """Raised when a field violates one of its structural invariants."""


@dataclass(frozen=True, eq=False)
class PhysicalField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise FieldError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.count_nonzero(~np.isfinite(v)))
            raise FieldError(f"physical field has {bad} non-finite samples")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.spectral_shape:
            raise FieldError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Vector field stored as a ``(dim, *spectral_shape)`` coefficient array.

    Setting ``divergence_free`` runs the certificate check; construction fails
    if the spectral divergence exceeds the tolerance.
    """

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = False
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        expected = (self.grid.dim,) + self.grid.spectral_shape
        if c.shape != expected:
            raise FieldError(f"velocity coefficients have shape {c.shape}, expected {expected}")
        object.__setattr__(self, "coeffs", c)
        if self.divergence_free and not self._checked:
            residual = divergence_residual(self.grid, c)
            if residual > DIVERGENCE_TOLERANCE:
                raise FieldError(
                    f"divergence certificate failed: residual {residual:.3e} > {DIVERGENCE_TOLERANCE:g}"
                )

    @classmethod
    def from_components(cls, comps: list[SpectralField], divergence_free: bool = False) -> "VelocityField":
        grid = comps[0].grid
        if any(c.grid != grid for c in comps):
            raise FieldError("components live on different grids")
        return cls(grid, np.stack([c.coeffs for c in comps]), divergence_free)

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray, divergence_free: bool = False) -> "VelocityField":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.dim,) + grid.shape:
            raise FieldError(f"physical velocity has shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("physical velocity has non-finite samples")
        return cls(grid, grid.forward(values), divergence_free)

    @classmethod
    def zeros(cls, grid: Grid) -> "VelocityField":
        return cls(grid, np.zeros((grid.dim,) + grid.spectral_shape, np.complex128), True)

    @property
    def components(self) -> tuple[SpectralField, ...]:
        return tuple(SpectralField(self.grid, c) for c in self.coeffs)

    def component(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i])

    def physical(self) -> np.ndarray:
        """Collocation values, shape ``(dim, *grid.shape)``."""
        return self.grid.inverse(self.coeffs)

    def with_coeffs(self, coeffs: np.ndarray, divergence_free: bool | None = None) -> "VelocityField":
        flag = self.divergence_free if divergence_free is None else divergence_free
        return VelocityField(self.grid, coeffs, flag)


def divergence_residual(grid: Grid, coeffs: np.ndarray) -> float:
    """``max_k |sum_j k_j u_j(k)| / (1 + |k| max_k |u(k)|)``."""
    div = np.zeros(grid.spectral_shape, dtype=np.complex128)
    for j, k in enumerate(grid.wavenumbers):
        div += k * coeffs[j]
    peak = float(np.sqrt(np.max(np.sum(np.abs(coeffs) ** 2, axis=0))))
    return float(np.max(np.abs(div) / (1.0 + grid.k_magnitude * peak)))


def hermitian_defect(grid: Grid, coeffs: np.ndarray) -> float:
    """Largest mismatch between ``c(-k)`` and ``conj(c(k))``, relative to ``max|c|``.

    Only the planes at last-axis index 0 and n/2 carry redundant information in
    the real-to-complex layout; they are checked against their reflections.
    """
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale == 0.0:
        return 0.0
    lead = tuple(range(coeffs.ndim - grid.dim, coeffs.ndim - 1))
    worst = 0.0
    for j in (0, grid.n // 2):
        plane = coeffs[..., j]
        mirrored = np.conj(np.roll(np.flip(plane, axis=lead), 1, axis=lead))
        worst = max(worst, float(np.max(np.abs(plane - mirrored))))
    return worst / scale


def to_spectral(f: PhysicalField) -> SpectralField:
    if not np.all(np.isfinite(f.values)):
        raise FieldError("cannot transform a field with non-finite samples")
    return SpectralField(f.grid, f.grid.forward(f.values))


def to_physical(f: SpectralField) -> PhysicalField:
    defect = hermitian_defect(f.grid, f.coeffs)
    if defect > HERMITIAN_TOLERANCE:
        raise FieldError(f"coefficients are not Hermitian (relative defect {defect:.3e})")
    return PhysicalField(f.grid, f.grid.inverse(f.coeffs))
