"""Discrete norms approximating whole-space integrals on the periodic box."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fields import SpectralField, VelocityField
from .grid import Grid


class NormKind(str, enum.Enum):
    L2 = "l2"
    LQ = "lq"
    SUP = "sup"
    SUP_COMPONENT = "sup_component"
    HS_DOT = "hs"
    DL2 = "dl2"
    D2L2 = "d2l2"


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate.

    ``SUP`` is the largest pointwise Euclidean magnitude ``max_x |u(x)|``.
    ``SUP_COMPONENT`` is ``max_i max_x |u_i(x)|``, which can be smaller by up
    to a factor ``sqrt(dim)``.  ``LQ`` sums ``|u_i|^q`` over components.
    """

    kind: NormKind
    param: float | None = None

    def __post_init__(self) -> None:
        kind = NormKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NormKind.LQ:
            q = self.param
            if q is None or not q >= 1:
                raise ValueError(f"L^q norm needs q >= 1, got {q}")
            if math.isinf(q):
                object.__setattr__(self, "kind", NormKind.SUP)
                object.__setattr__(self, "param", None)
        elif kind is NormKind.HS_DOT:
            s = self.param
            if s is None or not s >= 0 or math.isinf(s):
                raise ValueError(f"homogeneous Sobolev index must be finite and >= 0, got {s}")

    @classmethod
    def l2(cls) -> "NormSpec":
        return cls(NormKind.L2)

    @classmethod
    def lq(cls, q: float) -> "NormSpec":
        return cls(NormKind.LQ, float(q))

    @classmethod
    def sup(cls) -> "NormSpec":
        return cls(NormKind.SUP)

    @classmethod
    def sup_component(cls) -> "NormSpec":
        return cls(NormKind.SUP_COMPONENT)

    @classmethod
    def hs(cls, s: float) -> "NormSpec":
        return cls(NormKind.HS_DOT, float(s))

    @classmethod
    def dl2(cls) -> "NormSpec":
        return cls(NormKind.DL2)

    @classmethod
    def d2l2(cls) -> "NormSpec":
        return cls(NormKind.D2L2)

    @property
    def label(self) -> str:
        if self.kind is NormKind.LQ:
            return f"l{_fmt(self.param)}"
        if self.kind is NormKind.HS_DOT:
            return f"hs_{_fmt(self.param)}"
        return self.kind.value

    @classmethod
    def parse(cls, label: str) -> "NormSpec":
        """Inverse of :attr:`label` (``l2``, ``sup``, ``l4``, ``hs_0.5``, ...)."""
        text = label.strip().lower()
        for kind in (NormKind.L2, NormKind.SUP, NormKind.SUP_COMPONENT, NormKind.DL2, NormKind.D2L2):
            if text == kind.value:
                return cls(kind)
        if text in ("linf", "l_inf", "inf"):
            return cls.sup()
        if text.startswith("hs_"):
            return cls.hs(float(text[3:]))
        if text.startswith("l"):
            return cls.lq(float(text[1:]))
        raise ValueError(f"unknown norm label {label!r}")


def _fmt(x: float) -> str:
    return f"{x:g}"


def _as_array(u: VelocityField | SpectralField) -> tuple[Grid, np.ndarray]:
    if isinstance(u, VelocityField):
        return u.grid, u.coeffs
    if isinstance(u, SpectralField):
        return u.grid, u.coeffs[np.newaxis]
    raise TypeError(f"expected a VelocityField or SpectralField, got {type(u).__name__}")


def compute_norm(u: VelocityField | SpectralField, spec: NormSpec) -> float:
    grid, coeffs = _as_array(u)
    return norm_of_array(grid, coeffs, spec)


def norm_of_array(grid: Grid, coeffs: np.ndarray, spec: NormSpec, values: np.ndarray | None = None) -> float:
    """Norm of component-first coefficients; ``values`` may pass cached physical samples."""
    kind = spec.kind
    power = np.abs(coeffs) ** 2
    if kind is NormKind.L2:
        return math.sqrt(grid.spectral_sum(power))
    if kind is NormKind.DL2:
        return math.sqrt(grid.spectral_sum(grid.k_squared * power))
    if kind is NormKind.D2L2:
        return math.sqrt(grid.spectral_sum(grid.k_squared**2 * power))
    if kind is NormKind.HS_DOT:
        s = spec.param
        weight = np.ones_like(grid.k_squared) if s == 0 else grid.k_squared**s
        return math.sqrt(grid.spectral_sum(weight * power))
    if values is None:
        values = grid.inverse(coeffs)
    if kind is NormKind.SUP:
        return float(np.sqrt(np.max(np.sum(values * values, axis=0))))
    if kind is NormKind.SUP_COMPONENT:
        return float(np.max(np.abs(values)))
    q = spec.param
    total = float(np.sum(np.abs(values) ** q)) * grid.cell_volume
    return total ** (1.0 / q)


def physical_l2(u: VelocityField | SpectralField) -> float:
    """L2 norm by collocation quadrature (for Parseval checks)."""
    grid, coeffs = _as_array(u)
    values = grid.inverse(coeffs)
    return math.sqrt(float(np.sum(values * values)) * grid.cell_volume)


def outer_shell_fraction(grid: Grid, values: np.ndarray) -> float:
    """Share of ``sum |u|^2`` carried by the outer 10% shell of the box."""
    density = np.sum(values * values, axis=0) if values.ndim > grid.dim else values * values
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[grid.outer_shell_mask])) / total
