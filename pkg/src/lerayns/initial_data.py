"""Divergence-free initial velocities."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .fields import VelocityField
from .grid import Grid
from .norms import outer_shell_fraction
from .operators import project_array

KINDS = ("taylor_green_2d", "taylor_green_3d", "localized_random", "from_checkpoint", "zero")
LOCALIZATION_LIMIT = 0.01
_MAX_ENVELOPE_PASSES = 24


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for the initial velocity.

    ``localized_random`` draws a random solenoidal field with spectrum peaked
    at wavenumber ``k0``, confines it under a Gaussian envelope of width
    ``width`` centred in the box and rescales it to kinetic energy ``energy``
    (so that ``|u0|_2 = sqrt(2 energy)``).  The Taylor-Green kinds use the
    box fundamental wavenumber and ``amplitude``.
    """

    kind: str
    seed: int = 0
    k0: float = 1.0
    energy: float = 1.0
    width: float = 4.0
    amplitude: float = 1.0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown initial data kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "localized_random":
            if not self.k0 > 0:
                raise ValueError("k0 must be positive")
            if not self.energy >= 0:
                raise ValueError("energy must be non-negative")
            if not self.width > 0:
                raise ValueError("envelope width must be positive")
        if self.kind == "from_checkpoint" and not self.path:
            raise ValueError("from_checkpoint needs a path")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def generate_initial_data(spec: InitialDataSpec, grid: Grid) -> VelocityField:
    if spec.kind == "zero":
        return VelocityField.zeros(grid)
    if spec.kind == "taylor_green_2d":
        return taylor_green_2d(grid, spec.amplitude)
    if spec.kind == "taylor_green_3d":
        return taylor_green_3d(grid, spec.amplitude)
    if spec.kind == "localized_random":
        return localized_random(grid, spec.seed, spec.k0, spec.energy, spec.width)
    from .checkpoint import read_checkpoint

    ck = read_checkpoint(spec.path, certify=True)
    if ck.field.grid != grid:
        raise ValueError(f"checkpoint grid {ck.field.grid} differs from configured grid {grid}")
    return ck.field


def taylor_green_2d(grid: Grid, amplitude: float = 1.0) -> VelocityField:
    if grid.dim != 2:
        raise ValueError("taylor_green_2d needs a 2-D grid")
    kap = grid.fundamental
    x, y = grid.coordinates
    u = amplitude * np.sin(kap * x) * np.cos(kap * y)
    v = -amplitude * np.cos(kap * x) * np.sin(kap * y)
    return VelocityField.from_physical(grid, np.stack([u, v]), divergence_free=True)


def taylor_green_3d(grid: Grid, amplitude: float = 1.0) -> VelocityField:
    if grid.dim != 3:
        raise ValueError("taylor_green_3d needs a 3-D grid")
    kap = grid.fundamental
    x, y, z = grid.coordinates
    u = amplitude * np.sin(kap * x) * np.cos(kap * y) * np.cos(kap * z)
    v = -amplitude * np.cos(kap * x) * np.sin(kap * y) * np.cos(kap * z)
    w = np.zeros_like(u)
    return VelocityField.from_physical(grid, np.stack([u, v, w]), divergence_free=True)


def gaussian_envelope(grid: Grid, width: float) -> np.ndarray:
    c = grid.length / 2.0
    r2 = sum((x - c) ** 2 for x in grid.coordinates)
    return np.exp(-r2 / (2.0 * width * width))


def localized_random(grid: Grid, seed: int, k0: float, energy: float, width: float) -> VelocityField:
    k_cut = grid.fundamental * grid.dealias_cutoff
    if k0 > k_cut:
        raise ValueError(
            f"peak wavenumber k0={k0:g} lies beyond the dealiasing cutoff {k_cut:.4g}; refine the grid"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal((grid.dim,) + grid.shape)
    kk = grid.k_magnitude / k0
    # Energy spectrum ~ k^4 exp(-2 (k/k0)^2) in shell-integrated form.
    amp = kk ** (2.0 - (grid.dim - 1) / 2.0) * np.exp(-kk * kk)
    coeffs = grid.forward(noise) * amp * grid.dealias_mask
    coeffs = project_array(grid, coeffs)
    w = width
    for _ in range(_MAX_ENVELOPE_PASSES):
        coeffs = grid.forward(grid.inverse(coeffs) * gaussian_envelope(grid, w))
        coeffs = project_array(grid, coeffs * grid.dealias_mask)
        coeffs[(slice(None),) + (0,) * grid.dim] = 0.0
        if outer_shell_fraction(grid, grid.inverse(coeffs)) < LOCALIZATION_LIMIT:
            break
        w *= 0.85
    else:
        raise ValueError(
            f"could not localise the field: envelope width {width:g} is too wide for box length {grid.length:g}"
        )
    total = math.sqrt(grid.spectral_sum(np.abs(coeffs) ** 2))
    if total == 0.0:
        raise ValueError("generated field vanished; check k0 and the grid")
    coeffs *= math.sqrt(2.0 * energy) / total
    return VelocityField(grid, coeffs, divergence_free=True)
