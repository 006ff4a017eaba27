"""Periodic box geometry and the wavevector tables derived from it."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

# pocketfft splits a multi-axis transform into independent 1-D lines, so the
# result does not depend on the worker count.
FFT_WORKERS = int(os.environ.get("LERAYNS_FFT_WORKERS", "-1"))


@dataclass(frozen=True)
class Grid:
    """Cubic periodic box of side ``length`` sampled with ``n`` points per axis.

    Spectral arrays use the real-to-complex layout: the last axis holds the
    non-negative wavenumbers ``0..n/2`` and every other axis holds the full
    FFT ordering.  Velocity arrays carry a leading component axis.
    """

    dim: int
    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"box length must be positive and finite, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        """Trailing array axes that carry space (for component-first arrays)."""
        return tuple(range(-self.dim, 0))

    @property
    def fundamental(self) -> float:
        return 2.0 * math.pi / self.length

    @property
    def dealias_cutoff(self) -> int:
        """Largest retained integer mode index under the 2/3 rule."""
        return self.n // 3

    # -- wavenumber tables -------------------------------------------------

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers per axis, shaped to broadcast on spectral arrays."""
        out = []
        for a in range(self.dim):
            if a == self.dim - 1:
                m = np.arange(self.n // 2 + 1)
            else:
                m = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
            shape = [1] * self.dim
            shape[a] = m.size
            out.append(m.reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Exact wavenumbers ``2*pi*m/L`` per axis (broadcastable)."""
        return tuple(2.0 * math.pi * m / self.length for m in self.mode_indices)

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist entry zeroed.

        The sampled derivative of the Nyquist cosine vanishes, and keeping
        ``i*k`` there would break Hermitian symmetry.
        """
        out = []
        for m, k in zip(self.mode_indices, self.wavenumbers):
            out.append(np.where(np.abs(m) == self.n // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k2 = np.zeros(self.spectral_shape)
        for k in self.wavenumbers:
            k2 = k2 + k * k
        return k2

    @cached_property
    def k_magnitude(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def inverse_k_squared(self) -> np.ndarray:
        k2 = self.k_squared
        with np.errstate(divide="ignore"):
            inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        return inv

    @cached_property
    def hermitian_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in sums over the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * (self.dim - 1) + [w.size]
        return np.broadcast_to(w.reshape(shape), self.spectral_shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_cutoff
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m in self.mode_indices:
            keep = keep & (np.abs(m) <= cut)
        return keep

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Collocation coordinates ``x_j = j*h`` per axis (broadcastable)."""
        out = []
        x = np.arange(self.n) * self.spacing
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.n
            out.append(x.reshape(shape))
        return tuple(out)

    @cached_property
    def outer_shell_mask(self) -> np.ndarray:
        """Points whose max-norm distance from the box centre exceeds 90% of L/2."""
        c = self.length / 2.0
        dist = np.zeros(self.shape)
        for x in self.coordinates:
            dist = np.maximum(dist, np.abs(x - c))
        return dist > 0.9 * c

    # -- transforms on raw arrays -----------------------------------------

    @property
    def forward_scale(self) -> float:
        # coefficient = L^{-d/2} * integral f(x) exp(-ik.x) dx, discretised
        return self.length ** (self.dim / 2) / self.n**self.dim

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Physical samples to Parseval-scaled coefficients (leading axes batched)."""
        out = sfft.rfftn(values, axes=self.axes, workers=FFT_WORKERS)
        out *= self.forward_scale
        return out

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        out = sfft.irfftn(coeffs, s=self.shape, axes=self.axes, workers=FFT_WORKERS)
        out *= 1.0 / self.forward_scale
        return out

    def spectral_sum(self, density: np.ndarray) -> float:
        """Sum a non-negative spectral density over the full (two-sided) spectrum."""
        w = self.hermitian_weights
        if density.ndim > self.dim:
            density = density.sum(axis=tuple(range(density.ndim - self.dim)))
        return float(np.sum(w * density))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.n, "length": self.length}
