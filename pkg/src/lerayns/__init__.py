"""Pseudo-spectral toolkit for the mollified incompressible Navier-Stokes system on a periodic box.

The package integrates the regularised flow, reconstructs it through its
Duhamel form, compares it with the heat flow and checks explicit decay and
interpolation inequalities numerically.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .grid import Grid
from .fields import FieldError, PhysicalField, SpectralField, VelocityField, to_physical, to_spectral
from .norms import NormKind, NormSpec, compute_norm

__all__ = [
    "FieldError",
    "Grid",
    "NormKind",
    "NormSpec",
    "PhysicalField",
    "SpectralField",
    "VelocityField",
    "__version__",
    "compute_norm",
    "to_physical",
    "to_spectral",
]
