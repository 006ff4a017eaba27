import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerayns.fields import FieldError, SpectralField, VelocityField, divergence_residual
from lerayns.grid import Grid
from lerayns.initial_data import gaussian_envelope
from lerayns.norms import NormSpec, compute_norm
from lerayns.operators import (
    MollifierSpec,
    SourceOrigin,
    apply_derivative,
    helmholtz_project,
    mollified_nonlinear_source,
    mollify,
    nonlinear_source,
    project_array,
    source_array,
    transport_array,
)

from conftest import random_real


def inner(grid, a, b):
    return grid.spectral_sum(np.real(np.conj(a) * b))


def random_solenoidal(grid, seed):
    c = grid.forward(random_real(grid, grid.dim, seed)) * grid.dealias_mask
    return VelocityField(grid, project_array(grid, c), divergence_free=True)


def test_derivative_of_sine():
    g = Grid(2, 16)
    x, y = g.coordinates
    f = SpectralField(g, g.forward(np.sin(2 * x) * np.cos(y)))
    d = g.inverse(apply_derivative(f, 0).coeffs)
    assert np.max(np.abs(d - 2 * np.cos(2 * x) * np.cos(y))) < 1e-12


def test_derivative_annihilates_nyquist():
    g = Grid(2, 16)
    x, y = g.coordinates
    f = SpectralField(g, g.forward(np.cos(8 * x) + 0 * y))
    assert np.max(np.abs(apply_derivative(f, 0).coeffs)) == 0.0


def test_derivative_axis_range():
    g = Grid(2, 8)
    with pytest.raises(ValueError):
        apply_derivative(SpectralField(g, np.zeros(g.spectral_shape)), 2)


@given(st.integers(0, 2**31), st.sampled_from([2, 3]))
def test_projection_properties(seed, dim):
    g = Grid(dim, 16, 5.0)
    w = g.forward(random_real(g, dim, seed))
    p = project_array(g, w)
    assert divergence_residual(g, p) < 1e-12
    assert np.max(np.abs(project_array(g, p) - p)) < 1e-12 * np.max(np.abs(p))
    # orthogonal: the removed part is perpendicular to the kept part
    assert abs(inner(g, p, w - p)) < 1e-10 * inner(g, w, w)


def test_projection_kills_gradients():
    g = Grid(3, 16)
    x, y, z = g.coordinates
    phi = np.sin(x) * np.cos(2 * y) * np.sin(z)
    grad = np.stack([np.cos(x) * np.cos(2 * y) * np.sin(z), -2 * np.sin(x) * np.sin(2 * y) * np.sin(z),
                     np.sin(x) * np.cos(2 * y) * np.cos(z)])
    w = VelocityField.from_physical(g, grad)
    assert compute_norm(helmholtz_project(w), NormSpec.l2()) < 1e-12


def test_mollifier_zero_width_is_identity(tg3):
    assert mollify(tg3, 0.0) is tg3


def test_mollifier_negative_width():
    with pytest.raises(ValueError):
        MollifierSpec(-0.1)


def test_mollifier_resolution_warning():
    g = Grid(3, 16)
    with pytest.warns(UserWarning):
        MollifierSpec(g.spacing).check_resolution(g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        MollifierSpec(2 * g.spacing).check_resolution(g)


def test_mollifier_widens_gaussian():
    # G_delta * exp(-r^2 / 2 s^2) = (s^2 / (s^2 + delta^2))^{d/2} exp(-r^2 / 2 (s^2 + delta^2))
    g = Grid(2, 64, 40.0)
    s, delta = 2.0, 1.5
    bump = gaussian_envelope(g, s)
    u = VelocityField.from_physical(g, np.stack([bump, np.zeros_like(bump)]))
    out = mollify(u, delta).physical()[0]
    s2 = s * s + delta * delta
    expected = (s * s / s2) * gaussian_envelope(g, math.sqrt(s2))
    assert np.max(np.abs(out - expected)) < 1e-12


def test_transport_taylor_green():
    # for TG2D, (u.grad)u = (sin 2x, sin 2y) / 2, a pure gradient
    g = Grid(2, 32)
    x, y = g.coordinates
    u = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
    uh = g.forward(u)
    adv = g.inverse(transport_array(g, uh, 0.0))
    assert np.max(np.abs(adv[0] - 0.5 * np.sin(2 * x) - 0 * y)) < 1e-13
    assert np.max(np.abs(adv[1] - 0.5 * np.sin(2 * y) - 0 * x)) < 1e-13
    assert np.max(np.abs(source_array(g, uh, 0.0))) < 1e-13


def test_beltrami_flow_has_no_source():
    g = Grid(3, 16)
    x, y, z = g.coordinates
    a, b, c = 1.0, 0.7, 0.4
    zero = 0 * (x + y + z)
    u = np.stack([a * np.sin(z) + c * np.cos(y) + zero, b * np.sin(x) + a * np.cos(z) + zero,
                  c * np.sin(y) + b * np.cos(x) + zero])
    field = VelocityField.from_physical(g, u, divergence_free=True)
    q = nonlinear_source(field).field
    assert compute_norm(q, NormSpec.l2()) < 1e-12


@given(st.integers(0, 2**31), st.sampled_from([0.0, 0.5, 1.0]))
def test_source_is_energy_neutral(seed, delta):
    g = Grid(3, 16, 6.0)
    u = random_solenoidal(g, seed)
    q = source_array(g, u.coeffs, delta)
    scale = compute_norm(u, NormSpec.l2()) ** 2 * compute_norm(u, NormSpec.dl2())
    assert abs(inner(g, u.coeffs, q)) < 1e-12 * scale
    assert divergence_residual(g, q) < 1e-12


def test_source_requires_certificate(tg3):
    raw = VelocityField(tg3.grid, tg3.coeffs)
    with pytest.raises(FieldError):
        nonlinear_source(raw)
    with pytest.raises(FieldError):
        mollified_nonlinear_source(raw, 0.5)


def test_mollified_source_tags_origin(box3):
    u = random_solenoidal(box3, 3)
    src = mollified_nonlinear_source(u, 2 * box3.spacing)
    assert src.origin is SourceOrigin.MOLLIFIED
    assert src.delta == 2 * box3.spacing
    assert nonlinear_source(u).origin is SourceOrigin.EXACT


def test_mollified_source_tends_to_exact(box3):
    u = random_solenoidal(box3, 4)
    exact = source_array(box3, u.coeffs, 0.0)
    gaps = [np.max(np.abs(source_array(box3, u.coeffs, d) - exact)) for d in (0.1, 0.05, 0.025)]
    assert gaps[0] > gaps[1] > gaps[2]
    # O(delta^2) from the Gaussian multiplier
    assert gaps[1] / gaps[2] == pytest.approx(4.0, rel=0.05)
