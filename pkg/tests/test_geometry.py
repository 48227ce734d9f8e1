import numpy as np
import pytest

from cnswave.geometry import (
    GeometryError,
    build_geometry,
    extend,
    mean_curvature,
    piola_residual,
    poisson_extend_zero,
)
from cnswave.spaces import Grid, project_high, project_low


@pytest.fixture(scope="module")
def g():
    return Grid(16.0, 64, 24)


def band_limited_surface(g, rng, kmax):
    c = np.zeros(g.nx // 2 + 1, complex)
    c[1 : kmax + 1] = rng.standard_normal(kmax) + 1j * rng.standard_normal(kmax)
    return np.fft.irfft(c, n=g.nx)


def test_poisson_extension(g):
    rng = np.random.default_rng(3)
    phi = band_limited_surface(g, rng, 12)
    E = poisson_extend_zero(g, phi)
    assert np.max(np.abs(E[:, -1] - phi)) <= 1e-12 * np.max(np.abs(phi))
    assert np.max(np.abs(E[:, 0])) <= 1e-12 * np.max(np.abs(phi))
    lap = g.dx(E, order=2) + g.dy(E, order=2)
    scale = np.max(np.abs(g.dy(E, order=2)))
    assert np.max(np.abs(lap)) <= 1e-8 * scale


def test_poisson_extension_mode_formula(g):
    k = 20
    phi = np.cos(2 * np.pi * k * g.x / g.L)
    kap = 2 * np.pi * k / g.L
    ref = phi[:, None] * np.sinh(kap * g.y) / np.sinh(kap * g.b)
    assert np.max(np.abs(poisson_extend_zero(g, phi) - ref)) <= 1e-12


def test_extension_low_and_high(g):
    rng = np.random.default_rng(4)
    eta = band_limited_surface(g, rng, 30)
    lo = project_low(g, eta, g.low_cut)
    hi = project_high(g, eta, g.low_cut)
    assert np.max(np.abs(extend(g, lo) - lo[:, None] * g.y / g.b)) <= 1e-13
    assert np.max(np.abs(g.dy(extend(g, lo)) - lo[:, None] / g.b)) <= 1e-12
    assert np.max(np.abs(extend(g, eta) - extend(g, lo) - poisson_extend_zero(g, hi))) <= 1e-13
    assert np.max(np.abs(extend(g, np.zeros(g.nx)))) == 0.0


def test_flat_geometry(g):
    geo = build_geometry(g, np.zeros(g.nx))
    eye = np.eye(2)[:, :, None, None]
    assert np.max(np.abs(geo.J - 1)) == 0.0
    assert np.max(np.abs(geo.A - eye)) == 0.0
    assert np.max(np.abs(geo.M - eye)) == 0.0
    assert np.max(np.abs(geo.N - np.array([0.0, 1.0])[:, None])) == 0.0


def test_geometry_relations(g):
    rng = np.random.default_rng(5)
    eta = band_limited_surface(g, rng, 20)
    eta *= 0.05 / np.max(np.abs(eta))
    geo = build_geometry(g, eta)
    E = extend(g, eta)
    # M e1 = (1 + d_y E) e1 - d_x E e2
    assert np.max(np.abs(geo.M[0, 0] - (1 + g.dy(E)))) <= 1e-12
    assert np.max(np.abs(geo.M[1, 0] + g.dx(E))) <= 1e-12
    det = geo.M[0, 0] * geo.M[1, 1] - geo.M[0, 1] * geo.M[1, 0]
    assert np.max(np.abs(det - geo.J)) <= 1e-13
    # A = (grad F)^-T
    gradF = np.array([[np.ones_like(E), np.zeros_like(E)], [g.dx(E), 1 + g.dy(E)]])
    prod = np.einsum("ikxy,jkxy->ijxy", geo.A, gradF)
    assert np.max(np.abs(prod - np.eye(2)[:, :, None, None])) <= 1e-12
    assert np.max(np.abs(g.dy(geo.F[1]) - geo.J)) <= 1e-12
    assert 0.5 <= geo.J.min() and geo.J.max() <= 1.5
    assert piola_residual(g, geo) <= 1e-8
    assert np.all(np.diff(geo.F[1], axis=1) > 0)


def test_degenerate_geometry_rejected(g):
    eta = 5.0 * np.cos(2 * np.pi * 20 * g.x / g.L)
    with pytest.raises(GeometryError):
        build_geometry(g, eta)
    assert not build_geometry(g, eta, strict=False).diffeo


def test_mean_curvature_linear_part(g):
    eps = 1e-5
    eta = eps * np.sin(2 * np.pi * g.x / g.L)
    ref = -eps * (2 * np.pi / g.L) ** 2 * np.sin(2 * np.pi * g.x / g.L)
    assert np.max(np.abs(mean_curvature(g, eta) - ref)) <= 1e-8 * np.max(np.abs(ref))
    assert np.max(np.abs(mean_curvature(g, np.zeros(g.nx)))) == 0.0


def test_mean_curvature_pointwise_formula(g):
    x = g.x
    eta = 0.2 * np.sin(2 * np.pi * x / g.L) + 0.1 * np.cos(4 * np.pi * x / g.L)
    e1 = 0.2 * (2 * np.pi / g.L) * np.cos(2 * np.pi * x / g.L) - 0.1 * (4 * np.pi / g.L) * np.sin(4 * np.pi * x / g.L)
    e2 = -0.2 * (2 * np.pi / g.L) ** 2 * np.sin(2 * np.pi * x / g.L) - 0.1 * (4 * np.pi / g.L) ** 2 * np.cos(4 * np.pi * x / g.L)
    ref = e2 / (1 + e1**2) ** 1.5
    assert np.max(np.abs(mean_curvature(g, eta) - ref)) <= 1e-10
