import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnswave.operators import Residual, State
from cnswave.spaces import (
    ConstraintError,
    Grid,
    algebra_exponent,
    anisotropic_norm,
    hhat_norm,
    hminus1_seminorm,
    lp_block,
    project_high,
    project_low,
    smooth,
    sobolev_norm,
    xspace_constraints,
    xspace_norm,
    yspace_norm,
)

from conftest import surface_mode


def random_surface(grid, rng, kmax=None):
    kmax = grid.nx // 2 - 1 if kmax is None else kmax
    c = np.zeros(grid.nx // 2 + 1, complex)
    c[: kmax + 1] = rng.standard_normal(kmax + 1) + 1j * rng.standard_normal(kmax + 1)
    c[0] = c[0].real
    return np.fft.irfft(c, n=grid.nx) * grid.nx


def test_l2_norm_is_quadrature(grid, rng):
    f = grid.filter(rng.standard_normal((grid.nx, grid.nz)))
    assert sobolev_norm(grid, f, 0) ** 2 == pytest.approx(grid.integrate(f**2), rel=1e-12)
    eta = grid.filter(rng.standard_normal(grid.nx), -1)
    assert sobolev_norm(grid, eta, 0) ** 2 == pytest.approx(grid.integrate_surface(eta**2), rel=1e-12)
    assert sobolev_norm(grid, np.zeros(grid.nx), 3) == 0.0


@pytest.mark.parametrize("k,s", [(4, 1.0), (6, 2.5), (10, 0.5)])
def test_single_mode_weight(k, s):
    grid = Grid(4.0, 32, 8)
    f = surface_mode(grid, k)
    xi = k / grid.L
    l2 = grid.L / 2
    assert sobolev_norm(grid, f, s) ** 2 == pytest.approx((1 + xi**2) ** s * l2, rel=1e-12)


def test_anisotropic_weights():
    g = Grid(4.0, 16, 8)
    eta = surface_mode(g, 1)  # xi = 0.25
    assert anisotropic_norm(eta, 0, g.L) ** 2 == pytest.approx(1.0625 * g.L / 2, rel=1e-12)
    y = np.arange(8) * 2.0 / 8
    eta2 = np.cos(2 * np.pi * y / 2.0)[None, :] * np.ones((8, 1))  # xi = (0, 0.5)
    l2 = 8.0 / 2
    assert anisotropic_norm(eta2, 0, (4.0, 2.0)) ** 2 == pytest.approx(0.25 * l2, rel=1e-12)


def test_anisotropic_high_band_is_sobolev(grid, rng):
    eta = project_high(grid, random_surface(grid, rng), 1.0)
    assert anisotropic_norm(eta, 2.5, grid.L) == pytest.approx(sobolev_norm(grid, eta, 2.5), rel=1e-12)


def test_anisotropic_requires_mean_zero(grid):
    with pytest.raises(ConstraintError):
        anisotropic_norm(np.ones(grid.nx), 0, grid.L)
    with pytest.raises(ConstraintError):
        hminus1_seminorm(np.ones(grid.nx), grid.L)


def test_frequency_splitting_is_exact(grid, rng):
    for _ in range(20):
        eta = random_surface(grid, rng)
        eta -= eta.mean()
        s = rng.uniform(0, 4)
        lhs = anisotropic_norm(eta, s, grid.L) ** 2
        lo = project_low(grid, eta, 1.0)
        hi = project_high(grid, eta, 1.0)
        rhs = anisotropic_norm(lo, 0, grid.L) ** 2 + sobolev_norm(grid, hi, s) ** 2
        assert lhs / rhs == pytest.approx(1.0, abs=1e-12)


def test_low_band_sup_bounds(grid, rng):
    # |d^k f| <= sum_m (2 pi |xi_m|)^k |c_m| <= C_k ||f||_aniso by Cauchy-Schwarz
    xi = np.fft.fftfreq(grid.nx, d=grid.L / grid.nx)
    low = (np.abs(xi) > 0) & (np.abs(xi) < 1)
    w = (xi[low] ** 2 + xi[low] ** 4) / xi[low] ** 2
    for k in range(3):
        Ck = np.sqrt(np.sum((2 * np.pi * np.abs(xi[low])) ** (2 * k) / (grid.L * w)))
        for _ in range(20):
            eta = project_low(grid, random_surface(grid, rng), 1.0)
            eta -= eta.mean()
            d = grid.dx(eta, axis=-1, order=k) if k else eta
            ratio = np.max(np.abs(d)) / anisotropic_norm(eta, 0, grid.L)
            assert ratio <= Ck * (1 + 1e-12)


def test_projector_partition(grid, rng):
    f = grid.filter(rng.standard_normal((grid.nx, grid.nz)))
    for kappa in (0.1, 0.5, 1.0, 1.5):
        assert np.max(np.abs(project_low(grid, f, kappa) + project_high(grid, f, kappa) - f)) <= 1e-14
    band = project_low(grid, f, 0.5)
    assert np.allclose(project_low(grid, band, 0.5), band, atol=1e-14)


def test_hminus1_single_mode(grid):
    for k in (1, 3, 7):
        f = surface_mode(grid, k, 0.3)
        assert hminus1_seminorm(f, grid.L) == pytest.approx(grid.L / k * np.sqrt(grid.L / 2), rel=1e-12)


def test_hhat_of_horizontal_derivative(grid, rng):
    G = grid.filter(rng.standard_normal((grid.nx, grid.nz)))
    g = grid.dx(G)
    col = grid.vertical_integral(G)
    col -= col.mean()
    seminorm = hminus1_seminorm(grid.vertical_integral(g), grid.L)
    # |2 pi i xi| / |xi| = 2 pi in one horizontal dimension
    assert seminorm == pytest.approx(2 * np.pi * sobolev_norm(grid, col, 0), rel=1e-10)
    assert hhat_norm(grid, np.zeros((grid.nx, grid.nz)), 1) == 0.0
    assert hhat_norm(grid, g, 1) >= sobolev_norm(grid, g, 1)


def test_xspace_basics(grid):
    z = State.zeros(grid)
    assert xspace_norm(grid, z, 0) == 0.0
    assert yspace_norm(grid, Residual(z.q, z.u, np.zeros((2, grid.nx))), 0) == 0.0
    c = xspace_constraints(grid, z)
    assert c["bottom_norm"] == 0.0 and c["kinematic_norm"] == 0.0
    eta = 1e-2 * surface_mode(grid, 3)
    c = xspace_constraints(grid, State(z.q, z.u, eta))
    ref = sobolev_norm(grid, grid.dx(eta, axis=-1), 0.5, "surface")
    assert c["kinematic_norm"] == pytest.approx(ref, rel=1e-12)


def test_algebra_exponent():
    assert algebra_exponent(2) == 4
    assert algebra_exponent(3) == 3


def test_smoothing_identity_on_low_band():
    g = Grid(2.0, 64, 8)
    f = project_low(g, random_surface(g, np.random.default_rng(0)), 1.0)
    for j in range(1, 6):
        assert np.max(np.abs(smooth(g, f, j) - f)) <= 1e-13


def test_lp_sum_equals_smoothed(grid, rng):
    f = grid.filter(rng.standard_normal((2, grid.nx, grid.nz)))
    for J in range(4):
        lhs = sum(sobolev_norm(grid, lp_block(grid, f, j), 1.5) ** 2 for j in range(J + 1))
        rhs = sobolev_norm(grid, smooth(grid, f, J + 1), 1.5) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-12)


# ------------------------------------------------------ smoothing axioms
AX_GRID = {c: Grid(2.0, 128, 8, smoothing_unit=c) for c in (1.0, 0.25)}


def _axiom_defects(g, f, j, s, t):
    """Return lhs - const * rhs (must be <= 0) for the four inequalities."""
    c = g.smoothing_unit
    n = lambda h, r: sobolev_norm(g, h, r, "surface")
    Sj = smooth(g, f, j)
    rest = f - Sj
    D = lp_block(g, f, j)
    tol = 1e-12 * (n(f, max(s, t)) + 1e-300)
    out = [n(Sj, s) - n(f, s) - tol]
    if s < t:
        k2 = np.sqrt(1 + c**2) ** (t - s) * 2.0 ** (j * (t - s))
        out.append(n(Sj, t) - k2 * n(Sj, s) - tol)
        k3 = c ** (-(t - s)) * 2.0 ** (-j * (t - s))
        out.append(n(rest, s) - k3 * n(rest, t) - tol)
    if t >= s:
        k4 = np.sqrt(1 + 4 * c**2) ** (t - s)
    else:
        k4 = max(1.0, c ** (t - s))
    out.append(n(D, t) - k4 * 2.0 ** (j * (t - s)) * n(D, s) - tol)
    return out


@settings(max_examples=1000, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.sampled_from(sorted(AX_GRID)),
    st.integers(1, 6),
    st.integers(0, 4),
    st.integers(0, 4),
)
def test_smoothing_axioms(seed, c, j, s, t):
    g = AX_GRID[c]
    rng = np.random.default_rng(seed)
    f = random_surface(g, rng, kmax=int(rng.integers(1, g.nx // 2)))
    assert max(_axiom_defects(g, f, j, s, t)) <= 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 4))
def test_littlewood_paley_identity(seed, s):
    g = AX_GRID[1.0]
    f = random_surface(g, np.random.default_rng(seed))
    tot = sum(sobolev_norm(g, lp_block(g, f, j), s) ** 2 for j in range(12))
    assert tot == pytest.approx(sobolev_norm(g, f, s) ** 2, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 3), st.floats(0, 2))
def test_norm_monotone_in_index(seed, s, ds):
    g = AX_GRID[1.0]
    f = random_surface(g, np.random.default_rng(seed))
    assert sobolev_norm(g, f, s) <= sobolev_norm(g, f, s + ds) * (1 + 1e-14)


def test_xspace_norm_ignores_surface_mean(grid, rng):
    # a constant lift of eta carries no anisotropic weight, even when the
    # mean-removed remainder is pure roundoff
    z = State.zeros(grid)
    assert xspace_norm(grid, State(z.q, z.u, np.full(grid.nx, 1e-7) + 1e-23 * rng.standard_normal(grid.nx)), 0) <= 1e-20
    eta = 1e-2 * surface_mode(grid, 2)
    a = xspace_norm(grid, State(z.q, z.u, eta), 1)
    assert xspace_norm(grid, State(z.q, z.u, eta + 0.3), 1) == pytest.approx(a, rel=1e-12)
