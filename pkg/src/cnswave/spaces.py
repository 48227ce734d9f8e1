"""Discrete function spaces on the periodic slab (0, L) x (0, b).

Horizontal direction: Fourier, frequencies xi_k = k / L (cycles per unit
length), so that d/dx is the multiplier 2 pi i xi.  Vertical direction:
Chebyshev-Lobatto collocation with Clenshaw-Curtis quadrature.

Array conventions
-----------------
slab scalar     (..., nx, nz)   horizontal axis -2, vertical axis -1
surface scalar  (..., nx)       horizontal axis -1

Leading axes are free (vector components, batches of directions).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "chebyshev_lobatto",
    "clenshaw_curtis_weights",
    "sobolev_norm",
    "anisotropic_norm",
    "project_low",
    "project_high",
    "smooth",
    "lp_block",
    "hminus1_seminorm",
    "hhat_norm",
    "xspace_norm",
    "yspace_norm",
    "xspace_constraints",
    "algebra_exponent",
    "ConstraintError",
]


class ConstraintError(ValueError):
    """A field violates a structural constraint (e.g. nonzero mean)."""


def chebyshev_lobatto(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes t_j = cos(pi j / N) on [-1, 1] and the differentiation matrix.

    Standard negative-sum-trick construction; nodes are in descending order.
    """
    N = npts - 1
    j = np.arange(npts)
    t = np.cos(np.pi * j / N)
    c = np.ones(npts)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** j
    dt = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dt + np.eye(npts))
    D -= np.diag(D.sum(axis=1))
    return t, D


def clenshaw_curtis_weights(npts: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [-1, 1] for the nodes cos(pi j / N)."""
    N = npts - 1
    theta = np.pi * np.arange(npts) / N
    w = np.zeros(npts)
    v = np.ones(N - 1)
    interior = slice(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[interior]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
    w[interior] = 2.0 * v / N
    return w


@dataclass(frozen=True)
class Grid:
    """Tensor grid: nx periodic points on [0, L), nz Lobatto nodes on [0, b].

    The xi = 0 mode is present (it carries horizontal means); the Nyquist
    mode is present in the sample space but every operator in this package
    removes it, so fields live in the span of |k| < nx / 2.
    """

    L: float
    nx: int
    nz: int
    b: float = 1.0
    n: int = 2
    low_cut: float = 1.0
    smoothing_unit: float = 1.0

    def __post_init__(self):
        if self.nx % 2 or self.nx < 4:
            raise ValueError(f"nx must be even and >= 4, got {self.nx}")
        if self.nz < 8:
            raise ValueError(f"nz must be >= 8, got {self.nz}")
        if self.L <= 0 or self.b <= 0:
            raise ValueError("L and b must be positive")

    # ------------------------------------------------------------------ nodes
    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (self.L / self.nx)

    @cached_property
    def _cheb(self):
        t, D = chebyshev_lobatto(self.nz)
        return t, D

    @cached_property
    def y(self) -> np.ndarray:
        t = self._cheb[0]
        return 0.5 * self.b * (1.0 - t)

    @cached_property
    def Dy(self) -> np.ndarray:
        """d/dy on the (ascending) vertical nodes."""
        return -(2.0 / self.b) * self._cheb[1]

    @cached_property
    def wy(self) -> np.ndarray:
        """Clenshaw-Curtis weights on [0, b]."""
        return 0.5 * self.b * clenshaw_curtis_weights(self.nz)

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], (self.nx, self.nz))

    @cached_property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.y[None, :], (self.nx, self.nz))

    @property
    def nyquist(self) -> int:
        return self.nx // 2

    @cached_property
    def k(self) -> np.ndarray:
        return np.arange(self.nx // 2 + 1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Nonnegative frequencies k / L of the real transform."""
        return self.k / self.L

    @cached_property
    def mult(self) -> np.ndarray:
        """Parseval multiplicity of each real-transform coefficient."""
        m = np.full(self.nx // 2 + 1, 2.0)
        m[0] = 1.0
        m[-1] = 1.0
        return m

    @cached_property
    def keep(self) -> np.ndarray:
        """Mask of retained coefficients (everything but Nyquist)."""
        m = np.ones(self.nx // 2 + 1, dtype=bool)
        m[-1] = False
        return m

    @property
    def npad(self) -> int:
        return 3 * self.nx // 2

    @cached_property
    def xpad(self) -> np.ndarray:
        return np.arange(self.npad) * (self.L / self.npad)

    @property
    def size(self) -> int:
        """Length of the stacked (q, u, eta) unknown vector."""
        return (1 + self.n) * self.nx * self.nz + self.nx

    # -------------------------------------------------------------- transforms
    def fft(self, f, axis=-2):
        return sfft.rfft(f, axis=axis)

    def ifft(self, F, axis=-2):
        return sfft.irfft(F, n=self.nx, axis=axis)

    def _bcast(self, v, axis, ndim):
        shape = [1] * ndim
        shape[axis] = -1
        return v.reshape(shape)

    def apply_multiplier(self, f, mult, axis=-2):
        """Multiply the horizontal spectrum by mult (length nx//2+1)."""
        F = self.fft(f, axis)
        F = F * self._bcast(np.asarray(mult), axis, F.ndim)
        return self.ifft(F, axis)

    def filter(self, f, axis=-2):
        """Remove the Nyquist mode."""
        F = self.fft(f, axis)
        F = F * self._bcast(self.keep, axis, F.ndim)
        return self.ifft(F, axis)

    def dx(self, f, axis=-2, order=1):
        m = (2j * np.pi * self.xi) ** order
        m = np.where(self.keep, m, 0.0)
        return self.apply_multiplier(f, m, axis)

    def dy(self, f, order=1):
        out = f
        for _ in range(order):
            out = out @ self.Dy.T
        return out

    def pad(self, f, axis=-2):
        """Spectral interpolation onto the 3/2 grid (Nyquist dropped)."""
        F = self.fft(f, axis)
        F = F * self._bcast(self.keep, axis, F.ndim)
        shape = list(F.shape)
        shape[axis] = self.npad // 2 + 1
        G = np.zeros(shape, dtype=complex)
        idx = [slice(None)] * F.ndim
        idx[axis] = slice(0, self.nx // 2 + 1)
        G[tuple(idx)] = F
        return sfft.irfft(G, n=self.npad, axis=axis) * (self.npad / self.nx)

    def unpad(self, g, axis=-2):
        """Truncate a 3/2-grid field back to the native grid (Nyquist dropped)."""
        G = sfft.rfft(g, axis=axis)
        idx = [slice(None)] * G.ndim
        idx[axis] = slice(0, self.nx // 2 + 1)
        F = G[tuple(idx)] * (self.nx / self.npad)
        F = F * self._bcast(self.keep, axis, F.ndim)
        return self.ifft(F, axis)

    def cheb_coeffs(self, f):
        """Chebyshev coefficients (in t = 1 - 2y/b) along the last axis."""
        N = self.nz - 1
        a = sfft.dct(f, type=1, axis=-1) / N
        a[..., 0] *= 0.5
        a[..., -1] *= 0.5
        return a

    # ------------------------------------------------------------- quadrature
    def integrate(self, f):
        """Trapezoid x Clenshaw-Curtis integral of a slab field."""
        return (self.L / self.nx) * np.sum(f @ self.wy, axis=-1)

    def integrate_surface(self, f):
        return (self.L / self.nx) * np.sum(f, axis=-1)

    def vertical_integral(self, f):
        """y-integral of a slab field: returns a surface field."""
        return f @ self.wy

    def xmean(self, f, axis=-2):
        return np.mean(f, axis=axis)

    def low_mask(self, kappa):
        return self.xi < kappa

    def band_mask(self, lo, hi):
        return (self.xi >= lo) & (self.xi < hi)


# ------------------------------------------------------------------- norms
def _is_slab(grid: Grid, f) -> bool:
    return f.ndim >= 2 and f.shape[-2:] == (grid.nx, grid.nz)


def _power(grid: Grid, f, axis):
    """|F_k|^2 scaled so that sum_k power_k = integral of f^2 over a period."""
    F = grid.fft(f, axis)
    return (grid.L / grid.nx**2) * np.abs(F) ** 2 * grid._bcast(grid.mult, axis, F.ndim)


def sobolev_norm(grid: Grid, f, s: float, kind: str | None = None) -> float:
    """Mixed horizontal-spectral / vertical-collocation H^s norm.

    slab:    sum_{i <= s} sum_k <xi_k>^{2(s-i)} || d_y^i f_k ||^2_{L^2(0,b)}
    surface: sum_k <xi_k>^{2s} |f_k|^2

    Leading axes (vector components) are summed.  For s = 0 this equals
    the trapezoid x Clenshaw-Curtis L^2 norm.
    """
    f = np.asarray(f, dtype=float)
    kind = kind or ("slab" if _is_slab(grid, f) else "surface")
    bracket = 1.0 + grid.xi**2
    if kind == "surface":
        p = _power(grid, f, -1)
        return float(np.sqrt(np.sum(p * bracket ** s)))
    total = 0.0
    g = f
    for i in range(int(np.floor(s)) + 1):
        if i > 0:
            g = grid.dy(g)
        p = _power(grid, g, -2)  # (..., nk, nz)
        wk = bracket ** (s - i)
        total += float(np.sum((p * wk[:, None]) @ grid.wy))
    return float(np.sqrt(total))


def _surface_modes(eta, period):
    """Full-transform coefficients and frequency vectors of a d-dim field."""
    eta = np.asarray(eta, dtype=float)
    d = eta.ndim
    periods = np.broadcast_to(np.atleast_1d(np.asarray(period, float)), (d,))
    c = np.fft.fftn(eta) / eta.size
    freqs = np.meshgrid(
        *[np.fft.fftfreq(m, d=p / m) for m, p in zip(eta.shape, periods)], indexing="ij"
    )
    vol = float(np.prod(periods))
    return c, freqs, vol


def _require_mean_zero(eta, what="field"):
    eta = np.asarray(eta, dtype=float)
    scale = max(np.max(np.abs(eta)), 1e-300)
    if abs(np.mean(eta)) > 1e-10 * scale:
        raise ConstraintError(f"{what} must have zero mean (mean = {np.mean(eta):.3e})")


def anisotropic_norm(eta, s: float, period, kappa: float = 1.0) -> float:
    """Anisotropic norm on a d-dimensional periodic surface grid, d in {1, 2}.

    Weight |xi|^-2 (xi_1^2 + |xi|^4) for 0 < |xi| < kappa and <xi>^{2s}
    for |xi| >= kappa; the mean is excluded and must vanish.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim not in (1, 2):
        raise ValueError("anisotropic norms are implemented for d = 1, 2")
    _require_mean_zero(eta, "surface field")
    return _aniso_weighted(eta, s, period, kappa)


def _aniso_weighted(eta, s, period, kappa):
    c, freqs, vol = _surface_modes(eta, period)
    a2 = sum(f**2 for f in freqs)
    nz = a2 > 0
    w = np.zeros_like(a2)
    low = nz & (a2 < kappa**2)
    w[low] = (freqs[0][low] ** 2 + a2[low] ** 2) / a2[low]
    w[~low & nz] = (1.0 + a2[~low & nz]) ** s
    return float(np.sqrt(vol * np.sum(np.abs(c) ** 2 * w)))


def hminus1_seminorm(f, period) -> float:
    """[f]_{H^-1}: L^2 norm of |xi|^-1 f_hat over xi != 0 (f mean-zero)."""
    f = np.asarray(f, dtype=float)
    _require_mean_zero(f, "H^-1 argument")
    c, freqs, vol = _surface_modes(f, period)
    a2 = sum(q**2 for q in freqs)
    nz = a2 > 0
    return float(np.sqrt(vol * np.sum(np.abs(c[nz]) ** 2 / a2[nz])))


def hhat_norm(grid: Grid, g, s: float) -> float:
    """sqrt(||g||_{H^s}^2 + [int_0^b g dy]_{H^-1}^2)."""
    col = grid.vertical_integral(np.asarray(g, float))
    return float(np.hypot(sobolev_norm(grid, g, s, "slab"), hminus1_seminorm(col, grid.L)))


def project_low(grid: Grid, f, kappa: float, axis: int | None = None):
    """Sharp cutoff keeping |xi| < kappa."""
    axis = (-2 if _is_slab(grid, np.asarray(f)) else -1) if axis is None else axis
    return grid.apply_multiplier(f, grid.low_mask(kappa).astype(float), axis)


def project_high(grid: Grid, f, kappa: float, axis: int | None = None):
    """Sharp cutoff keeping |xi| >= kappa; project_low + project_high = id."""
    axis = (-2 if _is_slab(grid, np.asarray(f)) else -1) if axis is None else axis
    return grid.apply_multiplier(f, (~grid.low_mask(kappa)).astype(float), axis)


def smooth(grid: Grid, f, j: int, axis: int | None = None):
    """S_j: keep |xi| < unit * 2^j for j >= 1; S_0 = 0."""
    f = np.asarray(f, dtype=float)
    if j <= 0:
        return np.zeros_like(f)
    axis = (-2 if _is_slab(grid, f) else -1) if axis is None else axis
    return project_low(grid, f, grid.smoothing_unit * 2.0**j, axis)


def lp_block(grid: Grid, f, j: int, axis: int | None = None):
    """Delta_j = S_{j+1} - S_j as a single annulus mask."""
    f = np.asarray(f, dtype=float)
    axis = (-2 if _is_slab(grid, f) else -1) if axis is None else axis
    hi = grid.smoothing_unit * 2.0 ** (j + 1)
    lo = 0.0 if j == 0 else grid.smoothing_unit * 2.0**j
    return grid.apply_multiplier(f, grid.band_mask(lo, hi).astype(float), axis)


def algebra_exponent(d: int) -> int:
    """r_d from the anisotropic algebra property."""
    if d == 2:
        return 4
    if d >= 3:
        return 3
    raise ValueError("r_d is defined for d >= 2")


# ----------------------------------------------------------- product norms
def _aniso_surface(grid: Grid, eta, s):
    # the zero mode carries weight 0, so a nonzero mean is simply ignored
    return _aniso_weighted(np.asarray(eta, float), s, grid.L, grid.low_cut)


def xspace_norm(grid: Grid, state, s: float = 0) -> float:
    """sqrt(||q||_{H^{1+s}}^2 + ||u||_{H^{2+s}}^2 + ||eta||_{aniso, 5/2+s}^2)."""
    q, u, eta = state.q, state.u, state.eta
    return float(
        np.sqrt(
            sobolev_norm(grid, q, 1 + s, "slab") ** 2
            + sobolev_norm(grid, u, 2 + s, "slab") ** 2
            + _aniso_surface(grid, eta, 2.5 + s) ** 2
        )
    )


def yspace_norm(grid: Grid, data, s: float = 0) -> float:
    """Codomain norm of (g, f, k): H^{1+s} x H^s x H^{1/2+s} plus the
    H^-1 seminorm of the vertical integral of g."""
    g, f, k = data.g, data.f, data.k
    col = grid.vertical_integral(g)
    col = col - np.mean(col)
    return float(
        np.sqrt(
            sobolev_norm(grid, g, 1 + s, "slab") ** 2
            + sobolev_norm(grid, f, s, "slab") ** 2
            + sobolev_norm(grid, k, 0.5 + s, "surface") ** 2
            + hminus1_seminorm(col, grid.L) ** 2
        )
    )


def xspace_constraints(grid: Grid, state) -> dict:
    """Violation of the bottom no-slip and kinematic conditions.

    Returns the traces themselves and their H^{1/2} norms.
    """
    bottom = state.u[..., 0]
    kin = state.u[1, :, -1] + grid.dx(state.eta, axis=-1)
    mean_eta = float(np.mean(state.eta))
    return {
        "bottom": bottom,
        "kinematic": kin,
        "bottom_norm": sobolev_norm(grid, bottom, 0.5, "surface"),
        "kinematic_norm": sobolev_norm(grid, kin, 0.5, "surface"),
        "eta_mean": mean_eta,
    }
