"""Flattening geometry: Poisson-type extension of the surface, the map
(x, y) -> (x, y + E eta), its Jacobian, A = (grad F)^{-T}, M = J A^T, the
surface normal and the mean curvature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import Grid

__all__ = [
    "GeometryError",
    "extension_profiles",
    "poisson_extend_zero",
    "extend",
    "extend_with_derivatives",
    "GeometryPack",
    "build_geometry",
    "mean_curvature",
    "piola_residual",
]


class GeometryError(ValueError):
    pass


def _sinh_ratio(kap, y, b):
    """sinh(kap y) / sinh(kap b) and its y-derivative, overflow-safe."""
    kap = kap[:, None]
    y = y[None, :]
    den = -np.expm1(-2.0 * kap * b)
    e = np.exp(kap * (y - b))
    val = e * (-np.expm1(-2.0 * kap * y)) / den
    der = kap * e * (1.0 + np.exp(-2.0 * kap * y)) / den
    return val, der


def extension_profiles(grid: Grid, low_cut: float | None = None):
    """Vertical profiles (nk, nz) of E and d_y E per horizontal mode.

    |xi| < low_cut: y / b (linear lift).  Otherwise the harmonic profile
    sinh(2 pi |xi| y) / sinh(2 pi |xi| b).
    """
    low_cut = grid.low_cut if low_cut is None else low_cut
    key = ("_ext_profiles", low_cut)
    cache = grid.__dict__.setdefault("_memo", {})
    if key in cache:
        return cache[key]
    nk = grid.nx // 2 + 1
    prof = np.empty((nk, grid.nz))
    dprof = np.empty((nk, grid.nz))
    low = grid.xi < low_cut
    prof[low] = grid.y / grid.b
    dprof[low] = 1.0 / grid.b
    hi = ~low
    if np.any(hi):
        v, d = _sinh_ratio(2 * np.pi * grid.xi[hi], grid.y, grid.b)
        prof[hi] = v
        dprof[hi] = d
    prof[~grid.keep] = 0.0
    dprof[~grid.keep] = 0.0
    cache[key] = (prof, dprof)
    return prof, dprof


def _lift(grid: Grid, phi, prof):
    Phi = grid.fft(phi, axis=-1)
    return grid.ifft(Phi[..., :, None] * prof, axis=-2)


def poisson_extend_zero(grid: Grid, phi):
    """Harmonic extension vanishing at y = 0 with trace phi at y = b.

    The zero mode is mapped to zero.
    """
    _, _ = extension_profiles(grid)
    nk = grid.nx // 2 + 1
    prof = np.zeros((nk, grid.nz))
    nz = grid.xi > 0
    v, _ = _sinh_ratio(2 * np.pi * grid.xi[nz], grid.y, grid.b)
    prof[nz] = v
    prof[~grid.keep] = 0.0
    return _lift(grid, phi, prof)


def extend(grid: Grid, eta):
    """E eta = (y / b) P_low eta + E_0 P_high eta."""
    prof, _ = extension_profiles(grid)
    return _lift(grid, eta, prof)


def extend_with_derivatives(grid: Grid, eta):
    """(E eta, d_y E eta, d_x E eta) on the native slab grid."""
    prof, dprof = extension_profiles(grid)
    Eta = grid.fft(eta, axis=-1)
    E = grid.ifft(Eta[..., :, None] * prof, axis=-2)
    Ey = grid.ifft(Eta[..., :, None] * dprof, axis=-2)
    ikx = np.where(grid.keep, 2j * np.pi * grid.xi, 0.0)
    Ex = grid.ifft((ikx * Eta)[..., :, None] * prof, axis=-2)
    return E, Ey, Ex


@dataclass
class GeometryPack:
    E: np.ndarray  # extension (nx, nz)
    F: np.ndarray  # flattening map values (2, nx, nz)
    J: np.ndarray  # Jacobian (nx, nz)
    A: np.ndarray  # (grad F)^{-T}, (2, 2, nx, nz)
    M: np.ndarray  # J A^T, (2, 2, nx, nz)
    N: np.ndarray  # surface normal (-d_x eta, 1), (2, nx)
    diffeo: bool
    min_J: float


def build_geometry(grid: Grid, eta, strict: bool = True) -> GeometryPack:
    eta = grid.filter(np.asarray(eta, float), axis=-1)
    E, Ey, Ex = extend_with_derivatives(grid, eta)
    J = 1.0 + Ey
    minJ = float(np.min(J))
    if strict and minJ <= 0:
        raise GeometryError(f"degenerate flattening map: min J = {minJ:.3e}")
    F = np.stack([np.array(grid.X), grid.Y + E])
    one = np.ones_like(J)
    zero = np.zeros_like(J)
    A = np.array([[one, -Ex / J], [zero, 1.0 / J]])
    M = np.array([[J, zero], [-Ex, one]])
    etax = grid.dx(eta, axis=-1)
    N = np.stack([-etax, np.ones_like(etax)])
    return GeometryPack(E, F, J, A, M, N, minJ > 0, minJ)


def mean_curvature(grid: Grid, eta):
    """div((1 + |grad eta|^2)^{-1/2} grad eta), dealiased on the 3/2 grid."""
    etax = grid.dx(np.asarray(eta, float), axis=-1)
    p = grid.pad(etax, axis=-1)
    flux = grid.unpad(p / np.sqrt(1.0 + p**2), axis=-1)
    return grid.dx(flux, axis=-1)


def piola_residual(grid: Grid, geo: GeometryPack) -> float:
    """Relative size of the row-wise divergence of J A (= M^T)."""
    JA = geo.J * geo.A
    res = []
    for i in range(2):
        res.append(grid.dx(JA[i, 0]) + grid.dy(JA[i, 1]))
    scale = max(np.max(np.abs(grid.dx(JA[0, 0]))), np.max(np.abs(grid.dy(JA[0, 1]))), 1e-300)
    return float(max(np.max(np.abs(r)) for r in res) / scale)
