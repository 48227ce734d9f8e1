"""Quick self-checks behind `cnswave verify` (small grids, a few seconds)."""

from __future__ import annotations

import numpy as np

from . import nashmoser as nm
from .equilibrium import PhysicalParams
from .linear import Background, Regularization, assemble, bogovskii_b0, derivative_matvec
from .operators import Forcing, GaussianBump, Model, PressureStress, State, evaluate, kinematic_project
from .solver import data_norm
from .spaces import Grid, lp_block, sobolev_norm

__all__ = ["smooth_state", "band_limited", "run_checks"]


def smooth_state(grid: Grid, rng, amplitude: float = 1.0, decay: float = 0.5, width: float = 3.0) -> State:
    """Random state with geometric Chebyshev decay in y and Gaussian spectral
    decay in x, projected onto the bottom / kinematic constraints."""
    k = np.arange(grid.nz)
    T = np.cos(np.pi * np.outer(k, k) / (grid.nz - 1))

    def field(shape):
        a = rng.standard_normal(shape + (grid.nz,)) * np.exp(-decay * k)
        return grid.apply_multiplier(a @ T.T, np.exp(-((grid.xi * width) ** 2)), axis=-2)

    eta = grid.apply_multiplier(rng.standard_normal(grid.nx), np.exp(-((grid.xi * width) ** 2)), axis=-1)
    st = State(field((grid.nx,)), field((2, grid.nx)), eta - eta.mean())
    return kinematic_project(grid, st) * amplitude


def band_limited(grid: Grid, rng, kmax: int | None = None):
    """Random field with |k| <= kmax (default nx / 4) and y-degree <= N - 2."""
    kmax = grid.nx // 4 if kmax is None else kmax
    deg = np.arange(grid.nz)
    T = np.cos(np.pi * np.outer(deg, deg) / (grid.nz - 1))
    a = rng.standard_normal((grid.nx, grid.nz)) * (deg <= grid.nz - 3)
    return grid.apply_multiplier(a @ T.T, (grid.xi * grid.L <= kmax).astype(float))


def _identities(seed):
    g = Grid(16.0, 32, 16)
    m = Model(g, PhysicalParams())
    out = []
    worst = max(data_norm(g, evaluate(m, State.zeros(g), Forcing(c))["F"]) for c in (0.5, 1.0, 2.0))
    out.append(("trivial solution", worst <= 1e-12, f"max residual {worst:.2e}"))
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((g.nx, g.nz))
    f = g.filter(f)
    tot = sum(sobolev_norm(g, lp_block(g, f, j), 0) ** 2 for j in range(12))
    err = abs(tot - sobolev_norm(g, f, 0) ** 2) / sobolev_norm(g, f, 0) ** 2
    out.append(("Littlewood-Paley identity", err <= 1e-12, f"relative error {err:.2e}"))
    return out


def _linear(seed):
    g = Grid(16.0, 32, 16)
    m = Model(g, PhysicalParams())
    rng = np.random.default_rng(seed)
    out = []
    frc = Forcing(1.0, stress=PressureStress(GaussianBump(1e-3, 8.0, 1.0, 16.0)))
    bg = smooth_state(g, rng, 1e-2)
    d = smooth_state(g, rng, 1.0).pack()
    bgd = Background(m, bg, frc)
    an = derivative_matvec(bgd, d[None])[0]
    F = lambda t: evaluate(m, State.unpack(g, bg.pack() + t * d), frc)["F"]
    h = 1e-3
    d1 = (F(h) - F(-h)) / (2 * h)
    d2 = (F(h / 2) - F(-h / 2)) / h
    fd = (4 * d2 - d1) / 3
    err = np.linalg.norm(fd - an) / np.linalg.norm(an)
    out.append(("derivative vs Richardson differences", err <= 1e-6, f"relative error {err:.2e}"))
    for reg in (None, Regularization(2, 100.0)):
        op = assemble(Background(m, None, Forcing(1.0)), "principal" if reg else "full", reg)
        x = smooth_state(g, rng, 1.0).pack()
        z = op.solve(op.apply(x))
        e1 = np.linalg.norm(op.solve(op.apply(z)) - z) / np.linalg.norm(z)
        y = op.apply(x)
        e2 = np.linalg.norm(op.apply(op.solve(y)) - y) / np.linalg.norm(y)
        name = "inverse consistency" + (" (regularized)" if reg else "")
        out.append((name, max(e1, e2) <= 1e-8, f"LA {e1:.1e} AL {e2:.1e}"))
    psi = band_limited(g, rng)
    col = g.vertical_integral(psi)
    psi = psi - np.mean(col) / g.b
    X = bogovskii_b0(g, psi)
    div = g.dx(X[0]) + g.dy(X[1])
    e = np.max(np.abs(div - psi)) / np.max(np.abs(psi))
    tr = max(np.max(np.abs(X[..., 0])), np.max(np.abs(X[..., -1])))
    out.append(("Bogovskii right inverse", e <= 1e-8 and tr <= 1e-10, f"div {e:.1e} trace {tr:.1e}"))
    return out


def _engine(seed):
    p = nm.derivative_loss_toy(64)
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    g = 1e-3 * (np.cos(x) + 0.5 * np.sin(3 * x))
    u, rep, _ = nm.run(p, g, nm.Stopping(20, 1e-12), check_invariants=True)
    inv = max(max(v.values()) for v in rep.invariants)
    return [
        ("toy Nash-Moser convergence", rep.converged, f"{rep.steps} steps"),
        ("bookkeeping invariants", inv <= 1e-12, f"max defect {inv:.1e}"),
    ]


def run_checks(family: str = "all", seed: int = 0):
    fams = {"identities": _identities, "linear": _linear, "engine": _engine}
    names = list(fams) if family == "all" else [family]
    res = []
    for n in names:
        res.extend(fams[n](seed))
    return res
