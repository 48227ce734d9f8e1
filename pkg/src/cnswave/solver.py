"""Traveling-wave solves: the discrete operator wrapped as a Nash-Moser /
Newton problem over flat [q, u, eta] vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nashmoser as nm
from .linear import Background, assemble
from .operators import Forcing, Model, Residual, State, evaluate
from .spaces import Grid, lp_block, smooth, sobolev_norm, xspace_norm, yspace_norm

__all__ = [
    "split_collocated",
    "data_norm",
    "state_norm",
    "smooth_flat",
    "block_flat",
    "domain_scale",
    "data_scale",
    "whole_line_gauge",
    "build_problem",
    "WaveSolution",
    "solve_traveling_wave",
]


def split_collocated(grid: Grid, F):
    """Collocated vector -> (Residual(g, f, k), bottom trace, kinematic)."""
    s = State.unpack(grid, F)
    f = s.u.copy()
    bottom = f[..., 0].copy()
    k = f[..., -1].copy()
    f[..., 0] = 0.0
    f[..., -1] = 0.0
    return Residual(s.q, f, k), bottom, s.eta


def data_norm(grid: Grid, F, s: float = 0) -> float:
    """Codomain norm of a collocated vector.

    The (g, f, k) part uses yspace_norm; the rows carrying the bottom
    no-slip and kinematic conditions add their H^{3/2+s} / H^{2+s} norms.
    """
    res, bottom, kin = split_collocated(grid, F)
    return float(
        np.sqrt(
            yspace_norm(grid, res, s) ** 2
            + sobolev_norm(grid, bottom, 1.5 + s, "surface") ** 2
            + sobolev_norm(grid, kin, 2.0 + s, "surface") ** 2
        )
    )


def state_norm(grid: Grid, x, s: float = 0) -> float:
    st = State.unpack(grid, x)
    base = xspace_norm(grid, st, s)
    # the anisotropic surface norm ignores the mean; count it here
    return float(np.hypot(base, np.sqrt(grid.L) * abs(np.mean(st.eta))))


def _map_flat(grid: Grid, x, fn):
    st = State.unpack(grid, x)
    return State(fn(st.q, -2), fn(st.u, -2), fn(st.eta, -1)).pack()


def smooth_flat(grid: Grid, x, j: int):
    """S_j applied line-wise (horizontal frequency cutoff) to every slot."""
    return _map_flat(grid, x, lambda f, ax: smooth(grid, f, j, ax))


def block_flat(grid: Grid, x, j: int):
    return _map_flat(grid, x, lambda f, ax: lp_block(grid, f, j, ax))


def domain_scale(grid: Grid, indices=(0, 1, 2)) -> nm.BanachScaleSpec:
    return nm.BanachScaleSpec(
        norm=lambda x, s: state_norm(grid, x, s),
        smooth=lambda x, j: smooth_flat(grid, x, j),
        block=lambda x, j: block_flat(grid, x, j),
        indices=tuple(indices),
    )


def data_scale(grid: Grid, indices=(0, 1, 2)) -> nm.BanachScaleSpec:
    return nm.BanachScaleSpec(
        norm=lambda x, s: data_norm(grid, x, s),
        smooth=lambda x, j: smooth_flat(grid, x, j),
        block=lambda x, j: block_flat(grid, x, j),
        indices=tuple(indices),
    )


_EVEN_EXTRAPOLATION = np.array([1.5, -0.6, 0.1])  # f(0) from f(1), f(2), f(3), f even


def whole_line_gauge(grid: Grid, center: float) -> np.ndarray:
    """Surface functional fixing the eta zero mode by low-frequency extrapolation.

    On the box, the horizontal mean of eta is not determined by the equations.
    Instead of setting it to zero, we require the xi = 0 coefficient to equal
    the even extrapolation of Re eta_hat(k), k = 1, 2, 3, taken about the
    forcing center.  The box solution is then close to the periodization of
    a decaying whole-line profile rather than that profile minus its mean.
    """
    x = grid.x - center
    w = np.full(grid.nx, 1.0 / grid.nx)
    for k, c in enumerate(_EVEN_EXTRAPOLATION, start=1):
        w -= c * np.cos(2 * np.pi * k * x / grid.L) / grid.nx
    return w


def build_problem(model: Model, forcing: Forcing, indices=(0, 1, 2), gauge_center: float | None = None):
    """Psi(z) = F(z) - F(0) and g = -F(0), so that Psi(z) = g iff F(z) = 0.

    The inverse factory assembles and factorizes the exact discrete
    derivative at the given (smoothed) state.  With gauge_center set, the
    surface zero mode follows whole_line_gauge instead of mean zero.
    Returns (problem, g).
    """
    grid = model.grid
    gauge = None if gauge_center is None else whole_line_gauge(grid, gauge_center)
    F0 = evaluate(model, State.zeros(grid), forcing)["F"]

    def psi(z):
        return evaluate(model, State.unpack(grid, z), forcing)["F"] - F0

    def dpsi(z, h):
        bg = Background(model, State.unpack(grid, z), forcing)
        from .linear import derivative_matvec

        return derivative_matvec(bg, np.asarray(h, float)[None])[0]

    def inverse(v):
        op = assemble(Background(model, State.unpack(grid, v), forcing), "full", eta_gauge=gauge)
        return op.solve

    n = model.params.n
    problem = nm.ProblemSpec(
        psi=psi,
        inverse=inverse,
        domain=domain_scale(grid, indices),
        data=data_scale(grid, indices),
        dpsi=dpsi,
        mu=1,
        r=3 + n // 2,
        R=17 + 3 * (n // 2),
    )
    return problem, -F0


@dataclass
class WaveSolution:
    state: State
    report: nm.IterationReport
    residual: float
    method: str
    gamma: float
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.report.converged


def solve_traveling_wave(
    model: Model,
    forcing: Forcing,
    method: str = "newton",
    stopping: nm.Stopping | None = None,
    initial: State | None = None,
    check_invariants: bool = False,
    gauge_center: float | None = None,
) -> WaveSolution:
    """Solve F(q, u, eta) = 0 at fixed wave speed by Newton or Nash-Moser."""
    problem, g = build_problem(model, forcing, gauge_center=gauge_center)
    stop = stopping or nm.Stopping()
    grid = model.grid
    if method == "newton":
        u0 = None if initial is None else initial.pack()
        x, rep = nm.newton_run(problem, g, stop, u0=u0)
    elif method in ("nash-moser", "nashmoser"):
        if initial is not None:
            raise ValueError("the Nash-Moser iteration starts from zero")
        x, rep, _ = nm.run(problem, g, stop, check_invariants=check_invariants)
        if x is None:
            x = np.zeros(grid.size)
    else:
        raise ValueError(f"unknown method {method!r}")
    try:
        F = evaluate(model, State.unpack(grid, x), forcing)["F"]
        res = data_norm(grid, F, stop.monitor_index)
    except (ValueError, ArithmeticError):
        res = math.inf
    return WaveSolution(State.unpack(grid, x), rep, res, rep.method, forcing.gamma)
