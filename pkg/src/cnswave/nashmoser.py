"""Nash-Moser iteration over abstract smoothable Banach scales, and Newton.

Elements are numpy arrays; the scales supply norms, the smoothing operators
S_j and the blocks Delta_j = S_{j+1} - S_j (S_0 = 0).  The problem supplies
the map Psi and a factory L(v) returning an inverse of DPsi(v).

The scheme (j >= 1), from the seed u_0 = v_0 = y_0 = 0, f_0 = S_1 g,
h_0 = L(0) f_0, e_0 = Psi(h_0) - Psi(0) - f_0:

    u_j = u_{j-1} + h_{j-1}
    v_j = S_j u_j
    y_j = -S_j sum_{n<j} e_n - sum_{n<j} y_n
    f_j = Delta_j g + y_j
    h_j = L(v_j) f_j
    e_j = Psi(u_j + h_j) - Psi(u_j) - f_j
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

__all__ = [
    "BanachScaleSpec",
    "ProblemSpec",
    "IterationState",
    "Stopping",
    "IterationReport",
    "DivergenceError",
    "seed",
    "step",
    "run",
    "newton_run",
    "invariants",
    "periodic_scale",
    "derivative_loss_toy",
    "linear_toy",
    "scalar_toy",
]

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class BanachScaleSpec:
    norm: Callable  # (x, s) -> float
    smooth: Callable  # (x, j) -> S_j x
    block: Optional[Callable] = None  # (x, j) -> Delta_j x
    indices: Sequence[float] = (0,)

    def delta(self, x, j):
        if self.block is not None:
            return self.block(x, j)
        return self.smooth(x, j + 1) - self.smooth(x, j)


@dataclass
class ProblemSpec:
    psi: Callable  # x -> Psi(x)
    inverse: Callable  # v -> (y -> L(v) y)
    domain: BanachScaleSpec
    data: BanachScaleSpec
    dpsi: Optional[Callable] = None  # (x, h) -> DPsi(x) h
    mu: int = 1
    r: int = 4
    R: int = 20
    admissible: Optional[Callable] = None  # v -> bool

    @property
    def beta(self) -> int:
        return 2 * (self.r + self.mu) + 1

    def faithful(self) -> bool:
        """The index hypothesis beta < (r + R) / 2."""
        return self.beta < (self.r + self.R) / 2


@dataclass
class Stopping:
    max_steps: int = 20
    residual_tol: float = 1e-9
    norm_budget: float = math.inf
    monitor_index: float = 0
    grace: int = 3


@dataclass
class IterationState:
    j: int
    u: np.ndarray
    v: np.ndarray
    h: np.ndarray
    y: np.ndarray
    f: np.ndarray
    e: np.ndarray
    g: np.ndarray
    sum_e: np.ndarray  # sum_{n <= j} e_n
    sum_y: np.ndarray  # sum_{n <= j} y_n
    sum_h: np.ndarray  # sum_{n <= j} h_n
    sum_e_prev: np.ndarray  # sum_{n <= j-1} e_n
    sum_e_prev2: np.ndarray  # sum_{n <= j-2} e_n
    e_prev: np.ndarray  # e_{j-1}
    psi_next: np.ndarray  # Psi(u_j + h_j)
    psi_u: np.ndarray  # Psi(u_j)
    xi: float = 0.0
    h_norms: dict = field(default_factory=dict)
    residual: float = math.nan  # || Psi(u_j + h_j) - g ||


def _zeros_like(x):
    return np.zeros_like(np.asarray(x, float))


def _monitor(problem: ProblemSpec, st: IterationState, s_mon: float):
    d = problem.data
    g = st.g
    st.xi = d.norm(g, s_mon) * 2.0 ** (-st.j) + d.norm(d.delta(g, st.j), s_mon)
    st.h_norms = {s: problem.domain.norm(st.h, s) for s in problem.domain.indices}
    st.residual = d.norm(st.psi_next - g, s_mon)


def seed(problem: ProblemSpec, g, s_mon: float = 0) -> IterationState:
    g = np.asarray(g, float)
    z = _zeros_like(g)
    psi0 = problem.psi(z)
    f0 = problem.data.smooth(g, 1)
    h0 = problem.inverse(_domain_zero(problem, g))(f0)
    u0 = np.zeros_like(h0)
    psi_h = problem.psi(h0)
    e0 = psi_h - psi0 - f0
    st = IterationState(
        j=0,
        u=u0,
        v=u0.copy(),
        h=h0,
        y=z.copy(),
        f=f0,
        e=e0,
        g=g,
        sum_e=e0.copy(),
        sum_y=z.copy(),
        sum_h=h0.copy(),
        sum_e_prev=z.copy(),
        sum_e_prev2=z.copy(),
        e_prev=z.copy(),
        psi_next=psi_h,
        psi_u=psi0,
    )
    _monitor(problem, st, s_mon)
    return st


def _domain_zero(problem: ProblemSpec, like):
    # domain and data vectors share one flat layout
    return np.zeros_like(np.asarray(like, float))


def step(problem: ProblemSpec, st: IterationState, s_mon: float = 0) -> IterationState:
    j = st.j + 1
    u = st.u + st.h
    v = problem.domain.smooth(u, j)
    if problem.admissible is not None and not problem.admissible(v):
        raise DivergenceError(f"smoothed iterate left the admissible ball at step {j}")
    y = -problem.data.smooth(st.sum_e, j) - st.sum_y
    f = problem.data.delta(st.g, j) + y
    h = problem.inverse(v)(f)
    psi_u = st.psi_next
    psi_next = problem.psi(u + h)
    e = psi_next - psi_u - f
    new = IterationState(
        j=j,
        u=u,
        v=v,
        h=h,
        y=y,
        f=f,
        e=e,
        g=st.g,
        sum_e=st.sum_e + e,
        sum_y=st.sum_y + y,
        sum_h=st.sum_h + h,
        sum_e_prev=st.sum_e,
        sum_e_prev2=st.sum_e_prev,
        e_prev=st.e,
        psi_next=psi_next,
        psi_u=psi_u,
    )
    _monitor(problem, new, s_mon)
    return new


def invariants(problem: ProblemSpec, st: IterationState) -> dict:
    """Relative defects of the bookkeeping identities at step j.

    telescoping   u_{j+1} = sum_{n <= j} h_n
    partial_sum   sum_{n <= j} y_n = -S_j sum_{n <= j-1} e_n
    recursive     y_j = -S_j e_{j-1} - Delta_{j-1} sum_{n <= j-2} e_n   (j >= 2)
    """
    dn = lambda x: float(np.linalg.norm(np.ravel(x)))
    scale_u = max(dn(st.sum_h), 1e-300)
    out = {"telescoping": dn(st.u + st.h - st.sum_h) / scale_u}
    S = problem.data.smooth
    ps = -S(st.sum_e_prev, st.j) if st.j >= 1 else _zeros_like(st.sum_y)
    scale_y = max(dn(st.sum_y), dn(ps), 1e-300)
    out["partial_sum"] = dn(st.sum_y - ps) / scale_y
    if st.j >= 2:
        # y_j is formed by cancellation, so compare at the size of its operands
        rec = -S(st.e_prev, st.j) - problem.data.delta(st.sum_e_prev2, st.j - 1)
        operands = max(dn(S(st.sum_e_prev, st.j)), dn(st.sum_y - st.y), dn(st.y), 1e-300)
        out["recursive"] = dn(st.y - rec) / operands
    return out


@dataclass
class IterationReport:
    method: str
    converged: bool
    steps: int
    residuals: list
    xi: list = field(default_factory=list)
    h_norms: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    invariants: list = field(default_factory=list)
    message: str = ""

    def to_lines(self) -> list[str]:
        """Line-delimited JSON records, one per step."""
        lines = []
        for i, r in enumerate(self.residuals):
            rec = {"method": self.method, "step": i, "residual": r}
            if i < len(self.xi):
                rec["xi"] = self.xi[i]
            if i < len(self.h_norms):
                rec["h_norms"] = {str(k): v for k, v in self.h_norms[i].items()}
            if i < len(self.invariants):
                rec["invariants"] = self.invariants[i]
            lines.append(json.dumps(rec, sort_keys=True))
        lines.append(
            json.dumps(
                {
                    "method": self.method,
                    "summary": True,
                    "converged": self.converged,
                    "steps": self.steps,
                    "slopes": {str(k): v for k, v in self.slopes.items()},
                    "message": self.message,
                },
                sort_keys=True,
            )
        )
        return lines


def _slopes(h_norms: list) -> dict:
    """Least-squares slope of log2 ||h_j||_s against j, per index s."""
    out = {}
    if len(h_norms) < 2:
        return out
    for s in h_norms[0]:
        vals = np.array([hn[s] for hn in h_norms])
        ok = vals > 0
        if ok.sum() >= 2:
            jj = np.arange(len(vals))[ok]
            out[s] = float(np.polyfit(jj, np.log2(vals[ok]), 1)[0])
    return out


def run(problem: ProblemSpec, g, stopping: Stopping | None = None, check_invariants: bool = False):
    """Nash-Moser iteration; returns (u, report, final IterationState)."""
    stop = stopping or Stopping()
    s_mon = stop.monitor_index
    g = np.asarray(g, float)
    gnorm = problem.data.norm(g, s_mon)
    if gnorm <= stop.residual_tol:
        zero = _domain_zero(problem, g)
        return zero, IterationReport("nash-moser", True, 0, [gnorm], message="zero data"), None
    rep = IterationReport("nash-moser", False, 0, [])
    try:
        st = seed(problem, g, s_mon)
    except DivergenceError as exc:
        rep.message = str(exc)
        return None, rep, None
    best = math.inf
    while True:
        rep.residuals.append(st.residual)
        rep.xi.append(st.xi)
        rep.h_norms.append(st.h_norms)
        if check_invariants:
            rep.invariants.append(invariants(problem, st))
        rep.steps = st.j + 1
        log.info("nash-moser step %d residual %.3e", st.j, st.residual)
        if st.residual <= stop.residual_tol:
            rep.converged = True
            break
        if not np.isfinite(st.residual):
            rep.message = "non-finite residual"
            break
        if st.j >= stop.grace and st.residual >= best:
            rep.message = f"residual stopped decreasing at step {st.j}"
            break
        best = min(best, st.residual) if st.j >= stop.grace - 1 else best
        if problem.domain.norm(st.u + st.h, s_mon) > stop.norm_budget:
            rep.message = "norm budget exceeded"
            break
        if rep.steps >= stop.max_steps:
            rep.message = "step budget exceeded"
            break
        try:
            st = step(problem, st, s_mon)
        except (DivergenceError, ArithmeticError, ValueError, RuntimeError) as exc:
            rep.message = f"divergence: {exc}"
            break
    rep.slopes = _slopes(rep.h_norms)
    return st.u + st.h, rep, st


def newton_run(problem: ProblemSpec, g, stopping: Stopping | None = None, u0=None):
    """Plain Newton: u <- u + L(u)(g - Psi(u)).  Returns (u, report)."""
    stop = stopping or Stopping()
    s_mon = stop.monitor_index
    g = np.asarray(g, float)
    u = _domain_zero(problem, g) if u0 is None else np.array(u0, float)
    rep = IterationReport("newton", False, 0, [])
    best = math.inf
    for k in range(stop.max_steps + 1):
        try:
            r = g - problem.psi(u)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            rep.message = f"divergence: {exc}"
            return u, rep
        res = problem.data.norm(r, s_mon)
        rep.residuals.append(res)
        rep.steps = k
        log.info("newton step %d residual %.3e", k, res)
        if res <= stop.residual_tol:
            rep.converged = True
            return u, rep
        if not np.isfinite(res):
            rep.message = "non-finite residual"
            return u, rep
        if k >= stop.grace and res >= best:
            rep.message = f"residual stopped decreasing at step {k}"
            return u, rep
        best = min(best, res)
        if k == stop.max_steps:
            break
        try:
            h = problem.inverse(u)(r)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            rep.message = f"divergence: {exc}"
            return u, rep
        rep.h_norms.append({s: problem.domain.norm(h, s) for s in problem.domain.indices})
        u = u + h
        if problem.domain.norm(u, s_mon) > stop.norm_budget:
            rep.message = "norm budget exceeded"
            return u, rep
    rep.message = "step budget exceeded"
    return u, rep


# -------------------------------------------------------------- toy problems
def periodic_scale(nx: int, period: float = 2 * np.pi, indices=(0, 1, 2)) -> BanachScaleSpec:
    """H^s on nx-point periodic samples with sharp cutoffs |k| < 2^j."""
    k = np.fft.rfftfreq(nx, d=period / nx) * period  # integer wavenumbers
    mult = np.full(k.size, 2.0)
    mult[0] = 1.0
    if nx % 2 == 0:
        mult[-1] = 1.0

    def norm(x, s):
        c = np.fft.rfft(x) / nx
        return float(np.sqrt(period * np.sum(mult * np.abs(c) ** 2 * (1 + k**2) ** s)))

    def cut(x, mask):
        return np.fft.irfft(np.fft.rfft(x) * mask, n=nx)

    def smooth(x, j):
        if j <= 0:
            return np.zeros_like(x)
        return cut(x, k < 2.0**j)

    def block(x, j):
        lo = 0.0 if j == 0 else 2.0**j
        return cut(x, (k >= lo) & (k < 2.0 ** (j + 1)))

    return BanachScaleSpec(norm, smooth, block, tuple(indices))


def derivative_loss_toy(nx: int = 64, period: float = 2 * np.pi) -> ProblemSpec:
    """Psi(u) = u + d_x(u^2) on periodic functions (one derivative lost)."""
    k = np.fft.rfftfreq(nx, d=period / nx) * 2 * np.pi
    ik = 1j * k
    if nx % 2 == 0:
        ik[-1] = 0.0
    dx = lambda f: np.fft.irfft(ik * np.fft.rfft(f), n=nx)
    D = np.array([dx(e) for e in np.eye(nx)]).T

    def psi(u):
        return u + dx(u * u)

    def dpsi(v, h):
        return h + 2 * dx(v * h)

    def inverse(v):
        lu = sla.lu_factor(np.eye(nx) + 2 * D * v[None, :])
        return lambda y: sla.lu_solve(lu, y)

    sc = periodic_scale(nx, period)
    return ProblemSpec(psi, inverse, sc, sc, dpsi=dpsi)


def linear_toy(nx: int = 64, period: float = 2 * np.pi, coeff: float = 0.5) -> ProblemSpec:
    """Psi(u) = u - coeff d_x^2 u, with its exact inverse."""
    k = np.fft.rfftfreq(nx, d=period / nx) * 2 * np.pi
    sym = 1 + coeff * k**2
    op = lambda u: np.fft.irfft(sym * np.fft.rfft(u), n=nx)
    inv = lambda y: np.fft.irfft(np.fft.rfft(y) / sym, n=nx)
    sc = periodic_scale(nx, period)
    return ProblemSpec(op, lambda v: inv, sc, sc, dpsi=lambda v, h: op(h))


def scalar_toy() -> ProblemSpec:
    """Psi(u) = u + u^2 on R^1 (no smoothing beyond S_j = I, j >= 1)."""
    sc = BanachScaleSpec(
        norm=lambda x, s: float(np.abs(x).sum()),
        smooth=lambda x, j: np.asarray(x, float) * (j > 0),
        block=lambda x, j: np.asarray(x, float) * (j == 0),
        indices=(0,),
    )
    return ProblemSpec(
        lambda u: u + u * u,
        lambda v: (lambda y: y / (1 + 2 * v)),
        sc,
        sc,
        dpsi=lambda v, h: (1 + 2 * v) * h,
    )
