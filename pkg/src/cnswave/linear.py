"""Linearization, principal part, direct solves and divergence inverses.

Discrete inverse
----------------
The collocated Jacobian is square but singular: at every background it has
a two-dimensional kernel in the horizontal zero mode (a constant shift of the
surface, which the periodic box cannot rule out, and the top Chebyshev
polynomial of the zero-mode enthalpy, an artifact of collocating first-order
continuity rows) and one dead Nyquist direction per grid line.  The range
misses a complementary subspace of the same dimension.  We border the matrix

    Jt = J + C R^T

with pin functionals R (mean of eta, top Chebyshev coefficient of the mean
enthalpy, Nyquist coefficients) and complement vectors C spanning the left
null space at the trivial background.  For data y, lam = W^T y with
W = Jt^-T R measures the part of y outside the range, and the returned
solution z = Jt^-1 (y - C lam) satisfies J z = y - C lam and R^T z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
import scipy.linalg as sla

from .geometry import extend, extend_with_derivatives
from .operators import (
    Forcing,
    Model,
    Residual,
    State,
    evaluate,
    flatten_batch,
    unflatten_batch,
)
from .spaces import ConstraintError, Grid

__all__ = [
    "Background",
    "Regularization",
    "derivative_apply",
    "derivative_matvec",
    "v_field",
    "principal_apply",
    "principal_matvec",
    "AssembledOperator",
    "assemble",
    "solve",
    "SingularOperatorError",
    "bogovskii_b0",
    "bogovskii_b",
    "bogovskii_b1",
    "bogovskii_b2",
    "steady_transport_solve",
    "to_lines",
    "from_lines",
]


class SingularOperatorError(RuntimeError):
    pass


# --------------------------------------------------------------- background
class Background:
    """Linearization point w0 = (q0, u0, eta0) with forcing and wave speed."""

    def __init__(self, model: Model, state: State | None = None, forcing: Forcing | None = None):
        self.model = model
        g = model.grid
        self.state = State.zeros(g) if state is None else state
        self.forcing = Forcing(1.0) if forcing is None else forcing
        self._eval = evaluate(model, self.state, self.forcing)

    @property
    def gamma(self) -> float:
        return self.forcing.gamma

    @property
    def is_trivial(self) -> bool:
        s = self.state
        return not (np.any(s.q) or np.any(s.u) or np.any(s.eta))

    @property
    def sigma(self):
        return self._eval["sigma"]


@dataclass(frozen=True)
class Regularization:
    """Elliptic regularization N^-1 L_m of the continuity row, homotopy tau."""

    m: int = 2
    N: float = 100.0
    tau: float = 1.0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("regularization order m must be >= 2")
        if not self.N > 0:
            raise ValueError("N must be positive")


# ---------------------------------------------------------- derivative
def derivative_matvec(bg: Background, X, dgamma=None, dforcing=None):
    """Collocated derivative action on a batch of flat directions (B, size)."""
    X = np.atleast_2d(np.asarray(X, float))
    q, u, eta = unflatten_batch(bg.model.grid, X)
    out = evaluate(bg.model, bg.state, bg.forcing, tangent=(q, u, eta), dgamma=dgamma, dforcing=dforcing)
    return out["dF"]


def derivative_apply(bg: Background, direction: State, dgamma: float = 0.0, dforcing=None) -> Residual:
    """Derivative action as (g, f, k) on the native grid (f unmasked)."""
    out = evaluate(
        bg.model,
        bg.state,
        bg.forcing,
        tangent=(direction.q[None], direction.u[None], direction.eta[None]),
        dgamma=np.array([dgamma]),
        dforcing=dforcing,
    )
    return Residual(out["dg"][0], out["df"][0], out["dk"][0])


def v_field(bg: Background):
    """v = (H^-1)'(h0) (u0 - M e1) on the native grid."""
    m = bg.model
    g = m.grid
    s = bg.state
    eta = g.filter(s.eta, -1)
    _, Ey, Ex = extend_with_derivatives(g, eta)
    u = g.filter(s.u)
    dH = m.profile.dH_inv(sigma=bg.sigma)
    return np.stack([dH * (u[0] - 1.0 - Ey), dH * (u[1] + Ex)])


# ------------------------------------------------------------ principal part
def _stress_div_flat(model: Model, u1, u2):
    """Equilibrium stress S(u) = mu(rho)(Du + Du^T - div I) + lam(rho) div I
    and its divergence (n = 2)."""
    g = model.grid
    rho = model.profile.rho
    mu = model.params.mu(rho)
    lam = model.params.lam(rho)
    B11, B12, B21, B22 = g.dx(u1), g.dy(u1), g.dx(u2), g.dy(u2)
    div = B11 + B22
    S11 = mu * (2 * B11 - div) + lam * div
    S22 = mu * (2 * B22 - div) + lam * div
    S12 = mu * (B12 + B21)
    D1 = g.dx(S11) + g.dy(S12)
    D2 = g.dx(S12) + g.dy(S22)
    return (S11, S12, S22), (D1, D2)


def principal_matvec(bg: Background, X, reg: Regularization | None = None):
    """Collocated action of the principal part on flat directions (B, size).

    continuity  div(rho u) + tau div(v (q + g eta)) [+ N^-1 L_m (q + g eta)]
    momentum    -gamma^2 rho d_1 u + rho grad(q + g eta) - gamma div S(u)
    dynamic     -(rho q - gamma S(u)) e_n - st d_1^2 eta e_n
    kinematic   u_2 + d_1 eta [- N^-1 |2 pi xi|^(2m - 1/2) eta]
    """
    model = bg.model
    g = model.grid
    prm = model.params
    rho = model.profile.rho
    grav, gam, st = prm.gravity, bg.gamma, prm.surface_tension
    X = np.atleast_2d(np.asarray(X, float))
    q, u, eta = unflatten_batch(g, X)
    q = g.filter(q)
    u = g.filter(u)
    eta = g.filter(eta, -1)
    u1, u2 = u[:, 0], u[:, 1]
    qe = q + grav * eta[..., :, None]

    tau = 1.0 if reg is None else reg.tau
    cont = g.dx(rho * u1) + g.dy(rho * u2)
    vP = g.pad(v_field(bg))
    qeP = g.pad(qe)
    cont = cont + tau * (g.dx(g.unpad(vP[0] * qeP)) + g.dy(g.unpad(vP[1] * qeP)))
    if reg is not None:
        mm = reg.m
        Lm = (-1) ** mm * (g.dx(qe, order=2 * mm) + g.dy(q, order=2 * mm))
        cont = cont + Lm / reg.N
        for i in range(mm):
            cont[..., i] = g.dy(q, order=mm + i)[..., 0]
            cont[..., -1 - i] = g.dy(q, order=mm + i)[..., -1]

    (S11, S12, S22), (D1, D2) = _stress_div_flat(model, u1, u2)
    f1 = -(gam**2) * rho * g.dx(u1) + rho * g.dx(qe) - gam * D1
    f2 = -(gam**2) * rho * g.dx(u2) + rho * g.dy(q) - gam * D2
    k1 = gam * S12[..., -1]
    k2 = -rho[-1] * q[..., -1] + gam * S22[..., -1] - st * g.dx(eta, axis=-1, order=2)
    kin = u2[..., -1] + g.dx(eta, axis=-1)
    if reg is not None:
        frac = np.where(g.keep, (2 * np.pi * g.xi) ** (2 * reg.m - 0.5), 0.0)
        kin = kin - g.apply_multiplier(eta, frac, axis=-1) / reg.N

    f1[..., 0] = u1[..., 0]
    f2[..., 0] = u2[..., 0]
    f1[..., -1] = k1
    f2[..., -1] = k2
    return flatten_batch(cont, np.stack([f1, f2], axis=1), kin)


def principal_apply(bg: Background, direction: State, reg: Regularization | None = None) -> np.ndarray:
    return principal_matvec(bg, direction.pack()[None], reg)[0]


# --------------------------------------------------------------- line maps
def to_lines(grid: Grid, V):
    """(..., size) flat vectors -> (..., nx, 3 nz + 1) arrays of x-lines."""
    q, u, eta = unflatten_batch(grid, V)
    return np.concatenate([q, u[..., 0, :, :], u[..., 1, :, :], eta[..., :, None]], axis=-1)


def from_lines(grid: Grid, Lz):
    nz = grid.nz
    q = Lz[..., :nz]
    u = np.stack([Lz[..., nz : 2 * nz], Lz[..., 2 * nz : 3 * nz]], axis=-3)
    eta = Lz[..., 3 * nz]
    return flatten_batch(q, u, eta)


def _mode_blocks(grid: Grid, matvec):
    """Per-mode blocks of a translation-invariant operator (complex, nk x p x p)."""
    p = 3 * grid.nz + 1
    nk = grid.nx // 2 + 1
    cosines = np.zeros((grid.nx,))
    for k in range(nk - 1):
        cosines += np.cos(2 * np.pi * k * grid.x / grid.L)
    Lin = np.zeros((p, grid.nx, p))
    for j in range(p):
        Lin[j, :, j] = cosines
    out = matvec(from_lines(grid, Lin))
    Oh = np.fft.rfft(to_lines(grid, out), axis=-2)  # (p, nk, p_out)
    blocks = np.transpose(Oh, (1, 2, 0)).copy()  # (nk, p_out, p_in)
    blocks[0] /= grid.nx
    blocks[1:] *= 2.0 / grid.nx
    blocks[-1] = 0.0
    return blocks


def _pin_candidates(grid: Grid):
    """Candidate zero-mode pin functionals in line coordinates."""
    nz = grid.nz
    p = 3 * nz + 1
    N = nz - 1
    cands = []
    e = np.zeros(p)
    e[-1] = 1.0
    cands.append(("mean eta", e))
    # Chebyshev coefficient functionals on the q column (DCT-I rows)
    coef = grid.cheb_coeffs(np.eye(nz))  # [i, k]: coefficient k of node i
    for deg in (N, N - 1, 0, 1):
        r = np.zeros(p)
        r[:nz] = coef[:, deg]
        cands.append((f"q0 chebyshev coefficient {deg}", r))
    return cands


@dataclass
class ZeroModeStructure:
    nullity: int
    R: np.ndarray  # (p, r) pin functionals on line profiles
    C: np.ndarray  # (p, r) complement vectors
    names: list
    singular_values: np.ndarray


def _zero_mode_structure(B0: np.ndarray, grid: Grid, rtol=1e-11) -> ZeroModeStructure:
    B0 = np.real(B0)
    Uu, s, Vh = np.linalg.svd(B0)
    r = int(np.sum(s < rtol * s[0]))
    if r == 0:
        p = B0.shape[0]
        return ZeroModeStructure(0, np.zeros((p, 0)), np.zeros((p, 0)), [], s)
    K = Vh[-r:].T
    C = Uu[:, -r:]
    cands = _pin_candidates(grid)
    chosen, names = [], []
    for name, vec in cands:
        trial = chosen + [vec]
        M = np.array(trial) @ K
        if np.linalg.svd(M, compute_uv=False)[-1] > 1e-6 * np.linalg.norm(M):
            chosen.append(vec)
            names.append(name)
        if len(chosen) == r:
            break
    if len(chosen) < r:
        raise SingularOperatorError("could not find pins for the zero-mode kernel")
    return ZeroModeStructure(r, np.array(chosen).T, C, names, s)


@dataclass
class AssembledOperator:
    """Discrete linear operator with a reusable factorization.

    kind is 'full' (the derivative) or 'principal'.  matvec applies the
    operator matrix-free; solve applies the bordered inverse.
    """

    background: Background
    kind: str
    reg: Regularization | None
    matvec: object
    zero_mode: ZeroModeStructure
    blocks: np.ndarray | None = None
    block_lu: list | None = None
    lu: tuple | None = None
    R: np.ndarray | None = None
    C: np.ndarray | None = None
    W: np.ndarray | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)
    condition: float = float("nan")

    @property
    def grid(self) -> Grid:
        return self.background.model.grid

    @property
    def fast(self) -> bool:
        return self.blocks is not None

    def project_pins(self, x):
        """Orthogonal projection onto {R^T x = 0} (the pinned subspace)."""
        x = np.asarray(x, float)
        R = self.R
        return x - R @ np.linalg.solve(R.T @ R, R.T @ x)

    def apply(self, X):
        X = np.asarray(X, float)
        return self.matvec(X[None])[0] if X.ndim == 1 else self.matvec(X)

    def solve(self, y, return_defect: bool = False):
        y = np.asarray(y, float)
        z, defect = (self._solve_fast if self.fast else self._solve_dense)(y)
        return (z, defect) if return_defect else z

    def _solve_dense(self, y):
        lam = self.W.T @ y
        z = sla.lu_solve(self.lu, y - self.C @ lam)
        return z, self.C @ lam

    def _solve_fast(self, y):
        g = self.grid
        W0 = self.W
        Y = np.fft.rfft(to_lines(g, y), axis=-2)
        Z = np.zeros_like(Y)
        zm = self.zero_mode
        defect_hat = np.zeros_like(Y)
        for k, lu in enumerate(self.block_lu):
            if lu is None:
                continue
            rhs = Y[k]
            if k == 0 and zm.nullity:
                lam = W0.T @ np.real(rhs)
                rhs = rhs - zm.C @ lam
                defect_hat[0] = zm.C @ lam
            Z[k] = sla.lu_solve(lu, rhs)
        defect_hat[-1] = Y[-1]
        z = from_lines(g, np.fft.irfft(Z, n=g.nx, axis=-2))
        defect = from_lines(g, np.fft.irfft(defect_hat, n=g.nx, axis=-2))
        return z, defect


def _global_pins(grid: Grid, zm: ZeroModeStructure):
    """Flat-vector pins and complements: Nyquist per line plus the zero mode."""
    p = 3 * grid.nz + 1
    alt = (-1.0) ** np.arange(grid.nx)
    Rl = np.zeros((grid.nx, p, p))
    Cl = np.zeros((grid.nx, p, p))
    idx = np.arange(p)
    Rl[:, idx, idx] = alt[:, None] / grid.nx
    Cl[:, idx, idx] = alt[:, None]
    R0 = np.broadcast_to(zm.R[None], (grid.nx,) + zm.R.shape) / grid.nx
    C0 = np.broadcast_to(zm.C[None], (grid.nx,) + zm.C.shape)
    R = np.concatenate([Rl, R0], axis=-1)
    C = np.concatenate([Cl, C0], axis=-1)
    # lines layout (nx, p, r) -> flat (size, r)
    Rf = from_lines(grid, np.moveaxis(R, -1, 0)).T
    Cf = from_lines(grid, np.moveaxis(C, -1, 0)).T
    return Rf, Cf


def _regauge(grid: Grid, zm: ZeroModeStructure, R, eta_gauge):
    if "mean eta" not in zm.names:
        raise ValueError("the zero-mode kernel has no surface-mean direction to regauge")
    eta_gauge = np.asarray(eta_gauge, float)
    if eta_gauge.shape != (grid.nx,):
        raise ValueError("eta_gauge must have shape (nx,)")
    col = 3 * grid.nz + 1 + zm.names.index("mean eta")
    R = R.copy()
    R[:, col] = 0.0
    R[-grid.nx:, col] = eta_gauge
    return R


def _trivial_matvec(model: Model, gamma: float, kind: str, reg):
    bg0 = Background(model, None, Forcing(gamma))
    if kind == "principal":
        return lambda X: principal_matvec(bg0, X, reg)
    return lambda X: derivative_matvec(bg0, X)


def _zero_mode_for(model: Model, gamma: float, kind: str, reg):
    key = (id(model), gamma, kind, reg)
    cache = model.__dict__.setdefault("_zero_mode_cache", {})
    if key not in cache:
        blocks = _mode_blocks(model.grid, _trivial_matvec(model, gamma, kind, reg))
        cache[key] = (_zero_mode_structure(blocks[0], model.grid), blocks)
    return cache[key]


def assemble(
    bg: Background,
    kind: str = "full",
    reg: Regularization | None = None,
    batch: int = 256,
    fast: bool | None = None,
    keep_matrix: bool = False,
    eta_gauge: np.ndarray | None = None,
) -> AssembledOperator:
    """Assemble and factorize the derivative ('full') or the principal part.

    At the trivial background (and zero forcing for 'full') the operator is
    block diagonal in horizontal modes and is factorized mode by mode.

    eta_gauge (nx,) replaces the mean-eta pin by the functional
    eta -> eta_gauge . eta; it forces the dense path.
    """
    if kind not in ("full", "principal"):
        raise ValueError("kind must be 'full' or 'principal'")
    if kind == "full" and reg is not None:
        raise ValueError("regularization applies to the principal part only")
    model = bg.model
    g = model.grid
    if kind == "principal":
        matvec = lambda X: principal_matvec(bg, X, reg)
    else:
        matvec = lambda X: derivative_matvec(bg, X)
    zm, blocks0 = _zero_mode_for(model, bg.gamma, kind, reg)
    mode_diag = bg.is_trivial and (kind == "principal" or bg.forcing.is_zero)
    fast = mode_diag if fast is None else (fast and mode_diag)
    if eta_gauge is not None:
        fast = False

    if fast:
        lus = []
        cond = 0.0
        for k in range(g.nx // 2 + 1):
            if k == g.nx // 2:
                lus.append(None)
                continue
            Bk = blocks0[k]
            if k == 0:
                Bk = np.real(Bk) + zm.C @ zm.R.T
            lu = sla.lu_factor(Bk)
            cond = max(cond, np.linalg.cond(Bk))
            lus.append(lu)
        W = np.zeros((zm.R.shape[0], 0))
        if zm.nullity:
            W = sla.lu_solve(lus[0], zm.R, trans=1)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularOperatorError(f"mode blocks are singular (condition {cond:.3e})")
        R, C = _global_pins(g, zm)
        return AssembledOperator(
            bg, kind, reg, matvec, zm, blocks=blocks0, block_lu=lus, R=R, C=C, W=W, condition=cond
        )

    n = g.size
    Jm = np.empty((n, n))
    for start in range(0, n, batch):
        stop = min(n, start + batch)
        E = np.zeros((stop - start, n))
        E[np.arange(stop - start), np.arange(start, stop)] = 1.0
        Jm[:, start:stop] = matvec(E).T
    R, C = _global_pins(g, zm)
    if eta_gauge is not None:
        R = _regauge(g, zm, R, eta_gauge)
    Jt = Jm + C @ R.T
    lu = sla.lu_factor(Jt)
    rc = _rcond(lu, Jt)
    if not np.isfinite(rc) or rc < 1e-15:
        raise SingularOperatorError(f"bordered operator is singular (rcond {rc:.3e})")
    W = sla.lu_solve(lu, R, trans=1)
    return AssembledOperator(
        bg, kind, reg, matvec, zm, lu=lu, R=R, C=C, W=W,
        matrix=Jm if keep_matrix else None, condition=1.0 / rc,
    )


def _rcond(lu, A):
    """Reciprocal 1-norm condition estimate from an LU factorization."""
    lapack = sla.get_lapack_funcs("gecon", (lu[0],))
    anorm = np.linalg.norm(A, 1)
    rc, info = lapack(lu[0], anorm, norm="1")
    return float(rc)


def solve(op: AssembledOperator, data) -> State:
    """Discrete inverse applied to collocated data (flat vector or Residual)."""
    g = op.grid
    if isinstance(data, Residual):
        f = data.f.copy()
        f[..., 0] = 0.0
        f[..., -1] = data.k
        y = flatten_batch(data.g, f, np.zeros(g.nx))
    else:
        y = np.asarray(data, float)
    return State.unpack(g, op.solve(y))


# ---------------------------------------------------------------- Bogovskii
def _cheb_antiderivative(grid: Grid, f):
    """Antiderivative from y = 0 of the degree <= N - 2 part of f (nodal)."""
    N = grid.nz - 1
    a = grid.cheb_coeffs(f)  # coefficients in t = 1 - 2 y / b
    # integrate in t, then map: dy = -(b / 2) dt
    A = np.zeros_like(a)
    for k in range(1, N):
        lo = a[..., k - 1] * (2.0 if k - 1 == 0 else 1.0)
        hi = a[..., k + 1] if k + 1 <= N - 2 else 0.0
        A[..., k] = (lo - hi) / (2 * k)
    # node j sits at t_j = cos(pi j / N), i.e. ascending y
    j = np.arange(N + 1)
    T = np.cos(np.pi * np.outer(j, np.arange(N + 1)) / N)
    vals = A @ T.T
    # F(t) with F(t=1) corresponding to y = 0; antiderivative in y is -(b/2)(F(t) - F(1))
    return -(grid.b / 2.0) * (vals - vals[..., :1])


def _neumann_potential(grid: Grid, psi):
    """Mode-wise phi = zeta' with kappa^2 phi - phi'' = psi' and phi = 0 at
    both ends; zeta = (psi + phi') / kappa^2.  Returns hat(zeta), hat(phi)."""
    Ph = grid.fft(psi)
    nk = grid.nx // 2 + 1
    D = grid.Dy
    D2 = D @ D
    nz = grid.nz
    Z = np.zeros((nk, nz), complex)
    Phi = np.zeros((nk, nz), complex)
    for k in range(1, nk - 1):
        kap2 = (2 * np.pi * grid.xi[k]) ** 2
        A = kap2 * np.eye(nz) - D2
        rhs = D @ Ph[k]
        A[0] = 0.0
        A[0, 0] = 1.0
        A[-1] = 0.0
        A[-1, -1] = 1.0
        rhs[0] = rhs[-1] = 0.0
        Phi[k] = np.linalg.solve(A, rhs)
        Z[k] = (Ph[k] + D @ Phi[k]) / kap2
    Phi[0] = -_cheb_antiderivative(grid, np.real(Ph[0]))
    return Z, Phi


def bogovskii_b0(grid: Grid, psi, tol: float = 1e-10):
    """Right inverse of the divergence with zero trace on both boundaries.

    psi must have vanishing horizontal-mean vertical integral.
    """
    psi = grid.filter(np.asarray(psi, float))
    col = grid.vertical_integral(psi)
    scale = max(np.max(np.abs(psi)) * grid.b, 1e-300)
    if abs(np.mean(col)) > tol * scale:
        raise ConstraintError("data violates the divergence compatibility condition")
    Z, Phi = _neumann_potential(grid, psi)
    ikx = (2j * np.pi * grid.xi)[:, None]
    X1 = grid.ifft(-ikx * Z)
    X2 = grid.ifft(-Phi)
    y, b = grid.y, grid.b
    hb = y * (1 - y / b) ** 2  # h(0) = h(b) = 0, h'(0) = 1, h'(b) = 0
    ht = y**2 * (y - b) / b**2  # h(0) = h(b) = 0, h'(0) = 0, h'(b) = 1
    omega = -X1[:, :1] * hb - X1[:, -1:] * ht
    return np.stack([X1 + grid.dy(omega), X2 - grid.dx(omega)])


def bogovskii_b(grid: Grid, psi):
    """Right inverse of the divergence with zero bottom trace."""
    psi = grid.filter(np.asarray(psi, float))
    col = grid.vertical_integral(psi)
    A0 = col[:, None] / grid.b * np.ones(grid.nz)
    A1 = col[:, None] * grid.y / grid.b
    out = bogovskii_b0(grid, psi - A0)
    out[1] += A1
    return out


def bogovskii_b1(grid: Grid, phi):
    """Divergence-free field with top trace phi (2, nx) and zero bottom trace."""
    phi = grid.filter(np.asarray(phi, float), -1)
    if abs(np.mean(phi[1])) > 1e-10 * max(np.max(np.abs(phi)), 1e-300):
        raise ConstraintError("normal component of the trace must have zero mean")
    L = np.stack([extend(grid, phi[0]), extend(grid, phi[1])])
    div = grid.dx(L[0]) + grid.dy(L[1])
    return L - bogovskii_b0(grid, div)


def bogovskii_b2(grid: Grid, chi):
    """Solenoidal extension: normal top trace chi, zero tangential top trace."""
    chi = np.asarray(chi, float)
    return bogovskii_b1(grid, np.stack([np.zeros_like(chi), chi]))


# ------------------------------------------------------------ steady transport
def _dx_matrix(grid: Grid, order=1):
    return grid.dx(np.eye(grid.nx), axis=0, order=order)


def steady_transport_solve(grid: Grid, lam0, lam1, X, psi, m: int = 2, N: float | None = 100.0):
    """Solve lam0 f + N^-1 L_m f + div(lam1 X f) = psi by collocation.

    With N given, rows at the m nodes nearest each boundary carry the
    Neumann conditions d_y^m f = ... = d_y^(2m-1) f = 0; with N = None the
    regularization and the Neumann rows are dropped.
    """
    nx, nz = grid.nx, grid.nz
    n = nx * nz
    shape = (nx, nz)
    lam0 = np.broadcast_to(np.asarray(lam0, float), shape).ravel()
    lam1 = np.broadcast_to(np.asarray(lam1, float), shape)
    X = np.asarray(X, float)
    Ix, Iz = np.eye(nx), np.eye(nz)
    Dx = _dx_matrix(grid)
    Dy = grid.Dy
    opx = np.kron(Dx, Iz)
    opy = np.kron(Ix, Dy)
    A = np.diag(lam0)
    A += opx @ np.diag((lam1 * X[0]).ravel()) + opy @ np.diag((lam1 * X[1]).ravel())
    if N is not None:
        Lm = (-1) ** m * (np.kron(_dx_matrix(grid, 2 * m), Iz) + np.kron(Ix, np.linalg.matrix_power(Dy, 2 * m)))
        A += Lm / N
        A = A.reshape(nx, nz, n)
        for i in range(m):
            Dm = np.linalg.matrix_power(Dy, m + i)
            for ix in range(nx):
                row0 = np.zeros((nx, nz))
                row0[ix] = Dm[0]
                A[ix, i] = row0.ravel()
                row1 = np.zeros((nx, nz))
                row1[ix] = Dm[-1]
                A[ix, nz - 1 - i] = row1.ravel()
        A = A.reshape(n, n)
        rhs = np.array(psi, float).copy()
        for i in range(m):
            rhs[:, i] = 0.0
            rhs[:, nz - 1 - i] = 0.0
    else:
        rhs = np.array(psi, float)
    f = np.linalg.solve(A, rhs.ravel())
    return f.reshape(shape)
