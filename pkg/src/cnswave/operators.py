"""The nonlinear traveling-wave operator in flattened enthalpy variables.

Unknowns (q, u, eta): q is the enthalpy perturbation (shifted by g eta), u the
flattened velocity, eta the free surface.  The map returns (g, f, k): the
continuity, momentum and dynamic boundary residuals.

All horizontal derivatives are spectral, vertical ones are Chebyshev
collocation, and pointwise nonlinearities are evaluated on the 3/2-padded
grid.  The evaluator carries an optional batch of tangent directions through
every step (hand-written product and chain rules), which is what the linear
module uses for derivative actions and matrix assembly.

Collocated layout
-----------------
The square discrete system stacks the same slots as the unknowns:

    q-slot    continuity residual g at every node
    u-slot    momentum residual f at interior nodes; row y = 0 holds the
              no-slip trace u(., 0), row y = b holds the dynamic residual k
    eta-slot  kinematic residual u_2(., b) + d_x eta
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .equilibrium import EquilibriumProfile, PhysicalParams, build_profile
from .geometry import GeometryError, build_geometry, extend, extend_with_derivatives
from .spaces import Grid

__all__ = [
    "Model",
    "State",
    "Residual",
    "Forcing",
    "GaussianBump",
    "PressureStress",
    "VectorBump",
    "sigma",
    "residual",
    "collocated",
    "evaluate",
    "kinematic_project",
    "to_eulerian",
    "from_eulerian",
    "flatten_batch",
    "unflatten_batch",
]


# --------------------------------------------------------------------- model
class Model:
    """Grid, physical parameters and the equilibrium profile on that grid."""

    def __init__(self, grid: Grid, params: PhysicalParams, profile: EquilibriumProfile | None = None):
        if params.n != 2:
            raise NotImplementedError("the solve path is implemented for n = 2")
        if abs(params.b - grid.b) > 1e-14 * grid.b:
            raise ValueError("grid depth and physical depth differ")
        self.grid = grid
        self.params = params
        self.profile = profile if profile is not None else build_profile(params, grid.y)

    @property
    def size(self) -> int:
        return self.grid.size


# --------------------------------------------------------------------- state
@dataclass
class State:
    q: np.ndarray
    u: np.ndarray
    eta: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid) -> "State":
        return cls(np.zeros((grid.nx, grid.nz)), np.zeros((2, grid.nx, grid.nz)), np.zeros(grid.nx))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.q.ravel(), self.u.ravel(), self.eta.ravel()])

    @classmethod
    def unpack(cls, grid: Grid, v) -> "State":
        q, u, eta = unflatten_batch(grid, np.asarray(v, float))
        return cls(q.copy(), u.copy(), eta.copy())

    def copy(self) -> "State":
        return State(self.q.copy(), self.u.copy(), self.eta.copy())

    def __add__(self, other):
        return State(self.q + other.q, self.u + other.u, self.eta + other.eta)

    def __sub__(self, other):
        return State(self.q - other.q, self.u - other.u, self.eta - other.eta)

    def __mul__(self, a):
        return State(a * self.q, a * self.u, a * self.eta)

    __rmul__ = __mul__


def unflatten_batch(grid: Grid, V):
    """Split (..., size) vectors into q (..., nx, nz), u (..., 2, nx, nz), eta (..., nx)."""
    nx, nz = grid.nx, grid.nz
    m = nx * nz
    lead = V.shape[:-1]
    q = V[..., :m].reshape(lead + (nx, nz))
    u = V[..., m : 3 * m].reshape(lead + (2, nx, nz))
    eta = V[..., 3 * m :].reshape(lead + (nx,))
    return q, u, eta


def flatten_batch(q, u, eta):
    lead = eta.shape[:-1]
    return np.concatenate(
        [q.reshape(lead + (-1,)), u.reshape(lead + (-1,)), eta.reshape(lead + (-1,))], axis=-1
    )


@dataclass
class Residual:
    g: np.ndarray  # (nx, nz)
    f: np.ndarray  # (2, nx, nz)
    k: np.ndarray  # (2, nx)


# ------------------------------------------------------------------- forcing
@dataclass(frozen=True)
class GaussianBump:
    """phi(x, y) = A exp(-d(x)^2 / w^2) exp(-(y - y0)^2 / w^2).

    d(x) is the periodic distance to the center on a period L.  Returns the
    value and the y-derivative.
    """

    amplitude: float
    center: float
    width: float
    period: float
    y0: float = 1.0

    def __call__(self, x, y):
        d = np.mod(x - self.center + 0.5 * self.period, self.period) - 0.5 * self.period
        w2 = self.width**2
        val = self.amplitude * np.exp(-(d**2) / w2) * np.exp(-((y - self.y0) ** 2) / w2)
        return val, -2.0 * (y - self.y0) / w2 * val

    def scaled(self, a):
        return replace(self, amplitude=a * self.amplitude)


@dataclass(frozen=True)
class PressureStress:
    """Stress field T = -phi I from a scalar pressure bump."""

    phi: GaussianBump

    def __call__(self, x, y):
        v, dv = self.phi(x, y)
        eye = np.eye(2).reshape(2, 2, *([1] * np.ndim(v)))
        return -v * eye, -dv * eye

    def scaled(self, a):
        return PressureStress(self.phi.scaled(a))


@dataclass(frozen=True)
class VectorBump:
    """Vector field phi(x, y) * direction."""

    phi: GaussianBump
    direction: tuple = (0.0, 1.0)

    def __call__(self, x, y):
        v, dv = self.phi(x, y)
        e = np.asarray(self.direction, float).reshape(2, *([1] * np.ndim(v)))
        return v * e, dv * e

    def scaled(self, a):
        return VectorBump(self.phi.scaled(a), self.direction)


@dataclass
class Forcing:
    """Wave speed gamma and the stress / force fields (T, G, F).

    Each field is a callable (x, y) -> (value, d value / dy), evaluated at
    the displaced points of the flattening map.  None means zero.
    """

    gamma: float
    stress: Optional[Callable] = None
    G: Optional[Callable] = None
    F: Optional[Callable] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("wave speed must be positive")

    def scaled(self, a) -> "Forcing":
        sc = lambda fld: None if fld is None else fld.scaled(a)
        return Forcing(self.gamma, sc(self.stress), sc(self.G), sc(self.F))

    @property
    def is_zero(self) -> bool:
        return self.stress is None and self.G is None and self.F is None


# ----------------------------------------------------------------- evaluator
def _comp(a, i):
    """Component i of a vector field with optional leading batch axes."""
    return a[..., i, :, :]


def sigma(model: Model, q, eta):
    """sigma = H^-1(-g y + q + g (eta - E eta)) on the native grid."""
    g = model.grid
    grav = model.params.gravity
    h = -grav * g.Y + q + grav * (eta[..., :, None] - extend(g, eta))
    model.profile.check_argument(h)
    return model.profile.H_inv(h)


def evaluate(model: Model, state: State, forcing: Forcing, tangent=None, dgamma=None, dforcing=None):
    """Evaluate the nonlinear operator and (optionally) a batch of tangents.

    tangent : (dq, du, deta) with a common leading batch axis, or None.
    dgamma  : (B,) wave-speed directions (or None).
    dforcing: Forcing whose fields are data directions (added to every
              batch member; its gamma is ignored).

    Returns a dict with the native-grid residual pieces 'g', 'f', 'k',
    the collocated vector 'F', and, if directions were given, 'dF'.
    """
    gr, prm, prof = model.grid, model.params, model.profile
    grav, st, gam = prm.gravity, prm.surface_tension, forcing.gamma
    P = lambda a: gr.pad(a, -2)
    U = lambda a: gr.unpad(a, -2)
    Ps = lambda a: gr.pad(a, -1)
    Us = lambda a: gr.unpad(a, -1)
    dx, dy = gr.dx, gr.dy

    q = gr.filter(np.asarray(state.q, float))
    u = gr.filter(np.asarray(state.u, float))
    eta = gr.filter(np.asarray(state.eta, float), -1)

    # geometry
    E, Ey, Ex = extend_with_derivatives(gr, eta)
    EP, EyP, ExP = P(E), P(Ey), P(Ex)
    J = 1.0 + EyP
    if np.min(J) <= 0:
        raise GeometryError(f"degenerate flattening map: min J = {np.min(J):.3e}")
    etax = dx(eta, axis=-1)

    # density
    h = -grav * gr.Y + q + grav * (eta[:, None] - E)
    hP = P(h)
    prof.check_argument(hP)
    sig = prof.H_inv(hP)
    dsig_dh = prof.dH_inv(sigma=sig)

    # continuity
    uP = P(u)
    c1 = uP[0] - J
    c2 = uP[1] + ExP
    g_res = dx(U(sig * c1)) + dy(U(sig * c2))

    # velocity gradient in flattened coordinates
    w1P = uP[0] / J
    w2P = uP[1] + ExP * w1P
    w1, w2 = U(w1P), U(w2P)
    G11, G12, G21, G22 = P(dx(w1)), P(dy(w1)), P(dx(w2)), P(dy(w2))
    A12 = -ExP / J
    A22 = 1.0 / J
    B11 = G11 + G12 * A12
    B12 = G12 * A22
    B21 = G21 + G22 * A12
    B22 = G22 * A22
    div = B11 + B22
    mu, lam = prm.mu(sig), prm.lam(sig)
    S11 = mu * (2 * B11 - div) + lam * div
    S22 = mu * (2 * B22 - div) + lam * div
    S12 = mu * (B12 + B21)
    T11, T12 = J * S11, -ExP * S11 + S12
    T21, T22 = J * S12, -ExP * S12 + S22
    D1 = P(dx(U(T11)) + dy(U(T12)))
    D2 = P(dx(U(T21)) + dy(U(T22)))

    a1 = c1 * G11 + c2 * G12
    a2 = c1 * G21 + c2 * G22
    r1 = P(dx(q) + grav * etax[:, None])
    r2 = P(dy(q))

    def mt(z1, z2):
        return (z1 + ExP * z2) / J, z2

    ma1, ma2 = mt(a1, a2)
    md1, md2 = mt(D1, D2)
    f1P = gam**2 * sig * ma1 + sig * r1 - gam * md1
    f2P = gam**2 * sig * ma2 + sig * r2 - gam * md2

    # body forces at displaced points
    xP = gr.xpad[:, None]
    yphys = gr.y[None, :] + EP

    def body(frc, dE_batch=None, dsig_batch=None):
        """Phi_2 contribution (and tangent) of a forcing."""
        out = [np.zeros_like(J), np.zeros_like(J)]
        dout = None
        have = frc.G is not None or frc.F is not None
        if not have:
            return out, None
        Bv = np.zeros((2,) + J.shape)
        By = np.zeros((2,) + J.shape)
        Gv = None
        if frc.G is not None:
            Gv, Gy = frc.G(xP, yphys)
            Bv = Bv + sig * Gv
            By = By + sig * Gy
        if frc.F is not None:
            Fv, Fy = frc.F(xP, yphys)
            Bv = Bv + Fv
            By = By + Fy
        out = [-(Bv[0] + ExP * Bv[1]), -J * Bv[1]]
        if dE_batch is not None:
            dB0 = By[0] * dE_batch[0]
            dB1 = By[1] * dE_batch[0]
            if Gv is not None:
                dB0 = dB0 + dsig_batch * Gv[0]
                dB1 = dB1 + dsig_batch * Gv[1]
            dExP_, dJ_ = dE_batch[1], dE_batch[2]
            dout = [-(dB0 + dExP_ * Bv[1] + ExP * dB1), -(dJ_ * Bv[1] + J * dB1)]
        return out, dout

    # surface
    etaP = EP[:, -1]
    etaxP = Ps(etax)
    N1 = -etaxP
    sq = np.sqrt(1.0 + etaxP**2)
    Hc = dx(Us(etaxP / sq), axis=-1)
    HcP = Ps(Hc)
    sigb = sig[:, -1]
    pb = prm.pressure(sigb) - prm.p_ext
    S11b, S12b, S22b = S11[:, -1], S12[:, -1], S22[:, -1]

    def stress_term(frc, deta_batch=None, dN1=None):
        if frc.stress is None:
            return [0.0, 0.0], None
        Tv, Ty = frc.stress(gr.xpad, gr.b + etaP)
        out = [-(Tv[0, 0] * N1 + Tv[0, 1]), -(Tv[1, 0] * N1 + Tv[1, 1])]
        dout = None
        if deta_batch is not None:
            dout = [
                -(Ty[i, 0] * deta_batch * N1 + Tv[i, 0] * dN1 + Ty[i, 1] * deta_batch)
                for i in range(2)
            ]
        return out, dout

    Phi2, _ = body(forcing)
    Phi3, _ = stress_term(forcing)
    f1P = f1P + Phi2[0]
    f2P = f2P + Phi2[1]
    k1P = -pb * N1 + gam * (S11b * N1 + S12b) - st * HcP * N1 + Phi3[0]
    k2P = -pb + gam * (S12b * N1 + S22b) - st * HcP + Phi3[1]

    f = np.stack([U(f1P), U(f2P)])
    k = np.stack([Us(k1P), Us(k2P)])
    kin = u[1, :, -1] + etax

    out = {
        "g": g_res,
        "f": f,
        "k": k,
        "kin": kin,
        "sigma": U(sig),
        "J": U(J),
        "h": h,
        "flux": np.stack([U(sig * c1), U(sig * c2)]),
    }
    out["F"] = _collocate(gr, g_res, f, k, u, kin)

    if tangent is None and dgamma is None and dforcing is None:
        return out

    # ----------------------------------------------------------- tangents
    if tangent is None:
        B = 1 if dgamma is None else len(np.atleast_1d(dgamma))
        dq = np.zeros((B,) + q.shape)
        du = np.zeros((B,) + u.shape)
        deta = np.zeros((B,) + eta.shape)
    else:
        dq, du, deta = (np.asarray(t, float) for t in tangent)
        dq = gr.filter(dq)
        du = gr.filter(du)
        deta = gr.filter(deta, -1)
    Bn = dq.shape[0]
    dgam = np.zeros(Bn) if dgamma is None else np.broadcast_to(np.asarray(dgamma, float), (Bn,))
    dg3 = dgam[:, None, None]
    dg2 = dgam[:, None]

    dE, dEy, dEx = extend_with_derivatives(gr, deta)
    dEP, dJ, dExP = P(dE), P(dEy), P(dEx)
    detax = dx(deta, axis=-1)

    dh = dq + grav * (deta[..., :, None] - dE)
    dsig = dsig_dh * P(dh)

    duP = P(du)
    du1P, du2P = _comp(duP, 0), _comp(duP, 1)
    dc1 = du1P - dJ
    dc2 = du2P + dExP
    dgres = dx(U(dsig * c1 + sig * dc1)) + dy(U(dsig * c2 + sig * dc2))

    dw1P = du1P / J - w1P * dJ / J
    dw2P = du2P + dExP * w1P + ExP * dw1P
    dw1, dw2 = U(dw1P), U(dw2P)
    dG11, dG12, dG21, dG22 = P(dx(dw1)), P(dy(dw1)), P(dx(dw2)), P(dy(dw2))
    dA12 = (-dExP - A12 * dJ) / J
    dA22 = -A22 * dJ / J
    dB11 = dG11 + dG12 * A12 + G12 * dA12
    dB12 = dG12 * A22 + G12 * dA22
    dB21 = dG21 + dG22 * A12 + G22 * dA12
    dB22 = dG22 * A22 + G22 * dA22
    ddiv = dB11 + dB22
    dmu = prm.mu.deriv(sig) * dsig
    dlam = prm.lam.deriv(sig) * dsig
    dS11 = dmu * (2 * B11 - div) + mu * (2 * dB11 - ddiv) + dlam * div + lam * ddiv
    dS22 = dmu * (2 * B22 - div) + mu * (2 * dB22 - ddiv) + dlam * div + lam * ddiv
    dS12 = dmu * (B12 + B21) + mu * (dB12 + dB21)
    dT11 = dJ * S11 + J * dS11
    dT12 = -dExP * S11 - ExP * dS11 + dS12
    dT21 = dJ * S12 + J * dS12
    dT22 = -dExP * S12 - ExP * dS12 + dS22
    dD1 = P(dx(U(dT11)) + dy(U(dT12)))
    dD2 = P(dx(U(dT21)) + dy(U(dT22)))

    da1 = dc1 * G11 + c1 * dG11 + dc2 * G12 + c2 * dG12
    da2 = dc1 * G21 + c1 * dG21 + dc2 * G22 + c2 * dG22
    dr1 = P(dx(dq) + grav * detax[..., :, None])
    dr2 = P(dy(dq))

    def dmt(z1, z2, m1, dz1, dz2):
        return (dz1 + dExP * z2 + ExP * dz2) / J - m1 * dJ / J, dz2

    dma1, dma2 = dmt(a1, a2, ma1, da1, da2)
    dmd1, dmd2 = dmt(D1, D2, md1, dD1, dD2)
    df1P = (
        2 * gam * dg3 * sig * ma1
        + gam**2 * (dsig * ma1 + sig * dma1)
        + dsig * r1
        + sig * dr1
        - dg3 * md1
        - gam * dmd1
    )
    df2P = (
        2 * gam * dg3 * sig * ma2
        + gam**2 * (dsig * ma2 + sig * dma2)
        + dsig * r2
        + sig * dr2
        - dg3 * md2
        - gam * dmd2
    )
    _, dPhi2 = body(forcing, (dEP, dExP, dJ), dsig)
    if dPhi2 is not None:
        df1P = df1P + dPhi2[0]
        df2P = df2P + dPhi2[1]
    if dforcing is not None:
        Phi2d, _ = body(dforcing)
        df1P = df1P + Phi2d[0]
        df2P = df2P + Phi2d[1]

    # surface tangents
    detaP = dEP[..., :, -1]
    detaxP = Ps(detax)
    dN1 = -detaxP
    dHcP = Ps(dx(Us(detaxP / sq**3), axis=-1))
    dsigb = dsig[..., :, -1]
    dpb = prm.pressure.deriv(sigb) * dsigb
    dS11b, dS12b, dS22b = dS11[..., :, -1], dS12[..., :, -1], dS22[..., :, -1]
    dk1P = (
        -dpb * N1
        - pb * dN1
        + dg2 * (S11b * N1 + S12b)
        + gam * (dS11b * N1 + S11b * dN1 + dS12b)
        - st * (dHcP * N1 + HcP * dN1)
    )
    dk2P = -dpb + dg2 * (S12b * N1 + S22b) + gam * (dS12b * N1 + S12b * dN1 + dS22b) - st * dHcP
    _, dPhi3 = stress_term(forcing, detaP, dN1)
    if dPhi3 is not None:
        dk1P = dk1P + dPhi3[0]
        dk2P = dk2P + dPhi3[1]
    if dforcing is not None:
        Phi3d, _ = stress_term(dforcing)
        dk1P = dk1P + Phi3d[0]
        dk2P = dk2P + Phi3d[1]

    df = np.stack([U(df1P), U(df2P)], axis=1)
    dk = np.stack([Us(dk1P), Us(dk2P)], axis=1)
    dkin = du[:, 1, :, -1] + detax
    out["dF"] = _collocate(gr, dgres, df, dk, du, dkin)
    out["dg"], out["df"], out["dk"] = dgres, df, dk
    return out


def _collocate(gr: Grid, g, f, k, u, kin):
    """Stack residual pieces into the square collocated layout (flat)."""
    fu = f.copy()
    fu[..., :, :, 0] = u[..., :, :, 0]
    fu[..., :, :, -1] = k
    return flatten_batch(g, fu, kin)


def collocated(model: Model, state: State, forcing: Forcing) -> np.ndarray:
    """The square discrete residual vector F(state)."""
    return evaluate(model, state, forcing)["F"]


def residual(model: Model, state: State, forcing: Forcing, mask: bool = True) -> Residual:
    """(g, f, k); with mask=True f is zeroed on the two boundary rows, where
    the momentum equation is replaced by boundary conditions."""
    out = evaluate(model, state, forcing)
    f = out["f"].copy()
    if mask:
        f[..., 0] = 0.0
        f[..., -1] = 0.0
    return Residual(out["g"], f, out["k"])


# ----------------------------------------------------------- projections
def _bottom_lift(grid: Grid, trace):
    """Harmonic-type extension with value `trace` at y = 0 and 0 at y = b."""
    prof, _ = _mirror_profiles(grid)
    T = grid.fft(trace, axis=-1)
    return grid.ifft(T[..., :, None] * prof, axis=-2)


def _mirror_profiles(grid: Grid):
    from .geometry import extension_profiles

    prof, dprof = extension_profiles(grid)
    # reflect y -> b - y: the nodes are symmetric about b / 2
    return prof[:, ::-1], -dprof[:, ::-1]


def kinematic_project(grid: Grid, state: State) -> State:
    """Remove the Nyquist mode, the bottom trace of u and the kinematic
    violation u_2(., b) + d_x eta by subtracting extension corrections."""
    q = grid.filter(state.q)
    u = grid.filter(state.u)
    eta = grid.filter(state.eta, -1)
    u = u - _bottom_lift(grid, u[..., 0])
    r = u[1, :, -1] + grid.dx(eta, axis=-1)
    u[1] = u[1] - extend(grid, r)
    u[..., 0] = 0.0
    return State(q, u, eta)


# ------------------------------------------------------- Eulerian variables
def to_eulerian(model: Model, state: State):
    """Sample the physical density and velocity on the displaced nodes.

    Returns (points (2, nx, nz), sigma (nx, nz), v (2, nx, nz)) where
    v o F = M^-1 u.
    """
    geo = build_geometry(model.grid, state.eta)
    sig = sigma(model, model.grid.filter(state.q), model.grid.filter(state.eta, -1))
    u = model.grid.filter(state.u)
    v1 = u[0] / geo.J
    v2 = u[1] + (-geo.M[1, 0]) * v1
    return geo.F, sig, np.stack([v1, v2])


def from_eulerian(model: Model, eta, sig, v) -> State:
    """Inverse change of unknowns: u = M v and q from sigma."""
    g = model.grid
    grav = model.params.gravity
    geo = build_geometry(g, eta)
    u = np.stack([geo.J * v[0], geo.M[1, 0] * v[0] + v[1]])
    q = model.profile.H(sig) + grav * g.Y - grav * (eta[:, None] - extend(g, eta))
    return State(q, u, np.asarray(eta, float))
