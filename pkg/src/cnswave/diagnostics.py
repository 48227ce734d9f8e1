"""Identity-level checks on states: dissipation-power balance, the adapted
norm, no-vacuum margins, the diffeomorphism flag, Korn ratios and decay."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import build_geometry, extend_with_derivatives
from .linear import Background, v_field
from .operators import Forcing, Model, State, evaluate
from .spaces import Grid, hminus1_seminorm, sobolev_norm, xspace_norm

__all__ = [
    "BalanceReport",
    "dissipation",
    "power_balance",
    "adapted_norm",
    "korn_ratio",
    "decay_ratio",
    "sanity_suite",
    "to_text",
]


@dataclass
class BalanceReport:
    dissipation: float
    bulk: float  # int f . u
    pressure_work: float  # int g (gamma^2 |w|^2 / 2 + q)
    surface: float  # int_Sigma k . w
    gravity: float  # g <|D|^-1 int g dy, |D| eta>
    power: float
    imbalance: float
    forcing_power: float  # stress + body-force power
    forcing_imbalance: float

    def as_dict(self) -> dict:
        return asdict(self)


def _padded_integral(grid: Grid, fP):
    return (grid.L / grid.npad) * float(np.sum(fP @ grid.wy))


def _padded_surface_integral(grid: Grid, fP):
    return (grid.L / grid.npad) * float(np.sum(fP))


def _kinematics(model: Model, state: State):
    """Padded-grid fields: J, Ex, w = M^-1 u, B = grad w A^T, sigma."""
    gr = model.grid
    P = lambda a: gr.pad(a, -2)
    U = lambda a: gr.unpad(a, -2)
    q = gr.filter(np.asarray(state.q, float))
    u = gr.filter(np.asarray(state.u, float))
    eta = gr.filter(np.asarray(state.eta, float), -1)
    E, Ey, Ex = extend_with_derivatives(gr, eta)
    JP, ExP = 1.0 + P(Ey), P(Ex)
    uP = P(u)
    w1P = uP[0] / JP
    w2P = uP[1] + ExP * w1P
    w1, w2 = U(w1P), U(w2P)
    G = np.array([[P(gr.dx(w1)), P(gr.dy(w1))], [P(gr.dx(w2)), P(gr.dy(w2))]])
    A = np.array([[np.ones_like(JP), -ExP / JP], [np.zeros_like(JP), 1.0 / JP]])
    B = np.einsum("ikxy,jkxy->ijxy", G, A)
    grav = model.params.gravity
    hP = P(-grav * gr.Y + q + grav * (eta[:, None] - E))
    sig = model.profile.H_inv(hP)
    return dict(q=q, u=u, eta=eta, J=JP, Ex=ExP, w=np.stack([w1P, w2P]), B=B, sigma=sig)


def dissipation(model: Model, state: State, gamma: float) -> float:
    """gamma int J (mu/2 |B + B^T - tr B I|^2 + lambda (tr B)^2), with
    B = grad(M^-1 u) A^T; the deviatoric part uses 2/n = 1."""
    kin = _kinematics(model, state)
    B, J, sig = kin["B"], kin["J"], kin["sigma"]
    tr = B[0, 0] + B[1, 1]
    dev = B + np.swapaxes(B, 0, 1) - tr * np.eye(2)[:, :, None, None]
    prm = model.params
    dens = J * (0.5 * prm.mu(sig) * np.sum(dev**2, axis=(0, 1)) + prm.lam(sig) * tr**2)
    return gamma * _padded_integral(model.grid, dens)


def _hdot_pairing(grid: Grid, a, b):
    """int (|D|^-1 a)(|D| b) over the period, xi = 0 excluded."""
    A = np.fft.rfft(a) / grid.nx
    Bh = np.fft.rfft(b) / grid.nx
    wt = grid.mult * grid.keep
    wt[0] = 0.0
    return float(grid.L * np.sum(wt * np.real(A * np.conj(Bh))))


def _forcing_power(model: Model, state: State, forcing: Forcing, kin) -> float:
    gr = model.grid
    total = 0.0
    etaP = gr.pad(kin["eta"], -1)
    E = gr.pad(extend_with_derivatives(gr, kin["eta"])[0], -2)
    wP = kin["w"]
    if forcing.stress is not None:
        Tv, _ = forcing.stress(gr.xpad, gr.b + etaP)
        N = np.stack([-gr.pad(gr.dx(kin["eta"], axis=-1), -1), np.ones(gr.npad)])
        TN = np.einsum("ijx,jx->ix", Tv, N)
        total += _padded_surface_integral(gr, np.sum(TN * wP[:, :, -1], axis=0))
    body = np.zeros_like(wP)
    xP = gr.xpad[:, None]
    yP = gr.y[None, :] + E
    if forcing.G is not None:
        body = body + kin["sigma"] * forcing.G(xP, yP)[0]
    if forcing.F is not None:
        body = body + forcing.F(xP, yP)[0]
    total += _padded_integral(gr, kin["J"] * np.sum(body * wP, axis=0))
    return total


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def power_balance(model: Model, state: State, forcing: Forcing) -> BalanceReport:
    """Both sides of the dissipation-power identity.

    The power side uses (g, f, k), the residual of the unforced operator at
    the state; this identity holds for every state obeying the bottom and
    kinematic conditions.  For a solution, the unforced residual is the
    forcing, and forcing_power evaluates the stress and body-force power
    directly.
    """
    gr = model.grid
    gam = forcing.gamma
    res = evaluate(model, state, Forcing(gam))
    kin = _kinematics(model, state)
    P = lambda a: gr.pad(a, -2)
    uP, qP = P(kin["u"]), P(kin["q"])
    fP, gP = P(res["f"]), P(res["g"])
    wP = kin["w"]
    bulk = _padded_integral(gr, np.sum(fP * uP, axis=0))
    pw = _padded_integral(gr, gP * (0.5 * gam**2 * np.sum(wP**2, axis=0) + qP))
    kP = gr.pad(res["k"], -1)
    surf = _padded_surface_integral(gr, np.sum(kP * wP[:, :, -1], axis=0))
    grav = model.params.gravity * _hdot_pairing(gr, gr.vertical_integral(res["g"]), kin["eta"])
    D = dissipation(model, state, gam)
    Pw = bulk + pw + surf + grav
    Fp = _forcing_power(model, state, forcing, kin)
    return BalanceReport(D, bulk, pw, surf, grav, Pw, _rel(D, Pw), Fp, _rel(D, Fp))


def adapted_norm(model: Model, state: State, background: Background, s: float = 0) -> float:
    """sqrt(X_s norm^2 + ||div(v q)||^2_{H^{1+s}}), v from the background."""
    gr = model.grid
    v = v_field(background)
    q = gr.filter(np.asarray(state.q, float))
    flux = gr.pad(v, -2) * gr.pad(q, -2)
    flux = gr.unpad(flux, -2)
    div = gr.dx(flux[0]) + gr.dy(flux[1])
    base = xspace_norm(gr, state, s)
    return float(np.hypot(base, sobolev_norm(gr, div, 1 + s, "slab")))


def korn_ratio(grid: Grid, u) -> float:
    """||u||_{H^1} / ||sym grad u||_{L^2}, with sym grad u = grad u + grad u^T."""
    u = grid.filter(np.asarray(u, float))
    G = np.array([[grid.dx(u[0]), grid.dy(u[0])], [grid.dx(u[1]), grid.dy(u[1])]])
    Dsym = G + np.swapaxes(G, 0, 1)
    den = np.sqrt(max(grid.integrate(np.sum(Dsym**2, axis=(0, 1))), 0.0))
    num = sobolev_norm(grid, u, 1, "slab")
    return float(num / den) if den > 0 else float("inf")


def decay_ratio(grid: Grid, eta, center: float) -> float:
    """|eta| at distance L/2 from center, over max |eta| (spectral interpolation)."""
    eta = np.asarray(eta, float)
    peak = float(np.max(np.abs(eta)))
    if peak == 0:
        return 0.0
    xf = center + 0.5 * grid.L
    c = np.fft.rfft(grid.filter(eta, -1)) / grid.nx
    k = np.arange(c.size)
    val = np.real(np.sum(grid.mult * c * np.exp(2j * np.pi * k * xf / grid.L)))
    return float(abs(val) / peak)


def sanity_suite(
    model: Model,
    state: State,
    forcing: Forcing | None = None,
    center: float | None = None,
    korn_samples: int = 8,
    seed: int = 0,
) -> dict:
    """No-vacuum margins, diffeomorphism flag, Korn ratio, decay and the
    divergence-compatibility seminorm of the continuity residual."""
    gr = model.grid
    grav = model.params.gravity
    eta = gr.filter(np.asarray(state.eta, float), -1)
    geo = build_geometry(gr, eta, strict=False)
    h = -grav * gr.Y + gr.filter(state.q) + grav * (eta[:, None] - geo.E)
    lo, hi = model.profile.margins(h)
    out = {
        "vacuum_margin_low": lo,
        "vacuum_margin_high": hi,
        "no_vacuum": bool(lo > 0 and hi > 0),
        "diffeomorphism": bool(geo.diffeo),
        "min_jacobian": geo.min_J,
    }
    rng = np.random.default_rng(seed)
    ratios = []
    if np.any(state.u):
        ratios.append(korn_ratio(gr, state.u))
    for _ in range(korn_samples):
        u = _smooth_sample(gr, rng)
        ratios.append(korn_ratio(gr, u))
    out["korn_ratio_max"] = float(np.max(ratios))
    out["korn_finite"] = bool(np.all(np.isfinite(ratios)))
    if center is not None:
        out["decay_ratio"] = decay_ratio(gr, eta, center)
        out["eta_peak"] = float(np.max(np.abs(eta)))
    if forcing is not None:
        g = evaluate(model, state, Forcing(forcing.gamma))["g"]
        col = gr.vertical_integral(g)
        out["divergence_mean"] = float(np.mean(col))
        out["divergence_seminorm"] = hminus1_seminorm(col - np.mean(col), gr.L)
    return out


def _smooth_sample(grid: Grid, rng):
    """Random smooth vector field vanishing at y = 0."""
    a = rng.standard_normal((2, grid.nx, grid.nz)) * np.exp(-0.5 * np.arange(grid.nz))
    k = np.arange(grid.nz)
    T = np.cos(np.pi * np.outer(k, k) / (grid.nz - 1))
    f = grid.apply_multiplier(a @ T.T, np.exp(-((grid.xi * 2) ** 2)), axis=-2)
    return f * (grid.y / grid.b)


def to_text(d: dict, prefix: str = "") -> str:
    """key = value lines (floats in repr form for exact round trips)."""
    lines = []
    for key in sorted(d):
        v = d[key]
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{prefix}{key} = {v}")
    return "\n".join(lines) + "\n"
