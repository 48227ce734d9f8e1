"""Constitutive laws, the enthalpy and the stratified equilibrium density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "ConstitutiveLawError",
    "ProfileError",
    "VacuumError",
    "PressureLaw",
    "Polytropic",
    "CustomPressure",
    "ScalarLaw",
    "Constant",
    "PhysicalParams",
    "CompatibilityReport",
    "check_compatibility",
    "EquilibriumProfile",
    "build_profile",
    "enthalpy_eval",
    "inverse_enthalpy_eval",
]

# Guard margin for the inverse-enthalpy argument, as a fraction of the
# admissible interval.
GUARD_FRACTION = 0.01
_GROWTH_LIMIT = 1.0e6


class ConstitutiveLawError(ValueError):
    pass


class ProfileError(RuntimeError):
    pass


class VacuumError(ValueError):
    """An enthalpy argument left the admissible interval (H_min, H_max)."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


# ---------------------------------------------------------------- pressure
class PressureLaw:
    """Strictly increasing pressure P on (0, inf) with derivative."""

    def __call__(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def inverse(self, p: float) -> float:
        lo, hi = 1e-300, 1.0
        while self(hi) < p:
            hi *= 2.0
            if hi > 1e300:
                raise ConstitutiveLawError(f"pressure {p} not attained")
        return optimize.brentq(lambda t: self(t) - p, lo, hi, xtol=1e-300, rtol=1e-15)

    # closed forms are optional; None means "use quadrature"
    def enthalpy_closed(self, s_ext, gb):
        return None


@dataclass(frozen=True)
class Polytropic(PressureLaw):
    """P(t) = K t^alpha with K > 0, alpha >= 1."""

    K: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.K <= 0 or self.alpha < 1:
            raise ConstitutiveLawError("polytropic law needs K > 0 and alpha >= 1")

    def __call__(self, t):
        return self.K * np.power(t, self.alpha)

    def deriv(self, t):
        return self.K * self.alpha * np.power(t, self.alpha - 1.0)

    def inverse(self, p):
        return (p / self.K) ** (1.0 / self.alpha)

    def enthalpy_closed(self, s_ext, gb):
        K, a = self.K, self.alpha
        if a == 1.0:
            H = lambda s: -gb + K * np.log(np.asarray(s) / s_ext)
            Hinv = lambda h: s_ext * np.exp((np.asarray(h) + gb) / K)
            return H, Hinv, -math.inf, math.inf
        c = K * a / (a - 1.0)
        base = s_ext ** (a - 1.0)
        H = lambda s: -gb + c * (np.power(s, a - 1.0) - base)

        def Hinv(h):
            z = base + (np.asarray(h) + gb) / c
            return np.power(z, 1.0 / (a - 1.0))

        return H, Hinv, -gb - c * base, math.inf


@dataclass(frozen=True)
class CustomPressure(PressureLaw):
    """User-supplied P with optional derivative (central differences otherwise)."""

    P: Callable = None
    dP: Callable | None = None
    name: str = "custom"

    def __call__(self, t):
        return self.P(t)

    def deriv(self, t):
        if self.dP is not None:
            return self.dP(t)
        t = np.asarray(t, float)
        h = 1e-6 * np.maximum(t, 1e-8)
        return (self.P(t + h) - self.P(t - h)) / (2 * h)


@dataclass(frozen=True)
class ScalarLaw:
    """Smooth scalar map on (0, inf) with derivative, e.g. a viscosity."""

    f: Callable
    df: Callable

    def __call__(self, t):
        return self.f(t)

    def deriv(self, t):
        return self.df(t)


def Constant(value: float) -> ScalarLaw:
    v = float(value)
    return ScalarLaw(lambda t: np.full(np.shape(t), v), lambda t: np.zeros(np.shape(t)))


@dataclass
class PhysicalParams:
    n: int = 2
    b: float = 1.0
    gravity: float = 1.0
    surface_tension: float = 1.0
    p_ext: float = 1.0
    pressure: PressureLaw = field(default_factory=Polytropic)
    mu: ScalarLaw = field(default_factory=lambda: Constant(1.0))
    lam: ScalarLaw = field(default_factory=lambda: Constant(1.0))

    def admissible(self, rho_samples=(1.0,)) -> tuple[bool, str]:
        """Viscosity/surface-tension admissibility on the sampled densities."""
        r = np.asarray(rho_samples, float)
        mu, lam, st = self.mu(r), self.lam(r), self.surface_tension
        if self.n == 2:
            ok = np.all(mu > 0) and np.all(lam > 0) and st >= 0
            need = "mu > 0, lambda > 0, surface tension >= 0"
        else:
            ok = np.all(mu > 0) and np.all(lam >= 0) and st > 0
            need = "mu > 0, lambda >= 0, surface tension > 0"
        return bool(ok), need


# ------------------------------------------------------------ compatibility
@dataclass
class CompatibilityReport:
    ok: bool
    p_ext_in_range: bool
    s_ext: float | None
    integral: float
    margin: float
    notes: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def _check_monotone(P: PressureLaw):
    t = np.geomspace(1e-8, 1e8, 401)
    p = np.asarray(P(t), float)
    if not np.all(np.isfinite(p)):
        raise ConstitutiveLawError("pressure law not finite on sample range")
    if np.any(np.diff(p) <= 0):
        raise ConstitutiveLawError("pressure law is not strictly increasing")
    return t, p


def _tail_integral(P: PressureLaw, s0: float, upper: float = _GROWTH_LIMIT):
    """int_{s0}^inf P'(t)/t dt with a growth test on partial integrals.

    Returns (value, divergent).  The integrand is integrated in log t.
    """
    if s0 >= upper:
        return 0.0, False
    f = lambda tau: float(P.deriv(math.exp(tau)))
    edges = np.linspace(math.log(s0), math.log(upper), 25)
    parts = [integrate.quad(f, a, c, limit=200)[0] for a, c in zip(edges[:-1], edges[1:])]
    total = float(np.sum(parts))
    # partial integrals over equal log-slabs: a convergent tail decays,
    # a divergent one stays bounded below.
    last = parts[-4:]
    divergent = min(last) > 1e-3 * max(total, 1e-300) and last[-1] >= 0.5 * last[0]
    return total, divergent


def check_compatibility(params: PhysicalParams) -> CompatibilityReport:
    P = params.pressure
    gb = params.gravity * params.b
    notes = []
    if isinstance(P, Polytropic):
        s_ext = P.inverse(params.p_ext)
        ok_range = params.p_ext > 0
        # int K alpha t^{alpha-2} diverges at infinity for alpha >= 1
        return CompatibilityReport(ok_range, ok_range, s_ext if ok_range else None,
                                   math.inf, math.inf, ["polytropic tail diverges"])
    t, p = _check_monotone(P)
    p_lo, p_hi = float(P(1e-300)) if np.isfinite(P(1e-300)) else p[0], p[-1]
    in_range = p_lo < params.p_ext < p_hi
    if not in_range:
        notes.append(f"P_ext={params.p_ext} outside sampled range ({p_lo:.6g}, {p_hi:.6g})")
        return CompatibilityReport(False, False, None, float("nan"), -math.inf, notes)
    s_ext = P.inverse(params.p_ext)
    val, div = _tail_integral(P, s_ext)
    if div:
        notes.append("tail integral diverges (growth test)")
        return CompatibilityReport(True, True, s_ext, math.inf, math.inf, notes)
    margin = val - gb
    return CompatibilityReport(margin > 0, True, s_ext, val, margin, notes)


# ---------------------------------------------------------------- profile
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _safeguarded_newton(F, dF, target, lo, hi, tol=1e-12, maxit=200):
    """Vectorized bracketed Newton with bisection fallback for F(s) = target."""
    lo = np.array(lo, float)
    hi = np.array(hi, float)
    s = 0.5 * (lo + hi)
    for _ in range(maxit):
        r = F(s) - target
        if np.all(np.abs(r) <= tol):
            return s
        lo = np.where(r < 0, s, lo)
        hi = np.where(r > 0, s, hi)
        step = s - r / dF(s)
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        s = np.where(bad, 0.5 * (lo + hi), step)
    raise ProfileError("inverse enthalpy: root finder did not converge")


@dataclass
class EquilibriumProfile:
    """Enthalpy machinery and equilibrium density sampled on the vertical nodes."""

    params: PhysicalParams
    y: np.ndarray
    s_ext: float
    h_min: float
    h_max: float
    _H: Callable = field(repr=False)
    _Hinv: Callable = field(repr=False)
    rho: np.ndarray = None
    drho: np.ndarray = None
    guard: float = GUARD_FRACTION

    def H(self, s):
        return self._H(s)

    def H_inv(self, h):
        return self._Hinv(h)

    def dH_inv(self, h=None, sigma=None):
        """(H^-1)'(h) = s / P'(s) at s = H^-1(h)."""
        s = self.H_inv(h) if sigma is None else sigma
        return s / self.params.pressure.deriv(s)

    def guard_interval(self) -> tuple[float, float]:
        lo, hi = self.h_min, self.h_max
        gb = self.params.gravity * self.params.b
        if math.isfinite(lo) and math.isfinite(hi):
            w = self.guard * (hi - lo)
            return lo + w, hi - w
        ref = gb + max(abs(lo) if math.isfinite(lo) else 0.0, abs(hi) if math.isfinite(hi) else 0.0)
        return (lo + self.guard * ref if math.isfinite(lo) else -math.inf,
                hi - self.guard * ref if math.isfinite(hi) else math.inf)

    def check_argument(self, h):
        lo, hi = self.guard_interval()
        h = np.asarray(h)
        bad = (h <= lo) | (h >= hi) | ~np.isfinite(h)
        if np.any(bad):
            idx = np.unravel_index(np.argmax(bad), h.shape) if h.ndim else ()
            raise VacuumError(
                f"enthalpy argument {h[idx]:.6g} outside guarded interval ({lo:.6g}, {hi:.6g})",
                index=idx,
            )

    def margins(self, h) -> tuple[float, float]:
        """Distances of the extreme argument values to H_min and H_max."""
        h = np.asarray(h)
        return float(np.min(h) - self.h_min), float(self.h_max - np.max(h))


def build_profile(params: PhysicalParams, y) -> EquilibriumProfile:
    rep = check_compatibility(params)
    if not rep.ok:
        raise ProfileError(f"compatibility conditions fail: {rep.notes}, margin={rep.margin}")
    P = params.pressure
    gb = params.gravity * params.b
    s_ext = rep.s_ext
    closed = P.enthalpy_closed(s_ext, gb)
    if closed is not None:
        H, Hinv, h_min, h_max = closed
    else:
        H, Hinv, h_min, h_max = _quadrature_enthalpy(P, s_ext, gb)
    y = np.asarray(y, float)
    prof = EquilibriumProfile(params, y, s_ext, h_min, h_max, H, Hinv)
    rho = np.asarray(Hinv(-params.gravity * y), float)
    if not np.all(rho > 0) or not np.all(np.isfinite(rho)):
        raise ProfileError("equilibrium density is not positive and finite")
    prof.rho = rho
    prof.drho = -params.gravity * rho / P.deriv(rho)
    return prof


def _quadrature_enthalpy(P: PressureLaw, s_ext: float, gb: float):
    """H by Gauss-Legendre in log t (vectorized); bounds by Gauss-Kronrod."""

    def H(s):
        s = np.asarray(s, float)
        tau1 = np.log(s / s_ext)
        mid = 0.5 * tau1[..., None] * (_GL_NODES + 1.0)
        vals = P.deriv(s_ext * np.exp(mid))
        return -gb + 0.5 * tau1 * np.sum(vals * _GL_WEIGHTS, axis=-1)

    def dH(s):
        return P.deriv(s) / s

    upper, div_up = _tail_integral(P, s_ext)
    h_max = math.inf if div_up else -gb + upper
    g = lambda tau: float(P.deriv(math.exp(tau)))
    lower, err = integrate.quad(g, math.log(1e-300), math.log(s_ext), limit=400)
    h_min = -gb - lower
    if not np.isfinite(h_min):
        raise ProfileError("quadrature failure for H_min")

    def Hinv(h):
        h = np.asarray(h, float)
        lo = np.full(h.shape, 1e-300)
        hi = np.full(h.shape, s_ext)
        while True:
            grow = H(hi) < h
            if not np.any(grow):
                break
            hi = np.where(grow, hi * 4.0, hi)
            if np.any(hi > 1e300):
                raise ProfileError("inverse enthalpy bracket failed")
        lo = np.maximum(lo, np.where(H(hi / 4.0) < h, hi / 4.0, lo))
        return _safeguarded_newton(H, dH, h, lo, hi)

    return H, Hinv, h_min, h_max


def enthalpy_eval(profile: EquilibriumProfile, s):
    s = np.asarray(s, float)
    if np.any(s <= 0):
        raise ValueError("enthalpy is defined for positive densities")
    return profile.H(s)


def inverse_enthalpy_eval(profile: EquilibriumProfile, h):
    h = np.asarray(h, float)
    if np.any(h <= profile.h_min) or np.any(h >= profile.h_max):
        raise VacuumError(f"argument outside ({profile.h_min}, {profile.h_max})")
    return profile.H_inv(h)
