"""Acceptance gate.  Each test records one or more (ok, detail) rows for its
criterion; the terminal summary prints one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

from cnswave import nashmoser as nm
from cnswave.diagnostics import power_balance, sanity_suite
from cnswave.equilibrium import PhysicalParams, Polytropic, build_profile
from cnswave.linear import Background, Regularization, assemble, bogovskii_b0, bogovskii_b2, derivative_matvec
from cnswave.operators import Forcing, GaussianBump, Model, PressureStress, State, evaluate, sigma
from cnswave.selfcheck import band_limited, smooth_state
from cnswave.solver import build_problem, data_norm, solve_traveling_wave, state_norm, whole_line_gauge
from cnswave.spaces import Grid, lp_block, sobolev_norm

from test_equilibrium import closed_form_rho, ode_rho
from test_spaces import AX_GRID, _axiom_defects, random_surface

# end-to-end configuration
L, NX, NZ, CENTER, AMP = 16.0, 64, 24, 8.0, 1e-3


def small():
    g = Grid(16.0, 32, 16)
    return g, Model(g, PhysicalParams())


def pressure_forcing(gamma, amp=AMP, period=L):
    return Forcing(gamma, stress=PressureStress(GaussianBump(amp, CENTER, 1.0, period)))


_WAVES: dict = {}


def wave_model():
    if "model" not in _WAVES:
        g = Grid(L, NX, NZ, smoothing_unit=2.0 / L)
        _WAVES["model"] = Model(g, PhysicalParams(pressure=Polytropic(1.0, 1.0)))
    return _WAVES["model"]


def newton_wave(gamma, initial=None):
    key = ("newton", gamma)
    if key not in _WAVES:
        m = wave_model()
        t = time.perf_counter()
        sol = solve_traveling_wave(
            m, pressure_forcing(gamma), "newton", nm.Stopping(20, 1e-9), initial=initial, gauge_center=CENTER
        )
        _WAVES[key] = (sol, time.perf_counter() - t)
    return _WAVES[key]


def wave_checks(model, sol):
    """Identity checks shared by the end-to-end and sweep criteria."""
    frc = pressure_forcing(sol.gamma)
    bal = power_balance(model, sol.state, frc)
    san = sanity_suite(model, sol.state, frc, CENTER, korn_samples=2)
    sig = sigma(model, sol.state.q, sol.state.eta)
    checks = {
        "residual": (sol.residual <= 1e-9, f"{sol.residual:.1e}"),
        "steps": (sol.converged and sol.report.steps <= 20, f"{sol.report.steps}"),
        "peak": (san["eta_peak"] > 0, f"{san['eta_peak']:.2e}"),
        "imbalance": (bal.imbalance <= 1e-6, f"{bal.imbalance:.1e}"),
        "forcing_imbalance": (bal.forcing_imbalance <= 1e-6, f"{bal.forcing_imbalance:.1e}"),
        "no_vacuum": (
            san["no_vacuum"] and san["diffeomorphism"] and float(np.min(sig)) > 0,
            f"margins ({san['vacuum_margin_low']:.2g}, {san['vacuum_margin_high']:.2g}) min density {np.min(sig):.3f}",
        ),
        "decay": (san["decay_ratio"] <= 0.1, f"{san['decay_ratio']:.3f}"),
    }
    return checks


# ----------------------------------------------------------------------- C1
def test_c1_equilibrium_closed_forms(accept):
    t = time.perf_counter()
    g = Grid(16.0, 32, 24)
    rows = []
    for alpha in (1.0, 2.0):
        prm = PhysicalParams(pressure=Polytropic(1.0, alpha))
        rho = build_profile(prm, g.y).rho
        e_cf = np.max(np.abs(rho - closed_form_rho(g.y, 1.0, alpha, 1.0, 1.0, 1.0)))
        e_ode = np.max(np.abs(rho - ode_rho(g.y, prm.pressure, 1.0, 1.0, 1.0)))
        rows.append((e_cf <= 1e-10 and e_ode <= 1e-8, f"alpha={alpha:g} closed {e_cf:.1e} ode {e_ode:.1e}"))
    dt = time.perf_counter() - t
    ok = accept("C1", all(r[0] for r in rows) and dt < 1.0, ", ".join(r[1] for r in rows) + f" ({dt:.2f}s)")
    assert ok


# ----------------------------------------------------------------------- C2
def test_c2_trivial_solution(accept):
    t = time.perf_counter()
    g, m = small()
    worst = max(data_norm(g, evaluate(m, State.zeros(g), Forcing(c))["F"]) for c in (0.5, 1.0, 2.0))
    dt = time.perf_counter() - t
    assert accept("C2", worst <= 1e-12 and dt < 1.0, f"max residual {worst:.1e} ({dt:.2f}s)")


# ----------------------------------------------------------------------- C3
def test_c3_derivative_richardson(accept):
    t = time.perf_counter()
    g, m = small()
    rng = np.random.default_rng(2024)
    frc = pressure_forcing(1.0, period=g.L)
    errs = []
    for _ in range(20):
        bg = smooth_state(g, rng, 1e-2)
        d = smooth_state(g, rng, 1.0).pack()
        an = derivative_matvec(Background(m, bg, frc), d[None])[0]
        F = lambda s: evaluate(m, State.unpack(g, bg.pack() + s * d), frc)["F"]
        cd = lambda h: (F(h) - F(-h)) / (2 * h)
        fd = (4 * cd(5e-4) - cd(1e-3)) / 3
        errs.append(np.linalg.norm(fd - an) / np.linalg.norm(an))
    dt = time.perf_counter() - t
    assert accept("C3", max(errs) <= 1e-6 and dt < 60, f"20 pairs, worst relative error {max(errs):.1e} ({dt:.1f}s)")


# ----------------------------------------------------------------------- C4
def test_c4_inverse_consistency(accept):
    t = time.perf_counter()
    g, m = small()
    rng = np.random.default_rng(77)
    frc = pressure_forcing(1.0, period=g.L)
    worst = {"plain": 0.0, "regularized": 0.0}
    backgrounds = [None] + [smooth_state(g, rng, 1e-2) for _ in range(5)]
    for bg in backgrounds:
        for label, kind, reg in (
            ("plain", "full", None),
            ("plain", "principal", None),
            ("regularized", "principal", Regularization(2, 100.0)),
        ):
            op = assemble(Background(m, bg, frc), kind, reg)
            x = op.project_pins(smooth_state(g, rng, 1.0).pack())
            e1 = np.linalg.norm(op.solve(op.apply(x)) - x) / np.linalg.norm(x)
            y = op.apply(smooth_state(g, rng, 1.0).pack())
            e2 = np.linalg.norm(op.apply(op.solve(y)) - y) / np.linalg.norm(y)
            worst[label] = max(worst[label], e1, e2)
    dt = time.perf_counter() - t
    ok = max(worst.values()) <= 1e-8 and dt < 120
    assert accept(
        "C4", ok, f"w0=0 + 5 backgrounds, worst {worst['plain']:.1e} / regularized {worst['regularized']:.1e} ({dt:.1f}s)"
    )


# ----------------------------------------------------------------------- C5
def test_c5_bogovskii(accept):
    t = time.perf_counter()
    g, _ = small()
    div_err = trace_err = b2_err = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        psi = band_limited(g, rng)
        psi = psi - np.mean(g.vertical_integral(psi)) / g.b
        X = bogovskii_b0(g, psi)
        div_err = max(div_err, np.max(np.abs(g.dx(X[0]) + g.dy(X[1]) - psi)) / np.max(np.abs(psi)))
        trace_err = max(trace_err, np.max(np.abs(X[..., 0])), np.max(np.abs(X[..., -1])))
        chi = g.filter(rng.standard_normal(g.nx), -1)
        chi = g.apply_multiplier(chi - chi.mean(), (g.xi * g.L <= g.nx // 4).astype(float), -1)
        chi /= np.max(np.abs(chi))
        Y = bogovskii_b2(g, chi)
        b2_err = max(
            b2_err,
            np.max(np.abs(g.dx(Y[0]) + g.dy(Y[1]))),
            np.max(np.abs(Y[1, :, -1] - chi)),
            np.max(np.abs(Y[0, :, -1])),
            np.max(np.abs(Y[..., 0])),
        )
    dt = time.perf_counter() - t
    ok = div_err <= 1e-8 and trace_err <= 1e-10 and b2_err <= 1e-10 and dt < 10
    assert accept("C5", ok, f"div {div_err:.1e} trace {trace_err:.1e} B2 {b2_err:.1e} ({dt:.2f}s)")


# ----------------------------------------------------------------------- C6
def test_c6_smoothing_axioms(accept):
    t = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = -np.inf
    for _ in range(1000):
        c = float(rng.choice(sorted(AX_GRID)))
        g = AX_GRID[c]
        f = random_surface(g, rng, kmax=int(rng.integers(1, g.nx // 2)))
        j, s, tt = int(rng.integers(1, 7)), int(rng.integers(0, 5)), int(rng.integers(0, 5))
        worst = max(worst, max(_axiom_defects(g, f, j, s, tt)))
    g = AX_GRID[1.0]
    lp = 0.0
    for _ in range(50):
        f = random_surface(g, rng)
        s = rng.uniform(0, 4)
        tot = sum(sobolev_norm(g, lp_block(g, f, j), s) ** 2 for j in range(12))
        ref = sobolev_norm(g, f, s) ** 2
        lp = max(lp, abs(tot - ref) / ref)
    dt = time.perf_counter() - t
    ok = worst <= 0.0 and lp <= 1e-12 and dt < 10
    assert accept("C6", ok, f"1000 samples, max defect {worst:.1e}; LP identity {lp:.1e} ({dt:.1f}s)")


# ----------------------------------------------------------------------- C7
def _seed_exact(p, g):
    st = nm.seed(p, g)
    z = np.zeros_like(g)
    f0 = p.data.smooth(g, 1)
    h0 = p.inverse(z)(f0)
    return (
        np.array_equal(st.f, f0)
        and np.array_equal(st.h, h0)
        and np.array_equal(st.e, p.psi(h0) - p.psi(z) - f0)
        and not np.any(st.u)
        and not np.any(st.y)
    )


def test_c7_engine_bookkeeping(accept):
    t = time.perf_counter()
    toy = nm.derivative_loss_toy(64)
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    gt = 1e-3 * (np.cos(x) + 0.5 * np.sin(3 * x) + 0.2 * np.cos(7 * x))
    _, rep, _ = nm.run(toy, gt, nm.Stopping(20, 1e-13), check_invariants=True)
    inv_toy = max(max(v.values()) for v in rep.invariants)
    rec_toy = any("recursive" in v for v in rep.invariants)

    g, m = small()
    p, gp = build_problem(m, pressure_forcing(1.0, period=g.L), gauge_center=CENTER)
    _, rep2, _ = nm.run(p, gp, nm.Stopping(5, 1e-16), check_invariants=True)
    inv_pde = max(max(v.values()) for v in rep2.invariants)
    rec_pde = any("recursive" in v for v in rep2.invariants)
    seeds = _seed_exact(toy, gt) and _seed_exact(p, gp)
    dt = time.perf_counter() - t
    ok = rep.converged and inv_toy <= 1e-12 and inv_pde <= 1e-12 and rec_toy and rec_pde and seeds and dt < 30
    assert accept(
        "C7",
        ok,
        f"toy {inv_toy:.1e} ({len(rep.invariants)} steps), PDE {inv_pde:.1e} ({len(rep2.invariants)} steps), "
        f"seed identities {'exact' if seeds else 'violated'} ({dt:.1f}s)",
    )


# ----------------------------------------------------------------------- C8
def test_c8_end_to_end(accept):
    t = time.perf_counter()
    m = wave_model()
    a, _ = newton_wave(1.0)
    b = solve_traveling_wave(m, pressure_forcing(1.0), "nash-moser", nm.Stopping(20, 1e-11), gauge_center=CENTER)
    agree = state_norm(m.grid, a.state.pack() - b.state.pack()) / state_norm(m.grid, a.state.pack())
    rows = []
    for name, sol in (("newton", a), ("nash-moser", b)):
        ok = sol.converged and sol.residual <= 1e-9 and sol.report.steps <= 20
        rows.append((ok, f"{name} {sol.residual:.1e} in {sol.report.steps}"))
    checks = wave_checks(m, a)
    dt = time.perf_counter() - t
    ok = all(r[0] for r in rows) and agree <= 1e-8 and all(c[0] for c in checks.values()) and dt < 300
    detail = ", ".join(r[1] for r in rows) + f", agree {agree:.1e}, " + ", ".join(
        f"{k} {v[1]}" for k, v in checks.items() if k not in ("residual", "steps")
    )
    assert accept("C8", ok, detail + f" ({dt:.0f}s)")


# ----------------------------------------------------------------------- C9
def test_c9_trivial_uniqueness(accept):
    t = time.perf_counter()
    g, m = small()
    worst = 0.0
    rows = []
    for seed, center in ((0, None), (1, CENTER), (2, None)):
        rng = np.random.default_rng(seed)
        gauge = None if center is None else whole_line_gauge(g, center)
        op = assemble(Background(m, None, Forcing(1.0)), "full", eta_gauge=gauge)
        x = op.project_pins(smooth_state(g, rng, 1.0).pack())
        x *= 1e-3 / state_norm(g, x)
        sol = solve_traveling_wave(m, Forcing(1.0), "newton", nm.Stopping(20, 1e-12), State.unpack(g, x), gauge_center=center)
        n = state_norm(g, sol.state.pack())
        worst = max(worst, n)
        rows.append(sol.converged)
    dt = time.perf_counter() - t
    ok = all(rows) and worst <= 1e-10 and dt < 120
    assert accept("C9", ok, f"3 starts of norm 1e-3, final norm <= {worst:.1e} ({dt:.1f}s)")


# ---------------------------------------------------------------------- C10
def test_c10_gamma_sweep(accept):
    t0 = time.perf_counter()
    m = wave_model()
    prev = None
    sols, spent = [], 0.0
    for gamma in (0.5, 1.0, 2.0):
        if ("newton", gamma) in _WAVES:
            sol, dt = _WAVES[("newton", gamma)]
            spent += dt
        else:
            sol, dt = newton_wave(gamma, prev)
        sols.append(sol)
        prev = sol.state
    bad = []
    for sol in sols:
        for k, (ok, detail) in wave_checks(m, sol).items():
            if not ok:
                bad.append(f"gamma={sol.gamma:g} {k} {detail}")
    dists = []
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = sols[i].state.eta, sols[j].state.eta
            dists.append(sobolev_norm(m.grid, a - b, 0) / max(sobolev_norm(m.grid, a, 0), sobolev_norm(m.grid, b, 0)))
    peaks = ", ".join(f"{np.max(np.abs(s.state.eta)):.2e}" for s in sols)
    dt = time.perf_counter() - t0 + spent
    ok = not bad and min(dists) >= 1e-3 and dt < 900
    detail = f"min pairwise distance {min(dists):.2e}, peaks [{peaks}]" + (f", failed: {bad}" if bad else "")
    assert accept("C10", ok, detail + f" ({dt:.0f}s)")
