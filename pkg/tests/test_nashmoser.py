import json

import numpy as np
import pytest

from cnswave import nashmoser as nm


X = np.linspace(0, 2 * np.pi, 64, endpoint=False)


def toy_data(a):
    return a * (np.cos(X) + 0.5 * np.sin(3 * X) + 0.2 * np.cos(7 * X))


def test_problem_indices():
    p = nm.derivative_loss_toy()
    assert p.beta == 2 * (p.r + p.mu) + 1
    pde = nm.ProblemSpec(None, None, None, None, mu=1, r=4, R=20)
    assert pde.beta == 11 and pde.faithful()
    assert not nm.ProblemSpec(None, None, None, None, mu=1, r=4, R=10).faithful()


def test_seed_identities():
    p = nm.derivative_loss_toy()
    g = toy_data(1e-2)
    st = nm.seed(p, g)
    assert np.all(st.u == 0) and np.all(st.v == 0) and np.all(st.y == 0)
    assert np.array_equal(st.f, p.data.smooth(g, 1))
    h0 = p.inverse(np.zeros_like(g))(st.f)
    assert np.array_equal(st.h, h0)
    assert np.array_equal(st.e, p.psi(h0) - p.psi(np.zeros_like(g)) - st.f)


def test_seed_zero_data():
    p = nm.derivative_loss_toy()
    st = nm.seed(p, np.zeros(64))
    for a in (st.u, st.v, st.h, st.y, st.f, st.e):
        assert np.all(a == 0)


def test_seed_remainder_is_quadratic():
    p = nm.derivative_loss_toy()
    e = [np.linalg.norm(nm.seed(p, toy_data(a)).e) for a in (1e-3, 5e-4)]
    assert e[0] / e[1] == pytest.approx(4.0, rel=0.2)


def test_first_and_recursive_steps():
    p = nm.derivative_loss_toy()
    g = toy_data(1e-3)
    st0 = nm.seed(p, g)
    st1 = nm.step(p, st0)
    assert np.array_equal(st1.y, -p.data.smooth(st0.e, 1))
    assert np.array_equal(st1.f, p.data.delta(g, 1) + st1.y)
    prev = st1
    for _ in range(3):
        nxt = nm.step(p, prev)
        rec = -p.data.smooth(prev.e, nxt.j) - p.data.delta(prev.sum_e_prev, nxt.j - 1)
        assert np.linalg.norm(nxt.y - rec) <= 1e-12 * max(np.linalg.norm(p.data.smooth(prev.sum_e, nxt.j)), 1e-300)
        inv = nm.invariants(p, nxt)
        assert max(inv.values()) <= 1e-12
        prev = nxt


def test_linear_problem_telescopes():
    p = nm.linear_toy()
    g = np.exp(np.cos(X)) - np.exp(np.cos(X)).mean() + 0.1 * np.sin(20 * X)
    st = nm.seed(p, g)
    assert np.max(np.abs(st.e)) <= 1e-13
    for J in range(1, 5):
        st = nm.step(p, st)
        assert np.max(np.abs(st.e)) <= 1e-13
        u = st.u + st.h
        tail = g - p.data.smooth(g, J + 1)
        assert np.max(np.abs(p.psi(u) - g + tail)) <= 1e-12
        assert p.data.norm(p.psi(u) - g, 0) == pytest.approx(p.data.norm(tail, 0), rel=1e-9, abs=1e-12)


def test_data_decomposition():
    sc = nm.periodic_scale(64)
    g = np.random.default_rng(0).standard_normal(64)
    for J in range(6):
        total = sum(sc.delta(g, j) for j in range(J + 1))
        assert np.max(np.abs(total - sc.smooth(g, J + 1))) <= 1e-14


def test_zero_data_converges_immediately():
    p = nm.derivative_loss_toy()
    u, rep, _ = nm.run(p, np.zeros(64))
    assert rep.converged and rep.steps == 0 and np.all(u == 0)
    u, rep = nm.newton_run(p, np.zeros(64))
    assert rep.converged and rep.steps == 0 and np.all(u == 0)


def test_toy_convergence_and_invariants():
    p = nm.derivative_loss_toy()
    g = toy_data(1e-3)
    u, rep, _ = nm.run(p, g, nm.Stopping(20, 1e-12), check_invariants=True)
    assert rep.converged
    assert np.linalg.norm(p.psi(u) - g) <= 1e-11
    assert max(max(v.values()) for v in rep.invariants) <= 1e-12
    assert set(rep.slopes) == set(p.domain.indices)
    recs = [json.loads(line) for line in rep.to_lines()]
    assert recs[-1]["summary"] and recs[-1]["converged"]
    assert [r["step"] for r in recs[:-1]] == list(range(len(rep.residuals)))


def test_toy_large_amplitude_fails():
    p = nm.derivative_loss_toy()
    _, rep, _ = nm.run(p, toy_data(1.0), nm.Stopping(20, 1e-12))
    assert not rep.converged and rep.message


def test_admissibility_exit():
    p = nm.derivative_loss_toy()
    p.admissible = lambda v: False
    _, rep, _ = nm.run(p, toy_data(1e-3), nm.Stopping(20, 1e-14))
    assert not rep.converged and "admissible" in rep.message


def test_newton_quadratic():
    p = nm.scalar_toy()
    target = np.array([0.75])  # u + u^2 = 0.75 at u = 0.5
    _, rep = nm.newton_run(p, target, nm.Stopping(20, 1e-15))
    assert rep.converged
    r = rep.residuals
    ratios = [r[k + 1] / r[k] ** 2 for k in range(1, len(r) - 1) if r[k + 1] > 1e-14]
    assert ratios and all(0.05 < q < 5 for q in ratios)


def test_newton_toy_agrees_with_nash_moser():
    p = nm.derivative_loss_toy()
    g = toy_data(1e-3)
    u1, _, _ = nm.run(p, g, nm.Stopping(20, 1e-13))
    u2, rep = nm.newton_run(p, g, nm.Stopping(20, 1e-13))
    assert rep.converged
    assert np.max(np.abs(u1 - u2)) <= 1e-12
