import itertools

import numpy as np
import pytest

from rtsched.exactmdp import (ExactState, exact_closed_loop_kernel,
                              exact_evaluate_policy, exact_rvia_solve,
                              exact_transitions)
from rtsched.model import SensorParams


def test_transitions_empty_battery_blocks():
    params = SensorParams(lam=0.2, p=0.8, B=3, delta_max=64)
    out = exact_transitions(ExactState(b=0, r=1, delta=3), 1, params)
    assert all(s.delta == 4 for s in out)
    by_b = {}
    by_r = {}
    for s, pr in out.items():
        by_b[s.b] = by_b.get(s.b, 0.0) + pr
        by_r[s.r] = by_r.get(s.r, 0.0) + pr
    assert by_b[0] == pytest.approx(0.8)
    assert by_b[1] == pytest.approx(0.2)
    assert by_r[0] == pytest.approx(0.2)
    assert by_r[1] == pytest.approx(0.8)


def test_transitions_fresh_age_on_send():
    params = SensorParams(lam=0.3, p=0.5, B=3, delta_max=10)
    out = exact_transitions(ExactState(b=2, r=0, delta=3), 1, params)
    assert all(s.delta == 1 for s in out)
    assert {s.b for s in out} == {1, 2}


def test_transitions_probabilities_sum():
    rng = np.random.default_rng(4)
    params = SensorParams(lam=0.37, p=0.61, B=4, delta_max=12)
    for _ in range(1000):
        s = ExactState(b=int(rng.integers(0, 5)), r=int(rng.integers(0, 2)),
                       delta=int(rng.integers(1, 13)))
        out = exact_transitions(s, int(rng.integers(0, 2)), params)
        assert sum(out.values()) == pytest.approx(1.0, abs=1e-12)
        assert len(out) <= 4


def _oracle_best_rate(params, mu):
    """Exhaustive deterministic-policy enumeration (independent route).

    Evaluates each policy's closed-loop chain by a dense eigen solve,
    nothing shared with the RVIA path.
    """
    n_states = (params.B + 1) * 2 * params.delta_max
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=n_states):
        psi = np.array(bits).reshape(params.B + 1, 2, params.delta_max)
        P, cost, cmd, _ = exact_closed_loop_kernel(psi, params)
        w, v = np.linalg.eig(P.T)
        i = int(np.argmin(np.abs(w - 1.0)))
        pi = np.abs(np.real(v[:, i]))
        pi /= pi.sum()
        if np.abs(pi @ P - pi).sum() > 1e-8:
            continue  # eigenvector did not isolate a stationary law
        best = min(best, float(pi @ cost + mu * (pi @ cmd)))
    return best


def test_rvia_matches_brute_force():
    params = SensorParams(lam=0.5, p=0.5, B=1, delta_max=2)
    for mu in (0.0, 0.3):
        res = exact_rvia_solve(params, mu, theta=1e-9)
        assert res.converged
        assert res.L_star == pytest.approx(_oracle_best_rate(params, mu),
                                           abs=1e-6)


def test_rvia_always_fresh():
    params = SensorParams(lam=1.0, p=0.7, B=2, delta_max=10)
    res = exact_rvia_solve(params, 0.0, theta=1e-9)
    assert res.L_star == pytest.approx(params.p, abs=1e-9)


def test_rvia_large_mu_never_commands():
    params = SensorParams(lam=0.4, p=0.6, B=2, delta_max=8)
    res = exact_rvia_solve(params, 3.0 * params.delta_max, theta=1e-9)
    assert not res.policy.psi.any()
    assert res.L_star == pytest.approx(params.p * params.delta_max, abs=1e-7)


def test_command_rate_monotone_in_mu():
    params = SensorParams(lam=0.3, p=0.8, B=3, delta_max=16)
    h0 = None
    js = []
    for mu in (0.0, 0.2, 0.5, 1.0, 2.0, 5.0):
        res = exact_rvia_solve(params, mu, theta=1e-8, h0=h0)
        h0 = res.h
        ev = exact_evaluate_policy(res.policy, params)
        js.append(ev.j_bar)
    assert np.all(np.diff(js) <= 1e-9)


def test_evaluate_agrees_with_monte_carlo():
    params = SensorParams(lam=0.35, p=0.6, B=2, delta_max=6)
    rng = np.random.default_rng(3)
    psi = (rng.random((3, 2, 6)) < 0.35).astype(float)
    # keep the chain live: command at the AoI cap on request, so the
    # never-command corner is not absorbing and the Monte Carlo's
    # finite window sees the stationary regime
    psi[1:, 1, -1] = 1.0
    ev = exact_evaluate_policy(psi, params)

    b, delta = 2, 1
    cost = commands = 0
    T = 400_000
    for _ in range(T):
        r = int(rng.random() < params.p)
        a = int(rng.random() < psi[b, r, delta - 1])
        d = a if b >= 1 else 0
        commands += a
        cost += r * (1 if d else min(delta + 1, params.delta_max))
        e = int(rng.random() < params.lam)
        b = min(b + e - d, params.B)
        delta = 1 if d else min(delta + 1, params.delta_max)
    assert ev.c_bar == pytest.approx(cost / T, rel=0.02)
    assert ev.j_bar == pytest.approx(commands / T, rel=0.02)
