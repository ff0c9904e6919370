"""Exact-battery-knowledge benchmark: the fully observed per-sensor MDP.

Same Lagrangian machinery as the belief-state solver, but the state is
(battery, request, AoI) because the edge node is assumed to see the
true battery level every slot.  Shares the reference-state, tie-break
and theta conventions with the belief-state solver so the two rate
curves are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SensorParams
from .solver import (DEFAULT_MAX_SWEEPS, THETA_RELEASE, TIE_EPS, EvalResult,
                     dense_stationary_solve)


@dataclass(frozen=True)
class ExactState:
    b: int
    r: int
    delta: int


@dataclass
class ExactPolicy:
    """Command probabilities over (battery, request, AoI) states."""

    psi: np.ndarray          # (B+1, 2, delta_max)
    mu: float
    cost_rate: float = float("nan")
    command_rate: float = float("nan")


@dataclass
class ExactRviaResult:
    L_star: float
    policy: ExactPolicy
    h: np.ndarray
    converged: bool
    sweeps: int


def exact_transitions(s: ExactState, a: int, params: SensorParams):
    """Successor distribution of one state-action pair (<= 4 atoms)."""
    lam, p, B, D = params.lam, params.p, params.B, params.delta_max
    d = a if s.b >= 1 else 0
    delta_next = 1 if d == 1 else min(s.delta + 1, D)
    out = {}
    for e, pe in ((0, 1.0 - lam), (1, lam)):
        b_next = min(s.b + e - d, B)
        for rp, pr in ((0, 1.0 - p), (1, p)):
            if pe * pr == 0.0:
                continue
            key = ExactState(b=b_next, r=rp, delta=delta_next)
            out[key] = out.get(key, 0.0) + pe * pr
    return out


class _ExactGrid:
    """Vectorized sweep workspace over the (B+1, 2, delta_max) grid."""

    def __init__(self, params: SensorParams):
        self.params = params
        B, D = params.B, params.delta_max
        self.shape = (B + 1, 2, D)
        self.dplus_idx = np.minimum(np.arange(D) + 1, D - 1)
        self.dplus_val = np.minimum(np.arange(1, D + 1) + 1, D).astype(float)
        b = np.arange(B + 1)
        self.b_up = np.minimum(b + 1, B)         # no spend, arrival
        self.b_spend = np.maximum(b - 1, 0)      # spend, no arrival
        self.b_spend_up = np.minimum(b, B)       # spend and arrival
        self.can_send = b >= 1

    def q_tables(self, h: np.ndarray, mu: float):
        lam, p = self.params.lam, self.params.p
        B, D = self.params.B, self.params.delta_max
        b = np.arange(B + 1)

        def cont(b_next, d_idx):
            # expectation over (e implicit in b_next choice, r')
            return (1.0 - p) * h[b_next][:, None, 0, d_idx] \
                + p * h[b_next][:, None, 1, d_idx]

        # no transmission: battery drifts up, AoI increments
        stay = (1.0 - lam) * cont(b, self.dplus_idx) \
            + lam * cont(self.b_up, self.dplus_idx)          # (B+1, 1, D)
        r_cost = np.array([0.0, 1.0])[None, :, None] \
            * self.dplus_val[None, None, :]
        q0 = r_cost + stay[:, :, :]

        # commanded: transmit iff battery non-empty
        sent = (1.0 - lam) * cont(self.b_spend, np.zeros(D, dtype=int)) \
            + lam * cont(self.b_spend_up, np.zeros(D, dtype=int))
        fresh = np.array([0.0, 1.0])[None, :, None] * np.ones(D)[None, None, :]
        q1 = np.where(self.can_send[:, None, None],
                      mu + fresh + sent,
                      mu + q0)
        return q0, q1


def exact_rvia_solve(params: SensorParams, mu: float,
                     theta: float = THETA_RELEASE,
                     max_sweeps: int = DEFAULT_MAX_SWEEPS,
                     h0: np.ndarray | None = None) -> ExactRviaResult:
    """Relative value iteration on the observed chain; see rvia_solve."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    grid = _ExactGrid(params)
    h = np.zeros(grid.shape) if h0 is None else h0.copy()
    converged = False
    lo = hi = float("nan")
    sweeps = 0
    damped = False
    span_window: list[float] = []
    for sweeps in range(1, max_sweeps + 1):
        q0, q1 = grid.q_tables(h, mu)
        V = np.minimum(q0, q1)
        if damped:
            V = 0.5 * (V + h)
        diff = V - h
        hi = float(diff.max())
        lo = float(diff.min())
        h = V - V[params.B, 0, 0]
        span = hi - lo
        if span < theta * (0.5 if damped else 1.0):
            converged = True
            break
        if not damped:
            span_window.append(span)
            if len(span_window) >= 200:
                if span_window[-1] > 0.5 * span_window[0]:
                    damped = True
                span_window.clear()
    scale = 2.0 if damped else 1.0
    q0, q1 = grid.q_tables(h, mu)
    psi = (q1 < q0 - TIE_EPS).astype(np.float64)
    policy = ExactPolicy(psi=psi, mu=mu)
    return ExactRviaResult(L_star=scale * 0.5 * (hi + lo), policy=policy,
                           h=h, converged=converged, sweeps=sweeps)


def exact_closed_loop_kernel(policy, params: SensorParams):
    """Dense one-slot kernel, slot cost and command vectors."""
    psi = policy.psi if isinstance(policy, ExactPolicy) else np.asarray(policy)
    lam, p, B, D = params.lam, params.p, params.B, params.delta_max
    shape = (B + 1, 2, D)
    n = (B + 1) * 2 * D
    P = np.zeros((n, n))
    cost = np.zeros(n)
    cmd = np.zeros(n)

    def flat(b, r, d_idx):
        return (b * 2 + r) * D + d_idx

    for b in range(B + 1):
        for r in range(2):
            for d_idx in range(D):
                s = flat(b, r, d_idx)
                w = psi[b, r, d_idx]
                cmd[s] = w
                delta = d_idx + 1
                dplus = min(delta + 1, D)
                send = w if b >= 1 else 0.0
                cost[s] = r * (send * 1.0 + (1.0 - send) * dplus)
                for issue, pw in ((1, w), (0, 1.0 - w)):
                    if pw == 0.0:
                        continue
                    d = issue if b >= 1 else 0
                    dn = 0 if d == 1 else dplus - 1
                    for e, pe in ((0, 1.0 - lam), (1, lam)):
                        bn = min(b + e - d, B)
                        for rp, pr in ((0, 1.0 - p), (1, p)):
                            P[s, flat(bn, rp, dn)] += pw * pe * pr
    return P, cost, cmd, shape


def exact_evaluate_policy(policy, params: SensorParams) -> EvalResult:
    """Exact long-run (cost rate, command rate) of an observed-state policy.

    Restricted to states reachable from the initial distribution
    (post-update battery in {B-1, B}, AoI 1) before solving: the full
    grid can contain closed sets the trajectory never enters.  A
    multichain restriction (several closed classes reachable) is
    flagged instead of averaged.
    """
    from .solver import _n_terminal_classes, _reachable
    P, cost, cmd, _ = exact_closed_loop_kernel(policy, params)
    B, D = params.B, params.delta_max
    starts = [(max(B - 1, 0) * 2 + 0) * D, (B * 2 + 0) * D]
    reach = _reachable(P, sorted(set(starts)))
    P = P[np.ix_(reach, reach)]
    if _n_terminal_classes(P) != 1:
        return EvalResult(c_bar=float("nan"), j_bar=float("nan"), flagged=True)
    pi = dense_stationary_solve(P)
    if pi is None:
        return EvalResult(c_bar=float("nan"), j_bar=float("nan"), flagged=True)
    return EvalResult(c_bar=float(pi @ cost[reach]),
                      j_bar=float(pi @ cmd[reach]))
