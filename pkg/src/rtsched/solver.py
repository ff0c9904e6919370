"""Average-cost solver for the single-sensor belief-state problem.

Solves min over policies of (cost rate + mu * command rate) by relative
value iteration over states z = (belief index, request, age), and
evaluates any (possibly randomized) per-sensor policy's long-run cost
and command rates exactly.

The closed-loop chain between two consecutive commands is deterministic
in (anchor, age, AoI) and only branches on the i.i.d. request coin and
on the command's delivery outcome, so policy evaluation reduces to a
small embedded chain over post-command states plus per-cycle sums; this
is exact and avoids power iteration on the full product grid, whose
near-deterministic drift between commands makes it badly conditioned.
The generic power-iteration routine is still provided (and used on
small kernels and for cross-checks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .belief import BeliefAtlas, BeliefIndex
from .model import SensorParams
from .solver_kernels import greedy_from_h, sweep_once

THETA_DESK = 1e-4
THETA_RELEASE = 1e-6
DEFAULT_MAX_SWEEPS = 100_000
TIE_EPS = 1e-12


@dataclass
class PerSensorPolicy:
    """Command policy over grid states, with its evaluated rates.

    psi[a, m, r, d] is the probability of commanding in belief index
    (a, m) with request r and AoI d+1; deterministic policies are 0/1
    tables.  cost_rate / command_rate are filled by evaluate_policy.
    """

    psi: np.ndarray
    mu: float
    cost_rate: float = float("nan")
    command_rate: float = float("nan")


@dataclass
class RviaResult:
    L_star: float
    policy: PerSensorPolicy
    h: np.ndarray
    converged: bool
    sweeps: int


class SolverGrid:
    """Workspace for one (params, atlas) pair.

    Enumerates z = (anchor, age, r, AoI) as a (B+1, M, 2, delta_max)
    array block and precomputes the gather indices used by the sweeps.
    The reference state is (anchor=B, age=0, r=0, AoI=1).
    """

    def __init__(self, params: SensorParams, atlas: BeliefAtlas):
        if atlas.B != params.B or atlas.lam != params.lam:
            raise ValueError("atlas was built for different sensor parameters")
        self.params = params
        self.atlas = atlas
        self.A = params.B + 1
        self.M = atlas.M
        self.D = params.delta_max
        self.shape = (self.A, self.M, 2, self.D)
        self.n_states = self.A * self.M * 2 * self.D

        A, M, D = self.A, self.M, self.D
        self.beta = atlas.table                      # (A, M, A)
        self.beta0 = self.beta[:, :, 0]              # (A, M)
        self.age_next = np.minimum(np.arange(M) + 1, M - 1)
        self.d_next = np.minimum(np.arange(D) + 1, D - 1)       # AoI index
        self.dplus_val = np.minimum(np.arange(1, D + 1) + 1, D).astype(float)

        # flat gather: h[a, age+1^, r', d+1^] for the whole grid
        ai, mi, ri, di = np.ix_(np.arange(A), self.age_next,
                                np.arange(2), self.d_next)
        self._idx_shift = np.ravel_multi_index(
            (ai, mi, ri, di), self.shape).astype(np.int64)

    def ref_value(self, V: np.ndarray) -> float:
        return V[self.A - 1, 0, 0, 0]

    def q_tables(self, h: np.ndarray, mu: float):
        """Q(z, 0) and Q(z, 1) for every grid state, given h."""
        p = self.params.p
        hs = np.take(h, self._idx_shift)             # (A, M, 2, D)
        eh0 = (1.0 - p) * hs[:, :, 0, :] + p * hs[:, :, 1, :]   # (A, M, D)
        q0 = eh0[:, :, None, :] + np.array([0.0, 1.0])[None, None, :, None] \
            * self.dplus_val[None, None, None, :]

        h_rho0 = (1.0 - p) * h[0, 0, 0, self.d_next] \
            + p * h[0, 0, 1, self.d_next]             # (D,)
        w = p * h[1:, 0, 1, 0] + (1.0 - p) * h[1:, 0, 0, 0]     # (B,)
        g = self.beta[:, :, 1:] @ w                   # (A, M)
        b0 = self.beta0
        base = mu + g[:, :, None] + b0[:, :, None] * h_rho0[None, None, :]
        q1 = np.empty(self.shape)
        q1[:, :, 0, :] = base
        q1[:, :, 1, :] = base + b0[:, :, None] * self.dplus_val[None, None, :] \
            + (1.0 - b0)[:, :, None]
        return q0, q1


def q_values(z: tuple[BeliefIndex, int, int], mu: float, h: np.ndarray,
             params: SensorParams, atlas: BeliefAtlas) -> tuple[float, float]:
    """Action values of one state; scalar mirror of SolverGrid.q_tables.

    z = (belief index, request, AoI).  h is indexed [anchor, age, r,
    AoI-1] over the full grid; pass zeros for one-step lookahead.
    """
    idx, r, delta = z
    D = params.delta_max
    p = params.p
    dplus = min(delta + 1, D)
    age_n = min(idx.age + 1, atlas.M - 1)
    beta = atlas.belief(idx)
    b0 = beta[0]

    q0 = r * dplus + (1.0 - p) * h[idx.anchor, age_n, 0, dplus - 1] \
        + p * h[idx.anchor, age_n, 1, dplus - 1]
    q1 = mu + r * (b0 * dplus + (1.0 - b0)) \
        + b0 * ((1.0 - p) * h[0, 0, 0, dplus - 1] + p * h[0, 0, 1, dplus - 1])
    for j in range(1, params.B + 1):
        q1 += beta[j] * (p * h[j, 0, 1, 0] + (1.0 - p) * h[j, 0, 0, 0])
    return float(q0), float(q1)


def rvia_solve(params: SensorParams, atlas: BeliefAtlas, mu: float,
               theta: float = THETA_RELEASE,
               max_sweeps: int = DEFAULT_MAX_SWEEPS,
               h0: np.ndarray | None = None) -> RviaResult:
    """Relative value iteration until the one-sweep span falls below theta.

    Returns the greedy policy of the final Q tables and the optimal
    average (cost + mu * commands) rate, bracketed by the final span
    interval and reported as its midpoint.  A warm-start h0 shifts
    nothing at convergence (span criterion) but saves sweeps.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    grid = SolverGrid(params, atlas)
    h = np.zeros(grid.shape) if h0 is None else h0.astype(np.float64).copy()
    out = np.empty_like(h)
    beta = np.ascontiguousarray(grid.beta)
    converged = False
    lo = hi = float("nan")
    sweeps = 0
    # The one-sweep change T(h) - h brackets the optimal rate (span
    # seminorm argument); its span doubles as the stopping test.
    # Damping averages the Bellman image with h (the standard
    # aperiodicity transform): fixed points and greedy policies are
    # unchanged and the bracketed rate halves.  Engaged only if the
    # plain sweeps stall, which happens when an optimal closed loop has
    # deterministic-length cycles.
    damped = False
    span_window: list[float] = []
    for sweeps in range(1, max_sweeps + 1):
        hi, lo = sweep_once(h, out, beta, grid.dplus_val, params.p, mu,
                            damped)
        out -= grid.ref_value(out)
        h, out = out, h
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
    psi = np.empty(grid.shape)
    greedy_from_h(h, psi, beta, grid.dplus_val, params.p, mu)
    policy = PerSensorPolicy(psi=psi, mu=mu)
    return RviaResult(L_star=scale * 0.5 * (hi + lo), policy=policy, h=h,
                      converged=converged, sweeps=sweeps)


def bellman_residual(h: np.ndarray, L_star: float, mu: float,
                     params: SensorParams, atlas: BeliefAtlas) -> float:
    """max over states of |min_a Q(z, a) - h(z) - L_star|."""
    grid = SolverGrid(params, atlas)
    q0, q1 = grid.q_tables(h, mu)
    return float(np.abs(np.minimum(q0, q1) - h - L_star).max())


@dataclass
class StationaryResult:
    pi: np.ndarray
    converged: bool
    iters: int


def stationary_distribution(P, tol: float = 1e-12,
                            max_iters: int = 1_000_000) -> StationaryResult:
    """Stationary law of a row-stochastic kernel by power iteration.

    Iterates x <- xP from uniform until the L1 change is <= tol.
    Hitting the cap returns converged=False (caller decides); a single
    recurrent class is assumed throughout.
    """
    n = P.shape[0]
    x = np.full(n, 1.0 / n)
    for i in range(1, max_iters + 1):
        x_new = x @ P
        change = float(np.abs(x_new - x).sum())
        x = x_new
        if change <= tol:
            return StationaryResult(pi=x / x.sum(), converged=True, iters=i)
    return StationaryResult(pi=x / x.sum(), converged=False, iters=max_iters)


def _stationary_robust(P, tol: float = 1e-12,
                       max_iters: int = 200_000) -> StationaryResult:
    """Power iteration, retrying on the lazy kernel if the plain one cycles.

    (I + P) / 2 has the same stationary law and is always aperiodic.
    """
    res = stationary_distribution(P, tol=tol, max_iters=max_iters)
    if res.converged:
        return res
    if sp.issparse(P):
        lazy = 0.5 * (sp.identity(P.shape[0], format=P.format) + P)
    else:
        lazy = 0.5 * (np.eye(P.shape[0]) + P)
    return stationary_distribution(lazy, tol=tol, max_iters=max_iters)


@dataclass
class EvalResult:
    c_bar: float
    j_bar: float
    flagged: bool = False
    absorbed: bool = False

    def __iter__(self):
        return iter((self.c_bar, self.j_bar))


def _as_psi(policy) -> np.ndarray:
    return policy.psi if isinstance(policy, PerSensorPolicy) else np.asarray(policy)


def evaluate_policy(policy, params: SensorParams,
                    atlas: BeliefAtlas) -> EvalResult:
    """Exact long-run (cost rate, command rate) of a per-sensor policy.

    Decomposes the closed-loop chain at command slots: between commands
    the (anchor, age, AoI) path is deterministic, so each post-command
    state's expected cycle length, cost and successor law are plain
    sums, and the stationary law of the small embedded chain yields the
    per-slot rates by the renewal-reward ratio.  If the policy can stop
    commanding forever (reachable from the initial state), the chain is
    eventually absorbed in the never-command tail: command rate 0, cost
    rate p * delta_max.
    """
    psi = _as_psi(policy)
    A, M, _, D = psi.shape
    B = A - 1
    p = params.p
    beta = atlas.table
    beta0 = atlas.table[:, :, 0]

    # embedded states: (anchor j, AoI 1) for j = 1..B, then (0, AoI d0)
    # for d0 = 1..D
    nE = B + D
    T = np.zeros((nE, nE))
    absorb = np.zeros(nE)
    e_len = np.zeros(nE)
    e_cost = np.zeros(nE)

    def st_idx(anchor: int, d0: int) -> int:
        return anchor - 1 if anchor >= 1 else B + d0 - 1

    for s in range(nE):
        anchor, d0 = (s + 1, 1) if s < B else (0, s - B + 1)
        mstar = max(M - 1, D - d0)
        m = np.arange(mstar)
        ages = np.minimum(m, M - 1)
        deltas = np.minimum(d0 + m, D)
        dplus = np.minimum(deltas + 1, D).astype(float)
        b0 = beta0[anchor, ages]
        psi1 = psi[anchor, ages, 1, deltas - 1]
        psi0 = psi[anchor, ages, 0, deltas - 1]
        q = p * psi1 + (1.0 - p) * psi0
        slot_cost = p * (psi1 * ((1.0 - b0) + b0 * dplus) + (1.0 - psi1) * dplus)

        S = np.concatenate(([1.0], np.cumprod(1.0 - q)))   # len mstar+1
        e_len[s] = S[:mstar].sum()
        e_cost[s] = (S[:mstar] * slot_cost).sum()

        wcmd = S[:mstar] * q
        if mstar > 0:
            delivered = wcmd @ beta[anchor, ages, 1:]       # mass per level
            T[s, :B] += delivered
            np.add.at(T[s], B + dplus.astype(int) - 1, wcmd * b0)

        S_tail = S[mstar]
        if S_tail > 0.0:
            b0s = beta0[anchor, M - 1]
            psi1s = psi[anchor, M - 1, 1, D - 1]
            psi0s = psi[anchor, M - 1, 0, D - 1]
            qs = p * psi1s + (1.0 - p) * psi0s
            if qs <= 0.0:
                absorb[s] = S_tail
            else:
                cs = p * (psi1s * ((1.0 - b0s) + b0s * D) + (1.0 - psi1s) * D)
                e_len[s] += S_tail / qs
                e_cost[s] += S_tail * cs / qs
                T[s, :B] += S_tail * beta[anchor, M - 1, 1:]
                T[s, B + D - 1] += S_tail * b0s

    # restrict to embedded states reachable from the initial one (B, 1);
    # the full table may contain closed sets the trajectory never enters
    reach = _reachable(T, [st_idx(B, 1)])
    T = T[np.ix_(reach, reach)]
    absorb = absorb[reach]
    e_len = e_len[reach]
    e_cost = e_cost[reach]

    if absorb.any():
        alpha, *_ = np.linalg.lstsq(np.eye(len(reach)) - T, absorb,
                                    rcond=None)
        a_init = float(np.clip(alpha[0], 0.0, 1.0))
        if a_init > 0.5:
            return EvalResult(c_bar=p * D, j_bar=0.0, absorbed=True,
                              flagged=a_init < 1.0 - 1e-9)
        if a_init > 1e-9:
            # mixed absorption contradicts the unichain assumption
            return EvalResult(c_bar=float("nan"), j_bar=float("nan"),
                              flagged=True)

    if _n_terminal_classes(T) != 1:
        return EvalResult(c_bar=float("nan"), j_bar=float("nan"), flagged=True)
    nu = dense_stationary_solve(T)
    if nu is None:
        return EvalResult(c_bar=float("nan"), j_bar=float("nan"), flagged=True)
    mean_len = float(nu @ e_len)
    return EvalResult(c_bar=float(nu @ e_cost) / mean_len,
                      j_bar=1.0 / mean_len)


def _reachable(T: np.ndarray, starts: list[int]) -> np.ndarray:
    """Sorted indices reachable from starts in the chain's support graph.

    The start states come first so callers can index them; the rest is
    sorted.
    """
    n = T.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = list(starts)
    for s in starts:
        seen[s] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(T[i] > 0.0)[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    rest = [i for i in np.nonzero(seen)[0] if i not in starts]
    return np.array(list(starts) + rest, dtype=np.int64)


def _n_terminal_classes(T: np.ndarray) -> int:
    """Number of closed recurrent classes of a dense kernel."""
    n_comp, labels = sp.csgraph.connected_components(
        sp.csr_matrix(T > 0.0), directed=True, connection="strong")
    closed = 0
    for c in range(n_comp):
        members = labels == c
        if np.allclose(T[members][:, members].sum(axis=1), 1.0, atol=1e-12):
            closed += 1
    return closed


def dense_stationary_solve(T: np.ndarray) -> np.ndarray | None:
    """Stationary law of a small dense chain by direct linear solve.

    Solves nu (T - I) = 0 with a normalization row; falls back to
    power iteration on the lazy kernel if the solve is degenerate.
    """
    n = T.shape[0]
    a = T.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        nu = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        nu = None
    if nu is not None and nu.min() > -1e-9 and abs(nu.sum() - 1.0) < 1e-9:
        nu = np.clip(nu, 0.0, None)
        resid = float(np.abs(nu @ T - nu).sum())
        if resid < 1e-9:
            return nu / nu.sum()
    res = _stationary_robust(T)
    return res.pi if res.converged else None


SOLUTION_FORMAT_VERSION = 1


def save_solution(path, result: RviaResult, params: SensorParams,
                  theta: float, M: int) -> None:
    """Serialize a solved policy and its value table (versioned npz).

    Carries the identifying tuple (params, mu, theta, M) plus a content
    hash of the tables.
    """
    import hashlib
    import json
    digest = hashlib.sha256(result.policy.psi.tobytes()
                            + result.h.tobytes()).hexdigest()
    meta = {
        "format_version": SOLUTION_FORMAT_VERSION,
        "lam": params.lam, "p": params.p, "B": params.B,
        "delta_max": params.delta_max, "mu": result.policy.mu,
        "theta": theta, "M": M, "L_star": result.L_star,
        "converged": result.converged, "sha256": digest,
    }
    np.savez_compressed(path, psi=result.policy.psi.astype(np.uint8),
                        h=result.h, meta=json.dumps(meta))


def load_solution(path) -> tuple[RviaResult, dict]:
    import hashlib
    import json
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != SOLUTION_FORMAT_VERSION:
            raise ValueError(f"unsupported solution format "
                             f"{meta['format_version']}")
        psi = data["psi"].astype(np.float64)
        h = data["h"]
    digest = hashlib.sha256(psi.tobytes() + h.tobytes()).hexdigest()
    if digest != meta["sha256"]:
        raise ValueError("solution content hash mismatch")
    policy = PerSensorPolicy(psi=psi, mu=meta["mu"])
    return RviaResult(L_star=meta["L_star"], policy=policy, h=h,
                      converged=meta["converged"], sweeps=0), meta


def build_closed_loop_kernel(policy, params: SensorParams, atlas: BeliefAtlas):
    """Sparse one-slot kernel of the grid chain under a fixed policy.

    Returns (P, cost, commands): P is CSR over flattened grid states,
    cost and commands are the per-state expected slot cost and command
    probability.  Intended for small instances and cross-checks; the
    renewal path in evaluate_policy is the production evaluator.
    """
    psi = _as_psi(policy)
    grid = SolverGrid(params, atlas)
    A, M, D = grid.A, grid.M, grid.D
    p = params.p
    n = grid.n_states

    ai, mi, ri, di = np.meshgrid(np.arange(A), np.arange(M), np.arange(2),
                                 np.arange(D), indexing="ij")
    flat_state = np.ravel_multi_index((ai, mi, ri, di), grid.shape).ravel()
    psi_f = psi.ravel()
    b0_f = grid.beta0[ai, mi].ravel()
    dplus_idx = grid.d_next[di].ravel()
    age_next = grid.age_next[mi].ravel()
    anchor_f = ai.ravel()
    r_f = ri.ravel()

    rows, cols, vals = [], [], []

    def add(dest_a, dest_m, dest_d, prob):
        for rp, pr in ((0, 1.0 - p), (1, p)):
            rows.append(flat_state)
            cols.append(np.ravel_multi_index(
                (dest_a, dest_m, np.full_like(dest_a, rp), dest_d), grid.shape))
            vals.append(prob * pr)

    # no command: belief ages, AoI increments
    add(anchor_f, age_next, dplus_idx, 1.0 - psi_f)
    # command, unanswered: anchor 0, AoI increments
    add(np.zeros_like(anchor_f), np.zeros_like(age_next), dplus_idx,
        psi_f * b0_f)
    # command, delivered at level j: anchor j, AoI 1
    for j in range(1, A):
        bj = grid.beta[ai, mi, j].ravel()
        add(np.full_like(anchor_f, j), np.zeros_like(age_next),
            np.zeros_like(dplus_idx), psi_f * bj)

    P = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    P.eliminate_zeros()
    dplus_val = grid.dplus_val[di].ravel()
    cost = r_f * ((1.0 - psi_f) * dplus_val
                  + psi_f * (b0_f * dplus_val + (1.0 - b0_f)))
    return P, cost, psi_f.copy()


def evaluate_policy_kernel(policy, params: SensorParams, atlas: BeliefAtlas,
                           tol: float = 1e-12) -> EvalResult:
    """Policy rates via the closed-loop kernel and power iteration.

    The kernel is restricted to states reachable from the initial
    state (anchor B, age 0, AoI 1) first: the full product grid
    contains closed sets the trajectory can never enter, which would
    otherwise soak up stationary mass from the uniform start.
    """
    P, cost, cmd = build_closed_loop_kernel(policy, params, atlas)
    grid = SolverGrid(params, atlas)
    start = np.ravel_multi_index((params.B, 0, 0, 0), grid.shape)
    order = sp.csgraph.breadth_first_order(P, start, directed=True,
                                           return_predecessors=False)
    reach = np.sort(order)
    P_sub = P[reach][:, reach]
    res = _stationary_robust(P_sub, tol=tol)
    return EvalResult(c_bar=float(res.pi @ cost[reach]),
                      j_bar=float(res.pi @ cmd[reach]),
                      flagged=not res.converged)
