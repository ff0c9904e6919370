"""Jitted fleet simulation engine.

Bit-compatible with the pure-Python reference path in the harness: both
consume the same counter-based streams (see rng.py) in the same order,
so small runs can be compared for exact equality.  All costs are
integers, so metric sums are exact int64 accumulations.

Kind codes: 0 = belief bundle (partial knowledge), 1 = exact-knowledge
bundle (decides on the true battery), 2 = request-aware greedy.
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_PARTIAL = 0
KIND_EXACT = 1
KIND_GREEDY = 2

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _u01(key, ctr):
    z = key + ctr * _G + _G
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _INV53


@njit(cache=True)
def episode_loop(T, K, N, kind, do_truncate, eta,
                 B, delta_max,
                 class_id, lam, p, M_of_class,
                 psi_minus, psi_plus, xpsi_minus, xpsi_plus,
                 env_keys, mix_keys, init_keys, trunc_key):
    """One episode.

    Returns (err, cost_sum, cmd_sum, x_hist, cmd_hist, state arrays...);
    x_hist counts pre-truncation candidate-set sizes per slot, cmd_hist
    the issued command-set sizes.  err: 0 ok, 1 slot budget violated,
    2 battery out of range.
    """
    b = np.empty(K, np.int64)
    delta = np.empty(K, np.int64)
    anchor = np.empty(K, np.int64)
    age = np.empty(K, np.int64)
    btilde = np.empty(K, np.int64)
    r = np.zeros(K, np.int64)
    for k in range(K):
        u = _u01(init_keys[k], np.uint64(0))
        b[k] = B if u < lam[k] else B - 1
        delta[k] = 1
        anchor[k] = B
        age[k] = 0
        btilde[k] = B

    cand = np.empty(K, np.int64)
    ties = np.empty(K, np.int64)
    tiekey = np.empty(K, np.float64)
    is_cmd = np.full(K, -1, np.int64)      # slot stamp of last command
    dcnt = np.zeros(delta_max + 1, np.int64)
    x_hist = np.zeros(K + 1, np.int64)
    cmd_hist = np.zeros(K + 1, np.int64)   # post-truncation set sizes
    cost_sum = np.int64(0)
    cmd_sum = np.int64(0)
    trunc_ctr = np.uint64(0)
    err = 0

    for t in range(T):
        tu = np.uint64(t)
        # requests of this slot (env draw 2t per sensor)
        for k in range(K):
            r[k] = 1 if _u01(env_keys[k], np.uint64(2) * tu) < p[k] else 0

        # candidate set
        n_cand = 0
        if kind == KIND_GREEDY:
            # tie coin per sensor per slot (the greedy's randomization)
            for k in range(K):
                tiekey[k] = _u01(mix_keys[k], tu)
                if r[k] == 1:
                    cand[n_cand] = k
                    n_cand += 1
        else:
            for k in range(K):
                u = _u01(mix_keys[k], tu)
                c = class_id[k]
                if kind == KIND_PARTIAL:
                    if u < eta:
                        a = psi_minus[c, anchor[k], age[k], r[k], delta[k] - 1]
                    else:
                        a = psi_plus[c, anchor[k], age[k], r[k], delta[k] - 1]
                else:
                    if u < eta:
                        a = xpsi_minus[c, b[k], r[k], delta[k] - 1]
                    else:
                        a = xpsi_plus[c, b[k], r[k], delta[k] - 1]
                if a != 0:
                    cand[n_cand] = k
                    n_cand += 1
        x_hist[n_cand] += 1

        # commanded set
        if kind == KIND_GREEDY:
            n_cmd = n_cand if n_cand < N else N
            if n_cand > N:
                # top-N by AoI; ties resolved by the per-slot coins
                for d in range(delta_max + 1):
                    dcnt[d] = 0
                for i in range(n_cand):
                    dcnt[delta[cand[i]]] += 1
                acc = 0
                thresh = delta_max
                for d in range(delta_max, 0, -1):
                    acc += dcnt[d]
                    if acc >= N:
                        thresh = d
                        break
                room = N - (acc - dcnt[thresh])
                n_tie = 0
                for i in range(n_cand):
                    k = cand[i]
                    if delta[k] > thresh:
                        is_cmd[k] = t
                    elif delta[k] == thresh:
                        ties[n_tie] = k
                        n_tie += 1
                # the `room` smallest coins among the tied sensors win
                for _ in range(room):
                    best = 0
                    for i in range(1, n_tie):
                        if tiekey[ties[i]] < tiekey[ties[best]]:
                            best = i
                    is_cmd[ties[best]] = t
                    n_tie -= 1
                    ties[best] = ties[n_tie]
            else:
                for i in range(n_cand):
                    is_cmd[cand[i]] = t
        elif do_truncate and n_cand > N:
            for i in range(N):
                u = _u01(trunc_key, trunc_ctr)
                trunc_ctr += np.uint64(1)
                j = i + int(u * (n_cand - i))
                tmp = cand[i]
                cand[i] = cand[j]
                cand[j] = tmp
            n_cmd = N
            for i in range(N):
                is_cmd[cand[i]] = t
        else:
            n_cmd = n_cand
            for i in range(n_cand):
                is_cmd[cand[i]] = t

        cmd_hist[n_cmd] += 1
        if do_truncate and n_cmd > N:
            err = 1
            break

        # transmissions, costs, dynamics (env draw 2t+1 per sensor)
        for k in range(K):
            cmd = 1 if is_cmd[k] == t else 0
            d = 1 if (cmd == 1 and b[k] >= 1) else 0
            if r[k] == 1:
                if d == 1:
                    cost_sum += 1
                else:
                    dp = delta[k] + 1
                    if dp > delta_max:
                        dp = delta_max
                    cost_sum += dp
            cmd_sum += cmd
            e = 1 if _u01(env_keys[k], np.uint64(2) * tu + np.uint64(1)) < lam[k] else 0
            if cmd == 1:
                if d == 1:
                    anchor[k] = b[k]
                    btilde[k] = b[k]
                else:
                    anchor[k] = 0
                age[k] = 0
            else:
                mk = M_of_class[class_id[k]]
                if age[k] + 1 < mk:
                    age[k] += 1
                else:
                    age[k] = mk - 1
            bn = b[k] + e - d
            if bn > B:
                bn = B
            b[k] = bn
            if bn < 0 or bn > B:
                err = 2
            if d == 1:
                delta[k] = 1
            elif delta[k] + 1 <= delta_max:
                delta[k] += 1
            else:
                delta[k] = delta_max
        if err != 0:
            break

    return (err, cost_sum, cmd_sum, x_hist, cmd_hist,
            b, delta, anchor, age, btilde, r)
