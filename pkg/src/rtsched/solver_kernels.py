"""Fused sweep kernels for the belief-state solver.

Single-pass equivalents of SolverGrid.q_tables + minimum + bracket
tracking, avoiding the large intermediate Q arrays.  Cross-checked
against the numpy path in the test suite; nogil so distinct parameter
classes can sweep on worker threads concurrently.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TIE_EPS = 1e-12


@njit(cache=True, nogil=True)
def sweep_once(h, out, beta, dv, p, mu, damped):
    """One Bellman image of h into out; returns (max, min) of out - h."""
    A, M, _, D = h.shape
    B = A - 1
    w = np.empty(B)
    for j in range(B):
        w[j] = p * h[j + 1, 0, 1, 0] + (1.0 - p) * h[j + 1, 0, 0, 0]
    hr0 = np.empty(D)
    for d in range(D):
        d1 = d + 1 if d + 1 < D else D - 1
        hr0[d] = (1.0 - p) * h[0, 0, 0, d1] + p * h[0, 0, 1, d1]

    hi = -1e300
    lo = 1e300
    for a in range(A):
        for m in range(M):
            m1 = m + 1 if m + 1 < M else M - 1
            b0 = beta[a, m, 0]
            g = mu
            for j in range(B):
                g += beta[a, m, j + 1] * w[j]
            for d in range(D):
                d1 = d + 1 if d + 1 < D else D - 1
                cont0 = (1.0 - p) * h[a, m1, 0, d1] + p * h[a, m1, 1, d1]
                q1_base = g + b0 * hr0[d]

                v = cont0 if cont0 < q1_base else q1_base
                if damped:
                    v = 0.5 * (v + h[a, m, 0, d])
                diff = v - h[a, m, 0, d]
                if diff > hi:
                    hi = diff
                if diff < lo:
                    lo = diff
                out[a, m, 0, d] = v

                q0 = dv[d] + cont0
                q1 = q1_base + b0 * dv[d] + (1.0 - b0)
                v = q0 if q0 < q1 else q1
                if damped:
                    v = 0.5 * (v + h[a, m, 1, d])
                diff = v - h[a, m, 1, d]
                if diff > hi:
                    hi = diff
                if diff < lo:
                    lo = diff
                out[a, m, 1, d] = v
    return hi, lo


@njit(cache=True, nogil=True)
def greedy_from_h(h, psi, beta, dv, p, mu):
    """Fill psi with the Q-greedy actions (ties keep a = 0)."""
    A, M, _, D = h.shape
    B = A - 1
    w = np.empty(B)
    for j in range(B):
        w[j] = p * h[j + 1, 0, 1, 0] + (1.0 - p) * h[j + 1, 0, 0, 0]
    hr0 = np.empty(D)
    for d in range(D):
        d1 = d + 1 if d + 1 < D else D - 1
        hr0[d] = (1.0 - p) * h[0, 0, 0, d1] + p * h[0, 0, 1, d1]
    for a in range(A):
        for m in range(M):
            m1 = m + 1 if m + 1 < M else M - 1
            b0 = beta[a, m, 0]
            g = mu
            for j in range(B):
                g += beta[a, m, j + 1] * w[j]
            for d in range(D):
                d1 = d + 1 if d + 1 < D else D - 1
                cont0 = (1.0 - p) * h[a, m1, 0, d1] + p * h[a, m1, 1, d1]
                q1_base = g + b0 * hr0[d]
                psi[a, m, 0, d] = 1.0 if q1_base < cont0 - TIE_EPS else 0.0
                q0 = dv[d] + cont0
                q1 = q1_base + b0 * dv[d] + (1.0 - b0)
                psi[a, m, 1, d] = 1.0 if q1 < q0 - TIE_EPS else 0.0
