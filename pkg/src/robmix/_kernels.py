"""Compiled inner loops for the sequential (one pass, order dependent) recursions."""

import math

import numpy as np
from numba import njit

ZERO_STEP = 1e-12


@njit(cache=True)
def asgd_median_loop(X, w, m0, c_gamma, gamma, passes):
    n, d = X.shape
    m = m0.copy()
    mbar = m0.copy()
    k = 0
    for _ in range(passes):
        for i in range(n):
            k += 1
            dist = 0.0
            for j in range(d):
                dist += (X[i, j] - m[j]) ** 2
            dist = math.sqrt(dist)
            if dist >= ZERO_STEP:
                step = c_gamma * k ** (-gamma) * w[i] / dist
                for j in range(d):
                    m[j] += step * (X[i, j] - m[j])
            for j in range(d):
                mbar[j] += (m[j] - mbar[j]) / k
    return mbar


@njit(cache=True)
def asgd_median_mcm_loop(X, w, m0, V0, c_gamma, gamma, passes):
    n, d = X.shape
    m = m0.copy()
    mbar = m0.copy()
    V = V0.copy()
    Vbar = V0.copy()
    diff = np.empty(d)
    R = np.empty((d, d))
    k = 0
    for _ in range(passes):
        for i in range(n):
            k += 1
            g = c_gamma * k ** (-gamma) * w[i]
            # scatter step, centred at the running averaged median
            for a in range(d):
                diff[a] = X[i, a] - mbar[a]
            nrm = 0.0
            for a in range(d):
                for b in range(a, d):
                    R[a, b] = diff[a] * diff[b] - V[a, b]
                    if a == b:
                        nrm += R[a, b] * R[a, b]
                    else:
                        nrm += 2.0 * R[a, b] * R[a, b]
            nrm = math.sqrt(nrm)
            if nrm >= ZERO_STEP:
                for a in range(d):
                    for b in range(a, d):
                        V[a, b] += g * R[a, b] / nrm
                        V[b, a] = V[a, b]
            # location step
            dist = 0.0
            for a in range(d):
                dist += (X[i, a] - m[a]) ** 2
            dist = math.sqrt(dist)
            if dist >= ZERO_STEP:
                for a in range(d):
                    m[a] += g * (X[i, a] - m[a]) / dist
            for a in range(d):
                mbar[a] += (m[a] - mbar[a]) / k
                for b in range(d):
                    Vbar[a, b] += (V[a, b] - Vbar[a, b]) / k
    return mbar, Vbar


@njit(cache=True)
def h_inverse_square(delta, lam, u2):
    # sum_i (delta_i - a_i)^2 + sum_{i != j} a_i a_j with a = lam * u2
    s = 0.0
    tot = 0.0
    sq = 0.0
    for i in range(delta.shape[0]):
        a = lam[i] * u2[i]
        s += (delta[i] - a) ** 2
        tot += a
        sq += a * a
    return s + tot * tot - sq


@njit(cache=True)
def robbins_monro_loop(delta, lam0, U2, steps, avg, guard):
    """One Robbins-Monro pass; ``steps[k]`` is the k-th step size and
    ``avg[k]`` the share of iterate k + 1 in the running weighted average."""
    n, d = U2.shape
    lam = lam0.copy()
    lbar = lam0.copy()
    for k in range(n):
        u2 = U2[k]
        q = h_inverse_square(delta, lam, u2)
        h = 1.0 / math.sqrt(max(q, guard))
        gh = steps[k] * h
        for i in range(d):
            lam[i] -= gh * (lam[i] * u2[i] - delta[i])
            if lam[i] < 0.0:
                lam[i] = 0.0
            if not math.isfinite(lam[i]):
                return lbar, k + 1
        a = avg[k]
        for i in range(d):
            lbar[i] += a * (lam[i] - lbar[i])
    return lbar, -1


@njit(cache=True)
def jacobi_sweeps(A, tol, max_sweeps):
    """Cyclic Jacobi on a symmetric copy ``A`` (modified in place); returns the rotation matrix."""
    d = A.shape[0]
    V = np.eye(d)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(d):
            for q in range(d):
                if p != q:
                    off += A[p, q] * A[p, q]
        if math.sqrt(off) <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if math.isinf(theta):
                    t = 0.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for i in range(d):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[i, q] = s * aip + c * aiq
                for i in range(d):
                    api = A[p, i]
                    aqi = A[q, i]
                    A[p, i] = c * api - s * aqi
                    A[q, i] = s * api + c * aqi
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(d):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * viq
                    V[i, q] = s * vip + c * viq
    return V
