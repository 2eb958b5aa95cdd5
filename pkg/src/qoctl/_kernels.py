"""Compiled RK4 core shared by :mod:`qoctl.dynamics` and the optimizer.

Packed state ``y = (ax, ay, az, qx, qy, qz, heat)``. Controls are supplied
per step and per RK4 stage (start, midpoint, end).
"""

import math

import numpy as np
from numba import njit

GIBBS, BOSONIC, FERMIONIC = 0, 1, 2

OK = 0
DIVERGED = 1


@njit(cache=True)
def rates(kind, gamma, beta, eps):
    aeq = -math.tanh(0.5 * beta * eps)
    if kind == GIBBS:
        return -gamma, -gamma, aeq
    if kind == FERMIONIC:
        return -0.5 * gamma, -gamma, aeq
    if gamma == 0.0:
        return 0.0, 0.0, aeq
    return gamma / (2.0 * aeq), gamma / aeq, aeq


@njit(cache=True)
def deriv(kind, gamma, beta, source, y, eps, l1, l2, d, out):
    m_perp, m_z, aeq = rates(kind, gamma, beta, eps)
    wx = -2.0 * l1
    wy = -2.0 * l2
    wz = eps - d
    ax, ay, az = y[0], y[1], y[2]
    qx, qy, qz = y[3], y[4], y[5]
    out[0] = wy * az - wz * ay + m_perp * ax
    out[1] = wz * ax - wx * az + m_perp * ay
    out[2] = wx * ay - wy * ax + m_z * (az - aeq)
    out[3] = wy * qz - wz * qy - m_perp * qx
    out[4] = wz * qx - wx * qz - m_perp * qy
    out[5] = wx * qy - wy * qx - m_z * (qz - source * 0.5 * eps)
    out[6] = -0.5 * eps * m_z * (az - aeq)


@njit(cache=True)
def rk4(kind, gamma, beta, source, y0, eps, lam, h, quench_idx, quench_rot, div_tol):
    """Integrate ``len(eps)`` fixed steps.

    ``eps`` has shape (N, 3); ``lam`` has shape (N, 3, 3) holding
    ``(l1, l2, l0 - l3)`` per stage. ``quench_rot[j]`` is applied to both
    vectors when the step counter reaches ``quench_idx[j]`` (indices sorted,
    ``N`` allowed for a final quench).
    """
    n = eps.shape[0]
    Y = np.empty((n + 1, 7))
    y = y0.copy()
    k1 = np.empty(7)
    k2 = np.empty(7)
    k3 = np.empty(7)
    k4 = np.empty(7)
    tmp = np.empty(7)
    jq = 0
    nq = quench_idx.shape[0]
    for k in range(n + 1):
        while jq < nq and quench_idx[jq] == k:
            R = quench_rot[jq]
            a0, a1, a2 = y[0], y[1], y[2]
            b0, b1, b2 = y[3], y[4], y[5]
            for i in range(3):
                y[i] = R[i, 0] * a0 + R[i, 1] * a1 + R[i, 2] * a2
                y[3 + i] = R[i, 0] * b0 + R[i, 1] * b1 + R[i, 2] * b2
            jq += 1
        for i in range(7):
            Y[k, i] = y[i]
        r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
        if not (r2 <= (1.0 + div_tol) ** 2):
            return Y, DIVERGED, k
        if k == n:
            break
        deriv(kind, gamma, beta, source, y, eps[k, 0], lam[k, 0, 0], lam[k, 0, 1], lam[k, 0, 2], k1)
        for i in range(7):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        deriv(kind, gamma, beta, source, tmp, eps[k, 1], lam[k, 1, 0], lam[k, 1, 1], lam[k, 1, 2], k2)
        for i in range(7):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        deriv(kind, gamma, beta, source, tmp, eps[k, 1], lam[k, 1, 0], lam[k, 1, 1], lam[k, 1, 2], k3)
        for i in range(7):
            tmp[i] = y[i] + h * k3[i]
        deriv(kind, gamma, beta, source, tmp, eps[k, 2], lam[k, 2, 0], lam[k, 2, 1], lam[k, 2, 2], k4)
        for i in range(7):
            y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return Y, OK, n


@njit(cache=True)
def affine_generator(kind, gamma, beta, eps, l1, l2, d, A):
    """Generator of ``(ax, ay, az, 1, heat)`` for constant controls."""
    m_perp, m_z, aeq = rates(kind, gamma, beta, eps)
    wx = -2.0 * l1
    wy = -2.0 * l2
    wz = eps - d
    for i in range(5):
        for j in range(5):
            A[i, j] = 0.0
    A[0, 0] = m_perp
    A[0, 1] = -wz
    A[0, 2] = wy
    A[1, 0] = wz
    A[1, 1] = m_perp
    A[1, 2] = -wx
    A[2, 0] = -wy
    A[2, 1] = wx
    A[2, 2] = m_z
    A[2, 3] = -m_z * aeq
    A[4, 2] = -0.5 * eps * m_z
    A[4, 3] = 0.5 * eps * m_z * aeq


@njit(cache=True)
def expm5(A, t, out):
    """``exp(t A)`` by scaling and squaring with a degree-18 Taylor sum."""
    n = 5
    norm = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += abs(A[i, j])
        norm = max(norm, row)
    norm *= abs(t)
    s = 0
    while norm > 0.25:
        norm *= 0.5
        s += 1
    scale = t / 2.0**s
    term = np.eye(n)
    acc = np.eye(n)
    tmp = np.empty((n, n))
    for k in range(1, 19):
        for i in range(n):
            for j in range(n):
                v = 0.0
                for m in range(n):
                    v += term[i, m] * A[m, j]
                tmp[i, j] = v * scale / k
        for i in range(n):
            for j in range(n):
                term[i, j] = tmp[i, j]
                acc[i, j] += tmp[i, j]
    for _ in range(s):
        for i in range(n):
            for j in range(n):
                v = 0.0
                for m in range(n):
                    v += acc[i, m] * acc[m, j]
                tmp[i, j] = v
        for i in range(n):
            for j in range(n):
                acc[i, j] = tmp[i, j]
    for i in range(n):
        for j in range(n):
            out[i, j] = acc[i, j]


@njit(cache=True)
def _apply(E, x, y):
    for i in range(5):
        v = 0.0
        for j in range(5):
            v += E[i, j] * x[j]
        y[i] = v


@njit(cache=True)
def _norm3(x):
    return math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])


@njit(cache=True)
def propagate_exact(kind, gamma, beta, a0, seg, seg_t, target_norm, arrival, subdiv):
    """Exact propagation through piecewise-constant segments.

    ``seg[k] = (eps, l1, l2, d)`` held for ``seg_t[k]``. Returns
    ``(a_final, heat, arrival_time, min_norm_miss, max_norm)``. With
    ``arrival`` set, propagation stops at the first crossing of
    ``target_norm`` (located by bisection); ``arrival_time`` is -1 if it never
    happens.
    """
    A = np.empty((5, 5))
    E = np.empty((5, 5))
    x = np.zeros(5)
    y = np.zeros(5)
    x[0] = a0[0]
    x[1] = a0[1]
    x[2] = a0[2]
    x[3] = 1.0
    f0 = _norm3(x) - target_norm
    miss = abs(f0)
    rmax = _norm3(x)
    t = 0.0
    if arrival and f0 == 0.0:
        return x[:3].copy(), 0.0, 0.0, 0.0, rmax
    for k in range(seg.shape[0]):
        affine_generator(kind, gamma, beta, seg[k, 0], seg[k, 1], seg[k, 2], seg[k, 3], A)
        h = seg_t[k] / subdiv
        if h <= 0.0:
            continue
        expm5(A, h, E)
        for _ in range(subdiv):
            _apply(E, x, y)
            r = _norm3(y)
            rmax = max(rmax, r)
            f1 = r - target_norm
            if arrival and (f1 == 0.0 or (f1 > 0.0) != (f0 > 0.0)):
                lo = 0.0
                hi = h
                for _it in range(60):
                    mid = 0.5 * (lo + hi)
                    expm5(A, mid, E)
                    _apply(E, x, y)
                    fm = _norm3(y) - target_norm
                    if fm == 0.0 or (fm > 0.0) != (f0 > 0.0):
                        hi = mid
                    else:
                        lo = mid
                expm5(A, hi, E)
                _apply(E, x, y)
                return y[:3].copy(), y[4], t + hi, 0.0, rmax
            miss = min(miss, abs(f1))
            for i in range(5):
                x[i] = y[i]
            t += h
    return x[:3].copy(), x[4], -1.0, miss, rmax


LINEAR, SINH, LOG = 0, 1, 2


@njit(cache=True)
def unit_to_value(x, lo, hi, mode, k):
    if mode == SINH:
        return hi * math.sinh(k * (2.0 * x - 1.0)) / math.sinh(k)
    if mode == LOG:
        return lo * (hi / lo) ** x
    return lo + x * (hi - lo)


@njit(cache=True)
def decode(x, lo, hi, mode, k, n_seg, seg):
    # x in [0, 1]^(4 n_seg) -> (eps, l1, l2, d = -l3) per segment
    for s in range(n_seg):
        for j in range(4):
            i = 4 * s + j
            v = unit_to_value(x[i], lo[i], hi[i], mode[i], k[i])
            seg[s, j] = -v if j == 3 else v


@njit(cache=True)
def merit(kind, gamma, beta, a0, target_norm, time_obj, horizon, x, lo, hi, mode, k, n_seg, w, seg, seg_t, subdiv):
    """Return ``(penalized, cost, miss)`` for normalized parameters ``x``."""
    decode(x, lo, hi, mode, k, n_seg, seg)
    af, heat, t_arr, miss_min, rmax = propagate_exact(kind, gamma, beta, a0, seg, seg_t, target_norm, time_obj, subdiv)
    if time_obj:
        if t_arr >= 0.0:
            return t_arr, t_arr, 0.0
        return horizon + w * miss_min * miss_min, horizon, miss_min
    miss = abs(_norm3(af) - target_norm)
    return heat + w * miss * miss, heat, miss


@njit(cache=True, nogil=True)
def pattern_search(kind, gamma, beta, a0, target_norm, time_obj, horizon, n_seg, x0, lo, hi, mode, k, weights, sweeps, step0, min_step, subdiv):
    """Coordinate pattern search with shrinking steps and escalating penalty.

    Every coordinate keeps its own step: a successful move doubles it (up to
    ``step0``), failing in both directions halves it. Each sweep ends with a
    pattern move along the sweep's net displacement. An epoch stops after
    ``sweeps`` sweeps or once every step is below ``min_step``.

    Returns ``(x, trace, cost, miss, n_evals)``; ``trace`` holds, after each
    sweep, the best value of the final-epoch penalized cost seen so far.
    """
    dim = x0.shape[0]
    seg = np.empty((n_seg, 4))
    seg_t = np.full(n_seg, horizon / n_seg)
    x = x0.copy()
    n_ep = weights.shape[0]
    w_final = weights[n_ep - 1]
    trace = np.full(n_ep * sweeps + 1, np.nan)
    f, c, m = merit(kind, gamma, beta, a0, target_norm, time_obj, horizon, x, lo, hi, mode, k, n_seg, w_final, seg, seg_t, subdiv)
    best_final = f
    trace[0] = best_final
    n_evals = 1
    pos = 1
    steps = np.full(dim, step0)
    trial = np.empty(dim)
    base = np.empty(dim)
    for ep in range(n_ep):
        w = weights[ep]
        f, c, m = merit(kind, gamma, beta, a0, target_norm, time_obj, horizon, x, lo, hi, mode, k, n_seg, w, seg, seg_t, subdiv)
        n_evals += 1
        for i in range(dim):
            steps[i] = max(steps[i], 16.0 * min_step)
        for _ in range(sweeps):
            for i in range(dim):
                base[i] = x[i]
            improved = False
            for i in range(dim):
                xi = x[i]
                moved = False
                for sgn in (1.0, -1.0):
                    v = min(1.0, max(0.0, xi + sgn * steps[i]))
                    if v == xi:
                        continue
                    x[i] = v
                    ft, ct, mt = merit(kind, gamma, beta, a0, target_norm, time_obj, horizon, x, lo, hi, mode, k, n_seg, w, seg, seg_t, subdiv)
                    n_evals += 1
                    if ft < f:
                        f, c, m = ft, ct, mt
                        moved = True
                        break
                    x[i] = xi
                if moved:
                    improved = True
                    steps[i] = min(2.0 * steps[i], step0)
                else:
                    steps[i] *= 0.5
            if improved:
                for i in range(dim):
                    trial[i] = min(1.0, max(0.0, 2.0 * x[i] - base[i]))
                ft, ct, mt = merit(kind, gamma, beta, a0, target_norm, time_obj, horizon, trial, lo, hi, mode, k, n_seg, w, seg, seg_t, subdiv)
                n_evals += 1
                if ft < f:
                    f, c, m = ft, ct, mt
                    for i in range(dim):
                        x[i] = trial[i]
            best_final = min(best_final, c + w_final * m * m)
            trace[pos] = best_final
            pos += 1
            if np.max(steps) < min_step:
                break
        while pos < (ep + 1) * sweeps + 1:
            trace[pos] = best_final
            pos += 1
    return x, trace, c, m, n_evals
