"""Jitted hot paths: hash encoding fwd/bwd, ray compositing fwd/bwd,
counter-based jitter streams, and the sparse table optimizer step.

All kernels are single-threaded (deterministic). The encode/adam kernels
are dtype-specialized by their array arguments; float constants are
passed in pre-cast because numba promotes python float literals (and
float32*int64 mixes) to float64. Compositing always runs in float64.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Spatial-hash primes (x unmultiplied).
_P2 = np.int64(2654435761)
_P3 = np.int64(805459861)


@njit(cache=True, fastmath=True)
def encode_fwd(u, tables, res, resf, act, out, one):
    """Trilinear hash-grid features for normalized points u in [0,1]^3.

    out[i, l*F:(l+1)*F] receives level l's block; masked levels zero.
    ``resf`` is ``res`` pre-cast to the working dtype.
    """
    N = u.shape[0]
    L, T, F = tables.shape
    Tm = np.int64(T - 1)
    zero = one - one
    for i in range(N):
        x0 = u[i, 0]
        x1 = u[i, 1]
        x2 = u[i, 2]
        for l in range(L):
            base = l * F
            if not act[l]:
                for c in range(F):
                    out[i, base + c] = zero
                continue
            rf = resf[l]
            top = rf - one
            px = x0 * rf
            py = x1 * rf
            pz = x2 * rf
            fx = np.floor(px)
            fy = np.floor(py)
            fz = np.floor(pz)
            if fx > top:
                fx = top
            if fy > top:
                fy = top
            if fz > top:
                fz = top
            ix = np.int64(fx)
            iy = np.int64(fy)
            iz = np.int64(fz)
            tx = px - fx
            ty = py - fy
            tz = pz - fz
            sx = one - tx
            sy = one - ty
            sz = one - tz
            hy0 = iy * _P2
            hy1 = (iy + 1) * _P2
            hz0 = iz * _P3
            hz1 = (iz + 1) * _P3
            h000 = (ix ^ hy0 ^ hz0) & Tm
            h100 = ((ix + 1) ^ hy0 ^ hz0) & Tm
            h010 = (ix ^ hy1 ^ hz0) & Tm
            h110 = ((ix + 1) ^ hy1 ^ hz0) & Tm
            h001 = (ix ^ hy0 ^ hz1) & Tm
            h101 = ((ix + 1) ^ hy0 ^ hz1) & Tm
            h011 = (ix ^ hy1 ^ hz1) & Tm
            h111 = ((ix + 1) ^ hy1 ^ hz1) & Tm
            w000 = sx * sy * sz
            w100 = tx * sy * sz
            w010 = sx * ty * sz
            w110 = tx * ty * sz
            w001 = sx * sy * tz
            w101 = tx * sy * tz
            w011 = sx * ty * tz
            w111 = tx * ty * tz
            for c in range(F):
                out[i, base + c] = (
                    w000 * tables[l, h000, c]
                    + w100 * tables[l, h100, c]
                    + w010 * tables[l, h010, c]
                    + w110 * tables[l, h110, c]
                    + w001 * tables[l, h001, c]
                    + w101 * tables[l, h101, c]
                    + w011 * tables[l, h011, c]
                    + w111 * tables[l, h111, c]
                )


@njit(cache=True, fastmath=True)
def encode_bwd(u, dfeat, res, resf, act, grad_tables, touched, one):
    """Scatter-add feature gradients into per-level table gradients.

    ``touched[l, slot]`` is set for every written slot so the optimizer
    can restrict its update sweep. Serial, hence race-free.
    """
    N = u.shape[0]
    L, T, F = grad_tables.shape
    Tm = np.int64(T - 1)
    for i in range(N):
        x0 = u[i, 0]
        x1 = u[i, 1]
        x2 = u[i, 2]
        for l in range(L):
            if not act[l]:
                continue
            base = l * F
            rf = resf[l]
            top = rf - one
            px = x0 * rf
            py = x1 * rf
            pz = x2 * rf
            fx = np.floor(px)
            fy = np.floor(py)
            fz = np.floor(pz)
            if fx > top:
                fx = top
            if fy > top:
                fy = top
            if fz > top:
                fz = top
            ix = np.int64(fx)
            iy = np.int64(fy)
            iz = np.int64(fz)
            tx = px - fx
            ty = py - fy
            tz = pz - fz
            sx = one - tx
            sy = one - ty
            sz = one - tz
            hy0 = iy * _P2
            hy1 = (iy + 1) * _P2
            hz0 = iz * _P3
            hz1 = (iz + 1) * _P3
            h000 = (ix ^ hy0 ^ hz0) & Tm
            h100 = ((ix + 1) ^ hy0 ^ hz0) & Tm
            h010 = (ix ^ hy1 ^ hz0) & Tm
            h110 = ((ix + 1) ^ hy1 ^ hz0) & Tm
            h001 = (ix ^ hy0 ^ hz1) & Tm
            h101 = ((ix + 1) ^ hy0 ^ hz1) & Tm
            h011 = (ix ^ hy1 ^ hz1) & Tm
            h111 = ((ix + 1) ^ hy1 ^ hz1) & Tm
            touched[l, h000] = 1
            touched[l, h100] = 1
            touched[l, h010] = 1
            touched[l, h110] = 1
            touched[l, h001] = 1
            touched[l, h101] = 1
            touched[l, h011] = 1
            touched[l, h111] = 1
            for c in range(F):
                g = dfeat[i, base + c]
                grad_tables[l, h000, c] += (sx * sy * sz) * g
                grad_tables[l, h100, c] += (tx * sy * sz) * g
                grad_tables[l, h010, c] += (sx * ty * sz) * g
                grad_tables[l, h110, c] += (tx * ty * sz) * g
                grad_tables[l, h001, c] += (sx * sy * tz) * g
                grad_tables[l, h101, c] += (tx * sy * tz) * g
                grad_tables[l, h011, c] += (sx * ty * tz) * g
                grad_tables[l, h111, c] += (tx * ty * tz) * g


@njit(cache=True, fastmath=True)
def _log_sigmoid(x):
    # log(sigmoid(x)) = -softplus(-x), stable in both tails
    if x >= 0.0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@njit(cache=True, fastmath=True)
def _sigmoid_neg(x):
    # sigmoid(-x), stable for large |x|
    if x > 40.0:
        return 0.0
    if x < -40.0:
        return 1.0
    return 1.0 / (1.0 + np.exp(x))


@njit(cache=True, fastmath=True)
def composite_fwd(fv, tv, nval, far, tau, alpha, trans, w, wsum, depth):
    """Per-ray opacity compositing from consecutive SDF samples (float64).

    alpha_i = max(0, 1 - Phi(f_{i+1})/Phi(f_i)) with Phi the tau-sharpened
    logistic, evaluated in log space so saturated rays stay exact. The
    last valid sample gets alpha 0 (no successor).
    """
    B, S = fv.shape
    for b in range(B):
        n = nval[b]
        acc_t = 1.0
        acc_w = 0.0
        acc_d = 0.0
        ls_next = 0.0
        if n > 0:
            ls_next = _log_sigmoid(tau * fv[b, 0])
        for i in range(S):
            if i < n - 1:
                ls_i = ls_next
                ls_next = _log_sigmoid(tau * fv[b, i + 1])
                g = ls_next - ls_i
                a = 1.0 - np.exp(g) if g < 0.0 else 0.0
            else:
                a = 0.0
            alpha[b, i] = a
            trans[b, i] = acc_t
            wi = acc_t * a
            w[b, i] = wi
            acc_w += wi
            acc_d += wi * tv[b, i]
            acc_t *= 1.0 - a
        wsum[b] = acc_w
        depth[b] = acc_d + (1.0 - acc_w) * far[b]


@njit(cache=True, fastmath=True)
def composite_bwd(A, alpha, trans, fv, nval, tau, df, dtau):
    """Backward of compositing: A[b,i] = dL/dw_i accumulates into df, dtau.

    d alpha_k = T_k (A_k - B_k) with the suffix recurrence
    B_{k-1} = alpha_k A_k + (1 - alpha_k) B_k, so saturated rays
    (alpha = 1) need no division.
    """
    B, S = A.shape
    dt = 0.0
    for b in range(B):
        n = nval[b]
        m = n - 1  # number of alphas
        if m <= 0:
            continue
        back = 0.0  # B_{m-1}
        for k in range(m - 1, -1, -1):
            a = alpha[b, k]
            da = trans[b, k] * (A[b, k] - back)
            if a > 0.0:
                ratio = 1.0 - a
                fi = fv[b, k]
                fj = fv[b, k + 1]
                si = _sigmoid_neg(tau * fi)
                sj = _sigmoid_neg(tau * fj)
                df[b, k] += da * ratio * tau * si
                df[b, k + 1] -= da * ratio * tau * sj
                dt -= da * ratio * (fj * sj - fi * si)
            back = a * A[b, k] + (1.0 - a) * back
    dtau[0] += dt


@njit(cache=True, fastmath=True, inline="always")
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, fastmath=True)
def stratified_uniforms(seed, pids, count, out):
    """Counter-based per-pixel uniform streams (batch-order invariant)."""
    B = pids.shape[0]
    for b in range(B):
        state = seed ^ (np.uint64(pids[b]) * np.uint64(0xD1B54A32D192ED03))
        for s in range(count):
            state, z = _splitmix64(state)
            out[b, s] = (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, fastmath=True)
def sparse_adam(params, grads, touched, m, v, lr, b1, omb1, b2, omb2, eps, c1, c2):
    """Adam over table entries touched this step; clears grads and flags.

    omb1/omb2 are (1-beta) pre-cast; c1/c2 the bias corrections
    1/(1-beta^t) at the global step count.
    """
    L, T, F = params.shape
    for l in range(L):
        for s in range(T):
            if touched[l, s]:
                for c in range(F):
                    g = grads[l, s, c]
                    mm = b1 * m[l, s, c] + omb1 * g
                    vv = b2 * v[l, s, c] + omb2 * g * g
                    m[l, s, c] = mm
                    v[l, s, c] = vv
                    params[l, s, c] -= lr * (mm * c1) / (np.sqrt(vv * c2) + eps)
                    grads[l, s, c] = g - g
                touched[l, s] = 0


@njit(cache=True, fastmath=True)
def relu_fwd(z):
    flat = z.reshape(z.size)
    for i in range(flat.size):
        if flat[i] < 0:
            flat[i] = flat[i] - flat[i]


@njit(cache=True, fastmath=True)
def relu_bwd(dz, h):
    fd = dz.reshape(dz.size)
    fh = h.reshape(h.size)
    for i in range(fd.size):
        if fh[i] <= 0:
            fd[i] = fd[i] - fd[i]
