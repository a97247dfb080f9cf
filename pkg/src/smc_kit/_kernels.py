"""Compiled full-run filter loops (numba).

These kernels exist so that run cost stays proportional to the particle count
all the way down to N=50: per-step interpreter overhead would otherwise
dominate small-N runs and distort the runtime benchmarks. Semantics mirror
the single-step functions in :mod:`smc_kit.filters` one-to-one.

All randomness is pre-drawn: kernels are pure functions of noise arrays.
Multinomial resampling consumes N+1 exponential spacings per step (their
normalized partial sums are the order statistics of N uniforms), giving an
O(N) inverse-CDF pass; ancestor counts are exactly multinomial, output slots
are ordered by ancestor. A kernel returns -1 on success or the 1-based time
index at which every weight vanished.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MULTINOMIAL = 0
SYSTEMATIC = 1

ALWAYS_RESAMPLE = -1.0  # sentinel for the ess-threshold argument


@njit(cache=True, inline="always")
def _normalize(lw, w):
    """Max-subtracted exp-normalize; returns 0.0 total on full degeneracy."""
    n = lw.shape[0]
    m = -np.inf
    for i in range(n):
        if lw[i] > m:
            m = lw[i]
    if m == -np.inf:
        return 0.0
    s = 0.0
    for i in range(n):
        w[i] = np.exp(lw[i] - m)
        s += w[i]
    for i in range(n):
        w[i] /= s
    return s


@njit(cache=True, inline="always")
def _ess(w):
    s = 0.0
    for i in range(w.shape[0]):
        s += w[i] * w[i]
    return 1.0 / s


@njit(cache=True, inline="always")
def _weighted_mean(w, x, out):
    n, d = x.shape
    for j in range(d):
        out[j] = 0.0
    for i in range(n):
        for j in range(d):
            out[j] += w[i] * x[i, j]


@njit(cache=True, inline="always")
def _ancestors(w, res_row, scheme, anc):
    """Fill ``anc`` with N nondecreasing ancestor indices drawn from ``w``."""
    n = w.shape[0]
    if scheme == SYSTEMATIC:
        u0 = res_row[0]
        acc = w[0]
        src = 0
        for j in range(n):
            t = (j + u0) / n
            while acc < t and src < n - 1:
                src += 1
                acc += w[src]
            anc[j] = src
    else:
        total = 0.0
        for j in range(n + 1):
            total += res_row[j]
        part = 0.0
        acc = w[0]
        src = 0
        for j in range(n):
            part += res_row[j]
            t = part / total
            while acc < t and src < n - 1:
                src += 1
                acc += w[src]
            anc[j] = src


@njit(cache=True, inline="always")
def _maybe_resample(w, x, xp, carry, res_row, scheme, ess_threshold, anc):
    """Resample xp into x (resetting carry) or pass through with carried weights."""
    n, d = xp.shape
    if ess_threshold >= 0.0 and _ess(w) >= ess_threshold * n:
        for i in range(n):
            carry[i] = np.log(w[i])
            for j in range(d):
                x[i, j] = xp[i, j]
        return
    _ancestors(w, res_row, scheme, anc)
    for i in range(n):
        carry[i] = 0.0
        src = anc[i]
        for j in range(d):
            x[i, j] = xp[src, j]


@njit(cache=True, nogil=True)
def bpf_kernel(
    propagate,
    loglik,
    params,
    x0,
    ys,
    regimes,
    prop_noise,
    res_draws,
    scheme,
    ess_threshold,
    estimates,
    ess_out,
    store,
    particles_out,
    weights_out,
):
    N, n = x0.shape
    K = ys.shape[0]
    x = x0.copy()
    xp = np.empty_like(x)
    lw = np.empty(N)
    w = np.empty(N)
    carry = np.zeros(N)
    anc = np.empty(N, dtype=np.int64)
    for kk in range(K):
        k = kk + 1
        for i in range(N):
            propagate(xp[i], x[i], k, regimes[kk, i], prop_noise[kk, i], params)
        for i in range(N):
            lw[i] = carry[i] + loglik(xp[i], ys[kk], k, params)
        if _normalize(lw, w) == 0.0:
            return k
        _weighted_mean(w, xp, estimates[kk])
        ess_out[kk] = _ess(w)
        if store:
            for i in range(N):
                weights_out[kk, i] = w[i]
                for j in range(n):
                    particles_out[kk, i, j] = xp[i, j]
        _maybe_resample(w, x, xp, carry, res_draws[kk], scheme, ess_threshold, anc)
    return -1


@njit(cache=True, nogil=True)
def apf_kernel(
    propagate,
    mean_fn,
    loglik,
    params,
    x0,
    ys,
    regimes,
    prop_noise,
    pilot_draws,
    res_draws,
    scheme,
    ess_threshold,
    estimates,
    ess_out,
    store,
    particles_out,
    weights_out,
):
    N, n = x0.shape
    K = ys.shape[0]
    x = x0.copy()
    xp = np.empty_like(x)
    pm = np.empty_like(x)
    pl = np.empty(N)  # pilot log-likelihoods (divisor of the second-stage weight)
    lw = np.empty(N)
    w1 = np.empty(N)
    w = np.empty(N)
    carry = np.zeros(N)
    anc = np.empty(N, dtype=np.int64)
    anc2 = np.empty(N, dtype=np.int64)
    for kk in range(K):
        k = kk + 1
        for i in range(N):
            mean_fn(pm[i], x[i], k, regimes[kk, i], params)
            pl[i] = loglik(pm[i], ys[kk], k, params)
            lw[i] = carry[i] + pl[i]
        if _normalize(lw, w1) == 0.0:
            return k
        _ancestors(w1, pilot_draws[kk], MULTINOMIAL, anc)
        for i in range(N):
            src = anc[i]
            propagate(xp[i], x[src], k, regimes[kk, src], prop_noise[kk, i], params)
            lw[i] = loglik(xp[i], ys[kk], k, params) - pl[src]
        if _normalize(lw, w) == 0.0:
            return k
        _weighted_mean(w, xp, estimates[kk])
        ess_out[kk] = _ess(w)
        if store:
            for i in range(N):
                weights_out[kk, i] = w[i]
                for j in range(n):
                    particles_out[kk, i, j] = xp[i, j]
        _maybe_resample(w, x, xp, carry, res_draws[kk], scheme, ess_threshold, anc2)
    return -1


@njit(cache=True, nogil=True)
def pbps_kernel(
    propagate,
    mean_fn,
    loglik,
    params,
    x0,
    ys,
    regimes,
    prop_noise,
    res_draws,
    stochastic_offspring,
    off_noise,
    scheme,
    ess_threshold,
    estimates,
    ess_out,
    store,
    particles_out,
    weights_out,
):
    N, n = x0.shape
    K = ys.shape[0]
    x = x0.copy()
    xp = np.empty_like(x)
    xo = np.empty_like(x)
    lw = np.empty(N)
    w = np.empty(N)
    carry = np.zeros(N)
    anc = np.empty(N, dtype=np.int64)
    for kk in range(K):
        k = kk + 1
        for i in range(N):
            propagate(xp[i], x[i], k, regimes[kk, i], prop_noise[kk, i], params)
        if kk + 1 < K:
            for i in range(N):
                if stochastic_offspring:
                    propagate(xo[i], xp[i], k + 1, regimes[kk, i], off_noise[kk, i], params)
                else:
                    mean_fn(xo[i], xp[i], k + 1, regimes[kk, i], params)
                lw[i] = (
                    carry[i]
                    + loglik(xp[i], ys[kk], k, params)
                    + loglik(xo[i], ys[kk + 1], k + 1, params)
                )
        else:
            for i in range(N):
                lw[i] = carry[i] + loglik(xp[i], ys[kk], k, params)
        if _normalize(lw, w) == 0.0:
            return k
        _weighted_mean(w, xp, estimates[kk])
        ess_out[kk] = _ess(w)
        if store:
            for i in range(N):
                weights_out[kk, i] = w[i]
                for j in range(n):
                    particles_out[kk, i, j] = xp[i, j]
        _maybe_resample(w, x, xp, carry, res_draws[kk], scheme, ess_threshold, anc)
    return -1


@njit(cache=True, nogil=True)
def dma_kernel(
    propagate,
    loglik,
    params,
    x0,
    ys,
    regime_values,
    labels0,
    prop_noise,
    prop2_noise,
    alloc_u,
    group_u,
    estimates,
    ess_out,
    regime_frac_out,
    store,
    particles_out,
    weights_out,
    labels_out,
):
    N, n = x0.shape
    K = ys.shape[0]
    L = regime_values.shape[0]
    x = x0.copy()
    xn = np.empty_like(x)
    cand = np.empty_like(x)
    labels = labels0.copy()
    new_labels = np.empty(N, dtype=np.int64)
    cl = np.empty(N)
    wc = np.empty(N)
    glw = np.empty(L)
    gw = np.empty(L)
    counts = np.empty(L, dtype=np.int64)
    group_cum = np.empty(N)
    group_members = np.empty(N, dtype=np.int64)
    for kk in range(K):
        k = kk + 1
        # candidate one-step propagation under the current labels
        for i in range(N):
            propagate(cand[i], x[i], k, regime_values[labels[i]], prop_noise[kk, i], params)
            cl[i] = loglik(cand[i], ys[kk], k, params)
        # per-model aggregate likelihood, log-sum-exp within each label group
        for l in range(L):
            m = -np.inf
            for i in range(N):
                if labels[i] == l and cl[i] > m:
                    m = cl[i]
            if m == -np.inf:
                glw[l] = -np.inf
            else:
                s = 0.0
                for i in range(N):
                    if labels[i] == l:
                        s += np.exp(cl[i] - m)
                glw[l] = m + np.log(s)
        if _normalize(glw, gw) == 0.0:
            return k
        # multinomial allocation of the N slots to models (zero-weight models skipped)
        for l in range(L):
            counts[l] = 0
        for j in range(N):
            u = alloc_u[kk, j]
            acc = 0.0
            pick = -1
            for l in range(L):
                if gw[l] <= 0.0:
                    continue
                acc += gw[l]
                if u <= acc:
                    pick = l
                    break
            if pick < 0:  # u beyond cumulative rounding tail: last positive model
                for l in range(L - 1, -1, -1):
                    if gw[l] > 0.0:
                        pick = l
                        break
            counts[pick] += 1
        # defensive: a model with slots but no member particles cannot occur
        # (its aggregate weight is exactly zero); reallocate to be safe
        for l in range(L):
            if counts[l] > 0:
                empty = True
                for i in range(N):
                    if labels[i] == l:
                        empty = False
                        break
                if empty:
                    best = -1
                    bw = -1.0
                    for l2 in range(L):
                        if l2 != l and gw[l2] > bw:
                            has = False
                            for i in range(N):
                                if labels[i] == l2:
                                    has = True
                                    break
                            if has:
                                best = l2
                                bw = gw[l2]
                    if best < 0:
                        return k
                    counts[best] += counts[l]
                    counts[l] = 0
        # per model: resample ancestors within the group by candidate likelihood,
        # relabel, and propagate afresh
        slot = 0
        for l in range(L):
            if counts[l] == 0:
                continue
            gsize = 0
            m = -np.inf
            for i in range(N):
                if labels[i] == l:
                    group_members[gsize] = i
                    gsize += 1
                    if cl[i] > m:
                        m = cl[i]
            acc = 0.0
            for g in range(gsize):
                acc += np.exp(cl[group_members[g]] - m)
                group_cum[g] = acc
            for c in range(counts[l]):
                u = group_u[kk, slot] * acc
                lo = 0
                hi = gsize - 1
                while lo < hi:
                    mid = (lo + hi) // 2
                    if group_cum[mid] < u:
                        lo = mid + 1
                    else:
                        hi = mid
                src = group_members[lo]
                propagate(xn[slot], x[src], k, regime_values[l], prop2_noise[kk, slot], params)
                new_labels[slot] = l
                slot += 1
        # output cloud is uniformly weighted (the listing applies no correction here)
        for j in range(n):
            estimates[kk, j] = 0.0
        for i in range(N):
            for j in range(n):
                estimates[kk, j] += xn[i, j] / N
        _normalize(cl, wc)  # nonzero: the model-weight check above passed
        ess_out[kk] = _ess(wc)
        for l in range(L):
            regime_frac_out[kk, l] = counts[l] / N
        if store:
            for i in range(N):
                weights_out[kk, i] = 1.0 / N
                labels_out[kk, i] = new_labels[i]
                for j in range(n):
                    particles_out[kk, i, j] = xn[i, j]
        for i in range(N):
            labels[i] = new_labels[i]
            for j in range(n):
                x[i, j] = xn[i, j]
    return -1
