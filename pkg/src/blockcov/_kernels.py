"""Compiled inner loops for the partition sampler.

Partition state is held as 0-based compact labels plus block aggregates:
``C[u, v] = sum_{i in B_u, j in B_v} G[i, j]`` (block-sum Gram), ``d[u]`` (sum of
``G[i, i]`` over B_u) and ``sizes``. Buffers are sized ``p + 1`` so a candidate new
block always fits. All randomness arrives as pre-drawn uniforms so the kernels are
deterministic functions of their inputs.

Prior parameters are packed into a float vector ``prm``:
``[nu0, h_outer, h_lin, h_sq, s0, lam0, gprior, rho]``. The scaled prior scale
``H = D^{1/2} (nu0 A0) D^{1/2}`` (``D = diag(sizes)``) is
``h_outer * p p' + diag(h_lin * p + h_sq * p^2)``, or ``C / n`` for the g-prior.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

P_NU0, P_HOUT, P_HLIN, P_HSQ, P_S0, P_LAM0, P_G, P_RHO = range(8)
_LOG_PI = math.log(math.pi)
_LOG_2PI = math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


@njit(cache=True)
def lmvgamma(a, k):
    out = 0.25 * k * (k - 1) * _LOG_PI
    for j in range(k):
        out += math.lgamma(a - 0.5 * j)
    return out


@njit(cache=True)
def chol_logdet(M, k, work):
    """log|M[:k, :k]| via Cholesky into ``work``; -inf if not positive definite."""
    for i in range(k):
        for j in range(i + 1):
            s = M[i, j]
            for m in range(j):
                s -= work[i, m] * work[j, m]
            if i == j:
                if not s > 0.0:
                    return -np.inf
                work[i, i] = math.sqrt(s)
            else:
                work[i, j] = s / work[j, j]
    out = 0.0
    for i in range(k):
        out += 2.0 * math.log(work[i, i])
    return out


@njit(cache=True)
def log_ml(C, d, sizes, k, n, P, prm, work):
    """log p(Y | B) for the k blocks held in C, d, sizes over P variables."""
    nu0 = prm[P_NU0]
    gprior = prm[P_G] > 0.5
    H = work[0]
    L = work[1]
    HC = work[2]
    logp = 0.0
    for u in range(k):
        logp += math.log(sizes[u])
    if gprior:
        for u in range(k):
            for v in range(k):
                H[u, v] = C[u, v] / n
    else:
        for u in range(k):
            pu = sizes[u]
            for v in range(k):
                H[u, v] = prm[P_HOUT] * pu * sizes[v]
            H[u, u] += prm[P_HLIN] * pu + prm[P_HSQ] * pu * pu
    for u in range(k):
        for v in range(k):
            HC[u, v] = H[u, v] + C[u, v]
    ld0 = chol_logdet(H, k, L)
    ldn = chol_logdet(HC, k, L)
    if ld0 == -np.inf or ldn == -np.inf:
        return -np.inf
    ld0 -= logp
    ldn -= logp
    df0 = nu0 + k + 1.0
    dfn = df0 + n
    out = -0.5 * n * P * _LOG_2PI + 0.5 * n * k * _LOG2
    out += lmvgamma(0.5 * dfn, k) - lmvgamma(0.5 * df0, k)
    out += 0.5 * df0 * ld0 - 0.5 * dfn * ldn
    for u in range(k):
        pu = sizes[u]
        if pu < 2:
            continue
        q = d[u] - C[u, u] / pu
        if q < 0.0:
            q = 0.0
        if gprior:
            s0 = pu - 1.0
            b0 = 0.5 * q / n
        else:
            s0 = prm[P_S0]
            b0 = 0.5 * s0 * prm[P_LAM0]
        if not b0 > 0.0:
            return -np.inf
        a0 = 0.5 * (s0 + 2.0)
        an = a0 + 0.5 * n * (pu - 1.0)
        bn = b0 + 0.5 * q
        out += a0 * math.log(b0) - an * math.log(bn) + math.lgamma(an) - math.lgamma(a0)
    return out


@njit(cache=True)
def block_stats(G, labels, k, C, d, sizes):
    """Fill C, d, sizes from scratch for the given compact labels."""
    p = labels.shape[0]
    for u in range(k):
        d[u] = 0.0
        sizes[u] = 0.0
        for v in range(k):
            C[u, v] = 0.0
    for i in range(p):
        a = labels[i]
        sizes[a] += 1.0
        d[a] += G[i, i]
        for j in range(p):
            C[a, labels[j]] += G[i, j]


@njit(cache=True)
def _log_rising(rho, m):
    return math.lgamma(rho + m) - math.lgamma(rho)


@njit(cache=True)
def log_prior_partition(sizes, k, logV, rho):
    out = logV[k]
    for u in range(k):
        out += _log_rising(rho, sizes[u])
    return out


@njit(cache=True)
def _add_item(C, d, sizes, k, slot, w, gii):
    # w[u] = sum of G[j, i] over current members j of slot u (i not yet included)
    for v in range(k):
        C[slot, v] += w[v]
        C[v, slot] += w[v]
    C[slot, slot] += gii
    d[slot] += gii
    sizes[slot] += 1.0


@njit(cache=True)
def _copy_state(C, d, sizes, k, C2, d2, s2):
    for u in range(k):
        d2[u] = d[u]
        s2[u] = sizes[u]
        for v in range(k):
            C2[u, v] = C[u, v]


@njit(cache=True)
def _pick(logw, m, u):
    mx = -np.inf
    for c in range(m):
        if logw[c] > mx:
            mx = logw[c]
    if mx == -np.inf:
        return -1
    tot = 0.0
    for c in range(m):
        tot += math.exp(logw[c] - mx)
    target = u * tot
    acc = 0.0
    for c in range(m):
        acc += math.exp(logw[c] - mx)
        if target < acc:
            return c
    # guard against round-off at the top end: last candidate with positive weight
    for c in range(m - 1, -1, -1):
        if logw[c] > -np.inf:
            return c
    return -1


@njit(cache=True)
def gibbs_sweep(G, n, labels, k, prm, logV, unif, C, d, sizes, work):
    """One systematic scan of label updates; returns the new block count."""
    p = labels.shape[0]
    rho = prm[P_RHO]
    block_stats(G, labels, k, C, d, sizes)
    w = np.zeros(p + 1)
    logw = np.empty(p + 1)
    C2 = np.empty_like(C)
    d2 = np.empty_like(d)
    s2 = np.empty_like(sizes)
    for i in range(p):
        gii = G[i, i]
        for u in range(k + 1):
            w[u] = 0.0
        for j in range(p):
            w[labels[j]] += G[j, i]
        a = labels[i]
        # take i out of block a
        for v in range(k):
            C[a, v] -= w[v]
            C[v, a] -= w[v]
        C[a, a] += gii
        d[a] -= gii
        sizes[a] -= 1.0
        w[a] -= gii
        if sizes[a] == 0.0:
            last = k - 1
            if a != last:
                for v in range(k):
                    C[a, v] = C[last, v]
                for v in range(k):
                    C[v, a] = C[v, last]
                C[a, a] = C[last, last]
                d[a] = d[last]
                sizes[a] = sizes[last]
                w[a] = w[last]
                for j in range(p):
                    if labels[j] == last:
                        labels[j] = a
            k -= 1
        # k is now k^- ; score the k^- + 1 candidates
        for u in range(k):
            _copy_state(C, d, sizes, k, C2, d2, s2)
            _add_item(C2, d2, s2, k, u, w, gii)
            logw[u] = math.log(sizes[u] + rho) + log_ml(C2, d2, s2, k, n, p, prm, work)
        _copy_state(C, d, sizes, k, C2, d2, s2)
        for v in range(k):
            C2[k, v] = w[v]
            C2[v, k] = w[v]
        C2[k, k] = gii
        d2[k] = gii
        s2[k] = 1.0
        if k == 0:
            logw[k] = 0.0  # i was alone: a new block is the only option
        else:
            logw[k] = (
                math.log(rho) + logV[k + 1] - logV[k]
                + log_ml(C2, d2, s2, k + 1, n, p, prm, work)
            )
        c = _pick(logw, k + 1, unif[i])
        if c < 0:
            raise FloatingPointError("all label weights are zero or non-finite")
        if c == k:
            for v in range(k):
                C[k, v] = 0.0
                C[v, k] = 0.0
            C[k, k] = 0.0
            d[k] = 0.0
            sizes[k] = 0.0
            w[k] = 0.0
            k += 1
        _add_item(C, d, sizes, k, c, w, gii)
        labels[i] = c
    block_stats(G, labels, k, C, d, sizes)
    return k


@njit(cache=True)
def _partial_alloc(G, n, P, prm, rho, wl, order, m, slot_i, slot_j, kk,
                   C, d, sizes, unif, forced, work):
    """Sequentially allocate ``order[:m]`` between two seed slots.

    ``wl`` holds working slot labels (-1 for unallocated); C, d, sizes describe only
    the allocated items. With ``forced`` non-null the allocation follows it and only
    the log proposal probability is accumulated. Returns that log probability.
    """
    p = wl.shape[0]
    w = np.zeros(kk)
    C2 = np.empty_like(C)
    d2 = np.empty_like(d)
    s2 = np.empty_like(sizes)
    logq = 0.0
    for t in range(m):
        l = order[t]
        gll = G[l, l]
        for u in range(kk):
            w[u] = 0.0
        for j in range(p):
            if wl[j] >= 0:
                w[wl[j]] += G[j, l]
        _copy_state(C, d, sizes, kk, C2, d2, s2)
        _add_item(C2, d2, s2, kk, slot_i, w, gll)
        lw_i = math.log(sizes[slot_i] + rho) + log_ml(C2, d2, s2, kk, n, P, prm, work)
        _copy_state(C, d, sizes, kk, C2, d2, s2)
        _add_item(C2, d2, s2, kk, slot_j, w, gll)
        lw_j = math.log(sizes[slot_j] + rho) + log_ml(C2, d2, s2, kk, n, P, prm, work)
        mx = max(lw_i, lw_j)
        if mx == -np.inf:
            lpi = math.log(0.5)
            lpj = lpi
        else:
            lse = mx + math.log(math.exp(lw_i - mx) + math.exp(lw_j - mx))
            lpi = lw_i - lse
            lpj = lw_j - lse
        if forced[0] >= -1:
            to_i = forced[l] == 0
        else:
            to_i = unif[t] < math.exp(lpi)
        if to_i:
            logq += lpi
            _add_item(C, d, sizes, kk, slot_i, w, gll)
            wl[l] = slot_i
        else:
            logq += lpj
            _add_item(C, d, sizes, kk, slot_j, w, gll)
            wl[l] = slot_j
        P += 1
    return logq


@njit(cache=True)
def sams_step(G, n, labels, k, prm, logV, unif, C, d, sizes, work):
    """One SAMS merge/split proposal.

    ``unif`` needs at least ``2 * p + 3`` entries. Returns
    ``(new_k, accepted, was_split, log_acceptance)``; labels and aggregates are
    untouched on rejection.
    """
    p = labels.shape[0]
    rho = prm[P_RHO]
    i = int(unif[0] * p)
    if i >= p:
        i = p - 1
    j = int(unif[1] * (p - 1))
    if j >= p - 1:
        j = p - 2
    if j >= i:
        j += 1
    a = labels[i]
    b = labels[j]
    # union of the seeds' blocks minus the seeds, in random order
    order = np.empty(p, dtype=np.int64)
    m = 0
    for l in range(p):
        if l != i and l != j and (labels[l] == a or labels[l] == b):
            order[m] = l
            m += 1
    for t in range(m - 1, 0, -1):
        r = int(unif[2 + t] * (t + 1))
        if r > t:
            r = t
        tmp = order[t]
        order[t] = order[r]
        order[r] = tmp

    block_stats(G, labels, k, C, d, sizes)
    cur = log_prior_partition(sizes, k, logV, rho) + log_ml(C, d, sizes, k, n, p, prm, work)

    split = a == b
    kk = k + 1 if split else k
    # working state: other blocks intact; seeds in slot_i = a and slot_j
    wl = labels.copy()
    slot_i = a
    if split:
        slot_j = k
    else:
        slot_j = b
    forced = np.full(p, -2, dtype=np.int64)
    if not split:
        for l in range(p):
            forced[l] = 0 if labels[l] == a else 1
    for t in range(m):
        wl[order[t]] = -1
    wl[i] = slot_i
    wl[j] = slot_j
    Cw = np.zeros_like(C)
    dw = np.zeros_like(d)
    sw = np.zeros_like(sizes)
    _masked_stats(G, wl, kk, Cw, dw, sw)
    P0 = p - m
    logq = _partial_alloc(G, n, P0, prm, rho, wl, order, m, slot_i, slot_j, kk,
                          Cw, dw, sw, unif[2 + p:], forced, work)
    if split:
        prop = log_prior_partition(sw, kk, logV, rho) + log_ml(Cw, dw, sw, kk, n, p, prm, work)
        log_acc = prop - cur - logq
    else:
        # merged state: slot b folded into a, last block moved into b
        lab2 = labels.copy()
        for l in range(p):
            if lab2[l] == b:
                lab2[l] = a
        last = k - 1
        if b != last:
            for l in range(p):
                if lab2[l] == last:
                    lab2[l] = b
        block_stats(G, lab2, k - 1, Cw, dw, sw)
        prop = log_prior_partition(sw, k - 1, logV, rho) + log_ml(Cw, dw, sw, k - 1, n, p, prm, work)
        log_acc = prop - cur + logq
    accept = math.log(unif[2 + 2 * p]) < log_acc if unif[2 + 2 * p] > 0.0 else True
    if not accept:
        block_stats(G, labels, k, C, d, sizes)
        return k, False, split, log_acc
    if split:
        for l in range(p):
            labels[l] = wl[l]
        k = k + 1
    else:
        for l in range(p):
            labels[l] = lab2[l]
        k = k - 1
    block_stats(G, labels, k, C, d, sizes)
    return k, True, split, log_acc


@njit(cache=True)
def _masked_stats(G, wl, k, C, d, sizes):
    p = wl.shape[0]
    for u in range(k):
        d[u] = 0.0
        sizes[u] = 0.0
        for v in range(k):
            C[u, v] = 0.0
    for i in range(p):
        a = wl[i]
        if a < 0:
            continue
        sizes[a] += 1.0
        d[a] += G[i, i]
        for j in range(p):
            if wl[j] >= 0:
                C[a, wl[j]] += G[i, j]
