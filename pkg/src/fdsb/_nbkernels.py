"""Numba-compiled kernels (preferred backend).

Loop mirrors of :mod:`fdsb._npkernels` with identical signatures,
masking semantics, tie-breaking and sentinel behavior.  See that module
for the conventions; agreement between the two backends is enforced by
the test suite.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)
NEG_INF = -np.inf


@njit(cache=True)
def _abs2(z):
    return z.real * z.real + z.imag * z.imag


@njit(cache=True)
def _mask_wv(w, v, act):
    K, N, L = w.shape
    M = v.shape[1]
    wm = np.zeros((K, N, L), dtype=np.complex128)
    vm = np.zeros((K, M), dtype=np.complex128)
    has = np.zeros(K, dtype=np.bool_)
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                has[k] = True
                for l in range(L):
                    wm[k, n, l] = w[k, n, l]
        if has[k]:
            for m in range(M):
                vm[k, m] = v[k, m]
    return wm, vm, has


@njit(cache=True)
def _core(wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si):
    K, N, L = wm.shape
    M = vm.shape[1]
    T = np.zeros((K, K), dtype=np.complex128)
    mm = np.zeros((K, K), dtype=np.complex128)
    for k in range(K):
        for i in range(K):
            accT = 0.0 + 0.0j
            for j in range(N):
                for l in range(L):
                    accT += h_us[k, j, l].conjugate() * wm[i, j, l]
            T[k, i] = accT
            accm = 0.0 + 0.0j
            for m in range(M):
                accm += h_um[k, m].conjugate() * vm[i, m]
            mm[k, i] = accm
    q = np.zeros((N, K), dtype=np.complex128)
    X = np.zeros((N, K), dtype=np.complex128)
    for n in range(N):
        for i in range(K):
            accq = 0.0 + 0.0j
            for m in range(M):
                accq += h_sm[n, m].conjugate() * vm[i, m]
            q[n, i] = accq
            accx = 0.0 + 0.0j
            for j in range(N):
                for l in range(L):
                    accx += h_ss[n, j, l].conjugate() * wm[i, j, l]
            X[n, i] = accx

    sig_a = np.zeros(K, dtype=np.complex128)
    phi = np.zeros(K)
    for k in range(K):
        sig_a[k] = T[k, k]
        p = 0.0
        for i in range(K):
            p += _abs2(mm[k, i])
            if i != k:
                p += _abs2(T[k, i])
        phi[k] = p

    si = np.zeros(N)
    xo = np.zeros(N)
    for n in range(N):
        s = 0.0
        x = 0.0
        for i in range(K):
            for l in range(L):
                s += _abs2(wm[i, n, l])
            if not act[i, n]:
                x += _abs2(X[n, i])
        si[n] = beta_si * s
        xo[n] = x

    sig_b = np.zeros((K, N), dtype=np.complex128)
    delta = np.zeros((K, N))
    imask = np.zeros((K, N, K), dtype=np.bool_)
    for k in range(K):
        for n in range(N):
            for i in range(K):
                imask[k, n, i] = (not act[i, n]) or later[k, i]
            if act[k, n]:
                d = 0.0
                for i in range(K):
                    if imask[k, n, i]:
                        d += _abs2(q[n, i])
                delta[k, n] = d + xo[n] + si[n]
                sig_b[k, n] = q[n, k]
    return T, mm, q, X, sig_a, sig_b, phi, delta, imask


@njit(cache=True)
def rates_core(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
               noise_u, noise_b):
    K, N, _ = w.shape
    wm, vm, _ = _mask_wv(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    access = np.zeros(K)
    bkh = np.zeros((K, N))
    for k in range(K):
        access[k] = math.log2(1.0 + _abs2(sig_a[k]) / (phi[k] + noise_u[k]))
        for n in range(N):
            if act[k, n]:
                bkh[k, n] = math.log2(
                    1.0 + _abs2(sig_b[k, n]) / (delta[k, n] + noise_b[n]))
    return access, bkh, phi, delta, sig_a, sig_b


@njit(cache=True)
def project(w, v, act, p_mbs, p_sbs):
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, _ = _mask_wv(w, v, act)
    w2 = wm.copy()
    for n in range(N):
        pw = 0.0
        for k in range(K):
            for l in range(L):
                pw += _abs2(wm[k, n, l])
        if pw > p_sbs[n]:
            sc = math.sqrt(p_sbs[n] / pw)
            for k in range(K):
                for l in range(L):
                    w2[k, n, l] = wm[k, n, l] * sc
    pv = 0.0
    for k in range(K):
        for m in range(M):
            pv += _abs2(vm[k, m])
    v2 = vm.copy()
    if pv > p_mbs:
        sc = math.sqrt(p_mbs / pv)
        for k in range(K):
            for m in range(M):
                v2[k, m] = vm[k, m] * sc
    return w2, v2


@njit(cache=True)
def sinrc_aux(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
              noise_u, noise_b):
    K, N, _ = w.shape
    wm, vm, _ = _mask_wv(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    u_a = np.zeros(K, dtype=np.complex128)
    u_b = np.zeros((K, N), dtype=np.complex128)
    for k in range(K):
        u_a[k] = sig_a[k] / (phi[k] + noise_u[k])
        for n in range(N):
            if act[k, n]:
                u_b[k, n] = sig_b[k, n] / (delta[k, n] + noise_b[n])
    return u_a, u_b


@njit(cache=True)
def wmmse_aux(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
              noise_u, noise_b):
    K, N, _ = w.shape
    wm, vm, _ = _mask_wv(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    alpha_a = np.zeros(K, dtype=np.complex128)
    rho_a = np.zeros(K)
    alpha_b = np.zeros((K, N), dtype=np.complex128)
    rho_b = np.ones((K, N))
    for k in range(K):
        den = _abs2(sig_a[k]) + phi[k] + noise_u[k]
        alpha_a[k] = sig_a[k] / den
        rho_a[k] = 1.0 / (1.0 - _abs2(sig_a[k]) / den)
        for n in range(N):
            if act[k, n]:
                den_b = _abs2(sig_b[k, n]) + delta[k, n] + noise_b[n]
                alpha_b[k, n] = sig_b[k, n] / den_b
                rho_b[k, n] = 1.0 / (1.0 - _abs2(sig_b[k, n]) / den_b)
    return alpha_a, rho_a, alpha_b, rho_b


@njit(cache=True)
def _bkh_grad_sinrc(gw, gv, k, n, cb, u, q, X, imask, wm, h_sm, h_ss,
                    act, beta_si):
    """Accumulate the gradient of one selected SINR-convexified backhaul
    bound (shared by the plain, stochastic and expected-Phi evals)."""
    K, N, L = wm.shape
    M = h_sm.shape[1]
    u2 = _abs2(u)
    for m in range(M):
        gv[k, m] += cb * 2.0 * u * h_sm[n, m]
    for i in range(K):
        if imask[k, n, i]:
            c = -cb * u2 * 2.0 * q[n, i]
            for m in range(M):
                gv[i, m] += c * h_sm[n, m]
        if not act[i, n]:
            cx = -cb * u2 * 2.0 * X[n, i]
            for j in range(N):
                for l in range(L):
                    gw[i, j, l] += cx * h_ss[n, j, l]
        csi = -cb * u2 * beta_si * 2.0
        for l in range(L):
            gw[i, n, l] += csi * wm[i, n, l]


@njit(cache=True)
def _bkh_grad_wmmse(gw, gv, k, n, cb, a, q, X, imask, wm, h_sm, h_ss,
                    act, beta_si):
    """Same for one selected WMMSE backhaul bound (cb includes rho/ln2)."""
    K, N, L = wm.shape
    M = h_sm.shape[1]
    a2 = _abs2(a)
    for i in range(K):
        if i == k or imask[k, n, i]:
            c = a2 * 2.0 * q[n, i]
            if i == k:
                c -= 2.0 * a
            for m in range(M):
                gv[i, m] += -cb * c * h_sm[n, m]
        if not act[i, n]:
            cx = -cb * a2 * 2.0 * X[n, i]
            for j in range(N):
                for l in range(L):
                    gw[i, j, l] += cx * h_ss[n, j, l]
        csi = -cb * a2 * beta_si * 2.0
        for l in range(L):
            gw[i, n, l] += csi * wm[i, n, l]


@njit(cache=True)
def _apply_masks(gw, gv, act, has):
    K, N, L = gw.shape
    M = gv.shape[1]
    for k in range(K):
        for n in range(N):
            if not act[k, n]:
                for l in range(L):
                    gw[k, n, l] = 0.0
        if not has[k]:
            for m in range(M):
                gv[k, m] = 0.0


@njit(cache=True)
def sinrc_eval(w, v, u_a, u_b, h_um, h_us, h_sm, h_ss, act, later, beta_si,
               noise_u, noise_b, weights):
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, has = _mask_wv(w, v, act)
    T, mm, q, X, sig_a, sig_b, phi, delta, imask = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)

    arg_a = np.zeros(K)
    arg_b = np.zeros((K, N))
    for k in range(K):
        arg_a[k] = 1.0 + 2.0 * (u_a[k].conjugate() * sig_a[k]).real \
            - _abs2(u_a[k]) * (phi[k] + noise_u[k])
        for n in range(N):
            if act[k, n]:
                arg_b[k, n] = 1.0 \
                    + 2.0 * (u_b[k, n].conjugate() * sig_b[k, n]).real \
                    - _abs2(u_b[k, n]) * (delta[k, n] + noise_b[n])

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    neg = False
    for k in range(K):
        if not has[k]:
            continue
        if arg_a[k] <= 0.0:
            per_user[k] = NEG_INF
            neg = True
            continue
        best = math.log2(arg_a[k])
        sel = -1
        for n in range(N):
            if act[k, n]:
                bv = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
                if bv < best:
                    best = bv
                    sel = n
        per_user[k] = best
        sels[k] = sel
        if best == NEG_INF:
            neg = True

    gw = np.zeros((K, N, L), dtype=np.complex128)
    gv = np.zeros((K, M), dtype=np.complex128)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            u = u_a[k]
            cb = weights[k] / (arg_a[k] * LN2)
            u2 = _abs2(u)
            for j in range(N):
                for l in range(L):
                    gw[k, j, l] += cb * 2.0 * u * h_us[k, j, l]
            for i in range(K):
                if i != k:
                    c = -cb * u2 * 2.0 * T[k, i]
                    for j in range(N):
                        for l in range(L):
                            gw[i, j, l] += c * h_us[k, j, l]
                cv = -cb * u2 * 2.0 * mm[k, i]
                for m in range(M):
                    gv[i, m] += cv * h_um[k, m]
        else:
            n = sels[k]
            cb = weights[k] / (arg_b[k, n] * LN2)
            _bkh_grad_sinrc(gw, gv, k, n, cb, u_b[k, n], q, X, imask, wm,
                            h_sm, h_ss, act, beta_si)

    _apply_masks(gw, gv, act, has)
    value = 0.0
    for k in range(K):
        value += weights[k] * per_user[k]
    return value, per_user, gw, gv


@njit(cache=True)
def wmmse_eval(w, v, alpha_a, rho_a, alpha_b, rho_b, h_um, h_us, h_sm, h_ss,
               act, later, beta_si, noise_u, noise_b, weights):
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, has = _mask_wv(w, v, act)
    T, mm, q, X, sig_a, sig_b, phi, delta, imask = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    for k in range(K):
        if not has[k]:
            continue
        e_a = (_abs2(sig_a[k]) + phi[k] + noise_u[k]) * _abs2(alpha_a[k]) \
            - 2.0 * (alpha_a[k].conjugate() * sig_a[k]).real + 1.0
        best = math.log2(rho_a[k]) + (1.0 - rho_a[k] * e_a) / LN2
        sel = -1
        for n in range(N):
            if act[k, n]:
                e_b = (_abs2(sig_b[k, n]) + delta[k, n] + noise_b[n]) \
                    * _abs2(alpha_b[k, n]) \
                    - 2.0 * (alpha_b[k, n].conjugate() * sig_b[k, n]).real + 1.0
                bv = math.log2(rho_b[k, n]) + (1.0 - rho_b[k, n] * e_b) / LN2
                if bv < best:
                    best = bv
                    sel = n
        per_user[k] = best
        sels[k] = sel

    gw = np.zeros((K, N, L), dtype=np.complex128)
    gv = np.zeros((K, M), dtype=np.complex128)
    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            a = alpha_a[k]
            cb = weights[k] * rho_a[k] / LN2
            a2 = _abs2(a)
            for i in range(K):
                c = a2 * 2.0 * T[k, i]
                if i == k:
                    c -= 2.0 * a
                for j in range(N):
                    for l in range(L):
                        gw[i, j, l] += -cb * c * h_us[k, j, l]
                cv = a2 * 2.0 * mm[k, i]
                for m in range(M):
                    gv[i, m] += -cb * cv * h_um[k, m]
        else:
            n = sels[k]
            cb = weights[k] * rho_b[k, n] / LN2
            _bkh_grad_wmmse(gw, gv, k, n, cb, alpha_b[k, n], q, X, imask, wm,
                            h_sm, h_ss, act, beta_si)

    _apply_masks(gw, gv, act, has)
    value = 0.0
    for k in range(K):
        value += weights[k] * per_user[k]
    return value, per_user, gw, gv


@njit(cache=True)
def _stoch_core(wm, vm, h_um, hist_h):
    Tn, K = hist_h.shape[0], hist_h.shape[1]
    N, L = hist_h.shape[2], hist_h.shape[3]
    M = vm.shape[1]
    mm = np.zeros((K, K), dtype=np.complex128)
    mbs_int = np.zeros(K)
    for k in range(K):
        for i in range(K):
            acc = 0.0 + 0.0j
            for m in range(M):
                acc += h_um[k, m].conjugate() * vm[i, m]
            mm[k, i] = acc
            mbs_int[k] += _abs2(acc)
    Th = np.zeros((Tn, K, K), dtype=np.complex128)
    phi_t = np.zeros((Tn, K))
    for t in range(Tn):
        for k in range(K):
            p = mbs_int[k]
            for i in range(K):
                acc = 0.0 + 0.0j
                for j in range(N):
                    for l in range(L):
                        acc += hist_h[t, k, j, l].conjugate() * wm[i, j, l]
                Th[t, k, i] = acc
                if i != k:
                    p += _abs2(acc)
            phi_t[t, k] = p
    return mm, Th, phi_t


@njit(cache=True)
def stoch_sinrc_eval(w, v, hist_u, hist_wt, hist_h, u_b, h_us_known, h_um,
                     h_sm, h_ss, act, later, beta_si, noise_u, noise_b,
                     weights, gamma):
    K, N, L = w.shape
    M = v.shape[1]
    Tn = hist_u.shape[0]
    wm, vm, has = _mask_wv(w, v, act)
    hk = np.zeros((K, N, L), dtype=np.complex128)
    s = np.zeros(K, dtype=np.complex128)
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                for l in range(L):
                    hk[k, n, l] = h_us_known[k, n, l]
                    s[k] += hk[k, n, l].conjugate() * wm[k, n, l]

    mm, Th, phi_t = _stoch_core(wm, vm, h_um, hist_h)
    arg_t = np.zeros((Tn, K))
    prox_t = np.zeros((Tn, K))
    for t in range(Tn):
        for k in range(K):
            arg_t[t, k] = 1.0 + 2.0 * (hist_u[t, k].conjugate() * s[k]).real \
                - _abs2(hist_u[t, k]) * (phi_t[t, k] + noise_u[k])
            p = 0.0
            for n in range(N):
                for l in range(L):
                    d = hist_wt[t, k, n, l] - wm[k, n, l]
                    p += _abs2(d)
            prox_t[t, k] = p

    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)
    arg_b = np.zeros((K, N))
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                arg_b[k, n] = 1.0 \
                    + 2.0 * (u_b[k, n].conjugate() * sig_b[k, n]).real \
                    - _abs2(u_b[k, n]) * (delta[k, n] + noise_b[n])

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    neg = False
    for k in range(K):
        if not has[k]:
            continue
        bad = False
        for t in range(Tn):
            if arg_t[t, k] <= 0.0:
                bad = True
        if bad:
            per_user[k] = NEG_INF
            neg = True
            continue
        acc = 0.0
        for t in range(Tn):
            acc += math.log2(arg_t[t, k]) - 0.5 * gamma * prox_t[t, k]
        best = acc / Tn
        sel = -1
        for n in range(N):
            if act[k, n]:
                bv = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
                if bv < best:
                    best = bv
                    sel = n
        per_user[k] = best
        sels[k] = sel
        if best == NEG_INF:
            neg = True

    gw = np.zeros((K, N, L), dtype=np.complex128)
    gv = np.zeros((K, M), dtype=np.complex128)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            csum = 0.0 + 0.0j
            u2sum = 0.0
            for t in range(Tn):
                cb_t = weights[k] / (Tn * arg_t[t, k] * LN2)
                u2_t = _abs2(hist_u[t, k])
                csum += cb_t * hist_u[t, k]
                u2sum += cb_t * u2_t
                for i in range(K):
                    if i == k:
                        continue
                    c = -cb_t * u2_t * 2.0 * Th[t, k, i]
                    for j in range(N):
                        for l in range(L):
                            gw[i, j, l] += c * hist_h[t, k, j, l]
            for n in range(N):
                for l in range(L):
                    gw[k, n, l] += 2.0 * csum * hk[k, n, l]
            for i in range(K):
                cv = -u2sum * 2.0 * mm[k, i]
                for m in range(M):
                    gv[i, m] += cv * h_um[k, m]
            for n in range(N):
                for l in range(L):
                    mean_wt = 0.0 + 0.0j
                    for t in range(Tn):
                        mean_wt += hist_wt[t, k, n, l]
                    mean_wt /= Tn
                    gw[k, n, l] += weights[k] * gamma * (mean_wt - wm[k, n, l])
        else:
            n = sels[k]
            cb = weights[k] / (arg_b[k, n] * LN2)
            _bkh_grad_sinrc(gw, gv, k, n, cb, u_b[k, n], q, X, imask, wm,
                            h_sm, h_ss, act, beta_si)

    _apply_masks(gw, gv, act, has)
    value = 0.0
    for k in range(K):
        value += weights[k] * per_user[k]
    return value, per_user, gw, gv


@njit(cache=True)
def stoch_wmmse_eval(w, v, hist_alpha, hist_rho, hist_wt, hist_h, alpha_b,
                     rho_b, h_us_known, h_um, h_sm, h_ss, act, later, beta_si,
                     noise_u, noise_b, weights, gamma):
    K, N, L = w.shape
    M = v.shape[1]
    Tn = hist_alpha.shape[0]
    wm, vm, has = _mask_wv(w, v, act)
    hk = np.zeros((K, N, L), dtype=np.complex128)
    s = np.zeros(K, dtype=np.complex128)
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                for l in range(L):
                    hk[k, n, l] = h_us_known[k, n, l]
                    s[k] += hk[k, n, l].conjugate() * wm[k, n, l]

    mm, Th, phi_t = _stoch_core(wm, vm, h_um, hist_h)

    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    for k in range(K):
        if not has[k]:
            continue
        acc = 0.0
        for t in range(Tn):
            a = hist_alpha[t, k]
            e_t = (_abs2(s[k]) + phi_t[t, k] + noise_u[k]) * _abs2(a) \
                - 2.0 * (a.conjugate() * s[k]).real + 1.0
            p = 0.0
            for n in range(N):
                for l in range(L):
                    d = hist_wt[t, k, n, l] - wm[k, n, l]
                    p += _abs2(d)
            acc += math.log2(hist_rho[t, k]) \
                + (1.0 - hist_rho[t, k] * e_t) / LN2 - 0.5 * gamma * p
        best = acc / Tn
        sel = -1
        for n in range(N):
            if act[k, n]:
                e_b = (_abs2(sig_b[k, n]) + delta[k, n] + noise_b[n]) \
                    * _abs2(alpha_b[k, n]) \
                    - 2.0 * (alpha_b[k, n].conjugate() * sig_b[k, n]).real + 1.0
                bv = math.log2(rho_b[k, n]) + (1.0 - rho_b[k, n] * e_b) / LN2
                if bv < best:
                    best = bv
                    sel = n
        per_user[k] = best
        sels[k] = sel

    gw = np.zeros((K, N, L), dtype=np.complex128)
    gv = np.zeros((K, M), dtype=np.complex128)
    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            cself = 0.0 + 0.0j
            a2sum = 0.0
            for t in range(Tn):
                cb_t = weights[k] * hist_rho[t, k] / (Tn * LN2)
                a_t = hist_alpha[t, k]
                a2_t = _abs2(a_t)
                cself += cb_t * (a2_t * 2.0 * s[k] - 2.0 * a_t)
                a2sum += cb_t * a2_t
                for i in range(K):
                    if i == k:
                        continue
                    c = -cb_t * a2_t * 2.0 * Th[t, k, i]
                    for j in range(N):
                        for l in range(L):
                            gw[i, j, l] += c * hist_h[t, k, j, l]
            for n in range(N):
                for l in range(L):
                    gw[k, n, l] += -cself * hk[k, n, l]
            for i in range(K):
                cv = -a2sum * 2.0 * mm[k, i]
                for m in range(M):
                    gv[i, m] += cv * h_um[k, m]
            for n in range(N):
                for l in range(L):
                    mean_wt = 0.0 + 0.0j
                    for t in range(Tn):
                        mean_wt += hist_wt[t, k, n, l]
                    mean_wt /= Tn
                    gw[k, n, l] += weights[k] * gamma * (mean_wt - wm[k, n, l])
        else:
            n = sels[k]
            cb = weights[k] * rho_b[k, n] / LN2
            _bkh_grad_wmmse(gw, gv, k, n, cb, alpha_b[k, n], q, X, imask, wm,
                            h_sm, h_ss, act, beta_si)

    _apply_masks(gw, gv, act, has)
    value = 0.0
    for k in range(K):
        value += weights[k] * per_user[k]
    return value, per_user, gw, gv


@njit(cache=True)
def _jensen_quads(wm, amat):
    """Aw[k,i,:] = A_k w_i (flattened) and quad[k,i] = w_i^H A_k w_i."""
    K = wm.shape[0]
    P = amat.shape[1]
    wflat = wm.reshape(K, P)
    Aw = np.zeros((K, K, P), dtype=np.complex128)
    quad = np.zeros((K, K))
    for k in range(K):
        for i in range(K):
            qv = 0.0
            for p in range(P):
                acc = 0.0 + 0.0j
                for r in range(P):
                    acc += amat[k, p, r] * wflat[i, r]
                Aw[k, i, p] = acc
                qv += (wflat[i, p].conjugate() * acc).real
            quad[k, i] = qv
    return Aw, quad


@njit(cache=True)
def jensen_phi(w, v, amat, h_um, act):
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, _ = _mask_wv(w, v, act)
    _, quad = _jensen_quads(wm, amat)
    phibar = np.zeros(K)
    for k in range(K):
        p = 0.0
        for i in range(K):
            acc = 0.0 + 0.0j
            for m in range(M):
                acc += h_um[k, m].conjugate() * vm[i, m]
            p += _abs2(acc)
            if i != k:
                p += quad[k, i]
        phibar[k] = p
    return phibar


@njit(cache=True)
def jensen_sinrc_eval(w, v, u_a, u_b, amat, h_us_known, h_um, h_sm, h_ss,
                      act, later, beta_si, noise_u, noise_b, weights):
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, has = _mask_wv(w, v, act)
    hk = np.zeros((K, N, L), dtype=np.complex128)
    s = np.zeros(K, dtype=np.complex128)
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                for l in range(L):
                    hk[k, n, l] = h_us_known[k, n, l]
                    s[k] += hk[k, n, l].conjugate() * wm[k, n, l]

    Aw, quad = _jensen_quads(wm, amat)
    mm = np.zeros((K, K), dtype=np.complex128)
    phibar = np.zeros(K)
    for k in range(K):
        p = 0.0
        for i in range(K):
            acc = 0.0 + 0.0j
            for m in range(M):
                acc += h_um[k, m].conjugate() * vm[i, m]
            mm[k, i] = acc
            p += _abs2(acc)
            if i != k:
                p += quad[k, i]
        phibar[k] = p

    arg_a = np.zeros(K)
    for k in range(K):
        arg_a[k] = 1.0 + 2.0 * (u_a[k].conjugate() * s[k]).real \
            - _abs2(u_a[k]) * (phibar[k] + noise_u[k])

    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)
    arg_b = np.zeros((K, N))
    for k in range(K):
        for n in range(N):
            if act[k, n]:
                arg_b[k, n] = 1.0 \
                    + 2.0 * (u_b[k, n].conjugate() * sig_b[k, n]).real \
                    - _abs2(u_b[k, n]) * (delta[k, n] + noise_b[n])

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    neg = False
    for k in range(K):
        if not has[k]:
            continue
        if arg_a[k] <= 0.0:
            per_user[k] = NEG_INF
            neg = True
            continue
        best = math.log2(arg_a[k])
        sel = -1
        for n in range(N):
            if act[k, n]:
                bv = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
                if bv < best:
                    best = bv
                    sel = n
        per_user[k] = best
        sels[k] = sel
        if best == NEG_INF:
            neg = True

    gw = np.zeros((K, N, L), dtype=np.complex128)
    gv = np.zeros((K, M), dtype=np.complex128)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            u = u_a[k]
            cb = weights[k] / (arg_a[k] * LN2)
            u2 = _abs2(u)
            for n in range(N):
                for l in range(L):
                    gw[k, n, l] += cb * 2.0 * u * hk[k, n, l]
            for i in range(K):
                if i != k:
                    c = -cb * u2 * 2.0
                    for n in range(N):
                        for l in range(L):
                            gw[i, n, l] += c * Aw[k, i, n * L + l]
                cv = -cb * u2 * 2.0 * mm[k, i]
                for m in range(M):
                    gv[i, m] += cv * h_um[k, m]
        else:
            n = sels[k]
            cb = weights[k] / (arg_b[k, n] * LN2)
            _bkh_grad_sinrc(gw, gv, k, n, cb, u_b[k, n], q, X, imask, wm,
                            h_sm, h_ss, act, beta_si)

    _apply_masks(gw, gv, act, has)
    value = 0.0
    for k in range(K):
        value += weights[k] * per_user[k]
    return value, per_user, gw, gv


@njit(cache=True)
def rate_samples_stats(w, v, h_um, h_samples, h_sm, h_ss, act, later,
                       beta_si, noise_u, noise_b, weights):
    S = h_samples.shape[0]
    K, N, L = w.shape
    M = v.shape[1]
    wm, vm, _ = _mask_wv(w, v, act)
    _, _, _, _, _, sig_b, _, delta, _ = _core(
        wm, vm, h_um, h_samples[0], h_sm, h_ss, act, later, beta_si)
    r_b = np.zeros(K)
    for k in range(K):
        best = np.inf
        found = False
        for n in range(N):
            if act[k, n]:
                found = True
                r = math.log2(
                    1.0 + _abs2(sig_b[k, n]) / (delta[k, n] + noise_b[n]))
                if r < best:
                    best = r
        r_b[k] = best if found else 0.0

    mbs_int = np.zeros(K)
    for k in range(K):
        for i in range(K):
            acc = 0.0 + 0.0j
            for m in range(M):
                acc += h_um[k, m].conjugate() * vm[i, m]
            mbs_int[k] += _abs2(acc)

    sum_acc = np.zeros(K)
    sumsq_acc = np.zeros(K)
    sum_end = np.zeros(K)
    sumsq_end = np.zeros(K)
    sum_ws = 0.0
    sumsq_ws = 0.0
    for t in range(S):
        ws = 0.0
        for k in range(K):
            sig = 0.0 + 0.0j
            phi = mbs_int[k]
            for i in range(K):
                acc = 0.0 + 0.0j
                for j in range(N):
                    for l in range(L):
                        acc += h_samples[t, k, j, l].conjugate() * wm[i, j, l]
                if i == k:
                    sig = acc
                else:
                    phi += _abs2(acc)
            r_a = math.log2(1.0 + _abs2(sig) / (phi + noise_u[k]))
            r = min(r_a, r_b[k])
            sum_acc[k] += r_a
            sumsq_acc[k] += r_a * r_a
            sum_end[k] += r
            sumsq_end[k] += r * r
            ws += weights[k] * r
        sum_ws += ws
        sumsq_ws += ws * ws
    return sum_acc, sumsq_acc, sum_end, sumsq_end, sum_ws, sumsq_ws
