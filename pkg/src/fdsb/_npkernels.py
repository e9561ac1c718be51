"""Pure-numpy kernels (fallback backend).

Implements the hot numerical paths: exact rate evaluation, the two
concave lower-bound families (SINR-convexification and WMMSE) with
subgradients, their stochastic/averaged variants, the expected-
interference quadratic form, feasibility projection, and batched
Monte Carlo rate evaluation.

Conventions shared with the numba backend (_nbkernels):

* every kernel masks the variables internally: access beamformers are
  restricted to active (user, SBS) pairs and backhaul beamformers to
  users with a nonempty cluster, so values/gradients are functions on
  the feasible subspace regardless of what the caller passes in;
* gradients of real scalars w.r.t. complex vectors are returned as
  g = d/dRe + 1j * d/dIm, so stepping x + t*g ascends and real-coordinate
  finite differences match the entries of g directly;
* rates and bounds are log base 2 (bits/s/Hz);
* a log argument <= 0 in a SINR-convexified bound yields the -inf
  sentinel as the total value (gradients are returned zeroed);
* per-(user, SBS) outputs are 0 at inactive pairs.
"""

import math

import numpy as np

LN2 = math.log(2.0)
NEG_INF = -np.inf


def _masked(w, v, act):
    has = act.any(axis=1)
    wm = w * act[:, :, None]
    vm = v * has[:, None]
    return wm, vm, has


def _core(wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si):
    """Linear terms and interference aggregates used by every family.

    T[k,i]  - access-channel response at user k to user i's SBS signals
    mm[k,i] - response at user k to backhaul beam i
    q[n,i]  - response at SBS n to backhaul beam i
    X[n,i]  - response at SBS n to user i's SBS signals (cross-link)
    """
    T = np.einsum("kjl,ijl->ki", h_us.conj(), wm)
    mm = np.einsum("km,im->ki", h_um.conj(), vm)
    q = np.einsum("nm,im->ni", h_sm.conj(), vm)
    X = np.einsum("njl,ijl->ni", h_ss.conj(), wm)

    sig_a = np.diagonal(T).copy()
    phi = (np.abs(mm) ** 2).sum(axis=1) + (np.abs(T) ** 2).sum(axis=1) \
        - np.abs(sig_a) ** 2

    q2 = np.abs(q) ** 2                                   # (N, K)
    # interferers of (k, n): users outside K_n plus served users decoded later
    imask = (~act.T)[None, :, :] | later[:, None, :]       # (K, N, K)
    d1 = np.einsum("kni,ni->kn", imask.astype(np.float64), q2)
    d2 = ((np.abs(X) ** 2) * (~act.T)).sum(axis=1)         # (N,)
    si = beta_si * (np.abs(wm) ** 2).sum(axis=(0, 2))      # (N,)
    delta = (d1 + d2[None, :] + si[None, :]) * act
    sig_b = q.T * act
    return T, mm, q, X, sig_a, sig_b, phi, delta, imask


def rates_core(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
               noise_u, noise_b):
    """Exact per-user access rates and per-(user, SBS) backhaul rates."""
    wm, vm, _ = _masked(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    access = np.log2(1.0 + np.abs(sig_a) ** 2 / (phi + noise_u))
    bkh = np.log2(1.0 + np.abs(sig_b) ** 2 / (delta + noise_b[None, :])) * act
    return access, bkh, phi, delta, sig_a, sig_b


def project(w, v, act, p_mbs, p_sbs):
    """Euclidean projection onto the zero-pattern + per-BS power balls."""
    wm, vm, _ = _masked(w, v, act)
    pw = (np.abs(wm) ** 2).sum(axis=(0, 2))
    scale = np.ones_like(pw)
    over = pw > p_sbs
    scale[over] = np.sqrt(p_sbs[over] / pw[over])
    w2 = wm * scale[None, :, None]
    pv = (np.abs(vm) ** 2).sum()
    v2 = vm if pv <= p_mbs else vm * math.sqrt(p_mbs / pv)
    return w2, v2.copy()


def sinrc_aux(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
              noise_u, noise_b):
    """Scalar MMSE receive coefficients: the optimal expansion auxiliaries."""
    wm, vm, _ = _masked(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    u_a = sig_a / (phi + noise_u)
    u_b = sig_b / (delta + noise_b[None, :]) * act
    return u_a, u_b


def wmmse_aux(w, v, h_um, h_us, h_sm, h_ss, act, later, beta_si,
              noise_u, noise_b):
    """MMSE receivers and inverse-MSE weights for both hops."""
    wm, vm, _ = _masked(w, v, act)
    _, _, _, _, sig_a, sig_b, phi, delta, _ = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)
    den_a = np.abs(sig_a) ** 2 + phi + noise_u
    alpha_a = sig_a / den_a
    e_a = 1.0 - np.abs(sig_a) ** 2 / den_a
    rho_a = 1.0 / e_a
    den_b = np.abs(sig_b) ** 2 + delta + noise_b[None, :]
    alpha_b = sig_b / den_b * act
    e_b = 1.0 - np.abs(sig_b) ** 2 / den_b
    rho_b = np.where(act, 1.0 / e_b, 1.0)
    return alpha_a, rho_a, alpha_b, rho_b


def _select_min(access_val, b_vals, active_idx):
    """Min over {access, active backhaul bounds}; access wins ties, then
    the lowest SBS index."""
    min_val = access_val
    sel = -1
    for n in active_idx:
        if b_vals[n] < min_val:
            min_val = b_vals[n]
            sel = n
    return min_val, sel


def _backhaul_args(u_b, sig_b, delta, noise_b, act):
    """Log arguments of the SINR-convexified backhaul bounds, 0 inactive."""
    arg = 1.0 + 2.0 * (u_b.conj() * sig_b).real \
        - np.abs(u_b) ** 2 * (delta + noise_b[None, :])
    return np.where(act, arg, 0.0)


def sinrc_eval(w, v, u_a, u_b, h_um, h_us, h_sm, h_ss, act, later, beta_si,
               noise_u, noise_b, weights):
    """Value, per-user bounds and a subgradient of the SINR-convexified
    composite lower bound (min of access/backhaul bounds per user)."""
    K, N, L = w.shape
    wm, vm, has = _masked(w, v, act)
    T, mm, q, X, sig_a, sig_b, phi, delta, imask = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)

    arg_a = 1.0 + 2.0 * (u_a.conj() * sig_a).real \
        - np.abs(u_a) ** 2 * (phi + noise_u)
    arg_b = _backhaul_args(u_b, sig_b, delta, noise_b, act)

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)     # -2: skip, -1: access, n: backhaul
    neg = False
    for k in range(K):
        active = np.nonzero(act[k])[0]
        if active.size == 0:
            continue
        if arg_a[k] <= 0.0:
            per_user[k] = NEG_INF
            neg = True
            continue
        a_val = math.log2(arg_a[k])
        b_vals = np.full(N, np.inf)
        for n in active:
            b_vals[n] = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
        per_user[k], sels[k] = _select_min(a_val, b_vals, active)
        if per_user[k] == NEG_INF:
            neg = True

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            u = u_a[k]
            cb = weights[k] / (arg_a[k] * LN2)
            gw[k] += (cb * 2.0 * u) * h_us[k]
            coef = (-cb * np.abs(u) ** 2 * 2.0) * T[k]
            coef[k] = 0.0
            gw += coef[:, None, None] * h_us[k][None, :, :]
            gv += ((-cb * np.abs(u) ** 2 * 2.0) * mm[k])[:, None] * h_um[k][None, :]
        else:
            n = sels[k]
            u = u_b[k, n]
            cb = weights[k] / (arg_b[k, n] * LN2)
            u2 = np.abs(u) ** 2
            gv[k] += (cb * 2.0 * u) * h_sm[n]
            cv = (-cb * u2 * 2.0) * (q[n] * imask[k, n])
            gv += cv[:, None] * h_sm[n][None, :]
            cw = (-cb * u2 * 2.0) * (X[n] * (~act[:, n]))
            gw += cw[:, None, None] * h_ss[n][None, :, :]
            gw[:, n, :] += (-cb * u2 * beta_si * 2.0) * wm[:, n, :]

    gw *= act[:, :, None]
    gv *= has[:, None]
    value = float(np.dot(weights, per_user))
    return value, per_user, gw, gv


def wmmse_eval(w, v, alpha_a, rho_a, alpha_b, rho_b, h_um, h_us, h_sm, h_ss,
               act, later, beta_si, noise_u, noise_b, weights):
    """Value, per-user bounds and a subgradient of the WMMSE composite
    lower bound (globally finite, quadratic in the beamformers)."""
    K, N, L = w.shape
    wm, vm, has = _masked(w, v, act)
    T, mm, q, X, sig_a, sig_b, phi, delta, imask = _core(
        wm, vm, h_um, h_us, h_sm, h_ss, act, later, beta_si)

    e_a = (np.abs(sig_a) ** 2 + phi + noise_u) * np.abs(alpha_a) ** 2 \
        - 2.0 * (alpha_a.conj() * sig_a).real + 1.0
    val_a = np.log2(rho_a) + (1.0 - rho_a * e_a) / LN2
    e_b = (np.abs(sig_b) ** 2 + delta + noise_b[None, :]) * np.abs(alpha_b) ** 2 \
        - 2.0 * (alpha_b.conj() * sig_b).real + 1.0
    val_b = np.log2(rho_b) + (1.0 - rho_b * e_b) / LN2

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    for k in range(K):
        active = np.nonzero(act[k])[0]
        if active.size == 0:
            continue
        b_vals = np.where(act[k], val_b[k], np.inf)
        per_user[k], sels[k] = _select_min(val_a[k], b_vals, active)

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            a = alpha_a[k]
            cb = weights[k] * rho_a[k] / LN2     # multiplies -grad(e)
            ce = (np.abs(a) ** 2 * 2.0) * T[k]
            ce[k] -= 2.0 * a
            gw += (-cb) * ce[:, None, None] * h_us[k][None, :, :]
            gv += (-cb) * ((np.abs(a) ** 2 * 2.0) * mm[k])[:, None] * h_um[k][None, :]
        else:
            n = sels[k]
            a = alpha_b[k, n]
            cb = weights[k] * rho_b[k, n] / LN2
            a2 = np.abs(a) ** 2
            jmask = imask[k, n].copy()
            jmask[k] = True                       # signal power also in e
            cv = (a2 * 2.0) * (q[n] * jmask)
            cv[k] -= 2.0 * a
            gv += (-cb) * cv[:, None] * h_sm[n][None, :]
            cw = (a2 * 2.0) * (X[n] * (~act[:, n]))
            gw += (-cb) * cw[:, None, None] * h_ss[n][None, :, :]
            gw[:, n, :] += (-cb) * (a2 * beta_si * 2.0) * wm[:, n, :]

    gw *= act[:, :, None]
    gv *= has[:, None]
    value = float(np.dot(weights, per_user))
    return value, per_user, gw, gv


def _stoch_phis(wm, vm, h_um, hist_h):
    """Per-sample interference aggregates at every user.

    Returns Th (T,K,K) channel responses under each stored realization
    and phi_t (T,K)."""
    mm = np.einsum("km,im->ki", h_um.conj(), vm)
    mbs_int = (np.abs(mm) ** 2).sum(axis=1)
    Th = np.einsum("tkjl,ijl->tki", hist_h.conj(), wm)
    sig_t = np.einsum("tkk->tk", Th)
    phi_t = mbs_int[None, :] + (np.abs(Th) ** 2).sum(axis=2) \
        - np.abs(sig_t) ** 2
    return mm, Th, phi_t


def stoch_sinrc_eval(w, v, hist_u, hist_wt, hist_h, u_b, h_us_known, h_um,
                     h_sm, h_ss, act, later, beta_si, noise_u, noise_b,
                     weights, gamma):
    """Running-average strongly-concave access bound (one term per stored
    realization) min-composed with the current backhaul bounds."""
    K, N, L = w.shape
    Tn = hist_u.shape[0]
    wm, vm, has = _masked(w, v, act)
    hk = h_us_known * act[:, :, None]

    s = np.einsum("kjl,kjl->k", hk.conj(), wm)
    mm, Th, phi_t = _stoch_phis(wm, vm, h_um, hist_h)
    arg_t = 1.0 + 2.0 * (hist_u.conj() * s[None, :]).real \
        - np.abs(hist_u) ** 2 * (phi_t + noise_u[None, :])
    diff = hist_wt - wm[None, :, :, :]
    prox_t = (np.abs(diff) ** 2).sum(axis=(2, 3))          # (T, K)

    # backhaul bounds use the exact (fully known) backhaul channels
    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)
    arg_b = _backhaul_args(u_b, sig_b, delta, noise_b, act)

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    neg = False
    for k in range(K):
        active = np.nonzero(act[k])[0]
        if active.size == 0:
            continue
        if np.any(arg_t[:, k] <= 0.0):
            per_user[k] = NEG_INF
            neg = True
            continue
        a_val = float(np.mean(np.log2(arg_t[:, k]) - 0.5 * gamma * prox_t[:, k]))
        b_vals = np.full(N, np.inf)
        for n in active:
            b_vals[n] = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
        per_user[k], sels[k] = _select_min(a_val, b_vals, active)
        if per_user[k] == NEG_INF:
            neg = True

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            cb_t = weights[k] / (Tn * arg_t[:, k] * LN2)    # (T,)
            u2_t = np.abs(hist_u[:, k]) ** 2
            gw[k] += (2.0 * np.dot(cb_t, hist_u[:, k])) * hk[k]
            Ct = (-cb_t * u2_t * 2.0)[:, None] * Th[:, k, :]
            Ct[:, k] = 0.0
            gw += np.einsum("ti,tjl->ijl", Ct, hist_h[:, k, :, :])
            cv = (-(cb_t * u2_t).sum() * 2.0) * mm[k]
            gv += cv[:, None] * h_um[k][None, :]
            gw[k] += (weights[k] * gamma) * (hist_wt[:, k].mean(axis=0) - wm[k])
        else:
            n = sels[k]
            u = u_b[k, n]
            cb = weights[k] / (arg_b[k, n] * LN2)
            u2 = np.abs(u) ** 2
            gv[k] += (cb * 2.0 * u) * h_sm[n]
            cv = (-cb * u2 * 2.0) * (q[n] * imask[k, n])
            gv += cv[:, None] * h_sm[n][None, :]
            cw = (-cb * u2 * 2.0) * (X[n] * (~act[:, n]))
            gw += cw[:, None, None] * h_ss[n][None, :, :]
            gw[:, n, :] += (-cb * u2 * beta_si * 2.0) * wm[:, n, :]

    gw *= act[:, :, None]
    gv *= has[:, None]
    value = float(np.dot(weights, per_user))
    return value, per_user, gw, gv


def stoch_wmmse_eval(w, v, hist_alpha, hist_rho, hist_wt, hist_h, alpha_b,
                     rho_b, h_us_known, h_um, h_sm, h_ss, act, later, beta_si,
                     noise_u, noise_b, weights, gamma):
    """WMMSE flavor of the running-average stochastic bound."""
    K, N, L = w.shape
    Tn = hist_alpha.shape[0]
    wm, vm, has = _masked(w, v, act)
    hk = h_us_known * act[:, :, None]

    s = np.einsum("kjl,kjl->k", hk.conj(), wm)
    mm, Th, phi_t = _stoch_phis(wm, vm, h_um, hist_h)
    e_t = (np.abs(s[None, :]) ** 2 + phi_t + noise_u[None, :]) \
        * np.abs(hist_alpha) ** 2 \
        - 2.0 * (hist_alpha.conj() * s[None, :]).real + 1.0
    diff = hist_wt - wm[None, :, :, :]
    prox_t = (np.abs(diff) ** 2).sum(axis=(2, 3))
    val_t = np.log2(hist_rho) + (1.0 - hist_rho * e_t) / LN2 \
        - 0.5 * gamma * prox_t

    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)
    e_b = (np.abs(sig_b) ** 2 + delta + noise_b[None, :]) * np.abs(alpha_b) ** 2 \
        - 2.0 * (alpha_b.conj() * sig_b).real + 1.0
    val_b = np.log2(rho_b) + (1.0 - rho_b * e_b) / LN2

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    for k in range(K):
        active = np.nonzero(act[k])[0]
        if active.size == 0:
            continue
        a_val = float(val_t[:, k].mean())
        b_vals = np.where(act[k], val_b[k], np.inf)
        per_user[k], sels[k] = _select_min(a_val, b_vals, active)

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            cb_t = weights[k] * hist_rho[:, k] / (Tn * LN2)   # (T,)
            a_t = hist_alpha[:, k]
            a2_t = np.abs(a_t) ** 2
            # signal-and-own-term pieces collapse onto the known channel
            cself = (a2_t * 2.0 * s[k] - 2.0 * a_t)
            gw[k] += (-np.dot(cb_t, cself)) * hk[k]
            Ct = (-cb_t * a2_t * 2.0)[:, None] * Th[:, k, :]
            Ct[:, k] = 0.0
            gw += np.einsum("ti,tjl->ijl", Ct, hist_h[:, k, :, :])
            cv = (-(cb_t * a2_t).sum() * 2.0) * mm[k]
            gv += cv[:, None] * h_um[k][None, :]
            gw[k] += (weights[k] * gamma) * (hist_wt[:, k].mean(axis=0) - wm[k])
        else:
            n = sels[k]
            a = alpha_b[k, n]
            cb = weights[k] * rho_b[k, n] / LN2
            a2 = np.abs(a) ** 2
            jmask = imask[k, n].copy()
            jmask[k] = True
            cv = (a2 * 2.0) * (q[n] * jmask)
            cv[k] -= 2.0 * a
            gv += (-cb) * cv[:, None] * h_sm[n][None, :]
            cw = (a2 * 2.0) * (X[n] * (~act[:, n]))
            gw += (-cb) * cw[:, None, None] * h_ss[n][None, :, :]
            gw[:, n, :] += (-cb) * (a2 * beta_si * 2.0) * wm[:, n, :]

    gw *= act[:, :, None]
    gv *= has[:, None]
    value = float(np.dot(weights, per_user))
    return value, per_user, gw, gv


def jensen_phi(w, v, amat, h_um, act):
    """Expected access interference: MBS part plus quadratic forms in the
    expected-covariance matrices (one NL x NL matrix per user)."""
    K, N, L = w.shape
    wm, vm, _ = _masked(w, v, act)
    wflat = wm.reshape(K, N * L)
    mm = np.einsum("km,im->ki", h_um.conj(), vm)
    Aw = np.einsum("kpq,iq->kip", amat, wflat)
    quad = np.einsum("ip,kip->ki", wflat.conj(), Aw).real
    phibar = (np.abs(mm) ** 2).sum(axis=1) + quad.sum(axis=1) \
        - np.einsum("kk->k", quad)
    return phibar


def jensen_sinrc_eval(w, v, u_a, u_b, amat, h_us_known, h_um, h_sm, h_ss,
                      act, later, beta_si, noise_u, noise_b, weights):
    """SINR-convexified composite bound with the access interference
    replaced by its expectation over unknown links."""
    K, N, L = w.shape
    wm, vm, has = _masked(w, v, act)
    hk = h_us_known * act[:, :, None]
    wflat = wm.reshape(K, N * L)

    s = np.einsum("kjl,kjl->k", hk.conj(), wm)
    mm = np.einsum("km,im->ki", h_um.conj(), vm)
    Aw = np.einsum("kpq,iq->kip", amat, wflat)
    quad = np.einsum("ip,kip->ki", wflat.conj(), Aw).real
    phibar = (np.abs(mm) ** 2).sum(axis=1) + quad.sum(axis=1) \
        - np.einsum("kk->k", quad)

    arg_a = 1.0 + 2.0 * (u_a.conj() * s).real \
        - np.abs(u_a) ** 2 * (phibar + noise_u)

    _, _, q, X, _, sig_b, _, delta, imask = _core(
        wm, vm, h_um, h_us_known, h_sm, h_ss, act, later, beta_si)
    arg_b = _backhaul_args(u_b, sig_b, delta, noise_b, act)

    per_user = np.zeros(K)
    sels = np.full(K, -2, dtype=np.int64)
    neg = False
    for k in range(K):
        active = np.nonzero(act[k])[0]
        if active.size == 0:
            continue
        if arg_a[k] <= 0.0:
            per_user[k] = NEG_INF
            neg = True
            continue
        a_val = math.log2(arg_a[k])
        b_vals = np.full(N, np.inf)
        for n in active:
            b_vals[n] = math.log2(arg_b[k, n]) if arg_b[k, n] > 0.0 else NEG_INF
        per_user[k], sels[k] = _select_min(a_val, b_vals, active)
        if per_user[k] == NEG_INF:
            neg = True

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    if neg:
        return NEG_INF, per_user, gw, gv

    for k in range(K):
        if sels[k] == -2:
            continue
        if sels[k] == -1:
            u = u_a[k]
            cb = weights[k] / (arg_a[k] * LN2)
            u2 = np.abs(u) ** 2
            gw[k] += (cb * 2.0 * u) * hk[k]
            coef = np.full(K, -cb * u2)
            coef[k] = 0.0
            gw += (2.0 * coef)[:, None, None] * Aw[k].reshape(K, N, L)
            gv += ((-cb * u2 * 2.0) * mm[k])[:, None] * h_um[k][None, :]
        else:
            n = sels[k]
            u = u_b[k, n]
            cb = weights[k] / (arg_b[k, n] * LN2)
            u2 = np.abs(u) ** 2
            gv[k] += (cb * 2.0 * u) * h_sm[n]
            cv = (-cb * u2 * 2.0) * (q[n] * imask[k, n])
            gv += cv[:, None] * h_sm[n][None, :]
            cw = (-cb * u2 * 2.0) * (X[n] * (~act[:, n]))
            gw += cw[:, None, None] * h_ss[n][None, :, :]
            gw[:, n, :] += (-cb * u2 * beta_si * 2.0) * wm[:, n, :]

    gw *= act[:, :, None]
    gv *= has[:, None]
    value = float(np.dot(weights, per_user))
    return value, per_user, gw, gv


def rate_samples_stats(w, v, h_um, h_samples, h_sm, h_ss, act, later,
                       beta_si, noise_u, noise_b, weights):
    """Accumulate access/end-to-end rate statistics over channel samples.

    The backhaul side has no sampled randomness, so its per-user rate is
    computed once.  Returns per-user sums and sums of squares plus the
    weighted-sum statistics, all over the sample axis.
    """
    K, N, L = w.shape
    wm, vm, _ = _masked(w, v, act)
    _, _, _, _, _, sig_b, _, delta, _ = _core(
        wm, vm, h_um, h_samples[0], h_sm, h_ss, act, later, beta_si)
    bkh = np.log2(1.0 + np.abs(sig_b) ** 2 / (delta + noise_b[None, :]))
    r_b = np.where(act.any(axis=1),
                   np.where(act, bkh, np.inf).min(axis=1), 0.0)

    mm = np.einsum("km,im->ki", h_um.conj(), vm)
    mbs_int = (np.abs(mm) ** 2).sum(axis=1)
    Ts = np.einsum("skjl,ijl->ski", h_samples.conj(), wm)
    sig_s = np.einsum("skk->sk", Ts)
    phi_s = mbs_int[None, :] + (np.abs(Ts) ** 2).sum(axis=2) \
        - np.abs(sig_s) ** 2
    acc_s = np.log2(1.0 + np.abs(sig_s) ** 2 / (phi_s + noise_u[None, :]))
    end_s = np.minimum(acc_s, r_b[None, :])
    ws_s = end_s @ weights

    return (acc_s.sum(axis=0), (acc_s ** 2).sum(axis=0),
            end_s.sum(axis=0), (end_s ** 2).sum(axis=0),
            float(ws_s.sum()), float((ws_s ** 2).sum()))
