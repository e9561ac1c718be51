"""Concave lower bounds for the min-of-two-hops rate objective.

Two families, both tight at their expansion point:

* SINR-convexification: freeze scalar MMSE receive coefficients; the
  bound is log2 of a concave quadratic, valid only where that argument
  stays positive (a -inf sentinel marks violations);
* WMMSE: freeze MMSE receivers and inverse-MSE weights; globally
  finite and quadratic.

On top of these sit three partial-CSI constructions: a running-average
strongly concave access bound (one term per sampled realization, with
a proximal pull toward past iterates), a fixed-sample average, and a
deterministic bound that replaces the access interference with its
expectation over unknown links.

Every composite bound is per-user min(access bound, serving backhaul
bounds), weighted and summed.  Evaluation closures return
``(value, grad_w, grad_v)`` for the subsolver.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import get_kernels
from .network import ChannelSet, complex_normal
from .rates import BeamformerSet, Clustering, DecodingOrder


@dataclass
class SinrcAux:
    """Frozen scalar receive coefficients, one per user (access) and one
    per active (user, SBS) pair (backhaul)."""

    u_access: np.ndarray
    u_backhaul: np.ndarray


@dataclass
class WmmseAux:
    """Frozen MMSE receivers and inverse-MSE weights for both hops."""

    alpha: np.ndarray
    rho: np.ndarray
    alpha_backhaul: np.ndarray
    rho_backhaul: np.ndarray


@dataclass
class StochAux:
    """Per-iteration history for the running-average stochastic bound.

    Each update stores the access auxiliaries built at the previous
    iterate under a fresh channel draw, that iterate's access beams
    (prox anchors) and the draw itself."""

    family: str
    gamma: float
    u_hist: list = field(default_factory=list)
    alpha_hist: list = field(default_factory=list)
    rho_hist: list = field(default_factory=list)
    wt_hist: list = field(default_factory=list)
    h_hist: list = field(default_factory=list)

    def __post_init__(self):
        if self.family not in ("sinrc", "wmmse"):
            raise ValueError(f"unknown surrogate family {self.family!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def __len__(self):
        return len(self.wt_hist)

    def stacked(self, t=None):
        """Contiguous (t, ...) views of the first t stored entries."""
        t = len(self) if t is None else t
        if not 1 <= t <= len(self):
            raise ValueError("history shorter than requested length")
        out = {"wt": np.ascontiguousarray(self.wt_hist[:t]),
               "h": np.ascontiguousarray(self.h_hist[:t])}
        if self.family == "sinrc":
            out["u"] = np.ascontiguousarray(self.u_hist[:t])
        else:
            out["alpha"] = np.ascontiguousarray(self.alpha_hist[:t])
            out["rho"] = np.ascontiguousarray(self.rho_hist[:t])
        return out


@dataclass
class JensenMatrix:
    """Expected aggregate-channel covariance per user (NL x NL), built
    from known serving channels and mean powers of unknown links."""

    amat: np.ndarray
    cl: Clustering


def _tail(ch, cl, ordr):
    return (cl.active, ordr.later, ch.beta_si, ch.noise_user, ch.noise_sbs)


def _wvec(weights):
    return np.ascontiguousarray(weights, dtype=np.float64)


def mmse_aux_sinrc(x: BeamformerSet, ch: ChannelSet, cl: Clustering,
                   ordr: DecodingOrder) -> SinrcAux:
    kern = get_kernels()
    u_a, u_b = kern.sinrc_aux(x.w, x.v, ch.h_user_mbs, ch.h_user_sbs,
                              ch.h_sbs_mbs, ch.h_sbs_sbs, *_tail(ch, cl, ordr))
    return SinrcAux(u_a, u_b)


def wmmse_aux(x: BeamformerSet, ch: ChannelSet, cl: Clustering,
              ordr: DecodingOrder) -> WmmseAux:
    kern = get_kernels()
    a_a, r_a, a_b, r_b = kern.wmmse_aux(
        x.w, x.v, ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs,
        *_tail(ch, cl, ordr))
    return WmmseAux(a_a, r_a, a_b, r_b)


def build_aux(family, x, ch, cl, ordr):
    if family == "sinrc":
        return mmse_aux_sinrc(x, ch, cl, ordr)
    if family == "wmmse":
        return wmmse_aux(x, ch, cl, ordr)
    raise ValueError(f"unknown surrogate family {family!r}")


def sinrc_bound_access(x: BeamformerSet, aux: SinrcAux, ch: ChannelSet,
                       cl: Clustering, k) -> float:
    """Access lower bound for user k alone (-inf outside the domain)."""
    kern = get_kernels()
    ordr = DecodingOrder.from_aggregate(np.zeros(cl.shape[0]))
    _, _, phi, _, sig_a, _ = kern.rates_core(
        x.w, x.v, ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs,
        *_tail(ch, cl, ordr))
    u = aux.u_access[k]
    arg = 1.0 + 2.0 * (np.conj(u) * sig_a[k]).real \
        - abs(u) ** 2 * (phi[k] + ch.noise_user[k])
    return float(np.log2(arg)) if arg > 0 else -np.inf


def sinrc_bound_backhaul(x: BeamformerSet, aux: SinrcAux, ch: ChannelSet,
                         cl: Clustering, ordr: DecodingOrder, k, n) -> float:
    """Backhaul lower bound for pair (k, n) alone."""
    if not cl.active[k, n]:
        raise ValueError(f"user {k} is not served by SBS {n}")
    kern = get_kernels()
    _, _, _, delta, _, sig_b = kern.rates_core(
        x.w, x.v, ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs,
        *_tail(ch, cl, ordr))
    u = aux.u_backhaul[k, n]
    arg = 1.0 + 2.0 * (np.conj(u) * sig_b[k, n]).real \
        - abs(u) ** 2 * (delta[k, n] + ch.noise_sbs[n])
    return float(np.log2(arg)) if arg > 0 else -np.inf


def composite_bound(x: BeamformerSet, aux: SinrcAux, ch: ChannelSet,
                    cl: Clustering, ordr: DecodingOrder, weights):
    """Per-user min-composed SINR-convexified bounds and their weighted
    sum (-inf when any needed log argument is non-positive)."""
    kern = get_kernels()
    val, per_user, _, _ = kern.sinrc_eval(
        x.w, x.v, aux.u_access, aux.u_backhaul, ch.h_user_mbs, ch.h_user_sbs,
        ch.h_sbs_mbs, ch.h_sbs_sbs, *_tail(ch, cl, ordr), _wvec(weights))
    return per_user, val


def wmmse_bound(x: BeamformerSet, aux: WmmseAux, ch: ChannelSet,
                cl: Clustering, ordr: DecodingOrder, weights):
    """Per-user min-composed WMMSE bounds and their weighted sum."""
    kern = get_kernels()
    val, per_user, _, _ = kern.wmmse_eval(
        x.w, x.v, aux.alpha, aux.rho, aux.alpha_backhaul, aux.rho_backhaul,
        ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs,
        *_tail(ch, cl, ordr), _wvec(weights))
    return per_user, val


def make_eval(aux, ch: ChannelSet, cl: Clustering, ordr: DecodingOrder,
              weights):
    """Evaluation closure (w, v) -> (value, grad_w, grad_v) for either
    deterministic family."""
    kern = get_kernels()
    args = (ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs,
            *_tail(ch, cl, ordr), _wvec(weights))
    if isinstance(aux, SinrcAux):
        def eval_(w, v):
            val, _, gw, gv = kern.sinrc_eval(w, v, aux.u_access,
                                             aux.u_backhaul, *args)
            return val, gw, gv
    elif isinstance(aux, WmmseAux):
        def eval_(w, v):
            val, _, gw, gv = kern.wmmse_eval(w, v, aux.alpha, aux.rho,
                                             aux.alpha_backhaul,
                                             aux.rho_backhaul, *args)
            return val, gw, gv
    else:
        raise TypeError(f"unsupported aux type {type(aux).__name__}")
    return eval_


def known_channels(ch: ChannelSet, cl: Clustering) -> ChannelSet:
    """Partial-CSI view: non-serving access channels zeroed (unknown);
    everything else kept."""
    out = ch.copy()
    out.h_user_sbs = np.ascontiguousarray(
        ch.h_user_sbs * cl.active[:, :, None])
    return out


def make_omega_sampler(ch_known: ChannelSet, ls, cl: Clustering):
    """Draws full access channels consistent with the known parts:
    serving entries are the known values, non-serving entries fresh
    Rayleigh draws with the stored large-scale gains."""
    act = cl.active
    known = ch_known.h_user_sbs * act[:, :, None]
    scale = np.sqrt(ls.beta_user_sbs)[:, :, None] * (~act[:, :, None])

    def sampler(rng):
        g = complex_normal(rng, known.shape)
        return np.ascontiguousarray(known + scale * g)

    return sampler


def stoch_aux_update(history: StochAux, x_prev: BeamformerSet,
                     omega_sample, ch_known: ChannelSet, cl: Clustering,
                     ordr: DecodingOrder) -> StochAux:
    """Append the access auxiliaries built at x_prev under the sampled
    full channel, with x_prev's access beams as the prox anchor."""
    kern = get_kernels()
    omega_sample = np.ascontiguousarray(omega_sample, dtype=np.complex128)
    args = (x_prev.w, x_prev.v, ch_known.h_user_mbs, omega_sample,
            ch_known.h_sbs_mbs, ch_known.h_sbs_sbs, *_tail(ch_known, cl, ordr))
    if history.family == "sinrc":
        u_a, _ = kern.sinrc_aux(*args)
        history.u_hist.append(u_a)
    else:
        a_a, r_a, _, _ = kern.wmmse_aux(*args)
        history.alpha_hist.append(a_a)
        history.rho_hist.append(r_a)
    history.wt_hist.append(x_prev.w * cl.active[:, :, None])
    history.h_hist.append(omega_sample)
    return history


def _backhaul_aux(family, x, ch_known, cl, ordr):
    """Backhaul-side auxiliaries at x (access channels irrelevant)."""
    if family == "sinrc":
        aux = mmse_aux_sinrc(x, ch_known, cl, ordr)
        return aux.u_backhaul
    aux = wmmse_aux(x, ch_known, cl, ordr)
    return aux.alpha_backhaul, aux.rho_backhaul


def make_eval_stoch(history: StochAux, aux_backhaul, ch_known: ChannelSet,
                    cl: Clustering, ordr: DecodingOrder, weights, t=None):
    """Closure for the running-average bound over the first t entries."""
    kern = get_kernels()
    st = history.stacked(t)
    tail = (*_tail(ch_known, cl, ordr), _wvec(weights), history.gamma)
    ch_args = (ch_known.h_user_sbs, ch_known.h_user_mbs,
               ch_known.h_sbs_mbs, ch_known.h_sbs_sbs)
    if history.family == "sinrc":
        u_b = aux_backhaul.u_backhaul \
            if isinstance(aux_backhaul, SinrcAux) else aux_backhaul

        def eval_(w, v):
            val, _, gw, gv = kern.stoch_sinrc_eval(
                w, v, st["u"], st["wt"], st["h"], u_b, *ch_args, *tail)
            return val, gw, gv
    else:
        if isinstance(aux_backhaul, WmmseAux):
            a_b, r_b = aux_backhaul.alpha_backhaul, aux_backhaul.rho_backhaul
        else:
            a_b, r_b = aux_backhaul

        def eval_(w, v):
            val, _, gw, gv = kern.stoch_wmmse_eval(
                w, v, st["alpha"], st["rho"], st["wt"], st["h"], a_b, r_b,
                *ch_args, *tail)
            return val, gw, gv
    return eval_


def stoch_composite_bound(x: BeamformerSet, history: StochAux, aux_backhaul,
                          t, ch_known: ChannelSet, cl: Clustering,
                          ordr: DecodingOrder, weights):
    """Per-user values of the running-average composite bound after t
    stored iterations, plus the weighted sum."""
    kern = get_kernels()
    st = history.stacked(t)
    tail = (*_tail(ch_known, cl, ordr), _wvec(weights), history.gamma)
    ch_args = (ch_known.h_user_sbs, ch_known.h_user_mbs,
               ch_known.h_sbs_mbs, ch_known.h_sbs_sbs)
    if history.family == "sinrc":
        u_b = aux_backhaul.u_backhaul \
            if isinstance(aux_backhaul, SinrcAux) else aux_backhaul
        val, per_user, _, _ = kern.stoch_sinrc_eval(
            x.w, x.v, st["u"], st["wt"], st["h"], u_b, *ch_args, *tail)
    else:
        if isinstance(aux_backhaul, WmmseAux):
            a_b, r_b = aux_backhaul.alpha_backhaul, aux_backhaul.rho_backhaul
        else:
            a_b, r_b = aux_backhaul
        val, per_user, _, _ = kern.stoch_wmmse_eval(
            x.w, x.v, st["alpha"], st["rho"], st["wt"], st["h"], a_b, r_b,
            *ch_args, *tail)
    return per_user, val


def make_eval_saa(access_aux, h_samples, aux_backhaul, ch_known: ChannelSet,
                  cl: Clustering, ordr: DecodingOrder, weights, family):
    """Closure for the fixed-sample average: mean over samples of the
    per-sample composite bound (access aux per sample, backhaul shared)."""
    kern = get_kernels()
    S = len(h_samples)
    tail = (*_tail(ch_known, cl, ordr), _wvec(weights))
    if family == "sinrc":
        u_b = aux_backhaul.u_backhaul

        def eval_(w, v):
            tot, tgw, tgv = 0.0, None, None
            for s in range(S):
                val, _, gw, gv = kern.sinrc_eval(
                    w, v, access_aux[s], u_b, ch_known.h_user_mbs,
                    h_samples[s], ch_known.h_sbs_mbs, ch_known.h_sbs_sbs,
                    *tail)
                if val == -np.inf:
                    return -np.inf, np.zeros_like(w), np.zeros_like(v)
                tot += val
                tgw = gw if tgw is None else tgw + gw
                tgv = gv if tgv is None else tgv + gv
            return tot / S, tgw / S, tgv / S
    else:
        a_b, r_b = aux_backhaul.alpha_backhaul, aux_backhaul.rho_backhaul

        def eval_(w, v):
            tot, tgw, tgv = 0.0, None, None
            for s in range(S):
                a_a, r_a = access_aux[s]
                val, _, gw, gv = kern.wmmse_eval(
                    w, v, a_a, r_a, a_b, r_b, ch_known.h_user_mbs,
                    h_samples[s], ch_known.h_sbs_mbs, ch_known.h_sbs_sbs,
                    *tail)
                tot += val
                tgw = gw if tgw is None else tgw + gw
                tgv = gv if tgv is None else tgv + gv
            return tot / S, tgw / S, tgv / S
    return eval_


def saa_access_aux(family, x, h_samples, ch_known: ChannelSet,
                   cl: Clustering, ordr: DecodingOrder):
    """Per-sample access auxiliaries at x for the fixed-sample average."""
    kern = get_kernels()
    out = []
    for h_s in h_samples:
        args = (x.w, x.v, ch_known.h_user_mbs, h_s, ch_known.h_sbs_mbs,
                ch_known.h_sbs_sbs, *_tail(ch_known, cl, ordr))
        if family == "sinrc":
            u_a, _ = kern.sinrc_aux(*args)
            out.append(u_a)
        else:
            a_a, r_a, _, _ = kern.wmmse_aux(*args)
            out.append((a_a, r_a))
    return out


def jensen_matrix(ch_known: ChannelSet, ls, cl: Clustering) -> JensenMatrix:
    """Blockwise expected covariance of each user's aggregate access
    channel: outer products between known serving channels, mean-power
    diagonal blocks for unknown links, zeros across."""
    K, N, L = ch_known.h_user_sbs.shape
    amat = np.zeros((K, N * L, N * L), dtype=np.complex128)
    for k in range(K):
        hk = ch_known.h_user_sbs[k]
        for i in range(N):
            bi = slice(i * L, (i + 1) * L)
            if cl.active[k, i]:
                if not np.any(hk[i]):
                    raise ValueError(
                        f"serving pair ({k}, {i}) lacks instantaneous CSI")
                for j in range(N):
                    if cl.active[k, j]:
                        amat[k, bi, j * L:(j + 1) * L] = np.outer(
                            hk[i], hk[j].conj())
            else:
                amat[k, bi, bi] = ls.beta_user_sbs[k, i] * np.eye(L)
    for k in range(K):
        evs = np.linalg.eigvalsh(amat[k])
        if evs.min() < -1e-10:
            raise ValueError(f"covariance for user {k} not PSD "
                             f"(min eigenvalue {evs.min():.3e})")
    return JensenMatrix(np.ascontiguousarray(amat), cl)


def jensen_rate(k, x: BeamformerSet, jm: JensenMatrix,
                ch_known: ChannelSet) -> float:
    """Deterministic access lower bound: exact signal over expected
    interference."""
    kern = get_kernels()
    cl = jm.cl
    phibar = kern.jensen_phi(x.w, x.v, jm.amat, ch_known.h_user_mbs,
                             cl.active)
    hk = ch_known.h_user_sbs * cl.active[:, :, None]
    s = np.einsum("jl,jl->", hk[k].conj(), (x.w * cl.active[:, :, None])[k])
    return float(np.log2(1.0 + abs(s) ** 2
                         / (phibar[k] + ch_known.noise_user[k])))


def jensen_aux(x: BeamformerSet, jm: JensenMatrix, ch_known: ChannelSet,
               cl: Clustering, ordr: DecodingOrder) -> SinrcAux:
    """Receive coefficients for the expected-interference bound: access
    side uses the expected denominator, backhaul side is exact."""
    kern = get_kernels()
    phibar = kern.jensen_phi(x.w, x.v, jm.amat, ch_known.h_user_mbs,
                             cl.active)
    hk = ch_known.h_user_sbs * cl.active[:, :, None]
    s = np.einsum("kjl,kjl->k", hk.conj(), x.w * cl.active[:, :, None])
    u_a = s / (phibar + ch_known.noise_user)
    u_b = _backhaul_aux("sinrc", x, ch_known, cl, ordr)
    return SinrcAux(np.ascontiguousarray(u_a), u_b)


def make_eval_jensen(aux: SinrcAux, jm: JensenMatrix, ch_known: ChannelSet,
                     cl: Clustering, ordr: DecodingOrder, weights):
    """Closure for the expected-interference composite bound."""
    kern = get_kernels()
    args = (jm.amat, ch_known.h_user_sbs, ch_known.h_user_mbs,
            ch_known.h_sbs_mbs, ch_known.h_sbs_sbs,
            *_tail(ch_known, cl, ordr), _wvec(weights))

    def eval_(w, v):
        val, _, gw, gv = kern.jensen_sinrc_eval(w, v, aux.u_access,
                                                aux.u_backhaul, *args)
        return val, gw, gv

    return eval_


def jensen_composite(x: BeamformerSet, jm: JensenMatrix,
                     ch_known: ChannelSet, cl: Clustering,
                     ordr: DecodingOrder, weights):
    """Deterministic objective: per-user min of the expected-
    interference access bound and the exact backhaul rates."""
    kern = get_kernels()
    _, bkh, _, _, _, _ = kern.rates_core(
        x.w, x.v, ch_known.h_user_mbs, ch_known.h_user_sbs,
        ch_known.h_sbs_mbs, ch_known.h_sbs_sbs, *_tail(ch_known, cl, ordr))
    act = cl.active
    r_b = np.where(act.any(axis=1),
                   np.where(act, bkh, np.inf).min(axis=1), 0.0)
    acc = np.array([jensen_rate(k, x, jm, ch_known)
                    for k in range(act.shape[0])])
    per_user = np.minimum(np.where(act.any(axis=1), acc, 0.0), r_b)
    return per_user, float(np.dot(_wvec(weights), per_user))
