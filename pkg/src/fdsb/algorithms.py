"""Outer optimization loops.

* slbm: alternate tight concave lower-bound construction at the current
  iterate with a subsolver maximization; the true objective ascends.
* heuristic_clustering: shrink from full cooperation by repeatedly
  dropping the lowest-power links, keeping the best round.
* static_clustering: per user, the C strongest SBSs by average gain.
* stochastic_slbm: partial CSI; per iteration draw unknown links,
  grow the running-average strongly concave access bound, re-solve.
* dlb_slbm: partial CSI via the deterministic expected-interference
  bound (single deterministic solve).
* saa_slbm: partial CSI via a fixed-sample average objective.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import get_kernels
from .network import ChannelSet
from .rates import (BeamformerSet, Clustering, DecodingOrder, PowerBudgets,
                    RateReport, decoding_order, end_to_end_rates,
                    expected_decoding_order, project_feasible,
                    random_feasible)
from .subsolver import SubsolverConfig, solve_subproblem
from .surrogates import (StochAux, build_aux, jensen_aux, jensen_composite,
                         jensen_matrix, make_eval, make_eval_jensen,
                         make_eval_saa, make_eval_stoch, saa_access_aux,
                         stoch_aux_update)

_FAMILIES = ("sinrc", "wmmse")


@dataclass
class SlbmConfig:
    max_outer_iters: int = 30
    rel_tol: float = 1e-3
    surrogate_family: str = "sinrc"

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.surrogate_family not in _FAMILIES:
            raise ValueError(
                f"unknown surrogate family {self.surrogate_family!r}")


@dataclass
class ClusteringConfig:
    j_delta: int = 1
    initial: str = "full"

    def __post_init__(self):
        if self.j_delta < 1:
            raise ValueError("j_delta must be >= 1")
        if self.initial != "full":
            raise ValueError("only full-cooperation initialization exists")


@dataclass
class StochConfig:
    max_iters: int = 300
    gamma: float = None            # None: 1e-3 split over the SBS budget
    eval_sample_count: int = 200
    surrogate_family: str = "sinrc"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.surrogate_family not in _FAMILIES:
            raise ValueError(
                f"unknown surrogate family {self.surrogate_family!r}")


@dataclass
class RunTrace:
    """Per-outer-iteration progress plus the final solution."""

    objective: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    x: BeamformerSet = None
    clustering: Clustering = None
    rates: RateReport = None

    @property
    def n_iters(self):
        return len(self.objective)

    def record(self, obj, sur, ms):
        self.objective.append(float(obj))
        self.surrogate.append(float(sur))
        self.elapsed_ms.append(float(ms))


def default_gamma(budgets: PowerBudgets):
    """Prox weight scaled to the SBS power budget."""
    return 1e-3 / float(np.mean(budgets.p_sbs))


def _wvec(weights):
    return np.ascontiguousarray(weights, dtype=np.float64)


def _rel_gain(cur, prev):
    return (cur - prev) / max(abs(prev), 1e-12)


def _initial_point(dims, cl, budgets, rng, x0):
    """Project a supplied start or draw a half-budget random one; an
    all-zero start is replaced (both bound families are flat there)."""
    if x0 is not None:
        x = project_feasible(x0, cl, budgets)
        if cl.n_links == 0 or not x.is_zero():
            return x
    rng = np.random.default_rng(0) if rng is None else rng
    return random_feasible(dims, cl, budgets, rng)


def slbm(ch: ChannelSet, cl: Clustering, weights, slbm_cfg: SlbmConfig,
         sub_cfg: SubsolverConfig, x0=None, *, budgets: PowerBudgets,
         rng=None) -> RunTrace:
    """Successive lower-bound maximization under full CSI."""
    weights = _wvec(weights)
    ordr = decoding_order(ch)
    x = _initial_point(ch.dims, cl, budgets, rng, x0)
    trace = RunTrace(clustering=cl)

    for _ in range(slbm_cfg.max_outer_iters):
        t0 = time.perf_counter()
        aux = build_aux(slbm_cfg.surrogate_family, x, ch, cl, ordr)
        ev = make_eval(aux, ch, cl, ordr, weights)
        x = solve_subproblem(ev, x, cl, budgets, sub_cfg)
        f_hat = ev(x.w, x.v)[0]
        rep = end_to_end_rates(x, ch, cl, ordr, weights)
        trace.record(rep.weighted_sum, f_hat,
                     (time.perf_counter() - t0) * 1e3)
        trace.x, trace.rates = x, rep
        if len(trace.objective) >= 2 and _rel_gain(
                trace.objective[-1], trace.objective[-2]) < slbm_cfg.rel_tol:
            break
    return trace


def heuristic_clustering(ch: ChannelSet, weights, clu_cfg: ClusteringConfig,
                         slbm_cfg: SlbmConfig, sub_cfg: SubsolverConfig, *,
                         budgets: PowerBudgets, rng=None):
    """Shrink-from-full link selection.

    Solves the beamforming problem on the full clustering, then
    repeatedly deactivates the j_delta lowest-power active links
    (warm-starting from the previous solution) down to the empty
    clustering, and returns the best round by achieved objective.
    """
    K, N = ch.h_user_sbs.shape[:2]
    cl = Clustering.full(K, N)
    x_warm = None
    best = None

    while True:
        tr = slbm(ch, cl, weights, slbm_cfg, sub_cfg, x0=x_warm,
                  budgets=budgets, rng=rng)
        if best is None or tr.rates.weighted_sum > best[0]:
            best = (tr.rates.weighted_sum, cl, tr)
        if cl.n_links == 0:
            break
        powers = tr.x.link_powers()
        pairs = sorted((powers[k, n], k, n)
                       for k, n in zip(*np.nonzero(cl.active)))
        drop = pairs[:min(clu_cfg.j_delta, len(pairs))]
        act = cl.active.copy()
        for _, k, n in drop:
            act[k, n] = False
        cl = Clustering(act)
        x_warm = BeamformerSet(tr.x.w * act[:, :, None],
                               tr.x.v * cl.has_cluster[:, None])
    return best[1], best[2]


def static_clustering(ls, C) -> Clustering:
    """Per user, the C SBSs with the largest average channel gains
    (ties to the lower SBS index)."""
    beta = ls.beta_user_sbs
    K, N = beta.shape
    if not 1 <= C <= N:
        raise ValueError(f"cluster size must lie in [1, {N}], got {C}")
    act = np.zeros((K, N), dtype=bool)
    for k in range(K):
        top = np.lexsort((np.arange(N), -beta[k]))[:C]
        act[k, top] = True
    return Clustering(act)


def sample_mean_report(x: BeamformerSet, h_samples, ch_known: ChannelSet,
                       cl: Clustering, ordr: DecodingOrder,
                       weights) -> RateReport:
    """Rate report averaged over access-channel draws: access and
    end-to-end entries are sample means (so the min identity holds per
    sample, not between the averaged fields); backhaul is exact."""
    kern = get_kernels()
    weights = _wvec(weights)
    act = cl.active
    sums = kern.rate_samples_stats(
        x.w, x.v, ch_known.h_user_mbs, h_samples, ch_known.h_sbs_mbs,
        ch_known.h_sbs_sbs, act, ordr.later, ch_known.beta_si,
        ch_known.noise_user, ch_known.noise_sbs, weights)
    S = h_samples.shape[0]
    _, bkh, _, _, _, _ = kern.rates_core(
        x.w, x.v, ch_known.h_user_mbs, ch_known.h_user_sbs,
        ch_known.h_sbs_mbs, ch_known.h_sbs_sbs, act, ordr.later,
        ch_known.beta_si, ch_known.noise_user, ch_known.noise_sbs)
    r_b = np.where(act.any(axis=1),
                   np.where(act, bkh, np.inf).min(axis=1), 0.0)
    return RateReport(access=sums[0] / S, backhaul_per_sbs=bkh,
                      backhaul=r_b, end_to_end=sums[2] / S,
                      weighted_sum=float(sums[4] / S), weights=weights)


def _draw_eval_set(omega_sampler, count, rng):
    return np.stack([omega_sampler(rng) for _ in range(count)])


def stochastic_slbm(ch_known: ChannelSet, ls, cl: Clustering, weights,
                    stoch_cfg: StochConfig, sub_cfg: SubsolverConfig,
                    omega_sampler, *, budgets: PowerBudgets, rng=None,
                    eval_rng=None) -> RunTrace:
    """Sample-driven maximization under partial access CSI.

    Each iteration draws one realization of the unknown links, appends
    a strongly concave access bound anchored at the current iterate,
    and maximizes the running average min-composed with the current
    backhaul bounds.  The objective column of the trace is the
    weighted end-to-end rate averaged over a fixed evaluation set."""
    weights = _wvec(weights)
    rng = np.random.default_rng(0) if rng is None else rng
    eval_rng = np.random.default_rng(1) if eval_rng is None else eval_rng
    ordr = expected_decoding_order(ch_known.h_user_sbs, ls, cl)
    gamma = stoch_cfg.gamma if stoch_cfg.gamma is not None \
        else default_gamma(budgets)
    eval_h = _draw_eval_set(omega_sampler, stoch_cfg.eval_sample_count,
                            eval_rng)
    x = random_feasible(ch_known.dims, cl, budgets, rng)
    hist = StochAux(stoch_cfg.surrogate_family, gamma)
    trace = RunTrace(clustering=cl)

    for _ in range(stoch_cfg.max_iters):
        t0 = time.perf_counter()
        omega = omega_sampler(rng)
        stoch_aux_update(hist, x, omega, ch_known, cl, ordr)
        aux_b = build_aux(stoch_cfg.surrogate_family, x, ch_known, cl, ordr)
        ev = make_eval_stoch(hist, aux_b, ch_known, cl, ordr, weights)
        x = solve_subproblem(ev, x, cl, budgets, sub_cfg)
        f_hat = ev(x.w, x.v)[0]
        rep = sample_mean_report(x, eval_h, ch_known, cl, ordr, weights)
        trace.record(rep.weighted_sum, f_hat,
                     (time.perf_counter() - t0) * 1e3)
        trace.x, trace.rates = x, rep
    return trace


def dlb_slbm(ch_known: ChannelSet, ls, cl: Clustering, weights,
             slbm_cfg: SlbmConfig, sub_cfg: SubsolverConfig, *,
             budgets: PowerBudgets, omega_sampler=None,
             eval_sample_count=200, rng=None, eval_rng=None) -> RunTrace:
    """Deterministic partial-CSI maximization: the access interference
    is replaced by its expectation over unknown links, and the standard
    loop runs on that bound.  With a sampler the trace objective is the
    evaluation-set mean; without one (full CSI) it is the exact rate."""
    if slbm_cfg.surrogate_family != "sinrc":
        raise ValueError("the expected-interference bound is built on the "
                         "SINR-convexification family")
    weights = _wvec(weights)
    rng = np.random.default_rng(0) if rng is None else rng
    ordr = expected_decoding_order(ch_known.h_user_sbs, ls, cl)
    jm = jensen_matrix(ch_known, ls, cl)
    eval_h = None
    if omega_sampler is not None:
        eval_rng = np.random.default_rng(1) if eval_rng is None else eval_rng
        eval_h = _draw_eval_set(omega_sampler, eval_sample_count, eval_rng)
    x = _initial_point(ch_known.dims, cl, budgets, rng, None)
    trace = RunTrace(clustering=cl)
    f_det_prev = None

    for _ in range(slbm_cfg.max_outer_iters):
        t0 = time.perf_counter()
        aux = jensen_aux(x, jm, ch_known, cl, ordr)
        ev = make_eval_jensen(aux, jm, ch_known, cl, ordr, weights)
        x = solve_subproblem(ev, x, cl, budgets, sub_cfg)
        f_hat = ev(x.w, x.v)[0]
        _, f_det = jensen_composite(x, jm, ch_known, cl, ordr, weights)
        if eval_h is None:
            rep = end_to_end_rates(x, ch_known, cl, ordr, weights)
        else:
            rep = sample_mean_report(x, eval_h, ch_known, cl, ordr, weights)
        trace.record(rep.weighted_sum, f_hat,
                     (time.perf_counter() - t0) * 1e3)
        trace.x, trace.rates = x, rep
        if f_det_prev is not None \
                and _rel_gain(f_det, f_det_prev) < slbm_cfg.rel_tol:
            break
        f_det_prev = f_det
    return trace


def saa_slbm(ch_known: ChannelSet, ls, cl: Clustering, weights, n_samples,
             slbm_cfg: SlbmConfig, sub_cfg: SubsolverConfig, *,
             budgets: PowerBudgets, omega_sampler, rng=None) -> RunTrace:
    """Fixed-sample average maximization: draw n_samples realizations
    once, then run the deterministic loop on the mean of per-sample
    composite bounds (access auxiliaries rebuilt per sample per outer
    iteration; backhaul bounds shared).  The trace objective is the
    exact sample-average rate over those draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    weights = _wvec(weights)
    rng = np.random.default_rng(0) if rng is None else rng
    ordr = expected_decoding_order(ch_known.h_user_sbs, ls, cl)
    x = _initial_point(ch_known.dims, cl, budgets, rng, None)
    h_samples = _draw_eval_set(omega_sampler, n_samples, rng)
    family = slbm_cfg.surrogate_family
    trace = RunTrace(clustering=cl)

    for _ in range(slbm_cfg.max_outer_iters):
        t0 = time.perf_counter()
        acc_aux = saa_access_aux(family, x, h_samples, ch_known, cl, ordr)
        aux_b = build_aux(family, x, ch_known, cl, ordr)
        ev = make_eval_saa(acc_aux, h_samples, aux_b, ch_known, cl, ordr,
                           weights, family)
        x = solve_subproblem(ev, x, cl, budgets, sub_cfg)
        f_hat = ev(x.w, x.v)[0]
        rep = sample_mean_report(x, h_samples, ch_known, cl, ordr, weights)
        trace.record(rep.weighted_sum, f_hat,
                     (time.perf_counter() - t0) * 1e3)
        trace.x, trace.rates = x, rep
        if len(trace.objective) >= 2 and _rel_gain(
                trace.objective[-1], trace.objective[-2]) < slbm_cfg.rel_tol:
            break
    return trace
