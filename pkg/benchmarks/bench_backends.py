"""Micro-benchmark of the compiled kernels against the pure-numpy
fallback on identical, realistically shaped argument tuples.

Runs a short end-to-end scenario once to capture the exact kernel
invocations the package performs, then times each public kernel on the
first captured argument tuple for both implementations.

Usage::

    python benchmarks/bench_backends.py [--repeat 200]
"""

import argparse
import time

import numpy as np

import fdsb.backend as backend
from fdsb import _nbkernels, _npkernels
from fdsb.algorithms import SlbmConfig, StochConfig, slbm, stochastic_slbm
from fdsb.network import NetworkConfig, compute_large_scale, \
    generate_topology, sample_channels
from fdsb.rates import Clustering, PowerBudgets, decoding_order, \
    end_to_end_rates, project_feasible, random_feasible
from fdsb.subsolver import SubsolverConfig
from fdsb.surrogates import known_channels, make_omega_sampler

KERNELS = ("rates_core", "project", "sinrc_aux", "wmmse_aux", "sinrc_eval",
           "wmmse_eval", "stoch_sinrc_eval", "stoch_wmmse_eval",
           "jensen_phi", "jensen_sinrc_eval", "rate_samples_stats")


class FirstCallRecorder:
    def __init__(self, real):
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "first", {})

    def __getattr__(self, name):
        fn = getattr(self.real, name)

        def wrapper(*args):
            self.first.setdefault(name, args)
            return fn(*args)

        return wrapper


def capture_calls():
    recorder = FirstCallRecorder(_npkernels)
    saved = backend._kernels, backend._name
    backend._kernels, backend._name = recorder, "recorder"
    try:
        cfg = NetworkConfig()
        rng = np.random.default_rng(np.random.SeedSequence([77]))
        topo = generate_topology(cfg, rng)
        ls = compute_large_scale(topo, cfg, rng)
        ch = sample_channels(ls, cfg, rng)
        cl = Clustering.full(cfg.n_users_scheduled, cfg.n_sbs)
        budgets = PowerBudgets.from_config(cfg)
        x = random_feasible(ch.dims, cl, budgets, rng, fraction=0.7)
        end_to_end_rates(x, ch, cl, decoding_order(ch),
                         np.asarray(cfg.weights))
        project_feasible(x, cl, budgets)
        sub = SubsolverConfig(max_inner_iters=20)
        for fam in ("sinrc", "wmmse"):
            slbm(ch, cl, cfg.weights,
                 SlbmConfig(max_outer_iters=2, surrogate_family=fam), sub,
                 budgets=budgets, rng=rng)
        part = Clustering(np.eye(cfg.n_users_scheduled, cfg.n_sbs,
                                 dtype=bool))
        chk = known_channels(ch, part)
        sampler = make_omega_sampler(chk, ls, part)
        for fam in ("sinrc", "wmmse"):
            stochastic_slbm(chk, ls, part, cfg.weights,
                            StochConfig(max_iters=25, eval_sample_count=200,
                                        surrogate_family=fam),
                            sub, sampler, budgets=budgets, rng=rng)
        from fdsb.algorithms import dlb_slbm
        dlb_slbm(chk, ls, part, cfg.weights,
                 SlbmConfig(max_outer_iters=2), sub, budgets=budgets,
                 rng=rng)
    finally:
        backend._kernels, backend._name = saved
    return recorder.first


def time_call(fn, args, repeat):
    fn(*args)                                   # warm-up / compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200,
                    help="timed calls per kernel (default 200)")
    args = ap.parse_args(argv)

    calls = capture_calls()
    print(f"{'kernel':<22} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name in KERNELS:
        if name not in calls:
            print(f"{name:<22} {'(not captured)':>12}")
            continue
        t_np = time_call(getattr(_npkernels, name), calls[name], args.repeat)
        t_nb = time_call(getattr(_nbkernels, name), calls[name], args.repeat)
        print(f"{name:<22} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
