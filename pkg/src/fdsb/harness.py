"""Batch experiment driver.

Runs Monte Carlo sweeps over transmit powers and cluster sizes for a
selectable set of algorithms, with fully reproducible outputs:

* channel realizations depend only on (master seed, trial), so adding
  sweep points or algorithms never perturbs the channels;
* every algorithm gets its own counter-based substreams, derived from
  (master seed, trial, sweep index, algorithm id, purpose);
* ``results.csv`` contains no timing columns and is byte-identical
  across re-runs; wall-clock numbers live in ``summary.json``.

Outputs per invocation: ``results.csv``, ``summary.json`` and one
``trace_<id>.csv`` per run (iteration, objective, surrogate,
elapsed_ms).
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .algorithms import (ClusteringConfig, SlbmConfig, StochConfig,
                         dlb_slbm, heuristic_clustering, saa_slbm,
                         sample_mean_report, slbm, static_clustering,
                         stochastic_slbm)
from .backend import backend_name
from .network import (NetworkConfig, compute_large_scale, generate_topology,
                      sample_channels)
from .rates import Clustering, PowerBudgets, decoding_order, \
    expected_decoding_order
from .subsolver import SubsolverConfig
from .surrogates import known_channels, make_omega_sampler

ALGORITHMS = ("sinrc-slbm", "wmmse-slbm", "heuristic", "stochastic-sinrc",
              "stochastic-wmmse", "dlb", "saa")
PARTIAL_CSI = ("stochastic-sinrc", "stochastic-wmmse", "dlb", "saa")
BASELINE = "sinrc-slbm"
# stable ids feeding the seed streams; never renumber
_ALGO_IDS = {name: i + 1 for i, name in enumerate(ALGORITHMS)}
_EVAL_STREAM = 98


@dataclass
class SweepPoint:
    """One operating point: transmit powers plus the cluster rule
    (an integer size for strongest-SBS clustering, or "full")."""

    p_mbs_dbm: float
    p_sbs_dbm: float
    cluster: object = "full"

    def __post_init__(self):
        if self.cluster != "full" and int(self.cluster) < 1:
            raise ValueError("cluster must be 'full' or a positive size")

    @property
    def cluster_label(self):
        return str(self.cluster)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ExperimentSpec:
    network: NetworkConfig
    sweep: list
    algorithms: list
    trials: int
    output_dir: str
    solver: SubsolverConfig = field(default_factory=SubsolverConfig)
    outer: SlbmConfig = field(default_factory=SlbmConfig)
    stoch: StochConfig = field(default_factory=StochConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    saa_samples: int = 50

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sweep:
            raise ValueError("sweep must be nonempty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if not self.algorithms:
            raise ValueError("algorithms must be nonempty")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"network", "sweep", "algorithms", "trials", "output_dir",
                 "solver", "outer", "stoch", "clustering", "saa_samples"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        kwargs = {
            "network": NetworkConfig.from_dict(d["network"]),
            "sweep": [SweepPoint.from_dict(p) for p in d["sweep"]],
            "algorithms": list(d["algorithms"]),
            "trials": int(d["trials"]),
            "output_dir": d.get("output_dir", "out"),
        }
        if "solver" in d:
            kwargs["solver"] = SubsolverConfig(**d["solver"])
        if "outer" in d:
            kwargs["outer"] = SlbmConfig(**d["outer"])
        if "stoch" in d:
            kwargs["stoch"] = StochConfig(**d["stoch"])
        if "clustering" in d:
            kwargs["clustering"] = ClusteringConfig(**d["clustering"])
        if "saa_samples" in d:
            kwargs["saa_samples"] = int(d["saa_samples"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def echo(self):
        d = asdict(self)
        d["network"] = self.network.to_dict()
        return d


@dataclass
class ResultTable:
    """Aggregated rows, one per (algorithm, sweep point)."""

    rows: list
    kind: str = "run"


def _stream(master, *path):
    return np.random.default_rng(
        np.random.SeedSequence([int(master), *map(int, path)]))


def _make_channel(spec, master, trial, point):
    cfg = replace(spec.network, mbs_power_dbm=point.p_mbs_dbm,
                  sbs_power_dbm=point.p_sbs_dbm)
    rng = _stream(master, trial)
    topo = generate_topology(cfg, rng)
    ls = compute_large_scale(topo, cfg, rng)
    ch = sample_channels(ls, cfg, rng)
    return cfg, ls, ch


def _point_clustering(point, ls, cfg):
    if point.cluster == "full":
        return Clustering.full(cfg.n_users_scheduled, cfg.n_sbs)
    return static_clustering(ls, int(point.cluster))


def _solve_one(algo, spec, cfg, ls, ch, point, budgets, rng, rng_eval):
    weights = cfg.weights
    sub = spec.solver
    if algo in ("sinrc-slbm", "wmmse-slbm"):
        cl = _point_clustering(point, ls, cfg)
        fam = "sinrc" if algo == "sinrc-slbm" else "wmmse"
        return slbm(ch, cl, weights, replace(spec.outer, surrogate_family=fam),
                    sub, budgets=budgets, rng=rng)
    if algo == "heuristic":
        ocfg = replace(spec.outer, surrogate_family="sinrc")
        _, tr = heuristic_clustering(ch, weights, spec.clustering, ocfg, sub,
                                     budgets=budgets, rng=rng)
        return tr
    cl = _point_clustering(point, ls, cfg)
    chk = known_channels(ch, cl)
    sampler = make_omega_sampler(chk, ls, cl)
    if algo in ("stochastic-sinrc", "stochastic-wmmse"):
        fam = algo.rsplit("-", 1)[1]
        scfg = replace(spec.stoch, surrogate_family=fam)
        return stochastic_slbm(chk, ls, cl, weights, scfg, sub, sampler,
                               budgets=budgets, rng=rng, eval_rng=rng_eval)
    if algo == "dlb":
        return dlb_slbm(chk, ls, cl, weights,
                        replace(spec.outer, surrogate_family="sinrc"), sub,
                        budgets=budgets, omega_sampler=sampler,
                        eval_sample_count=spec.stoch.eval_sample_count,
                        rng=rng, eval_rng=rng_eval)
    if algo == "saa":
        return saa_slbm(chk, ls, cl, weights, spec.saa_samples,
                        replace(spec.outer, surrogate_family="sinrc"), sub,
                        budgets=budgets, omega_sampler=sampler, rng=rng)
    raise ValueError(f"unknown algorithm {algo!r}")


def _cell_id(algo, si, trial):
    return f"{algo}_s{si}_t{trial}"


def _run_cell(job):
    spec, master, trial, si, algo = job
    point = spec.sweep[si]
    cell = {"id": _cell_id(algo, si, trial), "algorithm": algo,
            "sweep_idx": si, "trial": trial, "error": None}
    try:
        cfg, ls, ch = _make_channel(spec, master, trial, point)
        budgets = PowerBudgets.from_config(cfg)
        rng = _stream(master, trial, si, _ALGO_IDS[algo], 0)
        rng_eval = _stream(master, trial, si, _ALGO_IDS[algo], 1)
        tr = _solve_one(algo, spec, cfg, ls, ch, point, budgets, rng,
                        rng_eval)
        cell.update(
            rate=float(tr.rates.weighted_sum),
            iters=tr.n_iters,
            wall_ms=float(sum(tr.elapsed_ms)),
            clustering="".join(str(int(b))
                               for b in tr.clustering.active.ravel()),
            end_to_end=[float(r) for r in tr.rates.end_to_end],
            trace=[(i + 1, tr.objective[i], tr.surrogate[i],
                    tr.elapsed_ms[i]) for i in range(tr.n_iters)])
    except Exception as exc:               # noqa: BLE001 - cell isolation
        cell["error"] = f"{type(exc).__name__}: {exc}"
    return cell


def _execute(jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def _fmt(x):
    return format(float(x), ".12g")


def _write_results_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def _write_traces(outdir, cells):
    names = {}
    for cell in cells:
        if cell["error"] is not None:
            continue
        name = f"trace_{cell['id']}.csv"
        names[cell["id"]] = name
        with open(os.path.join(outdir, name), "w", newline="",
                  encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "objective", "surrogate",
                         "elapsed_ms"])
            for it, obj, sur, ms in cell["trace"]:
                wr.writerow([it, _fmt(obj), _fmt(sur), _fmt(ms)])
    return names


def _summary_cells(cells):
    out = []
    for cell in cells:
        c = {k: cell[k] for k in
             ("id", "algorithm", "sweep_idx", "trial", "error")}
        if cell["error"] is None:
            c.update(rate=cell["rate"], iters=cell["iters"],
                     wall_ms=cell["wall_ms"], clustering=cell["clustering"],
                     end_to_end=cell["end_to_end"])
        out.append(c)
    return out


def _write_summary(outdir, payload):
    with open(os.path.join(outdir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(spec: ExperimentSpec, master_seed=None,
                   workers=1) -> ResultTable:
    """Execute the full sweep and write results.csv / summary.json /
    per-run traces into spec.output_dir.  Raises RuntimeError when more
    than 1% of cells fail."""
    master = spec.network.seed if master_seed is None else int(master_seed)
    outdir = spec.output_dir
    os.makedirs(outdir, exist_ok=True)

    jobs = [(spec, master, trial, si, algo)
            for si in range(len(spec.sweep))
            for algo in spec.algorithms
            for trial in range(spec.trials)]
    cells = _execute(jobs, workers)

    rows = []
    for si, point in enumerate(spec.sweep):
        for algo in spec.algorithms:
            ok = [c for c in cells if c["sweep_idx"] == si
                  and c["algorithm"] == algo and c["error"] is None]
            if not ok:
                rows.append({"algorithm": algo, "sweep_idx": si,
                             "p_mbs_dbm": point.p_mbs_dbm,
                             "p_sbs_dbm": point.p_sbs_dbm,
                             "cluster": point.cluster_label,
                             "failed": True})
                continue
            rates = np.array([c["rate"] for c in ok])
            stderr = float(rates.std(ddof=1) / np.sqrt(len(rates))) \
                if len(rates) > 1 else 0.0
            rows.append({
                "algorithm": algo, "sweep_idx": si,
                "p_mbs_dbm": point.p_mbs_dbm, "p_sbs_dbm": point.p_sbs_dbm,
                "cluster": point.cluster_label,
                "mean_rate": float(rates.mean()), "stderr_rate": stderr,
                "mean_iters": float(np.mean([c["iters"] for c in ok])),
                "mean_wall_ms": float(np.mean([c["wall_ms"] for c in ok])),
                "failed": False,
            })
    rows.sort(key=lambda r: (r["algorithm"], r["sweep_idx"]))

    header = ["algorithm", "p_mbs_dbm", "p_sbs_dbm", "cluster",
              "mean_rate_bits", "stderr_rate_bits", "mean_iters"]
    csv_rows = []
    for r in rows:
        if r["failed"]:
            csv_rows.append([r["algorithm"], _fmt(r["p_mbs_dbm"]),
                             _fmt(r["p_sbs_dbm"]), r["cluster"],
                             "failed", "failed", "failed"])
        else:
            csv_rows.append([r["algorithm"], _fmt(r["p_mbs_dbm"]),
                             _fmt(r["p_sbs_dbm"]), r["cluster"],
                             _fmt(r["mean_rate"]), _fmt(r["stderr_rate"]),
                             _fmt(r["mean_iters"])])
    _write_results_csv(os.path.join(outdir, "results.csv"), header, csv_rows)

    traces = _write_traces(outdir, cells)
    n_failed = sum(1 for c in cells if c["error"] is not None)
    _write_summary(outdir, {
        "kind": "run", "master_seed": master, "backend": backend_name(),
        "spec": spec.echo(), "rows": rows, "cells": _summary_cells(cells),
        "traces": traces, "failed_cells": n_failed,
        "total_cells": len(cells),
    })
    if n_failed > 0.01 * len(cells):
        raise RuntimeError(f"{n_failed}/{len(cells)} cells failed; see "
                           f"{os.path.join(outdir, 'summary.json')}")
    return ResultTable(rows=rows, kind="run")


def _run_compare_cell(job):
    """Baseline (full CSI) plus every partial-CSI algorithm on one
    (trial, sweep point), with a shared evaluation sample set."""
    spec, master, trial, si = job
    point = spec.sweep[si]
    out = {"sweep_idx": si, "trial": trial, "error": None, "metrics": {}}
    try:
        cfg, ls, ch = _make_channel(spec, master, trial, point)
        budgets = PowerBudgets.from_config(cfg)
        weights = cfg.weights
        cl = _point_clustering(point, ls, cfg)

        rng_b = _stream(master, trial, si, _ALGO_IDS[BASELINE], 0)
        tr_b = slbm(ch, cl, weights,
                    replace(spec.outer, surrogate_family="sinrc"),
                    spec.solver, budgets=budgets, rng=rng_b)
        out["baseline"] = float(tr_b.rates.weighted_sum)

        chk = known_channels(ch, cl)
        sampler = make_omega_sampler(chk, ls, cl)
        eval_rng = _stream(master, trial, si, _EVAL_STREAM, 1)
        eval_h = np.stack([sampler(eval_rng)
                           for _ in range(spec.stoch.eval_sample_count)])
        ordr = expected_decoding_order(chk.h_user_sbs, ls, cl)

        for algo in spec.algorithms:
            if algo not in PARTIAL_CSI:
                continue
            rng = _stream(master, trial, si, _ALGO_IDS[algo], 0)
            rng_eval = _stream(master, trial, si, _ALGO_IDS[algo], 1)
            tr = _solve_one(algo, spec, cfg, ls, ch, point, budgets, rng,
                            rng_eval)
            rep = sample_mean_report(tr.x, eval_h, chk, cl, ordr, weights)
            out["metrics"][algo] = float(rep.weighted_sum)
    except Exception as exc:               # noqa: BLE001 - cell isolation
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def compare_partial_csi(spec: ExperimentSpec, master_seed=None,
                        workers=1) -> ResultTable:
    """Percentage of the full-CSI baseline sum rate achieved by each
    partial-CSI algorithm, per sweep point, with matched channels and a
    shared evaluation sample set per trial."""
    if BASELINE not in spec.algorithms:
        raise ValueError(f"compare requires the {BASELINE} baseline in "
                         "spec.algorithms")
    partial = [a for a in spec.algorithms if a in PARTIAL_CSI]
    if not partial:
        raise ValueError("compare requires at least one partial-CSI "
                         "algorithm")
    master = spec.network.seed if master_seed is None else int(master_seed)
    outdir = spec.output_dir
    os.makedirs(outdir, exist_ok=True)

    jobs = [(spec, master, trial, si)
            for si in range(len(spec.sweep))
            for trial in range(spec.trials)]
    cells = _execute_compare(jobs, workers)

    rows = []
    for si, point in enumerate(spec.sweep):
        ok = [c for c in cells if c["sweep_idx"] == si
              and c["error"] is None]
        base_mean = float(np.mean([c["baseline"] for c in ok])) if ok else 0.0
        if ok and base_mean <= 0:
            raise RuntimeError(f"degenerate baseline at sweep point {si}: "
                               f"mean rate {base_mean}")
        for algo in partial:
            vals = [c["metrics"][algo] for c in ok if algo in c["metrics"]]
            if not vals:
                rows.append({"algorithm": algo, "sweep_idx": si,
                             "p_mbs_dbm": point.p_mbs_dbm,
                             "p_sbs_dbm": point.p_sbs_dbm,
                             "cluster": point.cluster_label, "failed": True})
                continue
            mean_rate = float(np.mean(vals))
            rows.append({
                "algorithm": algo, "sweep_idx": si,
                "p_mbs_dbm": point.p_mbs_dbm, "p_sbs_dbm": point.p_sbs_dbm,
                "cluster": point.cluster_label,
                "percentage": 100.0 * mean_rate / base_mean,
                "mean_rate": mean_rate, "baseline_rate": base_mean,
                "failed": False,
            })
    rows.sort(key=lambda r: (r["algorithm"], r["sweep_idx"]))

    header = ["algorithm", "p_mbs_dbm", "p_sbs_dbm", "cluster",
              "percentage", "mean_rate_bits", "baseline_rate_bits"]
    csv_rows = []
    for r in rows:
        if r["failed"]:
            csv_rows.append([r["algorithm"], _fmt(r["p_mbs_dbm"]),
                             _fmt(r["p_sbs_dbm"]), r["cluster"],
                             "failed", "failed", "failed"])
        else:
            csv_rows.append([r["algorithm"], _fmt(r["p_mbs_dbm"]),
                             _fmt(r["p_sbs_dbm"]), r["cluster"],
                             _fmt(r["percentage"]), _fmt(r["mean_rate"]),
                             _fmt(r["baseline_rate"])])
    _write_results_csv(os.path.join(outdir, "results.csv"), header, csv_rows)

    n_failed = sum(1 for c in cells if c["error"] is not None)
    _write_summary(outdir, {
        "kind": "compare-csi", "master_seed": master,
        "backend": backend_name(), "spec": spec.echo(), "rows": rows,
        "cells": [{k: c[k] for k in
                   ("sweep_idx", "trial", "error", "baseline", "metrics")
                   if k in c} for c in cells],
        "traces": {}, "failed_cells": n_failed, "total_cells": len(cells),
    })
    if n_failed > 0.01 * len(cells):
        raise RuntimeError(f"{n_failed}/{len(cells)} compare cells failed")
    return ResultTable(rows=rows, kind="compare-csi")


def _execute_compare(jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_compare_cell, jobs))
    return [_run_compare_cell(j) for j in jobs]


def _desk_network(**over):
    base = dict(region_side_m=600.0, n_sbs=4, n_users_scheduled=2,
                mbs_antennas=8, sbs_tx_antennas=2)
    base.update(over)
    return NetworkConfig(**base)


def preset(name, output_dir=None):
    """Built-in experiment specs: smoke (seconds), desk (<10 min),
    desk-compare (partial-CSI percentages), large (slow, full scale)."""
    if name == "smoke":
        spec = ExperimentSpec(
            network=_desk_network(), trials=2,
            sweep=[SweepPoint(40.0, 30.0, "full")],
            algorithms=["sinrc-slbm"], output_dir="out-smoke",
            solver=SubsolverConfig(max_inner_iters=120),
            outer=SlbmConfig(max_outer_iters=10))
        kind = "run"
    elif name == "desk":
        spec = ExperimentSpec(
            network=_desk_network(), trials=20,
            sweep=[SweepPoint(40.0, 30.0, "full")],
            algorithms=["sinrc-slbm", "wmmse-slbm", "heuristic"],
            output_dir="out-desk")
        kind = "run"
    elif name == "desk-compare":
        spec = ExperimentSpec(
            network=_desk_network(), trials=20,
            sweep=[SweepPoint(40.0, 30.0, 2), SweepPoint(40.0, 30.0, 3),
                   SweepPoint(40.0, 30.0, 4)],
            algorithms=["sinrc-slbm", "stochastic-sinrc", "dlb", "saa"],
            output_dir="out-desk-compare",
            stoch=StochConfig(max_iters=150, eval_sample_count=200),
            saa_samples=50)
        kind = "compare-csi"
    elif name == "paper":
        spec = ExperimentSpec(
            network=NetworkConfig(region_side_m=1000.0, n_sbs=8,
                                  n_users_scheduled=3, mbs_antennas=32,
                                  sbs_tx_antennas=2, mbs_exclusion_m=250.0,
                                  sbs_exclusion_m=50.0),
            trials=100,
            sweep=[SweepPoint(p, 30.0, "full") for p in
                   (30.0, 35.0, 40.0, 45.0, 50.0)],
            algorithms=["sinrc-slbm", "wmmse-slbm", "heuristic"],
            output_dir="out-paper")
        kind = "run"
    else:
        raise ValueError(f"unknown preset {name!r}; "
                         "choose smoke, desk, desk-compare or paper")
    if output_dir is not None:
        spec.output_dir = output_dir
    return spec, kind
