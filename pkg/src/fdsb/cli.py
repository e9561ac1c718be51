"""Command-line entry point.

Subcommands::

    fdsb run <spec-file>          execute the sweep described in a JSON spec
    fdsb compare-csi <spec-file>  partial-CSI percentage-of-baseline table
    fdsb preset <name>            run a built-in spec (smoke, desk,
                                  desk-compare, large)

Common flags: ``--seed`` overrides the master seed, ``--workers`` sets
the process count for concurrent trials, ``--out`` overrides the output
directory.  Each invocation writes ``results.csv``, ``summary.json``
and per-run ``trace_<id>.csv`` files.
"""

import argparse
import sys

from .harness import ExperimentSpec, compare_partial_csi, preset, \
    run_experiment


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: network config seed)")
    p.add_argument("--workers", type=int, default=1,
                   help="number of worker processes (default 1)")
    p.add_argument("--out", default=None,
                   help="output directory (default: from spec)")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="fdsb",
        description="Joint access/backhaul beamformer experiments for "
                    "full-duplex self-backhauled networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep from a JSON spec file")
    p_run.add_argument("spec_file")
    _add_common(p_run)

    p_cmp = sub.add_parser("compare-csi",
                           help="partial-CSI vs full-CSI percentage table")
    p_cmp.add_argument("spec_file")
    _add_common(p_cmp)

    p_pre = sub.add_parser("preset", help="run a built-in experiment")
    p_pre.add_argument("name",
                       choices=["smoke", "desk", "desk-compare", "large"])
    _add_common(p_pre)
    return ap


def _print_table(table):
    for r in table.rows:
        if r["failed"]:
            print(f"{r['algorithm']:18s} P_M={r['p_mbs_dbm']:g} dBm "
                  f"C={r['cluster']}: FAILED")
        elif table.kind == "compare-csi":
            print(f"{r['algorithm']:18s} P_M={r['p_mbs_dbm']:g} dBm "
                  f"C={r['cluster']}: {r['percentage']:.1f}% of baseline "
                  f"({r['mean_rate']:.3f} vs {r['baseline_rate']:.3f} "
                  f"bits/s/Hz)")
        else:
            print(f"{r['algorithm']:18s} P_M={r['p_mbs_dbm']:g} dBm "
                  f"C={r['cluster']}: {r['mean_rate']:.3f} "
                  f"+/- {r['stderr_rate']:.3f} bits/s/Hz "
                  f"({r['mean_iters']:.1f} iters)")


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "preset":
        spec, kind = preset(args.name, output_dir=args.out)
        if args.name == "large":
            print("note: the large preset may take hours", file=sys.stderr)
    else:
        spec = ExperimentSpec.from_file(args.spec_file)
        if args.out is not None:
            spec.output_dir = args.out
        kind = "compare-csi" if args.command == "compare-csi" else "run"

    runner = compare_partial_csi if kind == "compare-csi" else run_experiment
    try:
        table = runner(spec, master_seed=args.seed, workers=args.workers)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _print_table(table)
    print(f"wrote {spec.output_dir}/results.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
