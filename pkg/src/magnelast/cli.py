"""Command line front end: `sim <experiment> --config <path> [--out DIR]`.

Exit status is 0 when every requested run completed, 1 when a run failed,
and 2 on configuration errors.  The stability experiment always exits 0,
because Fail cells there are an expected outcome encoded in its table.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .config import EXPERIMENTS, ConfigError, load
from .experiments import ExperimentFailure


def _table(headers, rows) -> str:
    widths = [max(len(str(headers[i])), *(len(str(r[i])) for r in rows))
              for i in range(len(headers))]
    def fmt(row):
        return "  ".join(str(v).rjust(w) for v, w in zip(row, widths))
    return "\n".join([fmt(headers)] + [fmt(r) for r in rows])


def _print_order_table(name, inv_k, errors_by_label):
    labels = list(errors_by_label)
    headers = ["1/k"] + [x for lab in labels for x in (lab, "order")]
    rows = []
    for i, ik in enumerate(inv_k):
        row = [f"{ik:g}"]
        for lab in labels:
            errs = errors_by_label[lab]
            row.append(f"{errs[i]:.6e}")
            row.append("-" if i == 0 else
                       f"{experiments.observed_orders(errs)[i - 1]:.3f}")
        rows.append(row)
    print(f"\n{name}")
    print(_table(headers, rows))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sim", description="magnetoelastic simulation experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", default=None, help="output directory "
                        "(default: the config's [output] directory)")
    parser.add_argument("--threads", type=int, default=1,
                        help="independent runs executed concurrently")
    args = parser.parse_args(argv)

    try:
        cfg = load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.name != args.experiment:
        print(f"config error: [experiment] name = {cfg.name} does not match "
              f"requested experiment {args.experiment}", file=sys.stderr)
        return 2

    try:
        if args.experiment == "convergence-time":
            res = experiments.cmd_convergence_time(cfg, args.out, args.threads)
            _print_order_table("H1 self-convergence at final time", res.inv_k,
                               {"err_m_H1": res.err_m, "err_u_H1": res.err_u})
        elif args.experiment == "unit-length":
            res = experiments.cmd_unit_length(cfg, args.out, args.threads)
            _print_order_table("unit-length violation (max over steps)",
                               res.inv_k,
                               {"err_L1": res.err_l1, "err_Linf": res.err_linf})
        elif args.experiment == "energy-dissipation":
            results = experiments.cmd_energy_dissipation(cfg, args.out,
                                                         args.threads)
            rows = [[preset, f"{k:g}", f"{r.records[0].total_energy:.6f}",
                     f"{r.final_energy:.6f}"]
                    for (preset, k), r in sorted(results.items())]
            print(_table(["scheme", "k", "E(0)", "E(T)"], rows))
        elif args.experiment == "nutation":
            res = experiments.cmd_nutation(cfg, args.out)
            print(f"phase 1: E(T) = {res.phase1.final_energy:.9f} "
                  f"({'converged' if res.phase1_converged else 'still moving'})")
            print(f"phase 2: E(T) = {res.phase2.final_energy:.9f} over "
                  f"{res.phase2.steps_completed} steps")
        elif args.experiment == "stability":
            res = experiments.cmd_stability(cfg, args.out, args.threads)
            for beta in res.beta_list:
                print(f"\nfinal energy, beta = {beta:g}")
                print(res.table(beta))
        else:
            res = experiments.cmd_single_run(cfg, args.out)
            if res.failed:
                print(f"run failed: {res.cause}", file=sys.stderr)
                return 1
            print(f"completed {res.steps_completed} steps, "
                  f"E(T) = {res.final_energy:.9f}")
    except ExperimentFailure as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
