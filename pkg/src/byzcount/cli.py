"""Batch front end: graph generation, single runs, sweeps, aggregation.

Exit codes: 0 success, 2 I/O trouble, 3 configuration trouble, 4
internal error.  ``BYZCOUNT_OUTDIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from statistics import median

import numpy as np

from .engine import (
    ConfigError,
    ExperimentConfig,
    run_trials,
    write_summary_json,
    write_trial_csv,
)
from .graph import augment_small_world, generate_h_graph, save_topology
from .rng import stream

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_INTERNAL = 4

_SWEEP_LIST_FIELDS = ("n", "d", "delta", "epsilon", "strategy", "algorithm")
_SWEEP_FIELDS = _SWEEP_LIST_FIELDS + ("trials", "seed", "cell_cap", "out")


def _outdir() -> str:
    return os.environ.get("BYZCOUNT_OUTDIR", ".")


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = args.out or os.path.join(_outdir(), f"h_{args.n}_{args.d}_{args.seed}.txt")
    h = generate_h_graph(args.n, args.d, seed=args.seed)
    topo = augment_small_world(h)
    save_topology(topo, out)
    print(f"wrote {out}: n={h.n} d={h.d} k={topo.k} edges={h.edges.shape[0]}")
    return EXIT_OK


def _resolve_run_config(args) -> ExperimentConfig:
    data = _load_json(args.config)
    cfg = ExperimentConfig.from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _resolve_run_config(args)
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2))
        return EXIT_OK
    out = args.out or os.path.join(_outdir(), "run")
    results = run_trials(cfg)
    write_trial_csv(results, out + ".csv")
    write_summary_json(results, out + ".summary.json")
    mean_success = sum(r.success_fraction for r in results) / len(results)
    print(f"wrote {out}.csv and {out}.summary.json "
          f"({cfg.trials} trial(s), mean success {mean_success:.3f})")
    return EXIT_OK


def _sweep_cells(spec: dict) -> list[dict]:
    lists = {}
    for name in _SWEEP_LIST_FIELDS:
        val = spec.get(name)
        if val is None:
            continue
        if not isinstance(val, list) or not val:
            raise ConfigError(f"{name}: sweep fields must be non-empty lists")
        lists[name] = val
    if "n" not in lists:
        raise ConfigError("n: a sweep needs at least a list of sizes")
    cells = [{}]
    for name, values in lists.items():
        cells = [dict(cell, **{name: v}) for cell in cells for v in values]
    return cells


def cmd_sweep(args) -> int:
    spec = _load_json(args.config)
    if not isinstance(spec, dict):
        raise ConfigError("sweep: expected a JSON object")
    unknown = sorted(set(spec) - set(_SWEEP_FIELDS))
    if unknown:
        raise ConfigError(f"sweep: unknown fields {', '.join(unknown)}")
    cells = _sweep_cells(spec)
    cap = int(spec.get("cell_cap", 256))
    if len(cells) > cap:
        raise ConfigError(f"sweep: {len(cells)} cells exceed the cap {cap}")
    root_seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    trials = args.trials if args.trials is not None else int(spec.get("trials", 1))
    out = args.out or spec.get("out") or os.path.join(_outdir(), "sweep")

    rows = []
    for idx, cell in enumerate(cells):
        cell_seed = int(stream(root_seed, "trial", idx).integers(0, 2**31 - 1))
        row = {
            "cell": idx, "n": cell.get("n"), "d": cell.get("d", 8),
            "delta": cell.get("delta", 0.6), "epsilon": cell.get("epsilon", 0.1),
            "strategy": cell.get("strategy", "none"),
            "algorithm": cell.get("algorithm", "basic"),
            "trials": trials, "cell_seed": cell_seed,
        }
        try:
            cfg = ExperimentConfig(
                n=int(cell["n"]), d=int(cell.get("d", 8)),
                delta=float(cell.get("delta", 0.6)),
                epsilon=float(cell.get("epsilon", 0.1)),
                strategy=cell.get("strategy", "none"),
                algorithm=cell.get("algorithm", "basic"),
                seed=cell_seed, trials=trials).validate()
            results = run_trials(cfg)
        except Exception as exc:  # mark the cell, keep sweeping
            row.update(status=f"failed: {exc}", est_median="", est_q1="",
                       est_q3="", success_mean="", byz_safe_success_mean="",
                       rounds_mean="", crashed_honest_mean="")
            rows.append(row)
            continue
        ests = []
        for r in results:
            alive = ~r.byz_mask & ~r.crashed
            ests.extend(int(e) for e in r.decided[alive] if e > 0)
        safe_fracs = [r.byz_safe_success_fraction for r in results
                      if r.byz_safe_success_fraction is not None]
        q1, q3 = (np.percentile(ests, [25, 75]) if ests else (math.nan, math.nan))
        row.update(
            status="ok",
            est_median=median(ests) if ests else "",
            est_q1=float(q1) if ests else "",
            est_q3=float(q3) if ests else "",
            success_mean=sum(r.success_fraction for r in results) / len(results),
            byz_safe_success_mean=(sum(safe_fracs) / len(safe_fracs)
                                   if safe_fracs else ""),
            rounds_mean=sum(r.rounds_total for r in results) / len(results),
            crashed_honest_mean=sum(r.crashed_honest for r in results) / len(results),
        )
        rows.append(row)

    header = ["cell", "n", "d", "delta", "epsilon", "strategy", "algorithm",
              "trials", "cell_seed", "status", "est_median", "est_q1", "est_q3",
              "success_mean", "byz_safe_success_mean", "rounds_mean",
              "crashed_honest_mean"]
    with open(out + ".csv", "w", newline="") as fh:
        fh.write("# sweep " + json.dumps({"spec": spec, "seed": root_seed,
                                          "trials": trials}) + "\n")
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        w.writerows(rows)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"wrote {out}.csv: {len(rows)} cells, {failed} failed")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = args.out or os.path.join(_outdir(), "analysis.csv")
    rows = []
    for path in args.inputs:
        per_trial: dict[int, dict] = {}
        with open(path) as fh:
            lines = (ln for ln in fh if not ln.startswith("#"))
            for rec in csv.DictReader(lines):
                t = int(rec["trial"])
                agg = per_trial.setdefault(t, {
                    "nodes": 0, "deciders": 0, "crashed": 0,
                    "byz": 0, "estimates": []})
                agg["nodes"] += 1
                agg["byz"] += rec["class"] == "byz"
                agg["crashed"] += rec["crashed"] == "True"
                if rec["decided"] == "True" and rec["estimate"]:
                    agg["deciders"] += 1
                    agg["estimates"].append(int(rec["estimate"]))
        for t, agg in sorted(per_trial.items()):
            ests = agg["estimates"]
            rows.append({
                "file": os.path.basename(path), "trial": t,
                "nodes": agg["nodes"], "byz": agg["byz"],
                "decided_fraction": agg["deciders"] / max(1, agg["nodes"] - agg["byz"]),
                "median_estimate": median(ests) if ests else "",
                "crashed": agg["crashed"],
            })
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["file", "trial", "nodes", "byz",
                                           "decided_fraction", "median_estimate",
                                           "crashed"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out}: {len(rows)} rows from {len(args.inputs)} file(s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="byzcount",
        description="Byzantine-resilient counting experiments on small-world expanders")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a topology file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True, help="JSON experiment config")
    r.add_argument("--out", help="output base path (.csv / .summary.json)")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--dry-run", action="store_true",
                   help="print the resolved config and exit")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a cross-product of configs")
    s.add_argument("--config", required=True, help="JSON sweep spec")
    s.add_argument("--out", help="output base path (.csv)")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="aggregate run CSVs into a summary table")
    a.add_argument("inputs", nargs="+", help="run CSV files")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"byzcount: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, json.JSONDecodeError, ValueError) as exc:
        print(f"byzcount: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - safety net
        print(f"byzcount: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
