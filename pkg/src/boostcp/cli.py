"""Command-line interface: ``synth``, ``run`` and ``audit``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .conformal import Intervals
from .data import SYNTH_PARAMS, DataError, load_csv, save_csv, synth_heteroskedastic
from .pipeline import BoostConfig, ConfigError, boosted_conformal, derived_seeds, holdout_split
from .report import (aggregate, evaluate, evaluate_intervals, improvement, write_cv_curve_csv,
                     write_leaf_table_csv)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """``"1..10"``, ``"1,2,5"`` or mixtures such as ``"1..3,7"``; order kept, duplicates dropped."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed specification {part!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    if any(s < 0 for s in seeds):
        raise UsageError("seeds must be non-negative")
    return list(dict.fromkeys(seeds))


def _dump(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def cmd_synth(args) -> int:
    if args.n < 1 or args.p < 1:
        raise UsageError(f"--n and --p must be positive (got n={args.n}, p={args.p})")
    ds = synth_heteroskedastic(args.n, args.p, args.seed)
    save_csv(ds, args.out)
    print(json.dumps(dict(SYNTH_PARAMS, n=args.n, p=args.p, seed=args.seed,
                          columns=list(ds.column_names) + [ds.response_name]), sort_keys=True))
    return EXIT_OK


def _build_config(args) -> BoostConfig:
    base = {}
    if args.config:
        base = BoostConfig.from_json(args.config).to_dict()
    overrides = {"objective": args.objective, "family": args.family, "rounds": args.rounds,
                 "alpha": args.alpha, "learning_rate": args.learning_rate}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.constant_sigma:
        base["constant_sigma"] = True
    return BoostConfig.from_dict(base)


def run_seed(ds, cfg: BoostConfig, seed: int) -> dict:
    """Holdout split, fit, and evaluate baseline and boosted intervals for one seed."""
    cfg = cfg.replace(seed=seed)
    rest, test_idx = holdout_split(ds.n, cfg.test_fraction, derived_seeds(seed)[0])
    model = boosted_conformal(ds.subset(rest), cfg)
    test = ds.subset(test_idx)
    boosted = evaluate(test, model, "boosted")
    baseline = evaluate(test, model, "baseline")
    boosted.improvement_vs_baseline = improvement(boosted, baseline)
    return {
        "seed": seed,
        "config": cfg.to_dict(),
        "boosted": boosted.to_dict(),
        "baseline": baseline.to_dict(),
        "selected_rounds": model.score.selected_rounds,
        "cv_curve": model.score.cv_curve.tolist(),
        "quantile": {"boosted": model.quantile.value, "baseline": model.baseline_quantile.value},
        "response_scale": model.scale,
        "notes": list(model.score.notes),
    }


def _seed_job(payload):
    ds, cfg, seed = payload
    return run_seed(ds, cfg, seed)


def summarize(reports: list[dict]) -> dict:
    out = {"seeds": [r["seed"] for r in reports], "n_seeds": len(reports)}
    for which in ("boosted", "baseline"):
        out[which] = {m: aggregate([r[which][m] for r in reports])
                      for m in ("marginal_coverage", "avg_length", "max_cond_deviation")}
    out["improvement_vs_baseline"] = {
        m: aggregate([r["boosted"]["improvement_vs_baseline"][m] for r in reports])
        for m in ("avg_length", "max_cond_deviation")
    }
    out["selected_rounds"] = aggregate([r["selected_rounds"] for r in reports])
    return out


def cmd_run(args) -> int:
    cfg = _build_config(args)
    seeds = parse_seeds(args.seeds)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if (args.data is None) == (args.synth is None):
        raise UsageError("give exactly one of --data or --synth")
    if args.data is not None:
        ds = load_csv(args.data, args.response_column)
    else:
        if args.synth < 1 or args.p < 1:
            raise UsageError("--synth and --p must be positive")
        ds = synth_heteroskedastic(args.synth, args.p, args.data_seed)
    os.makedirs(args.out, exist_ok=True)

    jobs = [(ds, cfg, s) for s in seeds]
    if args.workers == 1 or len(seeds) == 1:
        reports = [_seed_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            reports = list(pool.map(_seed_job, jobs))

    for rep in reports:
        s = rep["seed"]
        _dump(rep, os.path.join(args.out, f"seed_{s}.json"))
        if args.csv:
            from .report import EvalReport
            for which in ("boosted", "baseline"):
                write_leaf_table_csv(EvalReport.from_dict(rep[which]),
                                     os.path.join(args.out, f"seed_{s}_leaves_{which}.csv"))
            write_cv_curve_csv(np.asarray(rep["cv_curve"]), os.path.join(args.out, f"seed_{s}_cv_curve.csv"))
    agg = summarize(reports)
    _dump(agg, os.path.join(args.out, "aggregate.json"))
    b, z = agg["boosted"], agg["baseline"]
    print(f"seeds={len(reports)} length boosted={b['avg_length']['mean']:.4f} "
          f"baseline={z['avg_length']['mean']:.4f}; max deviation boosted="
          f"{b['max_cond_deviation']['mean']:.4f} baseline={z['max_cond_deviation']['mean']:.4f}")
    return EXIT_OK


def _read_intervals(path) -> Intervals:
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        lo_col, hi_col = header.index("lower"), header.index("upper")
    except ValueError:
        raise DataError(f"{path}: needs 'lower' and 'upper' columns, found {header}") from None
    lo, hi = [], []
    for i, row in enumerate(rows[1:], start=2):
        try:
            lo.append(float(row[lo_col]))
            hi.append(float(row[hi_col]))
        except (ValueError, IndexError):
            raise DataError(f"{path}: bad interval on line {i}") from None
    return Intervals(np.array(lo), np.array(hi))


def cmd_audit(args) -> int:
    ds = load_csv(args.data, args.response_column)
    iv = _read_intervals(args.intervals)
    if len(iv) != ds.n:
        raise UsageError(f"row count mismatch: data has {ds.n} rows, intervals have {len(iv)}")
    rep = evaluate_intervals(ds.features, ds.response, iv, args.alpha, args.max_leaves, args.min_leaf)
    if args.out:
        _dump(rep.to_dict(), args.out)
    print(f"coverage={rep.marginal_coverage:.4f} avg_length={rep.avg_length:.4f} "
          f"max_cond_deviation={rep.max_cond_deviation:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boostcp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write synthetic heteroskedastic data as CSV")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="boost, calibrate and evaluate over several seeds")
    r.add_argument("--config", help="JSON file with BoostConfig fields")
    r.add_argument("--data", help="CSV with a header row")
    r.add_argument("--synth", type=int, metavar="N", help="use N synthetic rows instead of --data")
    r.add_argument("--p", type=int, default=5, help="synthetic feature count")
    r.add_argument("--data-seed", type=int, default=0, help="synthetic generator seed")
    r.add_argument("--response-column", default="last")
    r.add_argument("--seeds", default="0")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--objective", choices=["length", "condcov"])
    r.add_argument("--family", choices=["local", "cqr"])
    r.add_argument("--rounds", type=int)
    r.add_argument("--alpha", type=float)
    r.add_argument("--learning-rate", type=float)
    r.add_argument("--constant-sigma", action="store_true", help="constant baseline scale")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--csv", action="store_true", help="also write leaf tables and CV curves as CSV")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="evaluate externally supplied intervals")
    a.add_argument("--data", required=True)
    a.add_argument("--intervals", required=True, help="CSV with columns lower, upper")
    a.add_argument("--alpha", type=float, default=0.1)
    a.add_argument("--max-leaves", type=int, default=8)
    a.add_argument("--min-leaf", type=int)
    a.add_argument("--response-column", default="last")
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: synth, run or audit")
        if getattr(args, "alpha", None) is not None and not 0 < args.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        return args.func(args)
    except (UsageError, ConfigError, DataError) as exc:
        print(f"boostcp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported with its origin
        mod = type(exc).__module__
        print(f"boostcp: runtime failure ({mod}.{type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
