"""Command line interface: ``exuberance {test,cv,dissect,simulate,plotdata}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .config import RunConfig, read_config_file
from .critical import CvCache, NullSpec, simulate_null_cv, wild_bootstrap_cv
from .dgp import EvansBubble, ExplosiveEpisode, RandomWalk, generate, power_study, replicate_stats
from .pipeline import prepare, run_dissection
from .recursive import datestamp, sweep
from .series import Quarter, split_on_gaps


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags win")
    p.add_argument("--spec", choices=["fcfe1", "fcfe2", "ni", "div"])
    p.add_argument("--lags", help="schwert | fixed:K | aic:KMAX | bic:KMAX")
    p.add_argument("--r0", help="minimum window fraction or 'auto'")
    p.add_argument("--cv-source", choices=["simulated", "bootstrap"])
    p.add_argument("--level", help="critical value quantile (default 0.95)")
    p.add_argument("--seed")
    p.add_argument("--cv-reps")
    p.add_argument("--bootstrap-reps")
    p.add_argument("--workers")
    p.add_argument("--log-spec", action="store_const", const="true")
    p.add_argument("--exchanges", help="comma-separated exchange codes to keep")
    p.add_argument("--second-order-variant", choices=["pre", "post"])
    p.add_argument("--min-duration")
    p.add_argument("--cache-dir")


_RUN_KEYS = (
    "spec", "lags", "r0", "cv_source", "level", "seed", "cv_reps", "bootstrap_reps",
    "workers", "log_spec", "exchanges", "second_order_variant", "min_duration", "cache_dir",
    "prices", "fundamentals", "meta", "out",
)


def _config(args) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig.from_mapping(values)


def _read_series_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    obs = []
    for row in rows:
        v = row.get("value", "").strip()
        obs.append((Quarter.parse(row["quarter"]), float(v) if v else None))
    return obs


def cmd_test(args) -> int:
    cfg = _config(args)
    obs = _read_series_csv(args.series)
    stock = Path(args.series).stem
    segments = split_on_gaps(obs, min_len=cfg.min_len, stock_id=stock)
    cache = CvCache(cfg.cache_dir, cfg.workers)
    report = []
    for seg in segments:
        kind = "fundamental" if args.fundamental else "price"
        seg = prepare(seg, kind, cfg.log_spec)
        sw = sweep(seg.values, cfg.rule, cfg.lags)
        if cfg.cv_source == "bootstrap":
            bs = wild_bootstrap_cv(seg.values, cfg.rule, cfg.lags, cfg.bootstrap_reps, cfg.seed, cfg.level)
            gs_cv, bs_cv, sadf_cv = bs.gsadf_cv, bs.bsadf_cv, None
        else:
            table = cache.get(len(seg), cfg.rule, cfg.lags, cfg.cv_reps, cfg.seed, (cfg.level,))
            gs_cv, bs_cv, sadf_cv = table.gsadf_cv(cfg.level), table.bsadf_cv(cfg.level), table.sadf_cv(cfg.level)
        stat = sw.gsadf()
        eps = datestamp(sw.bsadf_sequence(), bs_cv, seg.series_id, seg.start, cfg.min_duration)
        report.append(
            {
                "series_id": seg.series_id,
                "start": str(seg.start),
                "T": len(seg),
                "w0": sw.w0,
                "k": sw.k,
                "sadf": _num(sw.sadf()),
                "sadf_cv": sadf_cv,
                "gsadf": _num(stat),
                "gsadf_cv": gs_cv,
                "rejected": bool(stat > gs_cv),
                "episodes": [
                    {"start": str(a), "end": None if b is None else str(b)}
                    for a, b in eps.quarter_spans()
                ]
                if stat > gs_cv
                else [],
            }
        )
    json.dump(report, sys.stdout, indent=1)
    print()
    return 0


def _num(x):
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def cmd_cv(args) -> int:
    cfg = _config(args)
    if args.out:
        table = simulate_null_cv(
            NullSpec(T=args.T, r0=cfg.r0, reps=cfg.cv_reps, seed=cfg.seed), cfg.lags, workers=cfg.workers
        )
        table.save(args.out)
        path = args.out
    else:
        cache = CvCache(cfg.cache_dir, cfg.workers)
        table = cache.get(args.T, cfg.rule, cfg.lags, cfg.cv_reps, cfg.seed)
        path = str(cache.directory)
    print(json.dumps({"T": table.T, "w0": table.w0, "lags": table.lags, "sadf": table.sadf, "gsadf": table.gsadf, "path": path}))
    return 0


def cmd_dissect(args) -> int:
    from .ingest import ingest

    cfg = _config(args)
    missing = [k for k in ("prices", "fundamentals", "meta", "out") if getattr(cfg, k) is None]
    if missing:
        print(f"missing required settings: {', '.join(missing)}", file=sys.stderr)
        return 2
    panel = ingest(cfg.prices, cfg.fundamentals, cfg.meta, cfg)
    manifest = run_dissection(panel, cfg, cfg.out)
    json.dump(manifest["counts"], sys.stdout, indent=1)
    print()
    return 0


def _dgp(args):
    if args.dgp == "rw":
        return RandomWalk(T=args.T, sigma=args.sigma, y0=args.y0)
    if args.dgp == "episode":
        return ExplosiveEpisode(
            T=args.T, beta=args.beta, start=args.start, length=args.length, sigma=args.sigma, y0=args.y0
        )
    kw = {}
    if args.sigma_set:
        kw["sigma"] = args.sigma
    return EvansBubble(T=args.T, pi=args.pi, r=args.rate, b=args.threshold, zeta=args.zeta, **kw)


def cmd_simulate(args) -> int:
    args.sigma_set = args.sigma is not None
    if args.sigma is None:
        args.sigma = 1.0
    spec = _dgp(args)
    if args.power_reps:
        cfg = _config(args)
        table = CvCache(cfg.cache_dir, cfg.workers).get(spec.T, cfg.rule, cfg.lags, cfg.cv_reps, cfg.seed)
        stats = replicate_stats(spec, args.power_reps, args.sim_seed, cfg.rule, cfg.lags, cfg.workers)
        reports = [
            asdict(power_study(spec, t, table, args.power_reps, args.sim_seed, cfg.rule, cfg.lags, cfg.level, stats=stats))
            for t in ("SADF", "GSADF")
        ]
        text = json.dumps({"dgp": type(spec).__name__, "spec": asdict(spec), "reports": reports}, indent=1)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return 0
    s = generate(spec, args.sim_seed)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["quarter", "value"])
    for q, v in zip(s.quarters, s.values):
        w.writerow([str(q), repr(float(v))])
    if args.out:
        fh.close()
    return 0


def cmd_plotdata(args) -> int:
    src = Path(args.run_dir)
    dst = Path(args.out or args.run_dir)
    dst.mkdir(parents=True, exist_ok=True)
    for name in ("sector_exuberance", "sector_exuberance_pre"):
        path = src / f"{name}.csv"
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        sectors = list(dict.fromkeys(r["sector"] for r in rows))
        quarters = list(dict.fromkeys(r["quarter"] for r in rows))
        for col in ("mcap", "count"):
            table = {(r["quarter"], r["sector"]): r[col] for r in rows}
            with open(dst / f"{name}_{col}_wide.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["quarter"] + sectors)
                for q in quarters:
                    w.writerow([q] + [table.get((q, s), "0") for s in sectors])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exuberance", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="GSADF/BSADF on one quarter,value CSV")
    p.add_argument("series")
    p.add_argument("--fundamental", action="store_true", help="apply the positivity shift first")
    _add_run_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("cv", help="build or cache a critical-value table")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--out", help="write the table here instead of the cache")
    _add_run_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("dissect", help="full panel pipeline")
    p.add_argument("--prices")
    p.add_argument("--fundamentals")
    p.add_argument("--meta")
    p.add_argument("--out")
    _add_run_flags(p)
    p.set_defaults(func=cmd_dissect)

    p = sub.add_parser("simulate", help="generate a synthetic series or run a power study")
    p.add_argument("--dgp", choices=["rw", "episode", "evans"], default="rw")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--sigma", type=float)
    p.add_argument("--y0", type=float, default=100.0)
    p.add_argument("--beta", type=float, default=1.06)
    p.add_argument("--start", type=int, default=60)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--pi", type=float, default=0.15, help="Evans collapse probability")
    p.add_argument("--rate", type=float, default=0.05, help="Evans net growth rate r")
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=0.5)
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--power-reps", type=int, default=0)
    p.add_argument("--out")
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plotdata", help="reshape sector outputs to wide tables")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
