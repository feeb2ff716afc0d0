"""Command-line entry point: ``spt-impact {simulate,reproduce-fig1,calibrate-lambda,constants}``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import ConfigError, parse_config
from .impact import calibrate_linear_lambda

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file (default: reference experiment)")
    p.add_argument("--seed", type=int, help="base seed; path i uses seed + i")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spt-impact", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate an ensemble and write paths and summary")
    _common(p)
    p.add_argument("--prices", help="simulate one path on an ingested t,S_1..S_d CSV")
    p = sub.add_parser("reproduce-fig1", help="run the desk-scale experiment and write panels")
    _common(p)
    p = sub.add_parser("calibrate-lambda", help="linear impact scale from a TWAP target")
    p.add_argument("--S0", type=float, default=15.0)
    p.add_argument("--target-bp", type=float, default=11.5)
    p.add_argument("--adv-frac", type=float, default=0.01)
    p.add_argument("--adv", type=float, default=1e8)
    p.add_argument("--beta", type=float, default=2.0)
    p = sub.add_parser("constants", help="print relative-arbitrage constants as JSON")
    p.add_argument("--config")
    return ap


def _load(args):
    cfg = parse_config(getattr(args, "config", None))
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        over["paths"] = args.paths
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        over["out_dir"] = args.out
    cfg = dataclasses.replace(cfg, **over)
    if cfg.seed < 0 or cfg.paths < 0 or cfg.workers < 1:
        raise ConfigError("--seed >= 0, --paths >= 0 and --workers >= 1 required")
    return cfg


def _simulate(args) -> int:
    from .io import emit_outputs
    from .relarb import ensemble_panels, ensemble_report
    from .simulator import run_monte_carlo

    cfg = _load(args)
    started = datetime.now(timezone.utc)
    if args.prices:
        return _simulate_ingested(cfg, Path(args.prices), started)
    ens = run_monte_carlo(cfg, cfg.paths, cfg.seed, workers=cfg.workers)
    report = ensemble_report(ens)
    emit_outputs(ens, report, cfg.out_dir, cfg, started, "simulate", ensemble_panels(ens))
    print(f"wrote {ens.n_paths} paths to {cfg.out_dir}")
    return EXIT_OK


def _simulate_ingested(cfg, file: Path, started) -> int:
    import numpy as np

    from .accounting import frictionless_baseline, master_decomposition
    from .io import emit_outputs
    from .market import ingest_price_csv
    from .relarb import ensemble_report
    from .simulator import EnsembleSummary, PathResult, simulate_path

    fp = ingest_price_csv(file)
    if fp.d != cfg.market.d:
        raise ConfigError(f"price file has d={fp.d} but market.d={cfg.market.d}")
    dts = np.diff(fp.grid)
    if len(dts) and np.ptp(dts) > 1e-9 * dts.max():
        raise ConfigError("ingested grid must be uniform")
    rec = simulate_path(cfg, fp)
    ws = master_decomposition(rec)
    VF, QF = frictionless_baseline(fp.truncate(rec.steps), cfg.generator, cfg.w, cfg.N)
    res = PathResult(index=0, seed=cfg.seed, record=rec, wealth=ws, frictionless_V=VF,
                     frictionless_Q=QF, dv=None)
    ens = EnsembleSummary([res], cfg.seed, rec.grid, rec.grid[-1])
    emit_outputs(ens, ensemble_report(ens), cfg.out_dir, cfg, started, "simulate")
    print(f"wrote 1 path to {cfg.out_dir}")
    return EXIT_OK


def _reproduce(args) -> int:
    from .io import emit_outputs
    from .relarb import reproduce_experiment

    cfg = _load(args)
    started = datetime.now(timezone.utc)
    ens, report, panels = reproduce_experiment(cfg)
    for m in report["config_mismatches"]:
        print(f"warning: config differs from the reference experiment: {m}", file=sys.stderr)
    emit_outputs(ens, report, cfg.out_dir, cfg, started, "reproduce-fig1", panels)
    if "gap_nominal" in report:
        print(f"mean V impact(T) = {report['mean_V_impact_T']:.6f}, "
              f"frictionless = {report['mean_V_frictionless_T']:.6f}, "
              f"gap = ${report['gap_nominal']:,.0f}")
    return EXIT_OK


def _calibrate(args) -> int:
    print(format(calibrate_linear_lambda(args.S0, args.target_bp, args.adv_frac, args.adv,
                                         args.beta), ".17g"))
    return EXIT_OK


def _constants(args) -> int:
    from .io import dumps_json
    from .relarb import derived_constants

    cfg = parse_config(args.config)
    m = cfg.market
    cap0 = m.cap0  # initial impact is zero, so observed and fundamental caps agree
    ac = derived_constants(cfg.frictionless_constants(), m.d, m.N, cfg.impacts, cap0, cfg.w)
    out = ac.as_dict()
    out["nu"] = cfg.generator.nu
    out["nu_admissible"] = cfg.generator.nu < ac.nu_bar
    print(dumps_json(out))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"simulate": _simulate, "reproduce-fig1": _reproduce,
                "calibrate-lambda": _calibrate, "constants": _constants}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
