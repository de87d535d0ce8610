"""Command-line front end.

Usage::

    notrade <subcommand> [--config PATH] [--seed N] [--paths N] [--steps N]
                         [--threads N] [--trace N] [--output-dir DIR]

Subcommands: ``band``, ``welfare``, ``turnover``, ``simulate``, ``sweep``,
``meanvar``, ``growth``. Each prints a JSON document to stdout and writes the
same bytes to ``<output_dir>/<subcommand>.json``. Exit codes: 0 success,
1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import enum
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .asymptotics import report_dict
from .config import ConfigError, RunConfig, load_config
from .experiments import SweepSpec, compare_report, forecast, run_sweep, sweep_records, write_sweep
from .frictionless import UnsupportedPairError
from .market import simulate_paths
from .simulator import NumericalFailure, growth_rate_measurement, simulate_policy

SUBCOMMANDS = ("band", "welfare", "turnover", "simulate", "sweep", "meanvar", "growth")
SEED_ENV = "NOTRADE_SEED"


def _plain(obj):
    """Reduce dataclasses, enums and numpy values to JSON-ready builtins."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("sample")}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    # keep floats distinguishable from integers after decoding
    return s if any(c in s for c in ".e") else s + ".0"


def dumps(obj, indent: int = 2) -> str:
    """JSON with floats at 17 significant digits and NaN/inf as null."""

    def enc(o, level: int) -> str:
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None or isinstance(o, bool):
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _float(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(_plain(obj), 0) + "\n"


def resolve_seed(cli_seed: int | None, cfg: RunConfig, env: dict | None = None) -> int:
    """Seed precedence: command line, config file, ``NOTRADE_SEED``, then 0."""
    env = os.environ if env is None else env
    if cli_seed is not None:
        return cli_seed
    if cfg.seed is not None:
        return cfg.seed
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="notrade", description="No-trade band asymptotics and Monte Carlo checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=str, default=None, help="TOML run configuration")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--paths", type=int, default=None, help="override grid.n_paths")
        s.add_argument("--steps", type=int, default=None, help="override grid.n_steps")
        s.add_argument("--threads", type=int, default=None, help="worker threads; results do not depend on it")
        s.add_argument("--trace", type=int, default=0, help="write trace.csv for the first N paths (simulate)")
        s.add_argument("--output-dir", type=str, default=None, help="override output_dir")
    return p


def _apply_overrides(cfg: RunConfig, args, seed: int) -> RunConfig:
    grid = cfg.grid
    if args.paths is not None:
        if args.paths < 1:
            raise ConfigError("--paths must be at least 1")
        grid = replace(grid, n_paths=args.paths)
    if args.steps is not None:
        if args.steps < 1:
            raise ConfigError("--steps must be at least 1")
        grid = replace(grid, n_steps=args.steps)
    exp = cfg.experiment
    if args.trace:
        if args.trace < 0:
            raise ConfigError("--trace must be non-negative")
        exp = replace(exp, trace_paths=args.trace)
    out = cfg.output_dir if args.output_dir is None else args.output_dir
    return replace(cfg, grid=grid, experiment=exp, output_dir=out, seed=seed)


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    if n < 1:
        raise ConfigError("--threads must be at least 1")
    avail = numba.config.NUMBA_NUM_THREADS
    if n > avail:
        print(f"warning: --threads {n} exceeds the {avail} available; using {avail}", file=sys.stderr)
    numba.set_num_threads(min(n, avail))


def _warn_resolution(cfg: RunConfig, halfwidth_fraction: float) -> None:
    dt = cfg.grid.horizon / cfg.grid.n_steps
    if halfwidth_fraction > 0 and math.sqrt(dt) > halfwidth_fraction / 5:
        print(
            f"warning: sqrt(dt) = {math.sqrt(dt):.3g} exceeds a fifth of the band halfwidth "
            f"{halfwidth_fraction:.3g}; the time grid is coarse for this spread",
            file=sys.stderr,
        )


def _block(cfg: RunConfig) -> int | None:
    return cfg.experiment.block_paths or None


def _cmd_band(cfg: RunConfig) -> dict:
    fc = forecast(cfg.base_config(cfg.seed), _block(cfg))
    _warn_resolution(cfg, fc.band.halfwidth_fraction)
    return report_dict(fc.band)


def _cmd_welfare(cfg: RunConfig) -> dict:
    return report_dict(forecast(cfg.base_config(cfg.seed), _block(cfg)).welfare)


def _cmd_turnover(cfg: RunConfig) -> dict:
    return report_dict(forecast(cfg.base_config(cfg.seed), _block(cfg)).turnover)


def _sim_dict(r) -> dict:
    d = report_dict(r)
    for k in ("predicted_welfare", "predicted_turnover", "predicted_growth", "outcomes"):
        d.pop(k, None)
    d["shadow"] = {
        "containment_violations": r.shadow.containment_violations,
        "boundary_touch_error": r.shadow.boundary_touch_error,
        "not_applicable": r.shadow.not_applicable,
    }
    d["predicted_welfare"] = report_dict(r.predicted_welfare) if r.predicted_welfare else None
    d["predicted_turnover"] = report_dict(r.predicted_turnover) if r.predicted_turnover else None
    d["predicted_growth"] = report_dict(r.predicted_growth) if r.predicted_growth else None
    return d


def _write_trace(cfg: RunConfig, result, out_dir: Path) -> Path | None:
    tr = result.outcomes.trace if result.outcomes is not None else None
    if tr is None:
        return None
    grid = cfg.path_grid(cfg.seed)
    ids = np.arange(tr.shape[0])
    paths = simulate_paths(cfg.market, cfg.spread, grid, ids)
    p = out_dir / "trace.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "S", "eps", "phi_eps", "NTbar", "DeltaNT", "X_eps", "cum_cost", "side"])
        for i in ids:
            for k in range(grid.n_steps + 1):
                row = [paths.times[k], paths.mid_price[i, k], paths.spread_halfwidth[i, k], *tr[i, :, k]]
                w.writerow([int(i)] + [format(float(v), ".17g") for v in row[:-1]] + [int(row[-1])])
    return p


def _cmd_simulate(cfg: RunConfig) -> dict:
    fc = forecast(replace(cfg, grid=replace(cfg.grid, n_paths=min(cfg.grid.n_paths, 16))).base_config(cfg.seed))
    _warn_resolution(cfg, fc.band.halfwidth_fraction)
    r = simulate_policy(
        cfg.market,
        cfg.preferences,
        cfg.spread,
        cfg.path_grid(cfg.seed),
        cfg.experiment.x0,
        None,
        cfg.experiment.options(),
        _block(cfg),
    )[0]
    _write_trace(cfg, r, Path(cfg.output_dir))
    return _sim_dict(r)


def _cmd_sweep(cfg: RunConfig) -> dict:
    exp = cfg.experiment
    spec = SweepSpec(tuple(exp.eps_grid), cfg.base_config(cfg.seed), exp.common_random_numbers)
    tol = cfg.resolved_tolerances()
    res = run_sweep(spec, _block(cfg), max_relative_se=tol["max_relative_se"])
    write_sweep(res, cfg.output_dir, dumps)
    rep = compare_report(res, tol)
    out = Path(cfg.output_dir)
    (out / "comparison.csv").write_text(rep.csv)
    print(rep.table, file=sys.stderr)
    rec = sweep_records(res)
    rec["comparison"] = [dataclasses.asdict(c) for c in rep.rows]
    rec["failures"] = [f"{c.quantity}@{c.eps:g}" for c in rep.failures]
    rec["tolerances"] = tol
    return rec


def _cmd_meanvar(cfg: RunConfig) -> dict:
    exp = cfg.experiment
    fc = forecast(cfg.base_config(cfg.seed), _block(cfg), target=(exp.target_kind, exp.target_value))
    return report_dict(fc.mean_variance)


def _cmd_growth(cfg: RunConfig) -> dict:
    m = growth_rate_measurement(
        cfg.market, cfg.preferences, cfg.spread, cfg.path_grid(cfg.seed), cfg.experiment.options(), _block(cfg)
    )
    return report_dict(m)


_COMMANDS = {
    "band": _cmd_band,
    "welfare": _cmd_welfare,
    "turnover": _cmd_turnover,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "meanvar": _cmd_meanvar,
    "growth": _cmd_growth,
}


def run(argv: Sequence[str] | None = None) -> dict:
    """Parse arguments, execute the subcommand and return the output document."""
    args = _parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else RunConfig()
    seed = resolve_seed(args.seed, cfg)
    if not 0 <= seed < 2**63:
        raise ConfigError(f"seed must lie in [0, 2**63), got {seed}")
    cfg = _apply_overrides(cfg, args, seed)
    _set_threads(args.threads)
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    t0 = time.perf_counter()
    result = _COMMANDS[args.command](cfg)
    doc = {
        "subcommand": args.command,
        "seed": seed,
        "config": cfg.to_dict(),
        "result": result,
        "metadata": {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "elapsed_seconds": round(time.perf_counter() - t0, 3),
            "version": __version__,
        },
    }
    text = dumps(doc)
    (out_dir / f"{args.command}.json").write_text(text)
    sys.stdout.write(text)
    return doc


def main(argv: Sequence[str] | None = None) -> int:
    try:
        run(argv)
    except SystemExit as exc:
        # argparse usage errors count as configuration errors
        return 0 if exc.code in (0, None) else 1
    except (ConfigError, UnsupportedPairError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid parameter combinations surface as ValueError from the model layer
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
