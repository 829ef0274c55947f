"""Command line entry point: ``levelcurv <subcommand> --config <path> [--out <dir>]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .errors import ConfigError, LevelcurvError
from .fieldio import read_field, snapshot_name, write_field
from .plotting import emit_bound_plots
from .solver import Snapshot, solve_scenario
from .structure import concavity_scan
from .verify import CurveCache, rank_profile, run_verification

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_FLAGS = 0, 1, 2, 3
SUBCOMMANDS = ("solve", "analyze", "verify", "structure", "plot")
REPORT_NAME = "report.json"

log = logging.getLogger("levelcurv")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _out_dir(cfg: Config, out: str | None) -> Path:
    d = Path(out) if out else cfg.resolve("levelcurv_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def solve_cmd(cfg: Config, out: Path):
    result = solve_scenario(cfg.scenario)
    names = []
    for snap in result.snapshots:
        name = snapshot_name(snap.index, snap.time)
        write_field(snap.field, out / name)
        names.append(name)
    summary = {
        "scenario": cfg.describe(),
        "steps": result.steps,
        "dt": result.dt,
        "steady_time": result.steady_time,
        "min_initial_rate": result.min_initial_rate,
        "snapshots": [
            {"file": n, "time": s.time, "max_residual": s.max_residual, "steady": s.steady}
            for n, s in zip(names, result.snapshots)
        ],
    }
    (out / "solve.json").write_text(dumps_json(summary), encoding="utf-8")
    print(f"solve: {len(names)} snapshots, {result.steps} steps, dt = {result.dt:.6g}")
    return result


def load_snapshots(cfg: Config, out: Path) -> list[Snapshot]:
    files = sorted(out.glob("u_*.crf"))
    if not files:
        raise LevelcurvError(f"no snapshot files in {out}; run 'solve' first")
    mask = None
    snaps = []
    for k, f in enumerate(files):
        fld = read_field(f, cfg.scenario.ring, mask)
        mask = fld.mask
        snaps.append(Snapshot(fld, float("nan"), k))
    return snaps


def analyze_outputs(snaps, cfg: Config) -> dict[str, str]:
    """File name -> content for level-curve CSVs and the rank profile."""
    opts = cfg.options
    cache = CurveCache(opts)
    out = {}
    for k, snap in enumerate(snaps):
        parts = []
        for c in opts.levels:
            text = cache.get(snap, c).to_csv()
            parts.append(text if not parts else text.split("\n", 1)[1])
        out[f"curves_{k:04d}.csv"] = "".join(parts)
    prof = rank_profile(snaps, opts.levels, opts.rank_tol, cache)
    out["rank_profile.json"] = dumps_json(prof.to_dict())
    return out


def analyze_cmd(cfg: Config, out: Path):
    snaps = load_snapshots(cfg, out)
    files = analyze_outputs(snaps, cfg)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    print(f"analyze: {len(snaps)} snapshots, {len(cfg.options.levels)} levels")
    return EXIT_OK


def verify_cmd(cfg: Config, out: Path) -> int:
    result = solve_scenario(cfg.scenario)
    report = run_verification(result.snapshots, cfg.scenario.operator, cfg.options, cfg.describe())
    (out / REPORT_NAME).write_text(dumps_json(report.to_dict()), encoding="utf-8")
    for f in report.flags:
        tag = "PASS" if f.passed else "FAIL"
        kind = "" if f.gating else " (informational)"
        print(f"{tag} {f.name}: value {f.value:.6g} {f.relation} {f.threshold:.6g}{kind}")
    return EXIT_OK if report.passed else EXIT_FLAGS


def structure_cmd(cfg: Config, out: Path) -> int:
    result = solve_scenario(cfg.scenario)
    opts = cfg.options
    rep = concavity_scan(cfg.scenario.operator, result.snapshots, opts.sampling, opts.gradient_floor,
                         opts.corner_exclusion)
    body = {"scenario": cfg.describe(), "structure": rep.to_dict()}
    (out / "structure.json").write_text(dumps_json(body), encoding="utf-8")
    print(f"structure: {len(rep.states)} states, worst margin {rep.worst_hessian_margin:.6g}, "
          f"lambda {rep.lambda_min:.6g}")
    return EXIT_OK if rep.lambda_min > 0 and rep.rayleigh_ok else EXIT_FLAGS


def plot_cmd(cfg: Config, out: Path) -> int:
    path = out / REPORT_NAME
    if not path.exists():
        raise LevelcurvError(f"no {REPORT_NAME} in {out}; run 'verify' first")
    report = json.loads(path.read_text(encoding="utf-8"))
    written = emit_bound_plots(report, out)
    print(f"plot: wrote {len(written)} files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levelcurv", description="Level-set curvature of parabolic flows on convex rings.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="scenario file")
    p.add_argument("--out", default=None, help="output directory (default: levelcurv_out next to the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = _out_dir(cfg, args.out)
        if args.subcommand == "solve":
            solve_cmd(cfg, out)
            return EXIT_OK
        if args.subcommand == "analyze":
            return analyze_cmd(cfg, out)
        if args.subcommand == "verify":
            return verify_cmd(cfg, out)
        if args.subcommand == "structure":
            return structure_cmd(cfg, out)
        return plot_cmd(cfg, out)
    except LevelcurvError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
