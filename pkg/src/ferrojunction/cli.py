"""Command-line entry point: ``ferrojunction <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 a single
solve did not converge, 1 a gradient check exceeded its tolerance.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config_io import ConfigError, config_from_dict, load_config, write_results
from .grid import BC_KINDS
from .harness import compute_limit, diagnostics, run_gradcheck, run_limit, run_solve3d, run_sweep, scale_of
from .limits import COUPLED, FILM2D, WIRE1D

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

DEFAULT_CONFIG = {
    "regime": {"Finite": 1.0},
    "thickness_schedule": {"h_a": [0.4, 0.283, 0.2, 0.141, 0.1]},
    "grid_a": [9, 9, 9],
    "grid_b": [9, 9, 9],
    "grid_1d": 65,
    "grid_2d": [33, 33],
}

LIMIT_COMMANDS = {"limit1d": WIRE1D, "limit2d": FILM2D, "limit-coupled": COUPLED}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration (default: built-in ell=1 sweep)")
    p.add_argument("--out", type=Path, help="output path (CSV for sweeps, JSON otherwise)")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--threads", type=int, default=1, help="parallel sweep rows (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ferrojunction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("sweep", help="thickness sweep against the regime's limit minimum"))
    p = sub.add_parser("solve3d", help="minimize one 3D energy")
    _common(p)
    p.add_argument("--h-a", type=float, help="wire thickness (default: first scheduled pair)")
    p.add_argument("--h-b", type=float, help="film thickness (default: first scheduled pair)")
    p.add_argument("--kind", choices=("E", "S"), default="E", help="rot/div (E) or full-gradient (S) energy")
    p.add_argument("--bc", choices=BC_KINDS, help="boundary condition (default: from config)")
    for name in LIMIT_COMMANDS:
        _common(sub.add_parser(name, help=f"minimize the {LIMIT_COMMANDS[name]} limit energy"))
    _common(sub.add_parser("gradcheck", help="finite-difference check of all energy gradients"))
    return parser


def _load(args):
    cfg = load_config(args.config) if args.config else config_from_dict(DEFAULT_CONFIG)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def _report_json(rep, extra: dict) -> dict:
    out = dict(extra)
    out.update(
        energy=rep.energy,
        converged=rep.converged,
        iterations=rep.iterations,
        restarts=rep.restarts,
        best_index=rep.best_index,
        restart_energies=rep.energies,
        stationarity=rep.stationarity,
        breakdown=rep.breakdown.to_dict() if rep.breakdown is not None else None,
    )
    return out


def _emit(summary: dict, out: Path | None) -> None:
    text = json.dumps(summary, indent=2)
    print(text)
    if out is not None:
        out.write_text(text)


def cmd_sweep(cfg, args) -> int:
    limit = compute_limit(cfg)
    rows = run_sweep(cfg, threads=args.threads, limit=limit)
    out = args.out or Path(cfg.output_path)
    csv_path, json_path = write_results(rows, out)
    print(f"limit ({limit.variant}): {limit.energy:.10g}   per-volume: {limit.energy_volume:.10g}")
    print(f"{'h_a':>8} {'h_b':>10} {'E/s':>14} {'gap':>11} {'S-E':>11} {'lift gap':>11} conv")
    for r in rows:
        print(f"{r.h_a:8.4g} {r.h_b:10.4g} {r.E3d_scaled:14.8g} {r.gap:11.3e} {r.S_gap:11.3e} {r.lift_gap:11.3e} {r.converged}")
    diag = diagnostics(rows, limit)
    print("diagnostics:", "pass" if diag.passed else "FLAGGED", *diag.flags)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_solve3d(cfg, args) -> int:
    h_a, h_b = cfg.thickness_schedule[0]
    h_a = args.h_a if args.h_a is not None else h_a
    h_b = args.h_b if args.h_b is not None else h_b
    rep = run_solve3d(cfg, h_a, h_b, kind=args.kind, bc_variant=args.bc)
    s = scale_of(cfg.regime.kind, h_a, h_b)
    _emit(_report_json(rep, {"h_a": h_a, "h_b": h_b, "kind": args.kind, "scaled_energy": rep.energy / s}), args.out)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_limit(cfg, args) -> int:
    variant = LIMIT_COMMANDS[args.command]
    rep = run_limit(cfg, variant)
    _emit(_report_json(rep, {"variant": variant}), args.out)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_gradcheck(cfg, args) -> int:
    rep = run_gradcheck(cfg)
    for name, seed, err, raw in rep.entries:
        print(f"{name:28s} seed {seed}: {err:.3e}  (raw {raw:.3e})")
    print(
        f"max relative error {rep.max_error:.3e}, raw {rep.max_raw_error:.3e} "
        f"(tolerance {rep.tolerance:g}): {'pass' if rep.passed else 'FAIL'}"
    )
    if args.out is not None:
        summary = {"entries": rep.entries, "max_error": rep.max_error, "max_raw_error": rep.max_raw_error}
        args.out.write_text(json.dumps(summary, indent=2))
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "sweep":
        return cmd_sweep(cfg, args)
    if args.command == "solve3d":
        try:
            return cmd_solve3d(cfg, args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    if args.command in LIMIT_COMMANDS:
        return cmd_limit(cfg, args)
    return cmd_gradcheck(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
