"""Command-line interface: run sweeps, simulate trajectories, render plots."""

from __future__ import annotations

import argparse
import runpy
import sys
from pathlib import Path

from .harness import PLOT_SCRIPT, ConfigError, emit_outputs, load_config, run_experiment
from .models import Model1Spec, Model2Spec, ScenarioSpec, simulate_model1, simulate_model2, trajectory_to_csv
from .stochastics import RngStream

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smc-kit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark sweep from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the JSON experiment config")
    p_run.add_argument("--out", required=True, help="output directory for CSVs and plot script")
    p_run.add_argument("--workers", type=int, default=1, help="parallel workers (default 1)")
    p_run.add_argument("--seed", type=int, default=None, help="override the config master_seed")

    p_sim = sub.add_parser("simulate", help="simulate one ground-truth trajectory to CSV")
    p_sim.add_argument("--model", required=True, choices=["m1", "m2"])
    p_sim.add_argument("--turn", action="store_true", help="model 2: turn at mid-trajectory")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True, help="output CSV path")

    p_plot = sub.add_parser("plot", help="render charts from a sweep output directory")
    p_plot.add_argument("--in", dest="in_dir", required=True, help="directory holding the CSVs")
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.master_seed = int(args.seed)
            if not 0 <= config.master_seed < 2**64:
                raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"smc-kit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(config, workers=args.workers)
        paths = emit_outputs(report, args.out)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"smc-kit: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.turn and args.model != "m2":
            raise ConfigError("--turn applies to model m2 only")
    except ConfigError as exc:
        print(f"smc-kit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rng = RngStream(args.seed)
        if args.model == "m1":
            xs, ys = simulate_model1(Model1Spec(), rng)
        else:
            xs, ys = simulate_model2(Model2Spec(), ScenarioSpec(turn=args.turn), rng)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(trajectory_to_csv(xs, ys))
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"smc-kit: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


def _cmd_plot(args) -> int:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        print(f"smc-kit: config error: {in_dir} is not a directory", file=sys.stderr)
        return EXIT_CONFIG
    script = in_dir / "plot.py"
    try:
        if not script.exists():
            script.write_text(PLOT_SCRIPT)
        old_argv = sys.argv
        sys.argv = [str(script), str(in_dir)]
        try:
            runpy.run_path(str(script), run_name="__main__")
        finally:
            sys.argv = old_argv
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"smc-kit: plotting failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    return _cmd_plot(args)


if __name__ == "__main__":
    sys.exit(main())
