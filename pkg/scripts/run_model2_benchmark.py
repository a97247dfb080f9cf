#!/usr/bin/env python3
"""Bearings-only tracking benchmark: plain and robust filters, straight and turn scenarios.

Runs the turn scenario by default; both sigma_w tunings plus the
regime-switching and model-averaging variants. Desk scale unless --full.
"""

import argparse
from pathlib import Path

from smc_kit.harness import ExperimentConfig, FilterSpec, emit_outputs, run_experiment
from smc_kit.models import ScenarioSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/model2", help="output directory")
    ap.add_argument("--seed", type=int, default=2025)
    ap.add_argument("--workers", type=int, default=8)
    ap.add_argument("--straight", action="store_true", help="no heading change")
    ap.add_argument("--full", action="store_true", help="S=20, R=50 with the full N grid (slow)")
    args = ap.parse_args()

    config = ExperimentConfig(
        model="m2",
        scenario=ScenarioSpec(turn=not args.straight),
        filters=[
            FilterSpec("BPF", sigma_w=0.001),
            FilterSpec("APF", sigma_w=0.001),
            FilterSpec("PBPS", sigma_w=0.001),
            FilterSpec("BPF", sigma_w=0.003),
            FilterSpec("APF", sigma_w=0.003),
            FilterSpec("PBPS", sigma_w=0.003),
            FilterSpec("RS-BPF"),
            FilterSpec("RS-APF"),
            FilterSpec("RS-PBPS"),
            FilterSpec("DMA-BPF"),
        ],
        N_values=[50, 100, 500, 1000, 3000, 5000] if args.full else [1000],
        S=20 if args.full else 10,
        R=50 if args.full else 10,
        K=40,
        master_seed=args.seed,
    )
    report = run_experiment(config, workers=args.workers)
    paths = emit_outputs(report, Path(args.out))
    print(f"{'filter':8s} {'sigma_w':>8s} {'N':>6s} {'global RMSE':>12s} {'median ms':>10s} {'failures':>8s}")
    for row in report.rows:
        sw = "-" if row.sigma_w is None else f"{row.sigma_w:g}"
        wall = "-" if row.wall_ms_median is None else f"{row.wall_ms_median:.2f}"
        print(f"{row.filter:8s} {sw:>8s} {row.N:6d} {row.global_rmse:12.4f} {wall:>10s} {row.failures:8d}")
    print("\nwrote:", *map(str, paths), sep="\n  ")


if __name__ == "__main__":
    main()
