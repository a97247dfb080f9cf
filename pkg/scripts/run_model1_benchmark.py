#!/usr/bin/env python3
"""Scalar-model benchmark: EKF/UKF/BPF/APF/PBPS accuracy and runtime vs N.

Desk scale by default (a couple of minutes single-threaded); pass
--full for the S=100, R=40 setting of the original study.
"""

import argparse
from pathlib import Path

from smc_kit.harness import ExperimentConfig, FilterSpec, emit_outputs, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/model1", help="output directory")
    ap.add_argument("--seed", type=int, default=2025)
    ap.add_argument("--workers", type=int, default=8)
    ap.add_argument("--full", action="store_true", help="S=100, R=40 (slow)")
    args = ap.parse_args()

    config = ExperimentConfig(
        model="m1",
        filters=[
            FilterSpec("EKF"),
            FilterSpec("UKF"),
            FilterSpec("BPF"),
            FilterSpec("APF"),
            FilterSpec("PBPS"),
        ],
        N_values=[50, 100, 500, 1000, 3000, 5000],
        S=100 if args.full else 20,
        R=40 if args.full else 10,
        K=50,
        master_seed=args.seed,
    )
    report = run_experiment(config, workers=args.workers)
    paths = emit_outputs(report, Path(args.out))
    print(f"{'filter':8s} {'N':>6s} {'global RMSE':>12s} {'median ms':>10s} {'failures':>8s}")
    for row in report.rows:
        n = "-" if row.N is None else str(row.N)
        wall = "-" if row.wall_ms_median is None else f"{row.wall_ms_median:.2f}"
        print(f"{row.filter:8s} {n:>6s} {row.global_rmse:12.3f} {wall:>10s} {row.failures:8d}")
    print("\nwrote:", *map(str, paths), sep="\n  ")


if __name__ == "__main__":
    main()
