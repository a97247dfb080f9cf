"""Experiment orchestration: filter x N sweeps, RMSE aggregation, CSV/plot emission.

A sweep simulates S trajectories, runs each configured filter R times per
trajectory per particle count, and aggregates the per-step and global RMSE
plus wall-clock cost. Every cell of the sweep owns a random stream derived
from ``(master_seed, filter, N, s, r)``, so results are independent of
execution order and worker count; with ``timing`` disabled the emitted CSVs
are byte-reproducible.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filters import FilterKind, run_filter
from .gaussian import UTParams, run_gaussian_filter
from .models import Model1Spec, Model2Spec, ScenarioSpec, simulate_model1, simulate_model2
from .robust import RegimeFamily, run_dma_filter
from .ssm import RegimeSet
from .stochastics import RngStream

__all__ = [
    "ConfigError",
    "FilterSpec",
    "ExperimentConfig",
    "ReportRow",
    "RMSEReport",
    "rmse_at_k",
    "global_rmse",
    "run_experiment",
    "emit_outputs",
    "load_config",
    "PAPER_REGIME_SET",
]

PAPER_REGIME_SET = (0.0005, 0.001, 0.003, 0.005)

PARTICLE_FILTERS = ("BPF", "APF", "PBPS", "RS-BPF", "RS-APF", "RS-PBPS", "DMA-BPF")
GAUSSIAN_FILTERS = ("EKF", "UKF")

_TRAJECTORY_STREAM = 0
_RUN_STREAM = 1


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, bad combination)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class FilterSpec:
    """One filter entry of a sweep, with its per-filter options."""

    name: str
    sigma_w: float | None = None  # model 2 only: the filter's assumed noise scale
    regimes: tuple[float, ...] | None = None  # RS-*/DMA candidate set
    offspring: str = "deterministic"  # PBPS offspring mode
    resampling: str = "multinomial"
    ess_threshold: float | None = None
    ut: UTParams = field(default_factory=UTParams)
    m2_gaussian_approx: bool = False  # opt-in: EKF/UKF on the bearings-only model

    def __post_init__(self):
        if self.name not in PARTICLE_FILTERS + GAUSSIAN_FILTERS:
            raise ConfigError(f"unknown filter {self.name!r}")
        if self.offspring not in ("deterministic", "stochastic"):
            raise ConfigError(f"unknown offspring mode {self.offspring!r}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")

    @property
    def is_gaussian(self) -> bool:
        return self.name in GAUSSIAN_FILTERS

    @property
    def needs_regimes(self) -> bool:
        return self.name.startswith("RS-") or self.name == "DMA-BPF"

    @property
    def base_kind(self) -> FilterKind:
        return FilterKind(self.name.removeprefix("RS-"))


@dataclass
class ExperimentConfig:
    """Declarative sweep definition (mirrors the JSON config file field for field)."""

    model: str
    filters: list[FilterSpec]
    N_values: list[int]
    S: int
    R: int
    K: int
    master_seed: int
    scenario: ScenarioSpec | None = None
    timing: bool = True

    def __post_init__(self):
        if self.model not in ("m1", "m2"):
            raise ConfigError(f"model must be 'm1' or 'm2', got {self.model!r}")
        if self.scenario is not None and self.model != "m2":
            raise ConfigError("scenario options apply to model m2 only")
        if min(self.S, self.R, self.K) < 1:
            raise ConfigError("S, R and K must all be >= 1")
        if not self.N_values or min(self.N_values) < 1:
            raise ConfigError("N_values must be a nonempty list of positive counts")
        if not self.filters:
            raise ConfigError("at least one filter is required")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        for f in self.filters:
            if f.sigma_w is not None and self.model != "m2":
                raise ConfigError("sigma_w is a model-2 filter option")
            if f.needs_regimes and f.regimes is None:
                if self.model == "m2":
                    f.regimes = PAPER_REGIME_SET
                else:
                    raise ConfigError(f"{f.name} on model m1 needs an explicit regime set")
            if f.is_gaussian and self.model == "m2" and not f.m2_gaussian_approx:
                raise ConfigError(
                    f"{f.name} on the bearings-only model requires m2_gaussian_approx=true"
                )

    @property
    def scenario_label(self) -> str:
        if self.model != "m2":
            return ""
        sc = self.scenario or ScenarioSpec()
        return "turn" if sc.turn else "straight"


def _require_keys(obj: dict, allowed: set[str], where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    _require_keys(
        raw,
        {"model", "scenario", "filters", "N_values", "S", "R", "K", "master_seed", "timing"},
        "config",
    )
    for key in ("model", "filters", "N_values", "S", "R", "K", "master_seed"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
    scenario = None
    if raw.get("scenario") is not None:
        sc = dict(raw["scenario"])
        _require_keys(sc, {"turn", "turn_time", "turn_angle", "truth_mode"}, "scenario")
        try:
            scenario = ScenarioSpec(**sc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    filters = []
    for i, f in enumerate(raw["filters"]):
        f = dict(f)
        _require_keys(
            f,
            {"name", "sigma_w", "regimes", "offspring", "resampling", "ess_threshold",
             "ut", "m2_gaussian_approx"},
            f"filters[{i}]",
        )
        if "name" not in f:
            raise ConfigError(f"filters[{i}] is missing 'name'")
        if "ut" in f and f["ut"] is not None:
            ut = dict(f["ut"])
            _require_keys(ut, {"alpha", "beta", "kappa"}, f"filters[{i}].ut")
            f["ut"] = UTParams(**ut)
        if "regimes" in f and f["regimes"] is not None:
            f["regimes"] = tuple(float(v) for v in f["regimes"])
        filters.append(FilterSpec(**f))
    try:
        return ExperimentConfig(
            model=raw["model"],
            filters=filters,
            N_values=[int(n) for n in raw["N_values"]],
            S=int(raw["S"]),
            R=int(raw["R"]),
            K=int(raw["K"]),
            master_seed=int(raw["master_seed"]),
            scenario=scenario,
            timing=bool(raw.get("timing", True)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# RMSE
# ---------------------------------------------------------------------------

def rmse_at_k(estimates: np.ndarray, truths: np.ndarray, completed: np.ndarray | None = None) -> float:
    """Root mean squared Euclidean error at one time index.

    ``estimates`` is (S, R, n) per-run state estimates, ``truths`` (S, n);
    missing runs (``completed`` false) are excluded from the average.
    """
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    err2 = np.sum((estimates - truths[:, None, :]) ** 2, axis=2)
    if completed is not None:
        err2 = err2[completed]
    return float(np.sqrt(np.mean(err2)))


def global_rmse(rmse_k: np.ndarray) -> float:
    """Arithmetic mean of the per-step RMSE values."""
    rmse_k = np.asarray(rmse_k, dtype=float)
    if rmse_k.size < 1:
        raise ValueError("need at least one per-step value")
    return float(np.mean(rmse_k))


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    """Aggregated results of one (filter, N) cell of the sweep."""

    filter: str
    model: str
    scenario: str
    sigma_w: float | None
    N: int | None
    rmse_k: np.ndarray
    global_rmse: float
    wall_ms_median: float | None
    wall_ms_mean: float | None
    failures: int
    runs: int


@dataclass
class RMSEReport:
    config: ExperimentConfig
    rows: list[ReportRow]


def _build_model(config: ExperimentConfig, fspec: FilterSpec):
    if config.model == "m1":
        return Model1Spec(K=config.K).model()
    spec = Model2Spec(K=config.K)
    return spec.model(sigma_w=fspec.sigma_w, gaussian_obs=fspec.m2_gaussian_approx)


def _simulate(config: ExperimentConfig, master: RngStream):
    truths = []
    observations = []
    for s in range(config.S):
        stream = master.child(_TRAJECTORY_STREAM, s)
        if config.model == "m1":
            xs, ys = simulate_model1(Model1Spec(K=config.K), stream)
        else:
            xs, ys = simulate_model2(
                Model2Spec(K=config.K), config.scenario or ScenarioSpec(), stream
            )
        truths.append(xs[1:])  # RMSE compares the K filtered steps
        observations.append(ys)
    return np.stack(truths), np.stack(observations)


def _run_one(config, fspec, model, N, ys, rng):
    """One filter run; returns (estimates or None on failure, wall seconds)."""
    if fspec.is_gaussian:
        out = run_gaussian_filter(model, ys, fspec.name, fspec.ut)
        return out.means, out.wall_seconds
    if fspec.name == "DMA-BPF":
        family = RegimeFamily(model, RegimeSet(fspec.regimes))
        out = run_dma_filter(family, ys, N, rng)
    else:
        out = run_filter(
            model, ys, N, fspec.base_kind, rng,
            offspring_mode=fspec.offspring,
            scheme=fspec.resampling,
            ess_threshold=fspec.ess_threshold,
            regime_set=RegimeSet(fspec.regimes) if fspec.needs_regimes else None,
        )
    if out.failed:
        return None, out.wall_seconds
    return out.estimates, out.wall_seconds


def _cell_task(config, fspec, fi, ni, N, s, truths, observations):
    """All R repetitions of one (filter, N, trajectory) cell."""
    model = _build_model(config, fspec)
    reps = 1 if fspec.is_gaussian else config.R
    err2 = np.full((config.R, config.K), np.nan)
    walls = np.full(config.R, np.nan)
    failures = 0
    for r in range(reps):
        rng = RngStream(config.master_seed, (_RUN_STREAM, fi, ni + 1, s, r))
        estimates, wall = _run_one(config, fspec, model, N, observations[s], rng)
        if estimates is None:
            failures += 1
            continue
        err2[r] = np.sum((estimates - truths[s]) ** 2, axis=1)
        walls[r] = wall
    if fspec.is_gaussian and reps == 1:  # repetitions of a deterministic filter are identical
        err2[1:] = err2[0]
    return err2, walls, failures


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RMSEReport:
    """Run the full sweep; results are independent of ``workers``."""
    master = RngStream(config.master_seed)
    truths, observations = _simulate(config, master)

    cells = []
    for fi, fspec in enumerate(config.filters):
        if fspec.is_gaussian:
            cells.append((fi, -1, None))
        else:
            for ni, N in enumerate(config.N_values):
                cells.append((fi, ni, N))

    tasks = [(fi, ni, N, s) for (fi, ni, N) in cells for s in range(config.S)]

    def run_task(task):
        fi, ni, N, s = task
        return _cell_task(config, config.filters[fi], fi, ni, N, s, truths, observations)

    if workers <= 1:
        results = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_task, tasks))

    by_cell: dict[tuple[int, int], list] = {}
    for task, res in zip(tasks, results):
        by_cell.setdefault((task[0], task[1]), []).append(res)

    rows = []
    for fi, ni, N in cells:
        fspec = config.filters[fi]
        parts = by_cell[(fi, ni)]
        err2 = np.stack([p[0] for p in parts])  # (S, R, K)
        walls = np.concatenate([p[1] for p in parts])
        failures = sum(p[2] for p in parts)
        if np.all(np.isnan(err2)):
            rmse_k = np.full(config.K, np.nan)  # every run of the cell failed
        else:
            with np.errstate(invalid="ignore"):
                rmse_k = np.sqrt(np.nanmean(err2, axis=(0, 1)))
        walls_ok = walls[~np.isnan(walls)]
        rows.append(
            ReportRow(
                filter=fspec.name,
                model=config.model,
                scenario=config.scenario_label,
                sigma_w=fspec.sigma_w,
                N=N,
                rmse_k=rmse_k,
                global_rmse=global_rmse(rmse_k),
                wall_ms_median=(
                    float(np.median(walls_ok) * 1e3) if config.timing and walls_ok.size else None
                ),
                wall_ms_mean=(
                    float(np.mean(walls_ok) * 1e3) if config.timing and walls_ok.size else None
                ),
                failures=failures,
                runs=int(walls_ok.size),
            )
        )
    return RMSEReport(config, rows)


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


SUMMARY_HEADER = "filter,model,scenario,sigma_w,N,global_rmse,mean_wall_ms,failures"
RMSE_BY_K_HEADER = "filter,model,scenario,sigma_w,N,k,rmse_k"
TIMING_HEADER = "filter,model,scenario,sigma_w,N,median_wall_ms,mean_wall_ms,runs"


def emit_outputs(report: RMSEReport, out_dir: str | Path) -> list[Path]:
    """Write summary.csv, rmse_by_k.csv, timing.csv and a standalone plot script."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = [SUMMARY_HEADER]
        by_k = [RMSE_BY_K_HEADER]
        timing = [TIMING_HEADER]
        for row in report.rows:
            key = [row.filter, row.model, row.scenario, _fmt(row.sigma_w), _fmt(row.N)]
            summary.append(
                ",".join(key + [_fmt(row.global_rmse), _fmt(row.wall_ms_median), str(row.failures)])
            )
            for k, v in enumerate(row.rmse_k, start=1):
                by_k.append(",".join(key + [str(k), _fmt(float(v))]))
            timing.append(
                ",".join(key + [_fmt(row.wall_ms_median), _fmt(row.wall_ms_mean), str(row.runs)])
            )
        paths = []
        for name, lines in [
            ("summary.csv", summary),
            ("rmse_by_k.csv", by_k),
            ("timing.csv", timing),
        ]:
            path = out / name
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
        plot_path = out / "plot.py"
        plot_path.write_text(PLOT_SCRIPT)
        paths.append(plot_path)
        return paths
    except OSError as exc:
        raise OSError(f"cannot write outputs under {out}: {exc}") from exc


def load_rmse_by_k(path: str | Path) -> dict[tuple, np.ndarray]:
    """Parse rmse_by_k.csv back into {(filter, model, scenario, sigma_w, N): rmse_k}."""
    rows: dict[tuple, dict[int, float]] = {}
    lines = Path(path).read_text().strip().splitlines()
    for line in lines[1:]:
        f, mdl, sc, sw, n, k, v = line.split(",")
        key = (f, mdl, sc, float(sw) if sw else None, int(n) if n else None)
        rows.setdefault(key, {})[int(k)] = float(v)
    return {
        key: np.array([vals[k] for k in sorted(vals)]) for key, vals in rows.items()
    }


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Render RMSE-vs-N, RMSE_k-vs-k and time-vs-N charts from the CSVs next to this script."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent


def label(row):
    lab = row["filter"]
    if row["sigma_w"]:
        lab += " sw=" + row["sigma_w"]
    return lab


def read(name):
    with open(HERE / name, newline="") as fh:
        return list(csv.DictReader(fh))


summary = read("summary.csv")
by_k = read("rmse_by_k.csv")
timing = read("timing.csv")

# global RMSE vs N (Gaussian filters appear as horizontal reference lines)
fig, ax = plt.subplots(figsize=(7, 5))
series = defaultdict(list)
flat = {}
for row in summary:
    if row["N"]:
        series[label(row)].append((int(row["N"]), float(row["global_rmse"])))
    else:
        flat[label(row)] = float(row["global_rmse"])
for lab, pts in sorted(series.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=lab)
for lab, v in sorted(flat.items()):
    ax.axhline(v, linestyle="--", alpha=0.7, label=lab)
ax.set_xscale("log")
ax.set_xlabel("number of particles N")
ax.set_ylabel("global RMSE")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(HERE / "rmse_vs_n.png", dpi=120)

# RMSE_k vs k at the largest N of each series
fig, ax = plt.subplots(figsize=(7, 5))
best = {}
for row in by_k:
    n = int(row["N"]) if row["N"] else 0
    lab = label(row)
    if lab not in best or n > best[lab]:
        best[lab] = n
curves = defaultdict(list)
for row in by_k:
    n = int(row["N"]) if row["N"] else 0
    lab = label(row)
    if n == best[lab]:
        curves[lab].append((int(row["k"]), float(row["rmse_k"])))
for lab, pts in sorted(curves.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], label=lab)
ax.set_xlabel("time index k")
ax.set_ylabel("RMSE_k")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(HERE / "rmse_by_k.png", dpi=120)

# wall time vs N
fig, ax = plt.subplots(figsize=(7, 5))
tseries = defaultdict(list)
for row in timing:
    if row["N"] and row["median_wall_ms"]:
        tseries[label(row)].append((int(row["N"]), float(row["median_wall_ms"])))
for lab, pts in sorted(tseries.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=lab)
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("number of particles N")
ax.set_ylabel("median wall time per trajectory [ms]")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(HERE / "time_vs_n.png", dpi=120)
print("wrote", HERE / "rmse_vs_n.png", HERE / "rmse_by_k.png", HERE / "time_vs_n.png")
'''
