import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smc_kit.harness import (
    RMSE_BY_K_HEADER,
    SUMMARY_HEADER,
    TIMING_HEADER,
    ConfigError,
    ExperimentConfig,
    FilterSpec,
    RMSEReport,
    config_from_dict,
    emit_outputs,
    global_rmse,
    load_config,
    load_rmse_by_k,
    rmse_at_k,
    run_experiment,
)
from smc_kit.models import ScenarioSpec
from smc_kit.stochastics import RngStream


def _minimal_config(**overrides):
    base = dict(
        model="m1",
        filters=[FilterSpec("BPF")],
        N_values=[20],
        S=1,
        R=1,
        K=1,
        master_seed=77,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRmseMath:
    def test_perfect_estimator(self):
        est = np.zeros((2, 3, 2))
        tru = np.zeros((2, 2))
        assert rmse_at_k(est, tru) == 0.0

    def test_euclidean_norm_single_run(self):
        est = np.array([[[3.0, 4.0]]])
        tru = np.array([[0.0, 0.0]])
        assert rmse_at_k(est, tru) == pytest.approx(5.0)

    def test_two_repetitions_arithmetic(self):
        est = np.array([[[1.0], [7.0]]])  # S=1, R=2 scalar errors 1 and 7
        tru = np.array([[0.0]])
        assert rmse_at_k(est, tru) == pytest.approx(5.0)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 999))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_triple_loop(self, S, R, n, seed):
        rng = RngStream(seed)
        est = rng.normal((S, R, n))
        tru = rng.normal((S, n))
        total = 0.0
        for s in range(S):
            for r in range(R):
                total += np.sum((est[s, r] - tru[s]) ** 2) / R
        expected = math.sqrt(total / S)
        assert rmse_at_k(est, tru) == pytest.approx(expected, abs=1e-12)

    def test_completed_mask_excludes_failures(self):
        est = np.array([[[1.0], [99.0]]])
        tru = np.array([[0.0]])
        mask = np.array([[True, False]])
        assert rmse_at_k(est, tru, mask) == pytest.approx(1.0)

    def test_global_rmse_constant(self):
        assert global_rmse(np.full(7, 3.25)) == pytest.approx(3.25)

    def test_global_rmse_mean(self):
        assert global_rmse(np.array([0.0, 10.0])) == pytest.approx(5.0)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_global_rmse_matches_direct_sum(self, vals):
        expected = sum(vals) / len(vals)
        assert global_rmse(np.asarray(vals)) == pytest.approx(expected, abs=1e-12)


class TestConfigValidation:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict(
                dict(model="m1", filters=[{"name": "BPF"}], N_values=[10],
                     S=1, R=1, K=1, master_seed=1, particles=5)
            )

    def test_unknown_filter_key_rejected(self):
        with pytest.raises(ConfigError, match="filters\\[0\\]"):
            config_from_dict(
                dict(model="m1", filters=[{"name": "BPF", "temperature": 2}],
                     N_values=[10], S=1, R=1, K=1, master_seed=1)
            )

    def test_unknown_scenario_key_rejected(self):
        with pytest.raises(ConfigError, match="scenario"):
            config_from_dict(
                dict(model="m2", scenario={"turns": True}, filters=[{"name": "BPF"}],
                     N_values=[10], S=1, R=1, K=1, master_seed=1)
            )

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="missing"):
            config_from_dict(dict(model="m1", filters=[{"name": "BPF"}],
                                  N_values=[10], S=1, R=1, K=1))

    def test_unknown_filter_name(self):
        with pytest.raises(ConfigError, match="unknown filter"):
            _minimal_config(filters=[FilterSpec("GPF")])

    def test_sigma_w_rejected_on_m1(self):
        with pytest.raises(ConfigError, match="sigma_w"):
            _minimal_config(filters=[FilterSpec("BPF", sigma_w=0.1)])

    def test_rs_on_m1_needs_explicit_regimes(self):
        with pytest.raises(ConfigError, match="regime set"):
            _minimal_config(filters=[FilterSpec("RS-BPF")])

    def test_rs_on_m2_defaults_to_paper_set(self):
        cfg = _minimal_config(model="m2", K=2, filters=[FilterSpec("RS-BPF")])
        assert cfg.filters[0].regimes == (0.0005, 0.001, 0.003, 0.005)

    def test_gaussian_on_m2_requires_opt_in(self):
        with pytest.raises(ConfigError, match="m2_gaussian_approx"):
            _minimal_config(model="m2", filters=[FilterSpec("EKF")])
        cfg = _minimal_config(
            model="m2", filters=[FilterSpec("EKF", m2_gaussian_approx=True)]
        )
        assert cfg.filters[0].is_gaussian

    def test_scenario_only_for_m2(self):
        with pytest.raises(ConfigError, match="scenario"):
            _minimal_config(scenario=ScenarioSpec(turn=True))

    def test_bad_json_reported(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_load_round_trip(self, tmp_path):
        raw = dict(
            model="m2",
            scenario=dict(turn=True, turn_angle=0.5, turn_time=None,
                          truth_mode="maneuvering-deterministic"),
            filters=[
                dict(name="PBPS", sigma_w=0.003, offspring="stochastic"),
                dict(name="UKF", ut=dict(alpha=1.0, beta=2.0, kappa=0.0),
                     m2_gaussian_approx=True),
            ],
            N_values=[10, 20],
            S=2, R=3, K=4, master_seed=99, timing=False,
        )
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(raw))
        cfg = load_config(path)
        assert cfg.model == "m2" and cfg.scenario.turn and not cfg.timing
        assert cfg.filters[0].offspring == "stochastic"
        assert cfg.filters[1].ut.kappa == 0.0


class TestRunExperiment:
    def test_minimal_sweep_shapes(self):
        report = run_experiment(_minimal_config())
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.rmse_k.shape == (1,)
        assert row.global_rmse == pytest.approx(row.rmse_k[0])
        assert row.failures == 0
        assert row.runs == 1

    def test_gaussian_entries_ignore_n(self):
        cfg = _minimal_config(
            filters=[FilterSpec("EKF"), FilterSpec("BPF")], N_values=[10, 30], K=3
        )
        report = run_experiment(cfg)
        names = [(r.filter, r.N) for r in report.rows]
        assert names == [("EKF", None), ("BPF", 10), ("BPF", 30)]

    def test_worker_count_does_not_change_results(self):
        cfg = _minimal_config(
            model="m2",
            K=5, S=3, R=2, N_values=[40],
            filters=[FilterSpec("PBPS", sigma_w=0.003), FilterSpec("RS-BPF"), FilterSpec("DMA-BPF")],
            scenario=ScenarioSpec(turn=True),
        )
        a = run_experiment(cfg, workers=1)
        b = run_experiment(cfg, workers=4)
        for ra, rb in zip(a.rows, b.rows):
            np.testing.assert_array_equal(ra.rmse_k, rb.rmse_k)
            assert ra.failures == rb.failures

    def test_same_seed_byte_identical_csv(self, tmp_path):
        cfg = _minimal_config(S=2, R=2, K=4, N_values=[25], timing=False)
        emit_outputs(run_experiment(cfg), tmp_path / "a")
        emit_outputs(run_experiment(cfg), tmp_path / "b")
        for name in ("summary.csv", "rmse_by_k.csv", "timing.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_failures_recorded_not_fatal(self):
        cfg = _minimal_config(
            filters=[FilterSpec("RS-BPF", regimes=(1e308,)), FilterSpec("BPF")],
            S=2, R=2, K=3, N_values=[8],
        )
        with np.errstate(over="ignore", invalid="ignore"):
            report = run_experiment(cfg)
        rs_row = report.rows[0]
        assert rs_row.failures == 4
        assert np.all(np.isnan(rs_row.rmse_k))
        ok_row = report.rows[1]
        assert ok_row.failures == 0 and np.all(np.isfinite(ok_row.rmse_k))


class TestEmitOutputs:
    def test_headers_bit_exact(self, tmp_path):
        report = run_experiment(_minimal_config())
        emit_outputs(report, tmp_path)
        assert (tmp_path / "summary.csv").read_text().splitlines()[0] == SUMMARY_HEADER
        assert (tmp_path / "rmse_by_k.csv").read_text().splitlines()[0] == RMSE_BY_K_HEADER
        assert (tmp_path / "timing.csv").read_text().splitlines()[0] == TIMING_HEADER
        assert SUMMARY_HEADER == "filter,model,scenario,sigma_w,N,global_rmse,mean_wall_ms,failures"
        assert RMSE_BY_K_HEADER == "filter,model,scenario,sigma_w,N,k,rmse_k"

    def test_empty_report_headers_only(self, tmp_path):
        report = RMSEReport(_minimal_config(), [])
        emit_outputs(report, tmp_path)
        assert (tmp_path / "summary.csv").read_text() == SUMMARY_HEADER + "\n"
        assert (tmp_path / "rmse_by_k.csv").read_text() == RMSE_BY_K_HEADER + "\n"

    def test_rmse_by_k_round_trip(self, tmp_path):
        cfg = _minimal_config(
            model="m2", K=4, S=2, R=2, N_values=[30],
            filters=[FilterSpec("BPF", sigma_w=0.001), FilterSpec("PBPS", sigma_w=0.003)],
        )
        report = run_experiment(cfg)
        emit_outputs(report, tmp_path)
        parsed = load_rmse_by_k(tmp_path / "rmse_by_k.csv")
        for row in report.rows:
            key = (row.filter, row.model, row.scenario, row.sigma_w, row.N)
            np.testing.assert_allclose(parsed[key], row.rmse_k, atol=1e-9)
            np.testing.assert_array_equal(parsed[key], row.rmse_k)  # repr is bit-exact

    def test_timing_disabled_leaves_fields_empty(self, tmp_path):
        cfg = _minimal_config(timing=False)
        emit_outputs(run_experiment(cfg), tmp_path)
        line = (tmp_path / "summary.csv").read_text().splitlines()[1]
        assert line.split(",")[6] == ""

    def test_timing_enabled_writes_positive_wall(self, tmp_path):
        cfg = _minimal_config(timing=True)
        emit_outputs(run_experiment(cfg), tmp_path)
        line = (tmp_path / "summary.csv").read_text().splitlines()[1]
        assert float(line.split(",")[6]) > 0.0

    def test_plot_script_emitted(self, tmp_path):
        emit_outputs(run_experiment(_minimal_config()), tmp_path)
        assert (tmp_path / "plot.py").exists()

    def test_unwritable_target_raises_with_path(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("x")
        with pytest.raises(OSError, match=str(target)):
            emit_outputs(run_experiment(_minimal_config()), target)
