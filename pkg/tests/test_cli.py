import json
import subprocess
import sys

from smc_kit.cli import main

BASE_CONFIG = dict(
    model="m1",
    filters=[{"name": "BPF"}, {"name": "PBPS"}],
    N_values=[15],
    S=1,
    R=1,
    K=3,
    master_seed=5,
    timing=False,
)


def _write_config(tmp_path, **overrides):
    cfg = dict(BASE_CONFIG)
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestRunCommand:
    def test_run_writes_outputs(self, tmp_path):
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("summary.csv", "rmse_by_k.csv", "timing.csv", "plot.py"):
            assert (out / name).exists()

    def test_config_error_exit_code(self, tmp_path):
        cfg = _write_config(tmp_path, model="m7")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_missing_config_exit_code(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = _write_config(tmp_path, banana=1)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_runtime_failure_exit_code(self, tmp_path):
        cfg = _write_config(tmp_path)
        blocker = tmp_path / "blocked"
        blocker.write_text("i am a file, not a directory")
        assert main(["run", "--config", str(cfg), "--out", str(blocker)]) == 2

    def test_seed_override_changes_results(self, tmp_path):
        cfg = _write_config(tmp_path)
        out_a, out_b, out_c = (tmp_path / x for x in "abc")
        main(["run", "--config", str(cfg), "--out", str(out_a)])
        main(["run", "--config", str(cfg), "--out", str(out_b), "--seed", "99"])
        main(["run", "--config", str(cfg), "--out", str(out_c), "--seed", "99"])
        assert (out_a / "summary.csv").read_bytes() != (out_b / "summary.csv").read_bytes()
        assert (out_b / "summary.csv").read_bytes() == (out_c / "summary.csv").read_bytes()

    def test_workers_flag_preserves_bytes(self, tmp_path):
        cfg = _write_config(tmp_path, S=2, R=2)
        out1, out8 = tmp_path / "w1", tmp_path / "w8"
        assert main(["run", "--config", str(cfg), "--out", str(out1), "--workers", "1"]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out8), "--workers", "8"]) == 0
        assert (out1 / "summary.csv").read_bytes() == (out8 / "summary.csv").read_bytes()
        assert (out1 / "rmse_by_k.csv").read_bytes() == (out8 / "rmse_by_k.csv").read_bytes()


class TestSimulateCommand:
    def test_m1_trajectory_csv(self, tmp_path):
        out = tmp_path / "traj.csv"
        assert main(["simulate", "--model", "m1", "--seed", "4", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "k,x0,y0"
        assert len(lines) == 52  # header + k=0..50
        assert lines[1].endswith(",")

    def test_m2_turn_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--model", "m2", "--turn", "--seed", "12", "--out", str(a)])
        main(["simulate", "--model", "m2", "--turn", "--seed", "12", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "k,x0,x1,x2,x3,y0"

    def test_turn_on_m1_rejected(self, tmp_path):
        code = main(["simulate", "--model", "m1", "--turn", "--seed", "1", "--out", str(tmp_path / "x")])
        assert code == 1


class TestPlotCommand:
    def test_renders_charts(self, tmp_path):
        cfg = _write_config(tmp_path, timing=True)
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--out", str(out)])
        assert main(["plot", "--in", str(out)]) == 0
        for name in ("rmse_vs_n.png", "rmse_by_k.png", "time_vs_n.png"):
            assert (out / name).stat().st_size > 0

    def test_missing_dir_is_config_error(self, tmp_path):
        assert main(["plot", "--in", str(tmp_path / "missing")]) == 1


class TestConsoleEntryPoint:
    def test_installed_script_runs(self, tmp_path):
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "smc_kit.cli", "run", "--config", str(cfg), "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "summary.csv").exists()
