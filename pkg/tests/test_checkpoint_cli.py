import json

import numpy as np
import pytest

from snnsmp.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from snnsmp.cli import main
from snnsmp.exceptions import CheckpointError, ConfigurationError
from snnsmp.experiments import EvalConfig, RunConfig, fit, preset
from snnsmp.streams import get_state, philox, set_state


def tiny(task="cubic-regression", K=600, snapshot_every=0, seed=0):
    cfg = preset(task, seed)
    cfg.train.K = K
    cfg.train.snapshot_every = snapshot_every
    cfg.task.count = 200
    cfg.eval = EvalConfig(samples=200, grid_points=101, test_count=500, surface_resolution=6, surface_samples=2,
                          observations=10, seed=seed)
    return cfg


class TestPresets:
    def test_benchmark_sizes(self):
        c = preset("circle-classification")
        assert (c.net.width, c.net.depth, c.train.K) == (2, 8, 100_000)
        p = preset("param-estimation")
        assert (p.net.width, p.net.depth, p.train.K) == (3, 16, 100_000)
        assert (preset("cubic-regression").net.depth, preset("tan-regression").net.depth) == (8, 12)
        assert preset("tan-regression").train.K == 200_000

    def test_round_trip_and_digest(self):
        cfg = preset("tan-regression", 4)
        back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back.to_dict() == cfg.to_dict() and back.digest() == cfg.digest()
        assert preset("tan-regression", 5).digest() != cfg.digest()

    def test_dimension_check(self):
        d = preset("cubic-regression").to_dict()
        d["net"]["input_dim"] = 2
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict(d)

    def test_unknown_task(self):
        with pytest.raises(ConfigurationError):
            preset("xor")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = tiny()
        controls, log = fit(cfg)
        ck = Checkpoint.after(cfg.train.K, controls, log, cfg)
        back = load_checkpoint(save_checkpoint(ck, tmp_path / "c.json"))
        assert back == ck and back.controls == controls and back.log == log
        assert back.rng_state["next_iteration"] == cfg.train.K + 1

    def test_resume_from_snapshot(self):
        cfg = tiny(K=1500, snapshot_every=500)
        snaps = []
        full, log = fit(cfg, on_snapshot=snaps.append)
        assert [s.iteration for s in snaps] == [500, 1000, 1500]
        again, rlog = fit(cfg, resume=Checkpoint.from_dict(json.loads(json.dumps(snaps[0].to_dict()))))
        assert again == full and rlog == log

    def test_resume_rejects_other_config(self):
        cfg = tiny(K=1000, snapshot_every=500)
        snaps = []
        fit(cfg, on_snapshot=snaps.append)
        with pytest.raises(CheckpointError):
            fit(tiny(K=1000, snapshot_every=500, seed=1), resume=snaps[0])

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("controls"),
            lambda d: d.update(format="other"),
            lambda d: d.update(iteration=d["iteration"] + 1),
            lambda d: d["log"].update(loss="!!notbase64"),
            lambda d: d["controls"].update(W=[[[0.0]]]),
        ],
    )
    def test_corruption_detected(self, tmp_path, mutate):
        cfg = tiny(K=50)
        controls, log = fit(cfg)
        d = Checkpoint.after(50, controls, log, cfg).to_dict()
        mutate(d)
        (tmp_path / "c.json").write_text(json.dumps(d))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "c.json")

    def test_unreadable(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.json")
        (tmp_path / "t.json").write_text('{"format": ')
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "t.json")


def test_stream_state_round_trip():
    g = philox(5, 1)
    g.standard_normal(7)
    state = json.loads(json.dumps(get_state(g)))
    h = set_state(state)
    assert np.array_equal(g.standard_normal(10), h.standard_normal(10))


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCLI:
    def test_generate_data(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "generate-data", "--task", "circle-classification", "--count", 10_000, "--seed", 7, "--out", tmp_path / "a")
        assert code == 0 and "count=10000" in out and "input_dim=2" in out
        run_cli(capsys, "generate-data", "--task", "circle-classification", "--count", 10_000, "--seed", 7, "--out", tmp_path / "b")
        assert (tmp_path / "a/dataset.json").read_bytes() == (tmp_path / "b/dataset.json").read_bytes()

    def test_generate_param_override(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "generate-data", "--task", "cubic-regression", "--count", 5, "--param", "noise_std=0.0", "--out", tmp_path)
        ds = json.loads((tmp_path / "dataset.json").read_text())
        assert code == 0 and ds["header"]["parameters"]["noise_std"] == 0.0

    def test_invalid_task_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "generate-data", "--task", "spiral")
        assert code == 2 and err.startswith("UsageError: ") and len(err.strip().splitlines()) == 1

    def test_missing_command(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 2 and err.startswith("UsageError")

    def write_config(self, tmp_path, **kw):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(tiny(**kw).to_dict()))
        return path

    def test_train_evaluate_regression(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, K=800, snapshot_every=400)
        code, _, _ = run_cli(capsys, "generate-data", "--config", cfg, "--out", tmp_path / "d")
        assert code == 0
        code, _, _ = run_cli(capsys, "train", "--config", cfg, "--data", tmp_path / "d/dataset.json", "--out", tmp_path / "t")
        assert code == 0
        names = sorted(p.name for p in (tmp_path / "t").iterdir())
        assert names == ["checkpoint.json", "checkpoint_000000400.json", "checkpoint_000000800.json", "training_log.csv"]
        log_rows = (tmp_path / "t/training_log.csv").read_text().splitlines()
        assert log_rows[0] == "iteration,index,loss,grad_norm,lr" and len(log_rows) == 2
        code, out, _ = run_cli(capsys, "evaluate", "--checkpoint", tmp_path / "t/checkpoint.json", "--out", tmp_path / "e")
        metrics = json.loads((tmp_path / "e/metrics.json").read_text())
        assert code == 0 and {"rmse", "coverage", "alignment"} <= set(metrics)
        assert len((tmp_path / "e/band.csv").read_text().splitlines()) == 102

    def test_resume_flag(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, K=1200, snapshot_every=600)
        run_cli(capsys, "train", "--config", cfg, "--out", tmp_path / "full")
        code, _, _ = run_cli(capsys, "train", "--config", cfg, "--resume", tmp_path / "full/checkpoint_000000600.json", "--out", tmp_path / "res")
        assert code == 0
        assert (tmp_path / "full/checkpoint.json").read_bytes() == (tmp_path / "res/checkpoint.json").read_bytes()
        assert (tmp_path / "full/training_log.csv").read_bytes() == (tmp_path / "res/training_log.csv").read_bytes()

    def test_classification_report(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, task="circle-classification", K=300)
        run_cli(capsys, "train", "--config", cfg, "--out", tmp_path / "t")
        code, _, _ = run_cli(capsys, "evaluate", "--checkpoint", tmp_path / "t/checkpoint.json", "--out", tmp_path / "e")
        metrics = json.loads((tmp_path / "e/metrics.json").read_text())
        assert code == 0 and "accuracy" in metrics and "misclassified_in_band_fraction" in metrics
        assert len((tmp_path / "e/surface.csv").read_text().splitlines()) == 37

    def test_param_report(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, task="param-estimation", K=300)
        run_cli(capsys, "train", "--config", cfg, "--out", tmp_path / "t")
        code, _, _ = run_cli(capsys, "evaluate", "--checkpoint", tmp_path / "t/checkpoint.json", "--out", tmp_path / "e")
        metrics = json.loads((tmp_path / "e/metrics.json").read_text())
        assert code == 0 and set(metrics["alphas"]) == {"3.75", "4.0", "4.25"}

    def test_corrupted_checkpoint(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text("{not json")
        code, _, err = run_cli(capsys, "evaluate", "--checkpoint", tmp_path / "c.json")
        assert code == 3 and err.startswith("CheckpointError: ")

    def test_dimension_mismatch(self, tmp_path, capsys):
        run_cli(capsys, "generate-data", "--task", "circle-classification", "--count", 20, "--out", tmp_path / "d")
        code, _, err = run_cli(capsys, "train", "--task", "cubic-regression", "--data", tmp_path / "d/dataset.json", "--out", tmp_path)
        assert code == 2 and err.startswith("ConfigurationError: ")

    def test_bad_dataset_file(self, tmp_path, capsys):
        (tmp_path / "d.json").write_text('{"header": {"input_dim": 1, "label_dim": 1, "count": 1}, "records": [[1.0]]}')
        code, _, err = run_cli(capsys, "train", "--task", "cubic-regression", "--data", tmp_path / "d.json", "--out", tmp_path)
        assert code == 3 and err.startswith("DatasetError: record 0")

    def test_divergence_exit(self, tmp_path, capsys):
        run_cli(capsys, "generate-data", "--task", "cubic-regression", "--count", 5, "--out", tmp_path / "d")
        path = tmp_path / "d/dataset.json"
        doc = json.loads(path.read_text())
        doc["records"] = [[r[0], r[1] * 1e200] for r in doc["records"]]
        path.write_text(json.dumps(doc))
        code, _, err = run_cli(capsys, "train", "--task", "cubic-regression", "--data", path, "--iterations", 10, "--out", tmp_path / "t")
        assert code == 1 and err.startswith("TrainingDiverged: iteration 1")
        assert (tmp_path / "t/training_log.csv").exists()

    def test_gradient_check_passes(self, capsys):
        code, out, _ = run_cli(capsys, "gradient-check")
        assert code == 0 and out.count(" ok") == 6

    def test_gradient_check_detects_sign_flip(self, capsys):
        code, out, err = run_cli(capsys, "gradient-check", "--inject-sign-flip", "gradW")
        assert code == 1 and "gradW" in err and "gradB" not in err

    def test_gradient_check_zero_diffusion(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text(json.dumps({"sigma": 0.0, "M": 2000}))
        code, out, _ = run_cli(capsys, "gradient-check", "--config", tmp_path / "g.json")
        assert code == 0

    def test_gradient_check_size_cap(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text(json.dumps({"width": 5}))
        code, _, err = run_cli(capsys, "gradient-check", "--config", tmp_path / "g.json")
        assert code == 2 and err.startswith("ConfigurationError")

    def test_workers_do_not_change_results(self, capsys):
        _, a, _ = run_cli(capsys, "gradient-check", "--workers", 1)
        _, b, _ = run_cli(capsys, "gradient-check", "--workers", 2)
        assert a == b
