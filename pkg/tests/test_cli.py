import json

import pytest

from deconfound.cli import main


def write_config(tmp_path, **overrides):
    config = {
        "source": {
            "type": "simulate",
            "simulation": {"T": 320, "k": 2, "p": 2, "gamma_a": 0.5, "gamma_y": 0.5, "seed": 0},
        },
        "factor_model": {"hidden_dim": 5, "epochs": 2},
        "windows": {"seq_len": 20, "pred_lens": [4], "stride": 1},
        "forecasters": [
            {"kind": "ridge"},
            {"kind": "recurrent", "hidden_dim": 6, "epochs": 2},
        ],
        "split": {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2},
        "seeds": [0, 1],
        "include_oracle": True,
        "output_dir": str(tmp_path / "out"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestExitCodes:
    def test_pipeline_success(self, tmp_path, capsys):
        rc = main(["pipeline", "--config", str(write_config(tmp_path, seeds=[0]))])
        assert rc == 0
        assert "wrote artifacts" in capsys.readouterr().out
        assert (tmp_path / "out" / "metrics.csv").exists()

    def test_missing_config_is_validation_error(self, tmp_path, capsys):
        rc = main(["pipeline", "--config", str(tmp_path / "absent.json")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_json_is_validation_error(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{broken")
        assert main(["simulate", "--config", str(path)]) == 1

    def test_empty_seeds_is_validation_error(self, tmp_path):
        assert main(["simulate", "--config", str(write_config(tmp_path, seeds=[]))]) == 1

    def test_runtime_failure_is_exit_two(self, tmp_path, capsys):
        config = write_config(
            tmp_path, windows={"seq_len": 400, "pred_lens": [4], "stride": 1}, seeds=[0]
        )
        rc = main(["forecast", "--config", str(config)])
        assert rc == 2
        assert "forecast" in capsys.readouterr().err


class TestStageCommands:
    def test_simulate_writes_panels_only(self, tmp_path):
        rc = main(["simulate", "--config", str(write_config(tmp_path))])
        assert rc == 0
        out = tmp_path / "out"
        assert (out / "panel_seed0.csv").exists()
        assert (out / "panel_seed1.csv").exists()
        assert not (out / "factor_params_seed0.json").exists()

    def test_train_factor_and_infer_z(self, tmp_path):
        config = write_config(tmp_path, seeds=[0])
        assert main(["train-factor", "--config", str(config)]) == 0
        out = tmp_path / "out"
        assert (out / "training_log_seed0.csv").exists()
        assert not (out / "z_hat_seed0.csv").exists()
        assert main(["infer-z", "--config", str(config)]) == 0
        assert (out / "z_hat_seed0.csv").exists()

    def test_report_writes_everything(self, tmp_path):
        config = write_config(tmp_path, seeds=[0])
        assert main(["report", "--config", str(config)]) == 0
        out = tmp_path / "out"
        assert (out / "improvement.json").exists()
        assert (out / "alignment_seed0.json").exists()


class TestOverrides:
    def test_seed_override_replaces_list(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["simulate", "--config", str(config), "--seed", "7"]) == 0
        out = tmp_path / "out"
        assert (out / "panel_seed7.csv").exists()
        assert not (out / "panel_seed0.csv").exists()

    def test_out_override(self, tmp_path):
        config = write_config(tmp_path)
        target = tmp_path / "elsewhere"
        assert main(["simulate", "--config", str(config), "--out", str(target)]) == 0
        assert (target / "panel_seed0.csv").exists()
