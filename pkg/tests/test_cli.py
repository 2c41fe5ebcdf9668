"""Command-line behavior: determinism, round trips, manifests, failure paths."""

import json
import os

import numpy as np
import pytest

from cvnn.cli import main

CONFIG = """
[dataset]
classes = ["LinearChirp", "SChirp"]
n_per_class = 30
length = 256
snr_db = 10.0
seed = 11

[model]
input_shape = [256]
dtype = "complex"
loss = "cce_real"
seed = 5

[[model.layers]]
type = "ComplexDense"
units = 8
activation = "cart_selu"

[[model.layers]]
type = "ComplexDense"
units = 2
activation = "softmax_real_with_abs"

[sgd]
learning_rate = 0.05
batch_size = 16
epochs = 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(CONFIG)
    return str(path)


class TestGenData:
    def test_deterministic_files(self, cfg_file, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["gen-data", "--config", cfg_file, "--out", out1]) == 0
        assert main(["gen-data", "--config", cfg_file, "--out", out2]) == 0
        b1 = open(os.path.join(out1, "dataset.cvds"), "rb").read()
        b2 = open(os.path.join(out2, "dataset.cvds"), "rb").read()
        assert b1 == b2

    def test_seed_override_changes_bytes(self, cfg_file, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        main(["gen-data", "--config", cfg_file, "--out", out1])
        main(["gen-data", "--config", cfg_file, "--out", out2, "--seed", "99"])
        b1 = open(os.path.join(out1, "dataset.cvds"), "rb").read()
        b2 = open(os.path.join(out2, "dataset.cvds"), "rb").read()
        assert b1 != b2

    def test_manifest_hashes_artifacts(self, cfg_file, tmp_path):
        out = str(tmp_path / "a")
        main(["gen-data", "--config", cfg_file, "--out", out])
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert "dataset.cvds" in manifest["artifacts"]
        assert len(manifest["artifacts"]["dataset.cvds"]) == 64
        assert manifest["command"] == "gen-data"

    def test_missing_field_nonzero_exit_names_field(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[dataset]\nlength = 256\n")
        rc = main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert rc != 0
        assert "dataset.n_per_class" in capsys.readouterr().err

    def test_failure_removes_partial_outputs(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[dataset]\nn_per_class = 4\nlength = 255\n")
        out = tmp_path / "o"
        rc = main(["gen-data", "--config", str(bad), "--out", str(out)])
        assert rc != 0
        assert not (out / "dataset.cvds").exists()
        assert not (out / "manifest.json").exists()


class TestTrainEval:
    def test_round_trip_metrics(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert main(["train", "--config", cfg_file, "--out", out]) == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert main([
            "eval",
            "--model", os.path.join(out, "model.cvnm"),
            "--data", os.path.join(out, "dataset.cvds"),
            "--split", "test",
        ]) == 0
        got = json.loads(capsys.readouterr().out)
        assert got["accuracy"] == summary["test_acc"]
        assert got["loss"] == pytest.approx(summary["test_loss"], rel=1e-12)

    def test_history_csv_deterministic(self, cfg_file, tmp_path):
        out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
        main(["train", "--config", cfg_file, "--out", out1])
        main(["train", "--config", cfg_file, "--out", out2])
        h1 = open(os.path.join(out1, "history.csv"), "rb").read()
        h2 = open(os.path.join(out2, "history.csv"), "rb").read()
        assert h1 == h2

    def test_history_columns(self, cfg_file, tmp_path):
        out = str(tmp_path / "run")
        main(["train", "--config", cfg_file, "--out", out])
        lines = open(os.path.join(out, "history.csv")).read().strip().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
        assert len(lines) == 3  # header + 2 epochs


class TestExperiments:
    def test_exp_init_smoke_emits_all_files(self, tmp_path):
        out = str(tmp_path / "exp")
        rc = main(["exp-init", "--runs", "1", "--epochs", "1", "--samples", "70",
                   "--out", out, "--seed", "1"])
        assert rc == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert set(summary["medians"]) == {"original", "x_sqrt2", "half"}
        assert summary["reference_full_scale_medians"] == {
            "original": 0.549, "x_sqrt2": 0.525, "half": 0.523}
        assert os.path.exists(os.path.join(out, "runs.csv"))
        assert os.path.exists(os.path.join(out, "manifest.json"))

    def test_exp_init_scheme_variants(self, tmp_path):
        out = str(tmp_path / "exp")
        rc = main(["exp-init", "--runs", "1", "--epochs", "1", "--samples", "70",
                   "--variants", "GU,HN", "--out", out, "--seed", "1"])
        assert rc == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert set(summary["medians"]) == {"GU", "HN"}

    def test_exp_init_unknown_variant(self, tmp_path, capsys):
        rc = main(["exp-init", "--runs", "1", "--variants", "nope",
                   "--out", str(tmp_path / "e")])
        assert rc != 0
        assert "variant" in capsys.readouterr().err

    def test_exp_cv_rv_smoke(self, tmp_path):
        out = str(tmp_path / "cvrv")
        rc = main(["exp-cv-rv", "--task", "binary", "--runs", "2", "--epochs", "2",
                   "--samples", "80", "--out", out, "--seed", "1"])
        assert rc == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["n_runs_finished"] == 2
        assert 0 <= summary["rv_iqr_ge_cv_jackknife"] <= 2
        hist = open(os.path.join(out, "histograms.csv")).read().splitlines()
        assert hist[0] == "series,bin_lo,bin_hi,count"
        assert any(row.startswith("cv_acc") for row in hist[1:])

    def test_model_outputs_are_probabilities(self, tmp_path):
        from cvnn.cli import build_cv_model

        rng = np.random.default_rng(0)
        model = build_cv_model(16, 7, seed=2)
        x = rng.standard_normal((5, 16)) + 1j * rng.standard_normal((5, 16))
        out = model.predict(x).array.real
        assert out.shape == (5, 7)
        assert out.min() >= 0
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
        real = model.get_real_equivalent(2.0)
        out_r = real.forward(rng.standard_normal((5, 32)))
        np.testing.assert_allclose(out_r.sum(axis=1), 1.0, atol=1e-9)
