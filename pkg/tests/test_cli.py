"""End-to-end tests of the command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from pina_xmc import sparse
from pina_xmc.cli import main
from pina_xmc.ioutil import hash_tree, write_json
from pina_xmc.synth import make_synthetic_dataset, write_synthetic_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("data")
    write_synthetic_dataset(make_synthetic_dataset(seed=0, n_labels=10), path)
    return path


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, data_dir):
    path = tmp_path_factory.mktemp("models") / "pina"
    assert main(["train", "--data", str(data_dir), "--model-dir", str(path)]) == 0
    return path


class TestTrain:
    def test_model_dir_layout(self, model_dir):
        assert (model_dir / "manifest.json").is_file()
        assert (model_dir / "classifier" / "manifest.json").is_file()
        assert (model_dir / "vectorizer" / "manifest.json").is_file()
        assert (model_dir / "predictor" / "manifest.json").is_file()
        manifest = json.loads((model_dir / "manifest.json").read_text())
        assert manifest["mode"] == "pina"
        assert manifest["feature_mode"] == "concat"

    def test_train_summary_on_stdout(self, data_dir, tmp_path, capsys):
        code = main(
            ["train", "--data", str(data_dir), "--model-dir", str(tmp_path / "m"),
             "--seed", "2"]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["n_labels"] == 10
        assert summary["mode"] == "pina"

    def test_baseline_has_no_predictor(self, data_dir, tmp_path):
        config = tmp_path / "config.json"
        write_json(config, {"mode": "baseline"})
        out = tmp_path / "baseline"
        assert main(
            ["train", "--data", str(data_dir), "--model-dir", str(out),
             "--config", str(config)]
        ) == 0
        assert not (out / "predictor").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["feature_mode"] == "stat"

    def test_ablate_naive_forces_variant(self, data_dir, tmp_path, capsys):
        out = tmp_path / "naive"
        assert main(
            ["ablate-naive", "--data", str(data_dir), "--model-dir", str(out)]
        ) == 0
        assert json.loads(capsys.readouterr().out)["mode"] == "naive"

    def test_threads_do_not_change_artifacts(self, data_dir, tmp_path):
        a, b = tmp_path / "t1", tmp_path / "t4"
        assert main(
            ["train", "--data", str(data_dir), "--model-dir", str(a), "--threads", "1"]
        ) == 0
        assert main(
            ["train", "--data", str(data_dir), "--model-dir", str(b), "--threads", "4"]
        ) == 0
        assert hash_tree(a) == hash_tree(b)

    def test_missing_data_dir_exits_1(self, tmp_path):
        assert main(
            ["train", "--data", str(tmp_path / "nope"), "--model-dir", str(tmp_path / "m")]
        ) == 1

    def test_bad_config_exits_1(self, data_dir, tmp_path):
        config = tmp_path / "bad.json"
        write_json(config, {"mode": "warp"})
        assert main(
            ["train", "--data", str(data_dir), "--model-dir", str(tmp_path / "m"),
             "--config", str(config)]
        ) == 1


class TestPredictEvaluate:
    def test_predict_writes_scores(self, data_dir, model_dir, tmp_path):
        out = tmp_path / "scores.xmcm"
        code = main(
            ["predict", "--model-dir", str(model_dir),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(out)]
        )
        assert code == 0
        scores = sparse.load_matrix(out)
        assert scores.shape == (20, 10)

    def test_evaluate_reports_json(self, data_dir, model_dir, tmp_path, capsys):
        out = tmp_path / "scores.xmcm"
        main(
            ["predict", "--model-dir", str(model_dir),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(out)]
        )
        capsys.readouterr()
        code = main(
            ["evaluate", "--scores", str(out),
             "--truth", str(data_dir / "test_labels.txt"), "--ks", "1,3"]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report["precision"]) == {"1", "3"}
        assert report["n_instances"] == 20
        assert 0.0 <= report["precision"]["1"] <= 1.0

    def test_evaluate_with_filter(self, data_dir, model_dir, tmp_path, capsys):
        out = tmp_path / "scores.xmcm"
        main(
            ["predict", "--model-dir", str(model_dir),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(out)]
        )
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text("0\t0\n")
        capsys.readouterr()
        assert main(
            ["evaluate", "--scores", str(out),
             "--truth", str(data_dir / "test_labels.txt"), "--filter", str(pairs)]
        ) == 0

    def test_predict_with_precomputed_features(self, data_dir, tmp_path, capsys):
        config = tmp_path / "config.json"
        write_json(config, {"mode": "baseline"})
        model = tmp_path / "baseline"
        main(
            ["train", "--data", str(data_dir), "--model-dir", str(model),
             "--config", str(config)]
        )
        from pina_xmc.textvec import TextVectorizer

        vec = TextVectorizer.load(model / "vectorizer")
        texts = (data_dir / "test_texts.txt").read_text().splitlines()
        feats = tmp_path / "test.xmcm"
        sparse.save_matrix(vec.transform(texts), feats)
        a, b = tmp_path / "a.xmcm", tmp_path / "b.xmcm"
        assert main(
            ["predict", "--model-dir", str(model),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(a)]
        ) == 0
        assert main(
            ["predict", "--model-dir", str(model),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(b),
             "--features", str(feats)]
        ) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_mismatched_features_exit_1(self, data_dir, model_dir, tmp_path):
        feats = tmp_path / "bad.xmcm"
        sparse.save_matrix(sparse.identity(3), feats)
        assert main(
            ["predict", "--model-dir", str(model_dir),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(tmp_path / "s.xmcm"),
             "--features", str(feats)]
        ) == 1


class TestPretrainAugment:
    def test_pretrain_then_augment(self, data_dir, tmp_path, capsys):
        predictor_dir = tmp_path / "predictor"
        assert main(
            ["pina-pretrain", "--data", str(data_dir), "--out", str(predictor_dir)]
        ) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["n_outputs"] == 50  # 40 instances + 10 labels
        out = tmp_path / "aug.xmcm"
        assert main(
            ["pina-augment", "--predictor", str(predictor_dir),
             "--texts", str(data_dir / "test_texts.txt"), "--out", str(out), "--k", "3"]
        ) == 0
        aug = sparse.load_matrix(out)
        assert aug.n_rows == 20
        provenance = json.loads((tmp_path / "aug.xmcm.manifest.json").read_text())
        assert provenance["neighbors"] == 3
        assert provenance["predictor_hash"] == hash_tree(predictor_dir)

    def test_pretrain_rejects_baseline_mode(self, data_dir, tmp_path):
        config = tmp_path / "config.json"
        write_json(config, {"mode": "baseline"})
        assert main(
            ["pina-pretrain", "--data", str(data_dir), "--out", str(tmp_path / "p"),
             "--config", str(config)]
        ) == 1


class TestUsageErrors:
    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_bad_threads_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", "x", "--model-dir", "y", "--threads", "0"])
        assert exc.value.code == 2

    def test_bad_ks_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--scores", "a", "--truth", "b", "--ks", "1,x"])
        assert exc.value.code == 2

    def test_console_module_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pina_xmc.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "pina-xmc" in proc.stdout

    def test_console_script_runs(self):
        proc = subprocess.run(
            ["pina-xmc", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
