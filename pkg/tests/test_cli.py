import json
import os

import numpy as np
import pandas as pd
import pytest

from topobetti.cli import build_parser, main
from topobetti.tensor_io import write_tensor
from tests.helpers import circle_cloud


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_image_dataset(directory, n_train=24, n_test=12, seed=0):
    rng = np.random.default_rng(seed)
    for split, n in (("train", n_train), ("test", n_test)):
        write_tensor(os.path.join(directory, f"{split}_images.tnnt"), rng.uniform(0, 255, size=(n, 10, 10)))
        write_tensor(os.path.join(directory, f"{split}_labels.tnnt"), np.arange(n) % 2)


class TestGenData:

    def test_default_counts(self, tmp_path):
        assert main(["gen-data", "nine-rings", "--seed", "7", "--output-dir", str(tmp_path)]) == 0
        points = pd.read_csv(tmp_path / "train_points.csv", header=None)
        labels = pd.read_csv(tmp_path / "test_labels.csv")
        assert points.shape == (16000, 3)
        assert len(labels) == 2000
        assert read_json(tmp_path / "metadata.json")["seed"] == 7

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert main(["gen-data", "nine-spheres", "--n-train", "300", "--n-test", "60",
                         "--output-dir", str(tmp_path / name)]) == 0
        for name in ("train_points.csv", "train_labels.csv", "test_points.csv", "metadata.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_too_few_points_fails(self, tmp_path):
        assert main(["gen-data", "nine-spheres", "--n-train", "10", "--output-dir", str(tmp_path)]) == 1

    def test_manifest_rerun_reproduces_hashes(self, tmp_path):
        out = tmp_path / "run"
        assert main(["gen-data", "nine-rings", "--n-train", "100", "--n-test", "20", "--output-dir", str(out)]) == 0
        first = read_json(out / "manifest.json")
        assert first["seed"] == 0
        assert "train_points.csv" in first["outputs"]
        manifest_copy = tmp_path / "manifest.json"
        manifest_copy.write_text(json.dumps(first))
        assert main(["gen-data", "--config", str(manifest_copy)]) == 0
        assert read_json(out / "manifest.json")["outputs"] == first["outputs"]


class TestBetti:

    def test_circle(self, tmp_path):
        path = tmp_path / "circle.csv"
        np.savetxt(path, circle_cloud(200).points, delimiter=",")
        assert main(["betti", "--input", str(path), "--subsample", "60", "--quantile", "0.15", "--max-dim", "1",
                     "--output-dir", str(tmp_path / "out")]) == 0
        summary = read_json(tmp_path / "out" / "betti.json")
        assert summary["betti"] == [1, 1]
        assert summary["m"] == 60
        assert os.path.exists(tmp_path / "out" / "diagram.csv")

    def test_single_point(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("0.5,1.5\n")
        assert main(["betti", "--input", str(path), "--output-dir", str(tmp_path / "out")]) == 0
        assert read_json(tmp_path / "out" / "betti.json")["betti"] == [1, 0, 0]

    def test_budget_exceeded_exit_code(self, tmp_path):
        path = tmp_path / "circle.csv"
        np.savetxt(path, circle_cloud(50).points, delimiter=",")
        assert main(["betti", "--input", str(path), "--simplex-budget", "20",
                     "--output-dir", str(tmp_path / "out")]) == 2

    def test_missing_input(self, tmp_path):
        assert main(["betti", "--output-dir", str(tmp_path)]) == 1

    def test_diagram_stops_at_max_dim(self, tmp_path):
        path = tmp_path / "cluster.csv"
        np.savetxt(path, np.random.default_rng(0).normal(size=(20, 3)), delimiter=",")
        assert main(["betti", "--input", str(path), "--quantile", "0.9", "--max-dim", "2",
                     "--output-dir", str(tmp_path / "out")]) == 0
        diagram = pd.read_csv(tmp_path / "out" / "diagram.csv")
        assert diagram["dim"].max() <= 2
        assert (diagram["dim"] == 0).sum() == 20

    def test_max_dim_above_two_rejected(self, tmp_path):
        path = tmp_path / "circle.csv"
        np.savetxt(path, circle_cloud(30).points, delimiter=",")
        assert main(["betti", "--input", str(path), "--max-dim", "3", "--output-dir", str(tmp_path / "out")]) == 1


class TestBenchmark:

    def test_seed_count(self, tmp_path):
        assert main(["benchmark", "--dataset", "nine-rings", "--n-train", "90", "--n-test", "18",
                     "--hidden-layers", "2", "--width", "6", "--activations", "relu,stacked-sine",
                     "--seeds", "5", "--max-epochs", "1", "--output-dir", str(tmp_path)]) == 0
        runs = pd.read_csv(tmp_path / "convergence_runs.csv")
        assert len(runs) == 10
        report = read_json(tmp_path / "convergence.json")
        assert report["baseline"] == "relu"
        assert report["speedups"][0]["activation"] == "stacked-sine"


class TestImagePipeline:

    def test_train_layer_betti_prune_evaluate_plot(self, tmp_path):
        data_dir = tmp_path / "data"
        write_image_dataset(str(data_dir))
        common = ["--dataset", "tensor", "--data-dir", str(data_dir)]
        model_run = tmp_path / "train"
        assert main(["train", *common, "--arch", "cnn", "--channels", "3,4", "--hidden", "8", "--epochs", "2",
                     "--output-dir", str(model_run)]) == 0
        summary = read_json(model_run / "train_summary.json")
        assert summary["params"] == 3 * 9 + 3 + 4 * 3 * 9 + 4 + 4 * 8 + 8 + 8 * 2 + 2
        model_dir = str(model_run / "model")

        assert main(["layer-betti", *common, "--model-dir", model_dir, "--subsample", "8", "--max-dim", "1",
                     "--output-dir", str(tmp_path / "layers")]) == 0
        progression = pd.read_csv(tmp_path / "layers" / "progression.csv")
        assert progression["layer"].tolist() == [0, 1, 3, 6]

        prune_run = tmp_path / "prune"
        assert main(["prune", *common, "--model-dir", model_dir, "--sample-n", "10", "--percentile", "90",
                     "--output-dir", str(prune_run)]) == 0
        report = read_json(prune_run / "prune_report.json")
        assert report["params_before"] - report["params_after"] == report["params_removed_expected"]
        scores_csv = pd.read_csv(prune_run / "scores.csv")
        assert len(scores_csv) == 7
        assert "b2" not in scores_csv.columns
        assert "prune_report.json" in read_json(prune_run / "manifest.json")["volatile"]

        assert main(["evaluate", *common, "--model-dir", str(prune_run / "pruned_model"),
                     "--output-dir", str(tmp_path / "eval")]) == 0
        assert read_json(tmp_path / "eval" / "evaluation.json")["params"] == report["params_after"]

        assert main(["plot", "--input", str(tmp_path / "layers"), "--output-dir", str(tmp_path / "plots")]) == 0
        assert os.path.exists(tmp_path / "plots" / "plots.pdf")


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
