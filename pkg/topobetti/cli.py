#!/usr/bin/env python3
"""
Command-Line Interface

Subcommands:
    gen-data     write a synthetic dataset (points/labels CSV + metadata JSON)
    betti        Betti vector and persistence diagram of a point cloud file
    train        train a network and save it with its per-epoch log
    benchmark    epochs-to-threshold comparison across activations
    layer-betti  Betti progression of one class through a network
    prune        score conv filters by Betti total and remove the complex ones
    evaluate     accuracy, latency and parameter count of a saved network
    plot         PDF charts of a results directory

Every command writes manifest.json beside its outputs. Passing that manifest
back as --config reproduces the run.

Usage:
    python -m topobetti gen-data nine-rings --seed 7 --output-dir results/rings
    python -m topobetti benchmark --activations relu,stacked-sine --dataset nine-rings --seeds 5
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import sklearn
import yaml

from topobetti import __version__
from topobetti.config import DATASETS, RunConfig, load_config, merge_overrides
from topobetti.datasets import (LabeledCloud, gen_nine_rings, gen_nine_spheres, load_cifar10, load_fashion_mnist,
                                load_tensor_images, read_dataset_csv, write_dataset_csv)
from topobetti.errors import ConfigError, SimplexBudgetExceeded, TopoBettiError
from topobetti.experiments import convergence_benchmark, layerwise_betti
from topobetti.network import NetworkSpec, cnn_spec, init_network, load_network, mlp_spec, save_network
from topobetti.plots import create_plots
from topobetti.pointcloud import PointCloud, read_cloud_csv
from topobetti.pruning import evaluate, filter_betti_scores, percentile_threshold, prune_filters, scores_frame
from topobetti.tensor_io import read_tensor
from topobetti.topology import persistence_profile
from topobetti.training import TrainConfig, train

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


# Output helpers

def _write_json(path: str, payload: Any) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    return path


def _write_csv(path: str, frame: pd.DataFrame) -> str:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: RunConfig, command: str, outputs: List[str], volatile: List[str],
                   wall_time: float) -> str:
    """Config, seed, library versions, wall time and a hash of every output"""
    root = cfg.output_dir
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {
            "topobetti": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "scikit-learn": sklearn.__version__,
            "pyyaml": yaml.__version__,
        },
        "wall_time_seconds": wall_time,
        "outputs": {os.path.relpath(p, root): _sha256(p) for p in sorted(outputs)},
        "volatile": sorted(os.path.relpath(p, root) for p in volatile),
    }
    return _write_json(os.path.join(root, MANIFEST_FILE), manifest)


# Data and networks

def _recommended_quantile(data: LabeledCloud) -> Optional[float]:
    return data.metadata.get("recommended_quantile")


def load_data(cfg: RunConfig) -> Tuple[LabeledCloud, LabeledCloud]:
    """Generate or read the configured dataset; file datasets are cut to n_train / n_test samples"""
    if cfg.dataset in ("nine-rings", "nine-spheres"):
        if cfg.data_dir:
            train_data = read_dataset_csv(cfg.data_dir, "train")
            test_data = read_dataset_csv(cfg.data_dir, "test")
            metadata_path = os.path.join(cfg.data_dir, "metadata.json")
            if os.path.exists(metadata_path):
                with open(metadata_path, "r", encoding="utf-8") as f:
                    metadata = json.load(f)
                train_data.metadata.update(metadata)
                test_data.metadata.update(metadata)
            return train_data, test_data
        generate = gen_nine_rings if cfg.dataset == "nine-rings" else gen_nine_spheres
        return generate(cfg.n_train, cfg.n_test, cfg.seed)

    if not cfg.data_dir:
        raise ConfigError("config.data_dir", f"dataset '{cfg.dataset}' is read from files; set data_dir")
    if cfg.dataset == "fashion-mnist":
        train_data, test_data = load_fashion_mnist(cfg.data_dir)
    elif cfg.dataset == "cifar10":
        train_data, test_data = load_cifar10(cfg.data_dir)
    else:
        train_data = load_tensor_images(os.path.join(cfg.data_dir, "train_images.tnnt"),
                                        os.path.join(cfg.data_dir, "train_labels.tnnt"), "train")
        test_data = load_tensor_images(os.path.join(cfg.data_dir, "test_images.tnnt"),
                                       os.path.join(cfg.data_dir, "test_labels.tnnt"), "test")
    return train_data.take(cfg.n_train, cfg.seed), test_data.take(cfg.n_test, cfg.seed)


def build_spec(cfg: RunConfig, train_data: LabeledCloud, test_data: LabeledCloud) -> NetworkSpec:
    classes = int(max(train_data.labels.max(), test_data.labels.max())) + 1
    if cfg.arch == "mlp":
        return mlp_spec(input_dim=int(np.prod(train_data.features.shape[1:])), hidden_layers=cfg.hidden_layers,
                        width=cfg.width, activation=cfg.activation, classes=max(classes, 2),
                        middle_activation=cfg.middle_activation, output=cfg.output, init_seed=cfg.seed)
    return cnn_spec(input_shape=tuple(train_data.features.shape[1:]), classes=max(classes, 2),
                    activation=cfg.activation, middle_activation=cfg.middle_activation,
                    channels=tuple(cfg.channels), hidden=cfg.hidden, init_seed=cfg.seed)


def _flatten_for(spec: NetworkSpec, data: LabeledCloud) -> LabeledCloud:
    """MLPs on image data see each image as one flat vector"""
    if len(spec.input_shape) == 1 and data.features.ndim > 2:
        return LabeledCloud(data.features.reshape(data.n, -1), data.labels, data.split, data.metadata)
    return data


def _require(value: Optional[str], name: str) -> str:
    if not value:
        raise ConfigError(f"config.{name}", "required by this command")
    return value


# Commands; each returns (outputs, volatile outputs)

def cmd_gen_data(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    if cfg.dataset not in ("nine-rings", "nine-spheres"):
        raise ConfigError("config.dataset", f"gen-data only generates nine-rings or nine-spheres, got '{cfg.dataset}'")
    generate = gen_nine_rings if cfg.dataset == "nine-rings" else gen_nine_spheres
    train_data, test_data = generate(cfg.n_train, cfg.n_test, cfg.seed)
    outputs = write_dataset_csv(train_data, cfg.output_dir) + write_dataset_csv(test_data, cfg.output_dir)
    metadata = dict(train_data.metadata, n_train=train_data.n, n_test=test_data.n)
    outputs.append(_write_json(os.path.join(cfg.output_dir, "metadata.json"), metadata))
    return outputs, []


def cmd_betti(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    path = _require(cfg.input, "input")
    if path.endswith(".tnnt"):
        array = read_tensor(path).astype(np.float64)
        cloud = PointCloud(array.reshape(array.shape[0], -1))
    else:
        cloud = read_cloud_csv(path)
    profile = persistence_profile(cloud, cfg.betti_config())
    summary = dict(profile.betti.as_dict(), betti=list(profile.betti.betti), n=cloud.n,
                   robust_delta=cfg.robust_delta, simplices=profile.filtration_size)
    betti_path = _write_json(os.path.join(cfg.output_dir, "betti.json"), summary)
    diagram_path = os.path.join(cfg.output_dir, "diagram.csv")
    profile.diagram.write_csv(diagram_path)
    return [betti_path, diagram_path], []


def cmd_train(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    train_data, test_data = load_data(cfg)
    spec = build_spec(cfg, train_data, test_data)
    train_data, test_data = _flatten_for(spec, train_data), _flatten_for(spec, test_data)
    model, log = train(init_network(spec), train_data, test_data, cfg.train_config())
    outputs = save_network(model, os.path.join(cfg.output_dir, "model"))
    outputs.append(_write_csv(os.path.join(cfg.output_dir, "train_log.csv"), log.to_frame()))
    last = log.records[-1]
    summary = {
        "epochs": len(log.records),
        "epochs_to_threshold": log.epochs_to_threshold,
        "final_train_acc": last.train_acc,
        "final_test_acc": last.test_acc,
        "params": model.num_params(),
    }
    outputs.append(_write_json(os.path.join(cfg.output_dir, "train_summary.json"), summary))
    return outputs, []


def cmd_benchmark(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    train_data, test_data = load_data(cfg)
    spec = build_spec(cfg, train_data, test_data)
    train_data, test_data = _flatten_for(spec, train_data), _flatten_for(spec, test_data)
    report = convergence_benchmark(spec, cfg.activations, train_data, test_data, cfg.benchmark_config())
    return [
        _write_csv(os.path.join(cfg.output_dir, "convergence_runs.csv"), report.to_frame()),
        _write_json(os.path.join(cfg.output_dir, "convergence.json"), report.to_dict()),
    ], []


def cmd_layer_betti(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    train_data, test_data = load_data(cfg)
    if cfg.model_dir:
        net = load_network(cfg.model_dir)
    else:
        logger.info("No model_dir given; measuring an untrained network")
        net = init_network(build_spec(cfg, train_data, test_data))
    data = _flatten_for(net.spec, train_data)
    betti_cfg = cfg.betti_config(_recommended_quantile(train_data))
    progression = layerwise_betti(net, data, cfg.class_label, betti_cfg, network_id=cfg.model_dir or "untrained",
                                  sample_n=cfg.layer_sample_n)
    return [
        _write_csv(os.path.join(cfg.output_dir, "progression.csv"), progression.to_frame()),
        _write_json(os.path.join(cfg.output_dir, "progression.json"), progression.to_dict()),
    ], []


def cmd_prune(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    net = load_network(_require(cfg.model_dir, "model_dir"))
    train_data, test_data = load_data(cfg)
    train_data, test_data = _flatten_for(net.spec, train_data), _flatten_for(net.spec, test_data)
    scores = filter_betti_scores(net, train_data, cfg.score_config())
    threshold = cfg.prune_threshold()
    if threshold is None:
        threshold = percentile_threshold(scores, cfg.percentile)
        logger.info(f"Threshold at the {cfg.percentile:g}th percentile of filter scores: {threshold:g}")
    retrain_cfg = TrainConfig(optimizer=cfg.optimizer, lr=cfg.lr, batch_size=cfg.batch_size,
                              epochs=cfg.retrain_epochs, seed=cfg.seed)
    pruned, report = prune_filters(net, scores, threshold, data=test_data, retrain_data=train_data,
                                   retrain_cfg=retrain_cfg)
    report.metadata.update({"sample_n": cfg.sample_n, "quantile": cfg.resolved_quantile(),
                            "max_dim": cfg.score_max_dim, "percentile": cfg.percentile})
    outputs = [_write_csv(os.path.join(cfg.output_dir, "scores.csv"), scores_frame(scores, cfg.score_max_dim))]
    outputs += save_network(pruned, os.path.join(cfg.output_dir, "pruned_model"))
    report_path = _write_json(os.path.join(cfg.output_dir, "prune_report.json"), report.to_dict())
    return outputs + [report_path], [report_path]


def cmd_evaluate(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    net = load_network(_require(cfg.model_dir, "model_dir"))
    _, test_data = load_data(cfg)
    result = evaluate(net, _flatten_for(net.spec, test_data))
    path = _write_json(os.path.join(cfg.output_dir, "evaluation.json"), result.to_dict())
    return [path], [path]


def cmd_plot(cfg: RunConfig) -> Tuple[List[str], List[str]]:
    path = os.path.join(cfg.output_dir, "plots.pdf")
    create_plots(cfg.input or cfg.output_dir, path)
    return [path], [path]


COMMANDS: Dict[str, Callable[[RunConfig], Tuple[List[str], List[str]]]] = {
    "gen-data": cmd_gen_data,
    "betti": cmd_betti,
    "train": cmd_train,
    "benchmark": cmd_benchmark,
    "layer-betti": cmd_layer_betti,
    "prune": cmd_prune,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


# Argument parsing

def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _seeds(text: str):
    """'5' means seeds 0..4; '3,7,11' lists them"""
    return _int_list(text) if "," in text else int(text)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", choices=DATASETS, help="Dataset name")
    parser.add_argument("--data-dir", help="Directory holding dataset files")
    parser.add_argument("--n-train", type=int, help="Training samples (generated or kept)")
    parser.add_argument("--n-test", type=int, help="Test samples (generated or kept)")


def _add_arch_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", choices=("mlp", "cnn"), help="Network family")
    parser.add_argument("--activation", help="Hidden activation, e.g. relu, stacked-sine, leaky_relu(0.1)")
    parser.add_argument("--middle-activation", help="Activation of the middle hidden layers")
    parser.add_argument("--hidden-layers", type=int, help="MLP hidden layers")
    parser.add_argument("--width", type=int, help="MLP hidden width")
    parser.add_argument("--channels", type=_int_list, help="CNN channel counts, e.g. 16,32")
    parser.add_argument("--hidden", type=int, help="CNN dense width")
    parser.add_argument("--output", choices=("softmax", "sigmoid"), help="Output layer")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--optimizer", choices=("sgd", "adam"), help="Optimizer")
    parser.add_argument("--lr", type=float, help="Learning rate")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--acc-threshold", type=float, help="Train accuracy counted as converged")


def _add_betti_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--subsample", type=int, help="Landmarks kept (m)")
    parser.add_argument("--quantile", type=float, help="Distance quantile giving the scale (q)")
    parser.add_argument("--max-dim", type=int, help="Highest homology dimension (K)")
    parser.add_argument("--eps-max", type=float, help="Explicit scale; bypasses the quantile")
    parser.add_argument("--robust-delta", type=float, help="Only count intervals persisting delta*eps")
    parser.add_argument("--simplex-budget", type=int, help="Maximum simplices before aborting")
    parser.add_argument("--method", choices=("maxmin", "uniform"), help="Landmark selection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topobetti", description="Betti numbers of data and networks")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file or a manifest.json of an earlier run")
    common.add_argument("--seed", type=int, help="Run seed")
    common.add_argument("--output-dir", help="Directory for outputs and manifest")
    common.add_argument("--workers", type=int, help="Worker processes")

    p = sub.add_parser("gen-data", parents=[common], help="Write a synthetic dataset")
    p.add_argument("dataset", nargs="?", choices=("nine-rings", "nine-spheres"), help="Dataset to generate")
    p.add_argument("--n-train", type=int, help="Training samples")
    p.add_argument("--n-test", type=int, help="Test samples")

    p = sub.add_parser("betti", parents=[common], help="Betti numbers of a point cloud file")
    p.add_argument("--input", help="Cloud CSV (one point per row, no header) or tensor file")
    _add_betti_flags(p)

    p = sub.add_parser("train", parents=[common], help="Train a network")
    _add_data_flags(p)
    _add_arch_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("benchmark", parents=[common], help="Convergence benchmark across activations")
    _add_data_flags(p)
    _add_arch_flags(p)
    _add_train_flags(p)
    p.add_argument("--activations", help="Comma-separated activations; the first is the baseline")
    p.add_argument("--seeds", type=_seeds, help="Seed count or comma-separated seeds")
    p.add_argument("--batch-sizes", type=_int_list, help="Comma-separated batch sizes")
    p.add_argument("--max-epochs", type=int, help="Epoch cap; unconverged runs are censored here")

    p = sub.add_parser("layer-betti", parents=[common], help="Betti progression through a network")
    _add_data_flags(p)
    _add_arch_flags(p)
    _add_betti_flags(p)
    p.add_argument("--model-dir", help="Saved network (untrained network if omitted)")
    p.add_argument("--class-label", type=int, help="Class to measure")
    p.add_argument("--layer-sample-n", type=int, help="Forward only this many class samples")

    p = sub.add_parser("prune", parents=[common], help="Betti-guided filter pruning")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--model-dir", help="Saved network")
    p.add_argument("--threshold", type=float, help="Remove filters whose Betti total exceeds this")
    p.add_argument("--percentile", type=float, help="Use this percentile of the scores as threshold")
    p.add_argument("--sample-n", type=int, help="Inputs forwarded for scoring")
    p.add_argument("--subsample", type=int, help="Landmarks per filter cloud")
    p.add_argument("--quantile", type=float, help="Distance quantile giving the scale")
    p.add_argument("--score-max-dim", type=int, help="Highest homology dimension in scores")
    p.add_argument("--retrain-epochs", type=int, help="Fine-tuning epochs after pruning")

    p = sub.add_parser("evaluate", parents=[common], help="Accuracy, latency and size of a network")
    _add_data_flags(p)
    p.add_argument("--model-dir", help="Saved network")

    p = sub.add_parser("plot", parents=[common], help="PDF charts of a results directory")
    p.add_argument("--input", help="Results directory (defaults to --output-dir)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    skip = {"config", "command", "debug"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip}
    return merge_overrides(cfg, overrides)


def run(cfg: RunConfig, command: str) -> List[str]:
    """Execute one command and write its manifest; returns the output paths"""
    os.makedirs(cfg.output_dir, exist_ok=True)
    start = time.perf_counter()
    outputs, volatile = COMMANDS[command](cfg)
    wall_time = time.perf_counter() - start
    manifest = write_manifest(cfg, command, outputs, volatile, wall_time)
    logger.info(f"{command} finished in {wall_time:.1f}s; manifest at {manifest}")
    return outputs


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)]
    )
    args = build_parser().parse_args(argv)
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        cfg = resolve_config(args)
        run(cfg, args.command)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_ERROR
    except SimplexBudgetExceeded as e:
        logger.error(str(e))
        return EXIT_BUDGET
    except (TopoBettiError, ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
