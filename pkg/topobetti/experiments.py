"""
Measurement Studies

1. Layer-wise Betti progression: how the topology of one class changes as
   its samples pass through the layers of a network.
2. Convergence benchmark: epochs needed to reach a train-accuracy threshold
   for several activations trained from identical initial seeds.
"""

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from topobetti.datasets import LabeledCloud
from topobetti.errors import DivergedLoss, TopologyError
from topobetti.network import ConvSpec, DenseSpec, Network, NetworkSpec, init_network, layer_outputs
from topobetti.pointcloud import PointCloud
from topobetti.topology import BettiConfig, BettiVector, betti_profile
from topobetti.training import TrainConfig, train

logger = logging.getLogger(__name__)


@dataclass
class LayerBetti:
    layer_index: int
    layer_name: str
    betti: Optional[BettiVector]
    eps: Optional[float]
    m: Optional[int]
    error: Optional[str] = None


@dataclass
class BettiProgression:
    """Betti vector of one class at the input (layer 0) and after every hidden layer"""

    records: List[LayerBetti]
    class_label: int
    network_id: str = ""

    def totals(self) -> List[Optional[int]]:
        return [None if r.betti is None else r.betti.total for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row: Dict[str, Any] = {"layer": r.layer_index, "name": r.layer_name}
            if r.betti is not None:
                row.update(r.betti.as_dict())
            row.update({"eps": r.eps, "m": r.m, "error": r.error or ""})
            rows.append(row)
        frame = pd.DataFrame(rows)
        betti_cols = sorted((c for c in frame.columns if c.startswith("b") and c[1:].isdigit()), key=lambda c: int(c[1:]))
        ordered = ["layer", "name"] + betti_cols + ["total", "eps", "m", "error"]
        return frame.reindex(columns=ordered)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class_label": self.class_label,
            "network_id": self.network_id,
            "layers": [
                {
                    "layer": r.layer_index,
                    "name": r.layer_name,
                    "betti": None if r.betti is None else list(r.betti.betti),
                    "total": None if r.betti is None else r.betti.total,
                    "eps": r.eps,
                    "m": r.m,
                    "error": r.error,
                }
                for r in self.records
            ],
        }


def _measure(name: str, index: int, cloud: PointCloud, cfg: BettiConfig) -> LayerBetti:
    try:
        betti = betti_profile(cloud, cfg)
    except TopologyError as e:
        logger.error(f"Betti measurement failed at layer {index} ({name}): {e}")
        return LayerBetti(index, name, None, None, None, error=f"{type(e).__name__}: {e}")
    return LayerBetti(index, name, betti, betti.scale, betti.n_points)


def layerwise_betti(net: Network, data: LabeledCloud, class_label: int, cfg: BettiConfig,
                    network_id: str = "", sample_n: Optional[int] = None) -> BettiProgression:
    """
    Betti numbers of one class at the input and after every dense/conv layer

    Args:
        net: Trained or untrained network
        data: Labeled samples
        class_label: Class whose samples are measured
        cfg: Betti measurement settings, shared by every layer
        network_id: Free-form id recorded in the result
        sample_n: If set, a seeded subset of the class is forwarded

    Returns:
        BettiProgression; a layer whose measurement fails carries an error
        marker instead of a Betti vector
    """
    if not np.any(data.labels == class_label):
        raise ValueError(f"Class {class_label} has no samples")
    samples = data.of_class(class_label)
    if sample_n is not None:
        samples = samples.take(sample_n, cfg.seed)
    logger.info(f"Measuring Betti progression of class {class_label} over {samples.n} samples")

    outputs = layer_outputs(net, samples.features)
    records = [_measure("input", 0, samples.cloud(), cfg)]
    for index, layer in enumerate(net.spec.layers[:-1]):
        if not isinstance(layer, (DenseSpec, ConvSpec)):
            continue
        name = f"{layer.kind}{index}:{layer.activation}"
        cloud = PointCloud(outputs[index].reshape(samples.n, -1))
        records.append(_measure(name, index + 1, cloud, cfg))
    return BettiProgression(records, class_label, network_id)


def fraction_simpler(candidate: BettiProgression, baseline: BettiProgression) -> float:
    """Share of jointly measured hidden layers where the candidate's Betti total is <= the baseline's"""
    pairs = [
        (c, b) for c, b in zip(candidate.totals()[1:], baseline.totals()[1:]) if c is not None and b is not None
    ]
    if not pairs:
        return 0.0
    return sum(1 for c, b in pairs if c <= b) / len(pairs)


# Convergence

@dataclass
class BenchmarkConfig:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    threshold: float = 0.99
    max_epochs: int = 100
    batch_sizes: List[int] = field(default_factory=lambda: [32])
    lr: float = 1e-3
    optimizer: str = "adam"
    workers: int = 1
    # Activation the others are compared against (default: the first one)
    baseline: Optional[str] = None
    # If set, only hidden layers using this activation are swapped per slot
    swap_only: Optional[str] = None


@dataclass
class ConvergenceRun:
    activation: str
    seed: int
    batch_size: int
    epochs_to_threshold: int
    converged: bool
    diverged: bool
    final_train_acc: Optional[float]
    final_test_acc: Optional[float]


@dataclass
class ConvergenceReport:
    """
    Per-run epochs to threshold plus per-activation aggregates and speedups

    Runs that never reach the threshold are censored at max_epochs and
    flagged converged=False.
    """

    runs: List[ConvergenceRun]
    activations: List[str]
    baseline: str
    threshold: float
    max_epochs: int

    def epochs(self, activation: str, batch_size: int) -> List[int]:
        return [r.epochs_to_threshold for r in self.runs if r.activation == activation and r.batch_size == batch_size]

    @property
    def batch_sizes(self) -> List[int]:
        return sorted({r.batch_size for r in self.runs})

    def aggregates(self) -> List[Dict[str, Any]]:
        rows = []
        for batch_size in self.batch_sizes:
            for activation in self.activations:
                epochs = self.epochs(activation, batch_size)
                censored = sum(
                    1 for r in self.runs if r.activation == activation and r.batch_size == batch_size and not r.converged
                )
                rows.append({
                    "activation": activation,
                    "batch_size": batch_size,
                    "median": float(np.median(epochs)),
                    "min": int(np.min(epochs)),
                    "max": int(np.max(epochs)),
                    "censored": censored,
                })
        return rows

    def speedups(self) -> List[Dict[str, Any]]:
        """median(baseline) / median(candidate) for every non-baseline activation, plus per-seed ratios"""
        rows = []
        for batch_size in self.batch_sizes:
            base_runs = {r.seed: r.epochs_to_threshold for r in self.runs
                         if r.activation == self.baseline and r.batch_size == batch_size}
            base_median = float(np.median(list(base_runs.values())))
            for activation in self.activations:
                if activation == self.baseline:
                    continue
                cand_runs = {r.seed: r.epochs_to_threshold for r in self.runs
                             if r.activation == activation and r.batch_size == batch_size}
                rows.append({
                    "activation": activation,
                    "batch_size": batch_size,
                    "speedup": base_median / float(np.median(list(cand_runs.values()))),
                    "per_seed": {str(seed): base_runs[seed] / cand_runs[seed] for seed in sorted(cand_runs)},
                })
        return rows

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(r) for r in self.runs])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": self.baseline,
            "activations": self.activations,
            "threshold": self.threshold,
            "max_epochs": self.max_epochs,
            "runs": [dataclasses.asdict(r) for r in self.runs],
            "aggregates": self.aggregates(),
            "speedups": self.speedups(),
        }


def _slot_labels(activations: Sequence[str]) -> List[str]:
    """Repeated activations get a #n suffix so every slot keeps its own runs"""
    counts = Counter(activations)
    seen: Counter = Counter()
    labels = []
    for activation in activations:
        seen[activation] += 1
        labels.append(activation if counts[activation] == 1 else f"{activation}#{seen[activation]}")
    return labels


def _run_one(task: Tuple[Dict[str, Any], str, str, int, int, BenchmarkConfig, LabeledCloud, LabeledCloud]):
    spec_dict, label, activation, seed, batch_size, cfg, train_data, test_data = task
    spec = NetworkSpec.from_dict(spec_dict).with_activation(activation, only=cfg.swap_only)
    spec = dataclasses.replace(spec, init_seed=seed)
    train_cfg = TrainConfig(
        optimizer=cfg.optimizer, lr=cfg.lr, batch_size=batch_size, epochs=cfg.max_epochs,
        acc_threshold=cfg.threshold, seed=seed, stop_at_threshold=True,
    )
    try:
        _, log = train(init_network(spec), train_data, test_data, train_cfg)
    except DivergedLoss as e:
        logger.error(f"{label} seed {seed} batch {batch_size}: {e}")
        return ConvergenceRun(label, seed, batch_size, cfg.max_epochs, False, True, None, None)
    last = log.records[-1]
    converged = log.epochs_to_threshold is not None
    epochs = log.epochs_to_threshold if converged else cfg.max_epochs
    logger.info(f"{label} seed {seed} batch {batch_size}: {epochs} epochs (converged={converged})")
    return ConvergenceRun(label, seed, batch_size, epochs, converged, False, last.train_acc, last.test_acc)


def convergence_benchmark(spec: NetworkSpec, activations: Sequence[str], train_data: LabeledCloud,
                          test_data: LabeledCloud, cfg: BenchmarkConfig) -> ConvergenceReport:
    """
    Train one network per (activation, seed, batch size) and compare epochs to threshold

    Every activation uses the same seeds, so paired runs share the
    initialization stream and the batch order. Runs are independent and may
    be spread over `cfg.workers` processes; the report keeps task order.

    Args:
        spec: Architecture; its hidden activations (or those equal to
            cfg.swap_only) are replaced per slot
        activations: At least two activation names (repeats allowed)
        train_data, test_data: Training and evaluation splits
        cfg: Seeds, threshold, epoch cap, batch sizes and optimizer

    Returns:
        ConvergenceReport
    """
    if len(activations) < 2:
        raise ValueError(f"Need at least 2 activations to compare, got {len(activations)}")
    if len(cfg.seeds) < 3:
        raise ValueError(f"Need at least 3 seeds, got {len(cfg.seeds)}")
    labels = _slot_labels(activations)
    baseline = labels[0]
    if cfg.baseline is not None:
        if cfg.baseline not in labels:
            raise ValueError(f"Baseline '{cfg.baseline}' is not among {labels}")
        baseline = cfg.baseline

    spec_dict = spec.to_dict()
    tasks = [
        (spec_dict, label, activation, seed, batch_size, cfg, train_data, test_data)
        for batch_size in cfg.batch_sizes
        for label, activation in zip(labels, activations)
        for seed in cfg.seeds
    ]
    logger.info(f"Running {len(tasks)} training runs on {cfg.workers} worker(s)")
    if cfg.workers > 1:
        with Pool(cfg.workers) as pool:
            runs = pool.map(_run_one, tasks)
    else:
        runs = [_run_one(task) for task in tasks]

    report = ConvergenceReport(runs, labels, baseline, cfg.threshold, cfg.max_epochs)
    for row in report.speedups():
        logger.info(f"Speedup of {row['activation']} over {baseline} at batch {row['batch_size']}: {row['speedup']:.3f}")
    return report
