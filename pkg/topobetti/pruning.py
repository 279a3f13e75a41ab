"""
Betti-Guided Filter Pruning

Every convolution filter is scored by the total Betti number of the point
cloud formed by its feature maps (one point per input sample). Filters whose
score exceeds a threshold are removed from a copy of the network together
with their downstream weight slices.
"""

import logging
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
import pandas as pd

from topobetti.datasets import LabeledCloud
from topobetti.errors import TopologyError, WouldEmptyLayer
from topobetti.network import (ConvSpec, DenseSpec, FlattenSpec, MaxPoolSpec, Network, OutputSpec,
                               layer_outputs, predict)
from topobetti.pointcloud import PointCloud
from topobetti.seeding import derive_rng
from topobetti.topology import BettiConfig, BettiVector, betti_profile
from topobetti.training import TrainConfig, accuracy, train

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 300


@dataclass
class ScoreConfig:
    sample_n: int = 256
    subsample: Optional[int] = None
    quantile: float = 0.15
    max_dim: int = 1
    scale: Optional[float] = None
    seed: int = 0
    workers: int = 1

    def betti_config(self) -> BettiConfig:
        return BettiConfig(subsample=self.subsample, seed=self.seed, quantile=self.quantile,
                           max_dim=self.max_dim, scale=self.scale)


@dataclass
class FilterScore:
    """Betti vector of one filter's feature space; betti is None when scoring failed"""

    layer: int
    filter: int
    betti: Optional[BettiVector]
    eps: Optional[float]
    m: Optional[int]
    error: Optional[str] = None

    @property
    def total(self) -> Optional[int]:
        return None if self.betti is None else self.betti.total

    def as_row(self, max_dim: int) -> Dict[str, Any]:
        betti = list(self.betti.betti) if self.betti is not None else []
        row: Dict[str, Any] = {"layer": self.layer, "filter": self.filter}
        for k in range(max_dim + 1):
            row[f"b{k}"] = betti[k] if k < len(betti) else None
        row.update({"total": self.total, "eps": self.eps, "m": self.m})
        return row


def scores_frame(scores: Iterable[FilterScore], max_dim: Optional[int] = None) -> pd.DataFrame:
    """One row per filter with columns b0..bK for the scored dimension K"""
    scores = list(scores)
    if max_dim is None:
        max_dim = max((s.betti.max_dim for s in scores if s.betti is not None), default=0)
    columns = ["layer", "filter"] + [f"b{k}" for k in range(max_dim + 1)] + ["total", "eps", "m"]
    return pd.DataFrame([s.as_row(max_dim) for s in scores], columns=columns)


def _score_one(task: Tuple[int, int, np.ndarray, BettiConfig]) -> FilterScore:
    layer, filt, points, cfg = task
    try:
        betti = betti_profile(PointCloud(points), cfg)
    except TopologyError as e:
        logger.error(f"Filter {filt} of layer {layer} left unscored: {e}")
        return FilterScore(layer, filt, None, None, None, error=f"{type(e).__name__}: {e}")
    return FilterScore(layer, filt, betti, betti.scale, betti.n_points)


def filter_betti_scores(net: Network, data: LabeledCloud, cfg: ScoreConfig) -> List[FilterScore]:
    """
    Score every filter of every convolution layer

    Args:
        net: Network with at least one conv layer
        data: Samples; a seeded subset of cfg.sample_n is forwarded
        cfg: Sample size and Betti settings

    Returns:
        One FilterScore per (layer, filter), in layer then filter order
    """
    conv_layers = net.conv_layers()
    if not conv_layers:
        raise ValueError("Network has no convolution layers to score")
    n = min(cfg.sample_n, data.n)
    picked = np.sort(derive_rng(cfg.seed, "scoring").choice(data.n, size=n, replace=False))
    outputs = layer_outputs(net, data.features[picked])

    betti_cfg = cfg.betti_config()
    tasks = []
    for layer in conv_layers:
        maps = outputs[layer]
        for filt in range(maps.shape[1]):
            tasks.append((layer, filt, maps[:, filt].reshape(n, -1), betti_cfg))
    logger.info(f"Scoring {len(tasks)} filters over {n} samples")

    if cfg.workers > 1:
        with Pool(cfg.workers) as pool:
            return pool.map(_score_one, tasks)
    return [_score_one(task) for task in tasks]


# Structural removal

def _next_parameterized(net: Network, layer: int) -> Tuple[int, bool]:
    """Index of the layer consuming `layer`'s channels and whether a flatten sits in between"""
    flattened = False
    for index in range(layer + 1, len(net.spec.layers)):
        spec = net.spec.layers[index]
        if isinstance(spec, FlattenSpec):
            flattened = True
        elif isinstance(spec, (ConvSpec, DenseSpec, OutputSpec)):
            return index, flattened
    raise ValueError(f"Layer {layer} feeds no parameterized layer")


def _flat_rows(net: Network, before_flatten: int, channels: Iterable[int]) -> np.ndarray:
    """Dense input rows fed by the given channels (channel-major flattening)"""
    shapes = net.spec.shapes()
    flatten_at = next(i for i in range(before_flatten, len(net.spec.layers))
                      if isinstance(net.spec.layers[i], FlattenSpec))
    _, height, width = shapes[flatten_at - 1]
    area = height * width
    return np.concatenate([np.arange(c * area, (c + 1) * area) for c in channels]) if channels else np.empty(0, int)


def removed_param_count(net: Network, removed: Set[Tuple[int, int]]) -> int:
    """
    Parameters a prune will delete: per removed filter its kernel over the
    surviving input channels plus its bias, plus the slice it fed in the
    next layer (sized by that layer's original output count)
    """
    total = 0
    dropped = {layer: {f for (l, f) in removed if l == layer} for layer in net.conv_layers()}
    previous_conv: Optional[int] = None
    for layer in net.conv_layers():
        spec = net.spec.layers[layer]
        kept_in = spec.in_channels
        if previous_conv is not None and _next_parameterized(net, previous_conv)[0] == layer:
            kept_in -= len(dropped[previous_conv])
        count = len(dropped[layer])
        total += count * (kept_in * spec.kernel ** 2 + 1)

        nxt, flattened = _next_parameterized(net, layer)
        nxt_spec = net.spec.layers[nxt]
        if isinstance(nxt_spec, ConvSpec):
            total += count * nxt_spec.out_channels * nxt_spec.kernel ** 2
        else:
            rows = len(_flat_rows(net, layer, [0])) if flattened else 1
            total += count * rows * net.params[nxt][0].shape[1]
        previous_conv = layer
    return total


def _remove_filters(net: Network, removed: Set[Tuple[int, int]]) -> Network:
    model = net.copy()
    plan = []
    for layer in net.conv_layers():
        drop = sorted(f for (l, f) in removed if l == layer)
        if drop:
            keep = [f for f in range(net.spec.layers[layer].out_channels) if f not in set(drop)]
            nxt, flattened = _next_parameterized(net, layer)
            rows = _flat_rows(net, layer, keep) if flattened else None
            plan.append((layer, keep, nxt, rows))

    for layer, keep, nxt, rows in plan:
        w, b = model.params[layer]
        model.params[layer] = (w[keep].copy(), b[keep].copy())
        model.spec.layers[layer].out_channels = len(keep)
        w_next, b_next = model.params[nxt]
        nxt_spec = model.spec.layers[nxt]
        if isinstance(nxt_spec, ConvSpec):
            model.params[nxt] = (w_next[:, keep].copy(), b_next)
            nxt_spec.in_channels = len(keep)
        else:
            model.params[nxt] = (w_next[rows].copy(), b_next)
            if isinstance(nxt_spec, DenseSpec):
                nxt_spec.in_features = len(rows)
    model.spec.shapes()
    model.validate()
    return model


def mask_filters(net: Network, removed: Set[Tuple[int, int]]) -> Network:
    """Copy of the network with removed filters and their downstream slices zeroed instead of deleted"""
    model = net.copy()
    for layer in net.conv_layers():
        drop = sorted(f for (l, f) in removed if l == layer)
        if not drop:
            continue
        w, b = model.params[layer]
        w[drop] = 0.0
        b[drop] = 0.0
        nxt, flattened = _next_parameterized(net, layer)
        w_next = model.params[nxt][0]
        if isinstance(net.spec.layers[nxt], ConvSpec):
            w_next[:, drop] = 0.0
        else:
            w_next[_flat_rows(net, layer, drop) if flattened else drop] = 0.0
    return model


# Evaluation

@dataclass
class Evaluation:
    accuracy: float
    latency_per_1k: float
    params: int

    def to_dict(self) -> Dict[str, Any]:
        return {"accuracy": self.accuracy, "latency_per_1k": self.latency_per_1k, "params": self.params}


def measure_latency(net: Network, features: np.ndarray, samples: int = 1000, repeats: int = 5) -> float:
    """Median wall time in seconds of `repeats` prediction passes over `samples` inputs (cycled if fewer)"""
    batch = features[np.arange(samples) % len(features)]
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        predict(net, batch)
        timings.append(time.perf_counter() - start)
    return float(np.median(timings))


def evaluate(net: Network, data: LabeledCloud) -> Evaluation:
    """Accuracy over the whole split, latency per 1000 predictions and parameter count"""
    result = Evaluation(
        accuracy=accuracy(net, data.features, data.labels),
        latency_per_1k=measure_latency(net, data.features),
        params=net.num_params(),
    )
    logger.info(f"Accuracy {result.accuracy:.4f}, {result.latency_per_1k * 1000:.2f} ms per 1000, {result.params} params")
    return result


@dataclass
class PruneReport:
    scores: List[FilterScore]
    removed: List[Tuple[int, int]]
    threshold: float
    params_before: int
    params_after: int
    params_removed_expected: int
    accuracy_before: Optional[float] = None
    accuracy_after: Optional[float] = None
    latency_before: Optional[float] = None
    latency_after: Optional[float] = None
    retrain_epochs: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "removed": [list(pair) for pair in self.removed],
            "params_before": self.params_before,
            "params_after": self.params_after,
            "params_removed_expected": self.params_removed_expected,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "latency_before": self.latency_before,
            "latency_after": self.latency_after,
            "retrain_epochs": self.retrain_epochs,
            "unscored": [[s.layer, s.filter] for s in self.scores if s.betti is None],
            "metadata": self.metadata,
        }


def percentile_threshold(scores: Iterable[FilterScore], percentile: float) -> float:
    totals = [s.total for s in scores if s.total is not None]
    if not totals:
        raise ValueError("No scored filters")
    return float(np.percentile(totals, percentile))


def prune_filters(net: Network, scores: List[FilterScore], threshold: float,
                  data: Optional[LabeledCloud] = None, retrain_data: Optional[LabeledCloud] = None,
                  retrain_cfg: Optional[TrainConfig] = None) -> Tuple[Network, PruneReport]:
    """
    Remove every filter whose Betti total exceeds threshold

    Unscored filters are kept. The input network is untouched.

    Args:
        net: Trained network
        scores: One score per conv filter
        threshold: Filters with total > threshold are removed
        data: Optional split for before/after accuracy and latency
        retrain_data, retrain_cfg: Optional fine-tuning after removal

    Returns:
        Tuple of (pruned network, PruneReport)
    """
    expected = {(layer, f) for layer in net.conv_layers() for f in range(net.spec.layers[layer].out_channels)}
    covered = {(s.layer, s.filter) for s in scores}
    if covered != expected:
        raise ValueError(f"Scores cover {len(covered)} filters, network has {len(expected)}")

    removed = {(s.layer, s.filter) for s in scores if s.total is not None and s.total > threshold}
    for layer in net.conv_layers():
        if sum(1 for (l, _) in removed if l == layer) == net.spec.layers[layer].out_channels:
            raise WouldEmptyLayer(layer)

    pruned = _remove_filters(net, removed)
    report = PruneReport(
        scores=list(scores),
        removed=sorted(removed),
        threshold=threshold,
        params_before=net.num_params(),
        params_after=pruned.num_params(),
        params_removed_expected=removed_param_count(net, removed),
    )
    if report.params_before - report.params_after != report.params_removed_expected:
        logger.error(
            f"Parameter accounting mismatch: removed {report.params_before - report.params_after}, "
            f"expected {report.params_removed_expected}"
        )

    if retrain_cfg is not None and retrain_cfg.epochs > 0 and retrain_data is not None:
        pruned, _ = train(pruned, retrain_data, data or retrain_data, retrain_cfg)
        report.retrain_epochs = retrain_cfg.epochs

    if data is not None:
        before, after = evaluate(net, data), evaluate(pruned, data)
        report.accuracy_before, report.accuracy_after = before.accuracy, after.accuracy
        report.latency_before, report.latency_after = before.latency_per_1k, after.latency_per_1k

    logger.info(f"Removed {len(removed)} filters: {report.params_before} -> {report.params_after} parameters")
    return pruned, report
