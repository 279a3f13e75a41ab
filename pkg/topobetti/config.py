"""
Run Configuration

A single flat RunConfig drives every CLI command. It is read from a YAML or
JSON document (a manifest written by an earlier run is accepted too), and
command-line flags override file values. Parsing is strict: unknown keys and
mistyped values raise ConfigError naming the offending field.
"""

import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from topobetti.errors import ConfigError
from topobetti.experiments import BenchmarkConfig
from topobetti.pruning import DEFAULT_THRESHOLD, ScoreConfig
from topobetti.topology import DEFAULT_SIMPLEX_BUDGET, MAX_SIMPLEX_DIM, BettiConfig
from topobetti.training import TrainConfig

logger = logging.getLogger(__name__)

DATASETS = ("nine-rings", "nine-spheres", "fashion-mnist", "cifar10", "tensor")
ARCHITECTURES = ("mlp", "cnn")
# homology up to K needs simplices up to K + 1
MAX_HOMOLOGY_DIM = MAX_SIMPLEX_DIM - 1


@dataclass
class RunConfig:
    # data
    dataset: str = "nine-rings"
    data_dir: Optional[str] = None
    n_train: int = 16000
    n_test: int = 2000
    seed: int = 0
    # architecture
    arch: str = "mlp"
    activation: str = "relu"
    activations: List[str] = field(default_factory=lambda: ["relu", "stacked_sine"])
    middle_activation: Optional[str] = None
    hidden_layers: int = 9
    width: int = 25
    channels: List[int] = field(default_factory=lambda: [16, 32])
    hidden: int = 128
    output: str = "softmax"
    # training
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    batch_sizes: List[int] = field(default_factory=lambda: [32])
    epochs: int = 50
    max_epochs: int = 100
    acc_threshold: float = 0.99
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    workers: int = 1
    # betti measurement
    subsample: Optional[int] = 300
    quantile: Optional[float] = None
    max_dim: int = 2
    eps_max: Optional[float] = None
    robust_delta: Optional[float] = None
    simplex_budget: int = DEFAULT_SIMPLEX_BUDGET
    method: str = "maxmin"
    class_label: int = 0
    layer_sample_n: Optional[int] = None
    # pruning
    threshold: Optional[float] = None
    percentile: Optional[float] = None
    sample_n: int = 256
    score_max_dim: int = 1
    retrain_epochs: int = 0
    # files
    input: Optional[str] = None
    model_dir: Optional[str] = None
    output_dir: str = "results"

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError("config.dataset", f"unknown dataset '{self.dataset}'; expected one of {', '.join(DATASETS)}")
        if self.arch not in ARCHITECTURES:
            raise ConfigError("config.arch", f"unknown architecture '{self.arch}'; expected mlp or cnn")
        if self.quantile is not None and not 0.0 < self.quantile <= 1.0:
            raise ConfigError("config.quantile", f"must lie in (0, 1], got {self.quantile}")
        for name in ("max_dim", "score_max_dim"):
            if not 0 <= getattr(self, name) <= MAX_HOMOLOGY_DIM:
                raise ConfigError(f"config.{name}", f"must be in [0, {MAX_HOMOLOGY_DIM}], got {getattr(self, name)}")
        if len(self.channels) != 2:
            raise ConfigError("config.channels", f"expected two channel counts, got {self.channels}")

    def resolved_quantile(self, recommended: Optional[float] = None) -> float:
        """Configured quantile, else the dataset's recommendation, else 0.15"""
        if self.quantile is not None:
            return self.quantile
        return recommended if recommended is not None else 0.15

    def betti_config(self, recommended_quantile: Optional[float] = None) -> BettiConfig:
        return BettiConfig(
            subsample=self.subsample, seed=self.seed, quantile=self.resolved_quantile(recommended_quantile),
            max_dim=self.max_dim, scale=self.eps_max, robust_delta=self.robust_delta,
            simplex_budget=self.simplex_budget, method=self.method,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(optimizer=self.optimizer, lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                           acc_threshold=self.acc_threshold, seed=self.seed)

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(seeds=list(self.seeds), threshold=self.acc_threshold, max_epochs=self.max_epochs,
                               batch_sizes=list(self.batch_sizes), lr=self.lr, optimizer=self.optimizer,
                               workers=self.workers,
                               swap_only=self.activation if self.middle_activation else None)

    def score_config(self) -> ScoreConfig:
        return ScoreConfig(sample_n=self.sample_n, subsample=self.subsample, quantile=self.resolved_quantile(),
                           max_dim=self.score_max_dim, scale=self.eps_max, seed=self.seed, workers=self.workers)

    def prune_threshold(self) -> Optional[float]:
        """Explicit threshold; None when a percentile is to be used; default 300 otherwise"""
        if self.threshold is not None:
            return self.threshold
        return None if self.percentile is not None else float(DEFAULT_THRESHOLD)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(name: str, value: Any, annotation: Any) -> Any:
    path = f"config.{name}"
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union and type(None) in args:
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(name, value, inner)
    if origin in (list, List):
        if name == "seeds" and isinstance(value, int) and not isinstance(value, bool):
            if value < 1:
                raise ConfigError(path, f"seed count must be >= 1, got {value}")
            return list(range(value))
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_coerce(name, item, args[0]) for item in value]
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {annotation}")


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from a mapping, rejecting unknown keys

    Keys may use kebab-case or snake_case. A manifest (a mapping with a
    "config" block and "outputs") is unwrapped first.
    """
    if not isinstance(data, dict):
        raise ConfigError("config", f"expected a mapping, got {type(data).__name__}")
    if "config" in data and "outputs" in data:
        data = data["config"]
    hints = typing.get_type_hints(RunConfig)
    values = {}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name not in hints:
            raise ConfigError(f"config.{key}", "unknown field")
        values[name] = _coerce(name, value, hints[name])
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    """Read a YAML or JSON config file (JSON is parsed by the YAML loader)"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError("config", f"cannot parse {path}: {e}")
    logger.info(f"Loaded configuration from {path}")
    return config_from_dict(data)


def merge_overrides(cfg: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Apply flag values (None means not given) on top of a config"""
    data = cfg.to_dict()
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)
