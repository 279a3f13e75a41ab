"""
Training Loop

Mini-batch training with plain SGD or Adam on the mean cross-entropy.
Training works on a private copy of the network and is deterministic per
seed: initialization comes from the architecture's init seed, batch order from the
"shuffle" stream of the training seed.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score

from topobetti.errors import DivergedLoss
from topobetti.network import Network, loss_and_gradients, predict
from topobetti.seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    acc_threshold: float = 0.99
    seed: int = 0
    # Stop as soon as train accuracy reaches acc_threshold
    stop_at_threshold: bool = False


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    epochs_to_threshold: Optional[int] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records],
                            columns=["epoch", "train_loss", "train_acc", "test_acc"])

    def to_dict(self):
        return {
            "epochs_to_threshold": self.epochs_to_threshold,
            "records": [asdict(r) for r in self.records],
        }


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            if p is None:
                continue
            p[0][...] -= self.lr * g[0]
            p[1][...] -= self.lr * g[1]


class Adam:
    """Adam with beta1=0.9, beta2=0.999, eps=1e-8"""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments = None

    def step(self, params, grads) -> None:
        if self.moments is None:
            self.moments = [
                None if p is None else [(np.zeros_like(a), np.zeros_like(a)) for a in p] for p in params
            ]
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, state in zip(params, grads, self.moments):
            if p is None:
                continue
            for array, grad, (m, v) in zip(p, g, state):
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                array -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"Unknown optimizer '{name}'; expected sgd or adam")


def accuracy(net: Network, features: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(accuracy_score(labels, predict(net, features)))


def train(net: Network, train_data, test_data, cfg: TrainConfig) -> Tuple[Network, TrainLog]:
    """
    Train a copy of `net`

    Args:
        net: Initial network (left untouched)
        train_data: LabeledCloud with features and labels
        test_data: LabeledCloud evaluated after every epoch
        cfg: Optimizer, learning rate, batch size, epochs, threshold and seed

    Returns:
        Tuple of (trained network, per-epoch TrainLog)
    """
    if len(train_data.labels) == 0 or len(test_data.labels) == 0:
        raise ValueError("Training and test sets must be nonempty")
    classes = net.spec.classes
    for split in (train_data, test_data):
        if split.labels.min() < 0 or split.labels.max() >= classes:
            raise ValueError(f"Labels must lie in [0, {classes - 1}]")

    model = net.copy()
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    rng = derive_rng(cfg.seed, "shuffle")
    features, labels = train_data.features, np.asarray(train_data.labels, dtype=np.int64)
    log = TrainLog()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(labels))
        losses, sizes = [], []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(model, features[batch], labels[batch])
            if math.isnan(loss):
                logger.error(f"Training diverged at epoch {epoch}")
                raise DivergedLoss(epoch)
            optimizer.step(model.params, grads)
            losses.append(loss)
            sizes.append(len(batch))

        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.average(losses, weights=sizes)),
            train_acc=accuracy(model, features, labels),
            test_acc=accuracy(model, test_data.features, test_data.labels),
        )
        log.records.append(record)
        logger.info(
            f"Epoch {epoch}: loss={record.train_loss:.4f} train_acc={record.train_acc:.4f} "
            f"test_acc={record.test_acc:.4f}"
        )
        if log.epochs_to_threshold is None and record.train_acc >= cfg.acc_threshold:
            log.epochs_to_threshold = epoch
            if cfg.stop_at_threshold:
                break

    return model, log
