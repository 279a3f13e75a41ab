"""
Datasets

Deterministic generators for the nine-ring and nine-sphere point clouds and
loaders for fashion-MNIST (IDX), CIFAR-10 (binary batches) and pre-decoded
image sets stored as portable tensor files (cat-vs-dog). Images are
converted to grayscale and scaled to [0, 1]; nothing else is done to them.
"""

import gzip
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from topobetti.errors import BadLabel, BadMagic, CountMismatch, InvalidCount, InvalidTensor, TruncatedFile
from topobetti.pointcloud import PointCloud, write_cloud_csv
from topobetti.seeding import derive_rng
from topobetti.tensor_io import read_tensor

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

GREEN, RED = 0, 1


@dataclass
class LabeledCloud:
    """
    Samples with class ids

    features is (N, d) for point clouds or (N, C, H, W) for images.
    """

    features: np.ndarray
    labels: np.ndarray
    split: str = "train"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise CountMismatch(f"{len(self.features)} samples but {len(self.labels)} labels")

    @property
    def n(self) -> int:
        return len(self.labels)

    def cloud(self) -> PointCloud:
        """Every sample flattened to one point"""
        return PointCloud(self.features.reshape(self.n, -1))

    def subset(self, indices) -> "LabeledCloud":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledCloud(self.features[indices], self.labels[indices], self.split, dict(self.metadata))

    def of_class(self, label: int) -> "LabeledCloud":
        return self.subset(np.nonzero(self.labels == label)[0])

    def take(self, n: int, seed: int = 0) -> "LabeledCloud":
        """Seeded random subset of n samples (all of them if n >= N), in original order"""
        if n >= self.n:
            return self
        picked = derive_rng(seed, f"take:{self.split}").choice(self.n, size=n, replace=False)
        return self.subset(np.sort(picked))


def _split_counts(total: int, parts: int) -> List[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _clipped_noise(rng: np.random.Generator, size: Tuple[int, int], sigma: float) -> np.ndarray:
    """Gaussian noise whose per-point norm is capped at 4 sigma"""
    noise = rng.normal(0.0, sigma, size=size)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    cap = 4.0 * sigma
    scale = np.where(norms > cap, cap / np.maximum(norms, 1e-300), 1.0)
    return noise * scale


def _grid_centers(spacing: float) -> np.ndarray:
    return np.array([(i * spacing, j * spacing, 0.0) for i in range(3) for j in range(3)])


def _ring_split(n: int, rng: np.random.Generator, radius: float, spacing: float, sigma: float):
    n_green = (n + 1) // 2
    points, labels = [], []
    for label, count in ((GREEN, n_green), (RED, n - n_green)):
        for center, k in zip(_grid_centers(spacing), _split_counts(count, 9)):
            theta = rng.uniform(0.0, 2.0 * math.pi, size=k)
            if label == GREEN:
                ring = np.column_stack([np.cos(theta), np.sin(theta), np.zeros(k)]) * radius + center
            else:
                offset = center + np.array([radius, 0.0, 0.0])
                ring = np.column_stack([np.cos(theta), np.zeros(k), np.sin(theta)]) * radius + offset
            points.append(ring + _clipped_noise(rng, (k, 3), sigma))
            labels.append(np.full(k, label))
    points, labels = np.vstack(points), np.concatenate(labels)
    order = rng.permutation(n)
    return points[order], labels[order]


def gen_nine_rings(n_train: int = 16000, n_test: int = 2000, seed: int = 0, radius: float = 1.0,
                   spacing: float = 4.0, noise: float = 0.05) -> Tuple[LabeledCloud, LabeledCloud]:
    """
    Nine cells on a 3x3 grid, each holding two interlocked rings

    The green ring lies in the xy-plane around the cell center; the red ring
    lies in the xz-plane around a center shifted by one radius along x, so
    each passes through the other's disk.

    Args:
        n_train: Training samples (>= 18)
        n_test: Test samples (>= 18)
        seed: Run seed; train and test come from separate streams
        radius, spacing, noise: Ring radius, grid spacing and Gaussian sigma

    Returns:
        Tuple of (train, test) LabeledClouds, labels 0 = green, 1 = red
    """
    for name, count in (("n_train", n_train), ("n_test", n_test)):
        if count < 18:
            raise InvalidCount(f"{name} must be >= 18 (one sample per ring), got {count}")
    metadata = {
        "dataset": "nine-rings", "seed": seed, "radius": radius, "spacing": spacing, "noise": noise,
        "classes": ["green", "red"], "recommended_quantile": 0.02,
    }
    splits = []
    for split, count in (("train", n_train), ("test", n_test)):
        rng = derive_rng(seed, f"data:nine-rings:{split}")
        points, labels = _ring_split(count, rng, radius, spacing, noise)
        splits.append(LabeledCloud(points, labels, split, dict(metadata)))
    logger.info(f"Generated nine-rings with {n_train} train / {n_test} test samples (seed {seed})")
    return splits[0], splits[1]


def _sphere_shell(rng: np.random.Generator, k: int, center: np.ndarray, radius: float, sigma: float) -> np.ndarray:
    directions = rng.normal(size=(k, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radial = radius + np.clip(rng.normal(0.0, sigma, size=(k, 1)), -4.0 * sigma, 4.0 * sigma)
    return center + directions * radial


def _sphere_split(n: int, rng: np.random.Generator, radii, spacing: float, sigma: float):
    inner, middle, outer = radii
    n_green = min(max(9, n // 2), n - 18)
    points, labels = [], []
    centers = _grid_centers(spacing)
    for center, k in zip(centers, _split_counts(n_green, 9)):
        points.append(_sphere_shell(rng, k, center, middle, sigma))
        labels.append(np.full(k, GREEN))
    inner_share = inner ** 2 / (inner ** 2 + outer ** 2)
    for center, k in zip(centers, _split_counts(n - n_green, 9)):
        k_inner = min(max(1, int(round(k * inner_share))), k - 1)
        points.append(_sphere_shell(rng, k_inner, center, inner, sigma))
        points.append(_sphere_shell(rng, k - k_inner, center, outer, sigma))
        labels.append(np.full(k, RED))
    points, labels = np.vstack(points), np.concatenate(labels)
    order = rng.permutation(n)
    return points[order], labels[order]


def gen_nine_spheres(n_train: int = 16000, n_test: int = 2000, seed: int = 0,
                     radii: Tuple[float, float, float] = (0.3, 0.6, 0.9), spacing: float = 3.0,
                     noise: float = 0.02) -> Tuple[LabeledCloud, LabeledCloud]:
    """
    Nine units on a 3x3 grid, each three concentric shells: red, green, red

    Classes hold equal sample counts (except for the smallest sizes, where
    every shell first gets one sample); red samples are split between the
    inner and outer shell in proportion to shell area, so both have the
    same density.
    """
    for name, count in (("n_train", n_train), ("n_test", n_test)):
        if count < 27:
            raise InvalidCount(f"{name} must be >= 27 (one sample per shell), got {count}")
    metadata = {
        "dataset": "nine-spheres", "seed": seed, "radii": list(radii), "spacing": spacing, "noise": noise,
        "classes": ["green", "red"], "recommended_quantile": 0.045,
    }
    splits = []
    for split, count in (("train", n_train), ("test", n_test)):
        rng = derive_rng(seed, f"data:nine-spheres:{split}")
        points, labels = _sphere_split(count, rng, radii, spacing, noise)
        splits.append(LabeledCloud(points, labels, split, dict(metadata)))
    logger.info(f"Generated nine-spheres with {n_train} train / {n_test} test samples (seed {seed})")
    return splits[0], splits[1]


# File loaders

def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _idx_header(payload: bytes, path: str, magic: int, dims: int) -> Tuple[int, ...]:
    size = 4 * (1 + dims)
    if len(payload) < size:
        raise TruncatedFile(f"{path}: IDX header cut short")
    values = struct.unpack_from(f">{1 + dims}I", payload, 0)
    if values[0] != magic:
        raise BadMagic(f"{path}: IDX magic 0x{values[0]:08x}, expected 0x{magic:08x}")
    return values[1:]


def load_idx(images_path: str, labels_path: str, split: str = "train") -> LabeledCloud:
    """
    Load an IDX image file and its label file (plain or .gz)

    Returns:
        LabeledCloud with features (N, 1, rows, cols) scaled to [0, 1]
    """
    images = _read_bytes(images_path)
    count, rows, cols = _idx_header(images, images_path, IDX_IMAGES_MAGIC, 3)
    expected = 16 + count * rows * cols
    if len(images) < expected:
        raise TruncatedFile(f"{images_path}: expected {expected} bytes, found {len(images)}")
    pixels = np.frombuffer(images, dtype=np.uint8, count=count * rows * cols, offset=16)

    labels_raw = _read_bytes(labels_path)
    (label_count,) = _idx_header(labels_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if len(labels_raw) < 8 + label_count:
        raise TruncatedFile(f"{labels_path}: expected {8 + label_count} bytes, found {len(labels_raw)}")
    if label_count != count:
        raise CountMismatch(f"{images_path} holds {count} images but {labels_path} holds {label_count} labels")
    labels = np.frombuffer(labels_raw, dtype=np.uint8, count=label_count, offset=8)

    features = pixels.reshape(count, 1, rows, cols).astype(np.float64) / 255.0
    logger.info(f"Loaded {count} images of {rows}x{cols} from {images_path}")
    return LabeledCloud(features, labels.astype(np.int64), split, {"dataset": "idx", "source": images_path})


def _find(directory: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{name} not found in {directory}")


def load_fashion_mnist(directory: str) -> Tuple[LabeledCloud, LabeledCloud]:
    """Standard file names: train-images-idx3-ubyte, t10k-images-idx3-ubyte (optionally gzipped)"""
    train = load_idx(_find(directory, "train-images-idx3-ubyte"), _find(directory, "train-labels-idx1-ubyte"), "train")
    test = load_idx(_find(directory, "t10k-images-idx3-ubyte"), _find(directory, "t10k-labels-idx1-ubyte"), "test")
    train.metadata["dataset"] = test.metadata["dataset"] = "fashion-mnist"
    return train, test


def _to_gray(rgb: np.ndarray) -> np.ndarray:
    r, g, b = GRAY_WEIGHTS
    gray = (r * rgb[:, 0] + g * rgb[:, 1] + b * rgb[:, 2]) / 255.0
    return np.clip(gray, 0.0, 1.0)


def read_cifar_batch(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Records of 1 label byte + 3072 pixel bytes (R, G, B planes of 32x32)"""
    payload = _read_bytes(path)
    if len(payload) == 0 or len(payload) % CIFAR_RECORD:
        raise TruncatedFile(f"{path}: {len(payload)} bytes is not a whole number of {CIFAR_RECORD}-byte records")
    records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise BadLabel(f"{path}: label {labels.max()} outside 0..9")
    rgb = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64)
    return _to_gray(rgb)[:, None, :, :], labels


def load_cifar10(dir_path: str) -> Tuple[LabeledCloud, LabeledCloud]:
    """
    Load the binary CIFAR-10 batches, converted to grayscale in [0, 1]

    Returns:
        Tuple of (train, test) LabeledClouds with features (N, 1, 32, 32)
    """
    train_paths = [os.path.join(dir_path, name) for name in CIFAR_TRAIN_FILES
                   if os.path.exists(os.path.join(dir_path, name))]
    if not train_paths:
        raise FileNotFoundError(f"No CIFAR-10 training batches in {dir_path}")
    parts = [read_cifar_batch(path) for path in train_paths]
    train = LabeledCloud(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), "train",
                         {"dataset": "cifar10"})
    test_features, test_labels = read_cifar_batch(os.path.join(dir_path, CIFAR_TEST_FILE))
    test = LabeledCloud(test_features, test_labels, "test", {"dataset": "cifar10"})
    logger.info(f"Loaded CIFAR-10 with {train.n} train / {test.n} test images from {dir_path}")
    return train, test


def load_tensor_images(images_path: str, labels_path: str, split: str = "train") -> LabeledCloud:
    """
    Ingest images already decoded by an external tool (e.g. cat-vs-dog)

    images: (N, H, W), (N, 1, H, W) or (N, 3, H, W) with values in [0, 1]
    or [0, 255]; labels: (N,) non-negative integers stored as float32.
    """
    images = read_tensor(images_path).astype(np.float64)
    labels = read_tensor(labels_path).astype(np.float64)
    if images.ndim == 3:
        images = images[:, None, :, :]
    if images.ndim != 4 or images.shape[1] not in (1, 3):
        raise InvalidTensor(f"{images_path}: expected (N, H, W) or (N, C, H, W) with C in (1, 3), got {images.shape}")
    if images.size and (images.min() < 0.0 or images.max() > 255.0):
        raise InvalidTensor(f"{images_path}: pixel values outside [0, 255]")
    if images.size and images.max() > 1.0:
        images = images / 255.0
    if images.shape[1] == 3:
        images = _to_gray(images * 255.0)[:, None, :, :]
    if labels.ndim != 1 or np.any(labels < 0) or np.any(labels != np.round(labels)):
        raise BadLabel(f"{labels_path}: labels must be a vector of non-negative integers")
    logger.info(f"Loaded {len(labels)} pre-decoded images from {images_path}")
    return LabeledCloud(images, labels.astype(np.int64), split, {"dataset": "tensor", "source": images_path})


def write_dataset_csv(data: LabeledCloud, directory: str, prefix: Optional[str] = None) -> List[str]:
    """Points as a headerless cloud CSV plus a one-column labels CSV with header"""
    prefix = prefix or data.split
    os.makedirs(directory, exist_ok=True)
    points_path = os.path.join(directory, f"{prefix}_points.csv")
    labels_path = os.path.join(directory, f"{prefix}_labels.csv")
    write_cloud_csv(data.cloud(), points_path)
    pd.DataFrame({"label": data.labels}).to_csv(labels_path, index=False, lineterminator="\n")
    return [points_path, labels_path]


def read_dataset_csv(directory: str, prefix: str) -> LabeledCloud:
    points = pd.read_csv(os.path.join(directory, f"{prefix}_points.csv"), header=None, dtype=np.float64,
                         float_precision="round_trip")
    labels = pd.read_csv(os.path.join(directory, f"{prefix}_labels.csv"))["label"].to_numpy()
    return LabeledCloud(points.to_numpy(), labels, prefix)
