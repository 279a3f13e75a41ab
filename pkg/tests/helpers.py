"""Fixture builders shared by the test modules"""

import math

import numpy as np

from topobetti.datasets import LabeledCloud
from topobetti.pointcloud import PointCloud


def circle_cloud(n: int = 200, radius: float = 1.0, noise: float = 0.01, seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    points = np.column_stack([np.cos(theta), np.sin(theta)]) * radius
    return PointCloud(points + rng.normal(0.0, noise, size=points.shape))


def sphere_cloud(n: int = 400, seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(n, 3))
    return PointCloud(points / np.linalg.norm(points, axis=1, keepdims=True))


def square_corners() -> np.ndarray:
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def blobs(n_per_class: int = 100, seed: int = 0, spread: float = 0.5) -> LabeledCloud:
    """Two linearly separable Gaussian blobs in 2D"""
    rng = np.random.default_rng(seed)
    a = rng.normal(-2.0, spread, size=(n_per_class, 2))
    b = rng.normal(2.0, spread, size=(n_per_class, 2))
    labels = np.concatenate([np.zeros(n_per_class), np.ones(n_per_class)])
    return LabeledCloud(np.vstack([a, b]), labels)


def random_images(n: int = 40, shape=(1, 10, 10), classes: int = 3, seed: int = 0) -> LabeledCloud:
    rng = np.random.default_rng(seed)
    return LabeledCloud(rng.uniform(0.0, 1.0, size=(n,) + tuple(shape)), rng.integers(0, classes, size=n))


def disk_blobs(n_per_blob: int = 60, separation: float = 10.0, seed: int = 0) -> PointCloud:
    """Two uniform unit disks whose centers are `separation` apart"""
    rng = np.random.default_rng(seed)
    parts = []
    for center in (0.0, separation):
        radius = np.sqrt(rng.uniform(0.0, 1.0, size=n_per_blob))
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n_per_blob)
        parts.append(np.column_stack([radius * np.cos(theta) + center, radius * np.sin(theta)]))
    return PointCloud(np.vstack(parts))
