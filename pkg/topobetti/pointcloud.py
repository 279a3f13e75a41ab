"""
Point Clouds, Distances and Landmarks

Containers for n points in d-dimensional Euclidean space, the pairwise
distance matrix that Vietoris-Rips complexes are built from, farthest-point
(maxmin) landmark selection and distance-quantile scale selection.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist, squareform

from topobetti.errors import InvalidCount, InvalidQuantile, NonFiniteInput, TooFewPoints
from topobetti.seeding import derive_rng

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class PointCloud:
    """n points of identical dimension d, all coordinates finite"""

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidCount(f"A point cloud needs n >= 1 points of dimension d >= 1, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise NonFiniteInput("Point cloud contains NaN or infinite coordinates")
        object.__setattr__(self, "points", points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def take(self, indices) -> "PointCloud":
        return PointCloud(self.points[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric n x n matrix of Euclidean distances with a zero diagonal"""

    entries: np.ndarray
    metric: str = field(default="euclidean")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def upper_triangle(self) -> np.ndarray:
        """Strictly-upper-triangular entries, row by row"""
        rows, cols = np.triu_indices(self.n, k=1)
        return self.entries[rows, cols]


def pairwise_distances(cloud: PointCloud) -> DistanceMatrix:
    """
    Euclidean distance between every pair of points

    Each pair is computed once and mirrored, so the matrix is exactly
    symmetric. Working memory is O(n^2) whatever the dimension d.

    Args:
        cloud: Point cloud

    Returns:
        DistanceMatrix with entries[i][j] = ||p_i - p_j||
    """
    points = np.asarray(cloud.points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise NonFiniteInput("Cannot compute distances for NaN or infinite coordinates")

    entries = squareform(pdist(points, metric="euclidean")) if points.shape[0] > 1 else np.zeros((1, 1))
    return DistanceMatrix(entries=entries)


def maxmin_indices(points: np.ndarray, m: int, first: int) -> np.ndarray:
    """
    Farthest-point order starting from a fixed first index

    Each next index maximizes the minimum distance to the indices already
    chosen; ties go to the lowest index.
    """
    n = points.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = first
    min_dist = cdist(points[first:first + 1], points)[0]
    min_dist[first] = -np.inf
    for i in range(1, m):
        nxt = int(np.argmax(min_dist))
        chosen[i] = nxt
        dist = cdist(points[nxt:nxt + 1], points)[0]
        np.minimum(min_dist, dist, out=min_dist)
        min_dist[chosen[:i + 1]] = -np.inf
    return chosen


def _check_count(cloud: PointCloud, m: int) -> None:
    if m < 1 or m > cloud.n:
        raise InvalidCount(f"Subsample size must be in [1, {cloud.n}], got {m}")


def maxmin_subsample(cloud: PointCloud, m: int, seed: int) -> PointCloud:
    """
    Select m landmarks by greedy farthest-point sampling

    Args:
        cloud: Input cloud
        m: Number of landmarks, 1 <= m <= n
        seed: Seed of the uniform draw that picks the first landmark

    Returns:
        PointCloud of m input points, in selection order
    """
    _check_count(cloud, m)
    first = int(derive_rng(seed, "subsample").integers(cloud.n))
    return cloud.take(maxmin_indices(cloud.points, m, first))


def uniform_subsample(cloud: PointCloud, m: int, seed: int) -> PointCloud:
    """Seeded uniform draw of m distinct points, kept in input order"""
    _check_count(cloud, m)
    picked = derive_rng(seed, "subsample").choice(cloud.n, size=m, replace=False)
    return cloud.take(np.sort(picked))


def merge_coincident(cloud: PointCloud) -> PointCloud:
    """
    Collapse exactly coincident points to one, keeping first occurrences in order

    A VR complex at any scale >= 0 has the same homology with or without the
    duplicates, so this only removes work.
    """
    _, first_index = np.unique(cloud.points, axis=0, return_index=True)
    if first_index.size == cloud.n:
        return cloud
    return cloud.take(np.sort(first_index))


def scale_select(dm: DistanceMatrix, quantile: float) -> float:
    """
    Nearest-rank quantile of the pairwise distances

    Args:
        dm: Distance matrix with n >= 2
        quantile: q in (0, 1]

    Returns:
        The ceil(q * N)-th smallest of the N = n(n-1)/2 upper-triangular entries
    """
    if not (0.0 < quantile <= 1.0) or math.isnan(quantile):
        raise InvalidQuantile(f"Quantile must lie in (0, 1], got {quantile}")
    if dm.n < 2:
        raise TooFewPoints(f"Scale selection needs at least 2 points, got {dm.n}")

    values = np.sort(dm.upper_triangle())
    # rank from the shortest decimal of q, so 0.3 of 10 distances is exactly rank 3
    rank = max(1, math.ceil(Fraction(repr(float(quantile))) * values.size))
    return float(values[rank - 1])


def read_cloud_csv(path: str) -> PointCloud:
    """Read one point per row, no header"""
    frame = pd.read_csv(path, header=None, dtype=np.float64, float_precision="round_trip")
    logger.info(f"Loaded {len(frame)} points of dimension {frame.shape[1]} from {path}")
    return PointCloud(frame.to_numpy())


def write_cloud_csv(cloud: PointCloud, path: str) -> None:
    """Write one point per row, no header, LF line endings"""
    frame = pd.DataFrame(cloud.points)
    frame.to_csv(path, header=False, index=False, lineterminator="\n")
