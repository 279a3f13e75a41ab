"""
Persistent Homology of Vietoris-Rips Complexes

Builds VR filtrations from a distance matrix, reduces the boundary matrix
over Z/2 (with clearing), reads Betti numbers at a scale and provides a
brute-force rank computation used as an independent oracle on small inputs.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from topobetti.errors import InvalidDimension, InvalidFiltration, TooLarge, SimplexBudgetExceeded
from topobetti.pointcloud import (
    DistanceMatrix,
    PointCloud,
    maxmin_subsample,
    merge_coincident,
    pairwise_distances,
    scale_select,
    uniform_subsample,
)

logger = logging.getLogger(__name__)

DEFAULT_SIMPLEX_BUDGET = 5_000_000
MAX_SIMPLEX_DIM = 3
BRUTE_FORCE_MAX_POINTS = 25

Simplex = Tuple[int, ...]


@dataclass
class Filtration:
    """Simplices sorted by (filtration value, dimension, vertex tuple)"""

    simplices: List[Simplex]
    values: np.ndarray
    max_dim: int

    def __len__(self) -> int:
        return len(self.simplices)

    def dimension(self, index: int) -> int:
        return len(self.simplices[index]) - 1

    def counts_by_dim(self, eps: Optional[float] = None) -> List[int]:
        """Number of k-simplices for k = 0..max_dim, optionally only those with value <= eps"""
        counts = [0] * (self.max_dim + 1)
        for simplex, value in zip(self.simplices, self.values):
            if eps is None or value <= eps:
                counts[len(simplex) - 1] += 1
        return counts


@dataclass
class PersistenceDiagram:
    """Birth/death intervals per homology dimension; death may be +inf"""

    intervals: Dict[int, np.ndarray]
    max_dim: int

    def dimension(self, k: int) -> np.ndarray:
        return self.intervals.get(k, np.empty((0, 2)))

    def truncated(self, max_dim: int) -> "PersistenceDiagram":
        """Same intervals, homology dimensions 0..max_dim only"""
        return PersistenceDiagram(intervals={k: self.dimension(k) for k in range(max_dim + 1)}, max_dim=max_dim)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for k in range(self.max_dim + 1):
            for birth, death in self.dimension(k):
                rows.append((k, float(birth), float(death)))
        return pd.DataFrame(rows, columns=["dim", "birth", "death"])

    def write_csv(self, path: str) -> None:
        """Columns dim, birth, death; infinite deaths are written as 'inf'"""
        frame = self.to_frame()
        frame["death"] = [("inf" if math.isinf(d) else repr(d)) for d in frame["death"]]
        frame["birth"] = [repr(b) for b in frame["birth"]]
        frame.to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path: str) -> "PersistenceDiagram":
        frame = pd.read_csv(path)
        max_dim = int(frame["dim"].max()) if len(frame) else 0
        intervals = {}
        for k in range(max_dim + 1):
            part = frame[frame["dim"] == k]
            intervals[k] = np.column_stack(
                [part["birth"].astype(float).to_numpy(), part["death"].astype(float).to_numpy()]
            ) if len(part) else np.empty((0, 2))
        return cls(intervals=intervals, max_dim=max_dim)


@dataclass(frozen=True)
class BettiVector:
    """Betti numbers (b0, ..., bK) read at one scale"""

    betti: Tuple[int, ...]
    scale: float
    max_dim: int
    n_points: Optional[int] = None

    @property
    def total(self) -> int:
        return int(sum(self.betti))

    def as_dict(self) -> Dict[str, object]:
        record = {f"b{k}": int(b) for k, b in enumerate(self.betti)}
        record.update({"total": self.total, "eps": self.scale, "m": self.n_points, "max_dim": self.max_dim})
        return record


@dataclass
class BettiConfig:
    """
    How a point cloud is turned into one Betti vector

    subsample: landmarks kept (None keeps every point; larger than n is capped)
    quantile: nearest-rank distance quantile giving the scale, unless `scale` is set
    robust_delta: if set, only intervals with persistence >= delta * eps are counted
    """

    subsample: Optional[int] = 300
    seed: int = 0
    quantile: float = 0.15
    max_dim: int = 2
    scale: Optional[float] = None
    robust_delta: Optional[float] = None
    simplex_budget: int = DEFAULT_SIMPLEX_BUDGET
    method: str = "maxmin"


@dataclass
class PersistenceProfile:
    betti: BettiVector
    diagram: PersistenceDiagram
    filtration_size: int = field(default=0)


def _upper_neighbors(entries: np.ndarray, eps_max: float) -> List[Dict[int, float]]:
    n = entries.shape[0]
    neighbors = []
    for i in range(n):
        row = entries[i, i + 1:]
        idx = np.nonzero(row <= eps_max)[0]
        neighbors.append(dict(zip((idx + i + 1).tolist(), row[idx].tolist())))
    return neighbors


def build_vr_filtration(dm: DistanceMatrix, eps_max: float, max_dim: int,
                        simplex_budget: int = DEFAULT_SIMPLEX_BUDGET) -> Filtration:
    """
    Vietoris-Rips filtration up to scale eps_max and simplex dimension max_dim

    The complex is grown by incremental expansion of the eps_max-neighborhood
    graph: a simplex is extended only by vertices larger than all of its own
    that are adjacent to each of them.

    Args:
        dm: Distance matrix
        eps_max: Largest scale included (>= 0)
        max_dim: Highest simplex dimension, 0..3
        simplex_budget: Hard cap on the number of simplices

    Returns:
        Filtration in (value, dimension, vertices) order
    """
    if not eps_max >= 0:
        raise ValueError(f"eps_max must be >= 0, got {eps_max}")
    if not 0 <= max_dim <= MAX_SIMPLEX_DIM:
        raise ValueError(f"max_dim must be in [0, {MAX_SIMPLEX_DIM}], got {max_dim}")

    n = dm.n
    if n > simplex_budget:
        raise SimplexBudgetExceeded(simplex_budget, eps_max, max_dim)
    neighbors = _upper_neighbors(dm.entries, eps_max) if max_dim > 0 else [{} for _ in range(n)]

    entries: List[Tuple[float, int, Simplex]] = [(0.0, 0, (i,)) for i in range(n)]

    def expand(simplex: Simplex, value: float, candidates: List[int]) -> None:
        dim = len(simplex)
        for pos, v in enumerate(candidates):
            coface_value = value
            for u in simplex:
                d = neighbors[u][v]
                if d > coface_value:
                    coface_value = d
            coface = simplex + (v,)
            entries.append((coface_value, dim, coface))
            if len(entries) > simplex_budget:
                raise SimplexBudgetExceeded(simplex_budget, eps_max, max_dim)
            if dim < max_dim:
                v_neighbors = neighbors[v]
                expand(coface, coface_value, [w for w in candidates[pos + 1:] if w in v_neighbors])

    if max_dim > 0:
        for i in range(n):
            expand((i,), 0.0, sorted(neighbors[i]))

    entries.sort()
    logger.debug(f"Built VR filtration with {len(entries)} simplices (eps_max={eps_max:.6g}, max_dim={max_dim})")
    return Filtration(
        simplices=[simplex for _, _, simplex in entries],
        values=np.array([value for value, _, _ in entries], dtype=np.float64),
        max_dim=max_dim,
    )


def _boundary_indices(filtration: Filtration) -> List[List[int]]:
    position = {simplex: i for i, simplex in enumerate(filtration.simplices)}
    if len(position) != len(filtration.simplices):
        raise InvalidFiltration("Filtration lists a simplex more than once")
    boundaries = []
    for j, simplex in enumerate(filtration.simplices):
        if len(simplex) == 1:
            if filtration.values[j] != 0.0:
                raise InvalidFiltration(f"Vertex {simplex} has non-zero filtration value")
            boundaries.append([])
            continue
        faces = []
        for face in combinations(simplex, len(simplex) - 1):
            i = position.get(face)
            if i is None or i >= j:
                raise InvalidFiltration(f"Face {face} of {simplex} does not precede it")
            faces.append(i)
        boundaries.append(faces)
    return boundaries


def reduce_boundary_matrix(f: Filtration) -> PersistenceDiagram:
    """
    Standard persistence reduction over Z/2 with clearing

    Columns are reduced dimension by dimension from the top down; the pivot
    row of every reduced column is a birth simplex whose own column must
    reduce to zero, so it is skipped.

    Args:
        f: Filtration (faces before cofaces)

    Returns:
        PersistenceDiagram; zero-length intervals are kept
    """
    boundaries = _boundary_indices(f)
    by_dim: Dict[int, List[int]] = {k: [] for k in range(f.max_dim + 1)}
    for j, simplex in enumerate(f.simplices):
        by_dim[len(simplex) - 1].append(j)

    pivot_owner: Dict[int, int] = {}
    reduced: Dict[int, set] = {}
    for dim in range(f.max_dim, 0, -1):
        for j in by_dim[dim]:
            if j in pivot_owner:
                continue
            column = set(boundaries[j])
            while column:
                low = max(column)
                owner = pivot_owner.get(low)
                if owner is None:
                    pivot_owner[low] = j
                    reduced[j] = column
                    break
                column ^= reduced[owner]

    values = f.values
    pairs: Dict[int, List[Tuple[float, float]]] = {k: [] for k in range(f.max_dim + 1)}
    for birth, death in pivot_owner.items():
        pairs[len(f.simplices[birth]) - 1].append((values[birth], values[death]))
    for j, simplex in enumerate(f.simplices):
        if j not in reduced and j not in pivot_owner:
            pairs[len(simplex) - 1].append((values[j], math.inf))

    intervals = {}
    for k, items in pairs.items():
        arr = np.array(sorted(items), dtype=np.float64).reshape(-1, 2)
        intervals[k] = arr
    return PersistenceDiagram(intervals=intervals, max_dim=f.max_dim)


def betti_at_scale(diagram: PersistenceDiagram, eps: float, max_dim: int,
                   min_persistence: float = 0.0) -> BettiVector:
    """
    Count intervals alive at eps, per dimension 0..max_dim

    Args:
        diagram: Persistence diagram
        eps: Scale (>= 0)
        max_dim: Highest homology dimension reported
        min_persistence: Intervals shorter than this are ignored (robust mode)

    Returns:
        BettiVector with b_k = #{(b, d) in dim k : b <= eps < d}
    """
    betti = []
    for k in range(max_dim + 1):
        intervals = diagram.dimension(k)
        if intervals.size == 0:
            betti.append(0)
            continue
        births, deaths = intervals[:, 0], intervals[:, 1]
        alive = (births <= eps) & (eps < deaths)
        if min_persistence > 0:
            alive &= (deaths - births) >= min_persistence
        betti.append(int(np.count_nonzero(alive)))
    return BettiVector(betti=tuple(betti), scale=float(eps), max_dim=max_dim)


def _rank_gf2(rows: Sequence[int]) -> int:
    pivots: Dict[int, int] = {}
    rank = 0
    for row in rows:
        while row:
            top = row.bit_length() - 1
            other = pivots.get(top)
            if other is None:
                pivots[top] = row
                rank += 1
                break
            row ^= other
    return rank


def brute_force_betti(dm: DistanceMatrix, eps: float, max_dim: int) -> BettiVector:
    """
    Betti numbers of VR(eps) by boundary-operator ranks over Z/2

    b_k = #k-simplices - rank(d_k) - rank(d_{k+1}). Enumerates every vertex
    subset, so inputs are limited to 25 points.
    """
    n = dm.n
    if n > BRUTE_FORCE_MAX_POINTS:
        raise TooLarge(f"Brute-force homology is limited to {BRUTE_FORCE_MAX_POINTS} points, got {n}")

    adjacent = dm.entries <= eps
    simplices: List[List[Simplex]] = [[(i,) for i in range(n)]]
    for k in range(1, max_dim + 2):
        level = []
        for simplex in combinations(range(n), k + 1):
            if all(adjacent[u, v] for u, v in combinations(simplex, 2)):
                level.append(simplex)
        simplices.append(level)

    ranks = [0]
    for k in range(1, max_dim + 2):
        index = {face: i for i, face in enumerate(simplices[k - 1])}
        rows = []
        for simplex in simplices[k]:
            mask = 0
            for face in combinations(simplex, k):
                mask |= 1 << index[face]
            rows.append(mask)
        ranks.append(_rank_gf2(rows))

    betti = tuple(len(simplices[k]) - ranks[k] - ranks[k + 1] for k in range(max_dim + 1))
    return BettiVector(betti=betti, scale=float(eps), max_dim=max_dim, n_points=n)


def euler_from_counts(counts: Sequence[int]) -> int:
    return int(sum((-1) ** k * c for k, c in enumerate(counts)))


def euler_from_betti(betti: BettiVector) -> int:
    return int(sum((-1) ** k * b for k, b in enumerate(betti.betti)))


def persistence_profile(cloud: PointCloud, cfg: BettiConfig) -> PersistenceProfile:
    """
    Landmarks -> distances -> scale -> VR filtration -> reduction -> Betti numbers

    Args:
        cloud: Point cloud
        cfg: Subsample size, seed, scale rule and homology dimension

    Returns:
        PersistenceProfile holding the Betti vector (with the scale and the
        number of landmarks used) and the diagram for dimensions 0..max_dim
    """
    if not 0 <= cfg.max_dim < MAX_SIMPLEX_DIM:
        raise InvalidDimension(f"Homology dimension must be in [0, {MAX_SIMPLEX_DIM - 1}], got {cfg.max_dim}")
    m = cloud.n if cfg.subsample is None else min(cfg.subsample, cloud.n)
    if cfg.method == "maxmin":
        landmarks = maxmin_subsample(cloud, m, cfg.seed)
    elif cfg.method == "uniform":
        landmarks = uniform_subsample(cloud, m, cfg.seed)
    else:
        raise ValueError(f"Unknown subsample method '{cfg.method}'")
    landmarks = merge_coincident(landmarks)
    dm = pairwise_distances(landmarks)

    if cfg.scale is not None:
        eps = float(cfg.scale)
    elif dm.n >= 2:
        eps = scale_select(dm, cfg.quantile)
    else:
        eps = 0.0

    eps_max, min_persistence = eps, 0.0
    if cfg.robust_delta is not None:
        eps_max = eps * (1.0 + cfg.robust_delta)
        min_persistence = cfg.robust_delta * eps

    filtration = build_vr_filtration(dm, eps_max, cfg.max_dim + 1, cfg.simplex_budget)
    # top-dimension classes of the K+1 filtration never die, drop them
    diagram = reduce_boundary_matrix(filtration).truncated(cfg.max_dim)
    betti = betti_at_scale(diagram, eps, cfg.max_dim, min_persistence=min_persistence)
    betti = BettiVector(betti=betti.betti, scale=eps, max_dim=cfg.max_dim, n_points=m)
    logger.info(
        f"Betti {betti.betti} at eps={eps:.6g} (m={m}, distinct={dm.n}, "
        f"simplices={len(filtration)}, robust_delta={cfg.robust_delta})"
    )
    return PersistenceProfile(betti=betti, diagram=diagram, filtration_size=len(filtration))


def betti_profile(cloud: PointCloud, cfg: BettiConfig) -> BettiVector:
    """Betti vector of a cloud; see persistence_profile"""
    return persistence_profile(cloud, cfg).betti
