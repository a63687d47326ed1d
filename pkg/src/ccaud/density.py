"""Density-based clustering (DBSCAN) over embedded feature vectors.

Semantics:

* a point is a *core* point when at least ``min_pts`` points lie within
  distance ``eps`` of it, **counting the point itself**;
* clusters are the connected components of the core points under the
  ``eps``-neighbour relation;
* a non-core point within ``eps`` of at least one core point is a *border*
  point and joins the cluster of the lowest-index core point claiming it
  (a deterministic tie-break);
* all remaining points are *outliers*.

Cluster labels are ``1..K`` with ``-1`` marking outliers; clusters are
numbered by their lowest member index so the partition is reproducible and,
up to renumbering, independent of input order.  Neighbourhoods use a naive
O(N^2) scan by default with an equivalent grid index for large inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dimred import ReductionConfig, pairwise_sq_dists, umap_reduce
from .errors import ConfigError

OUTLIER = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.8
    min_pts: int = 20
    algorithm: str = "auto"  # "auto" | "naive" | "grid"

    def __post_init__(self) -> None:
        if self.eps <= 0.0:
            raise ConfigError("eps must be positive")
        if self.min_pts < 1:
            raise ConfigError("min_pts must be >= 1")
        if self.algorithm not in ("auto", "naive", "grid"):
            raise ConfigError(f"unknown dbscan algorithm {self.algorithm!r}")


@dataclass
class ClusterPartition:
    """Result of one DBSCAN run: labels in {-1} + {1..n_clusters}."""

    labels: np.ndarray
    n_clusters: int
    core_mask: np.ndarray

    def members(self, cluster: int) -> np.ndarray:
        if not 1 <= cluster <= self.n_clusters:
            raise ConfigError(f"cluster {cluster} outside [1, {self.n_clusters}]")
        return np.flatnonzero(self.labels == cluster)

    def outliers(self) -> np.ndarray:
        return np.flatnonzero(self.labels == OUTLIER)

    @property
    def outlier_ratio(self) -> float:
        n = self.labels.shape[0]
        return float((self.labels == OUTLIER).sum() / n) if n else 0.0

    def sizes(self) -> np.ndarray:
        """Cluster sizes, index 0 unused so sizes[k] is cluster k."""
        out = np.zeros(self.n_clusters + 1, dtype=np.int64)
        for k in range(1, self.n_clusters + 1):
            out[k] = int((self.labels == k).sum())
        return out


def _neighbor_lists_naive(points: np.ndarray, eps: float) -> list[np.ndarray]:
    n = points.shape[0]
    eps_sq = eps * eps
    lists: list[np.ndarray] = []
    block = max(1, int(2**22 // max(1, n)))
    for start in range(0, n, block):
        sq = pairwise_sq_dists(points[start : start + block], points)
        for row in sq:
            lists.append(np.flatnonzero(row <= eps_sq))
    return lists


def _neighbor_lists_grid(points: np.ndarray, eps: float) -> list[np.ndarray]:
    """Same neighbourhoods as the naive scan via an eps-sized grid index."""
    n, dim = points.shape
    eps_sq = eps * eps
    cells = np.floor(points / eps).astype(np.int64)
    buckets: dict[tuple[int, ...], list[int]] = {}
    for i in range(n):
        buckets.setdefault(tuple(cells[i]), []).append(i)
    offsets = np.stack(
        np.meshgrid(*([np.arange(-1, 2)] * dim), indexing="ij"), axis=-1
    ).reshape(-1, dim)
    lists: list[np.ndarray] = []
    for i in range(n):
        cand: list[int] = []
        for off in offsets:
            cand.extend(buckets.get(tuple(cells[i] + off), ()))
        cand_arr = np.sort(np.asarray(cand, dtype=np.int64))
        diff = points[cand_arr] - points[i]
        keep = np.einsum("ij,ij->i", diff, diff) <= eps_sq
        lists.append(cand_arr[keep])
    return lists


def dbscan(points: np.ndarray, params: DbscanParams = DbscanParams()) -> ClusterPartition:
    """Partition ``points`` (any dimension) into clusters, borders, outliers."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ConfigError("dbscan expects a 2-D (N, dim) array")
    n = points.shape[0]
    if n == 0:
        return ClusterPartition(
            labels=np.empty(0, dtype=np.int64), n_clusters=0, core_mask=np.empty(0, dtype=bool)
        )
    use_grid = params.algorithm == "grid" or (
        params.algorithm == "auto" and n > 10_000 and points.shape[1] <= 3
    )
    neighbors = (
        _neighbor_lists_grid(points, params.eps)
        if use_grid
        else _neighbor_lists_naive(points, params.eps)
    )
    core_mask = np.fromiter(
        (len(nb) >= params.min_pts for nb in neighbors), dtype=bool, count=n
    )

    labels = np.full(n, OUTLIER, dtype=np.int64)
    cluster_id = 0
    for seed_idx in range(n):
        if not core_mask[seed_idx] or labels[seed_idx] != OUTLIER:
            continue
        cluster_id += 1
        labels[seed_idx] = cluster_id
        frontier = [seed_idx]
        while frontier:
            current = frontier.pop()
            for nb in neighbors[current]:
                if core_mask[nb] and labels[nb] == OUTLIER:
                    labels[nb] = cluster_id
                    frontier.append(nb)

    # Border points join the cluster of the lowest-index claiming core.
    for i in range(n):
        if core_mask[i] or labels[i] != OUTLIER:
            continue
        claiming = [nb for nb in neighbors[i] if core_mask[nb]]
        if claiming:
            labels[i] = labels[min(claiming)]

    return _canonical(labels, cluster_id, core_mask)


def _canonical(labels: np.ndarray, n_clusters: int, core_mask: np.ndarray) -> ClusterPartition:
    """Renumber clusters 1..K by their lowest member index."""
    remap = {}
    next_id = 0
    for lab in labels:
        if lab != OUTLIER and lab not in remap:
            next_id += 1
            remap[lab] = next_id
    out = np.array([remap[lab] if lab != OUTLIER else OUTLIER for lab in labels], dtype=np.int64)
    return ClusterPartition(labels=out, n_clusters=n_clusters, core_mask=core_mask)


@dataclass
class ClassClustering:
    """Clustering of one class subset: the embedding plus its partition."""

    embedding: np.ndarray
    partition: ClusterPartition


def cluster_class(
    features: np.ndarray,
    reduction: ReductionConfig = ReductionConfig(),
    params: DbscanParams = DbscanParams(),
    seed: int = 0,
) -> ClassClustering:
    """Reduce one class's features with UMAP, then cluster the embedding."""
    embedding = umap_reduce(features, reduction, seed=seed)
    partition = dbscan(embedding.astype(np.float64), params)
    return ClassClustering(embedding=embedding, partition=partition)
