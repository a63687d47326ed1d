"""Independent reference implementations used to verify the library.

Everything here is deliberately written along a different algorithmic route
than the package (union-find instead of BFS, explicit pair counting instead
of trapezoids, brute-force sorts instead of partial selection) so agreement
is meaningful.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# density clustering


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def dbscan_oracle(
    points: np.ndarray, eps: float, min_pts: int
) -> tuple[np.ndarray, np.ndarray]:
    """O(N^2) density clustering via union-find.

    Conventions (matching the library): a point's eps-neighbourhood includes
    itself; core points have >= min_pts neighbours; clusters are connected
    components of mutually eps-close core points; a non-core point with at
    least one core neighbour joins the cluster of its lowest-index core
    neighbour; everything else is an outlier (-1).  Cluster ids are
    renumbered 1..K in order of first appearance by row index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)
    deltas = points[:, None, :] - points[None, :, :]
    adj = np.einsum("ijk,ijk->ij", deltas, deltas) <= eps * eps
    core = adj.sum(axis=1) >= min_pts

    uf = _UnionFind(n)
    core_idx = np.flatnonzero(core)
    for a in core_idx:
        for b in core_idx[core_idx > a]:
            if adj[a, b]:
                uf.union(int(a), int(b))

    labels = np.full(n, -1, dtype=np.int64)
    root_to_id: dict[int, int] = {}
    for a in core_idx:
        root = uf.find(int(a))
        labels[a] = root_to_id.setdefault(root, len(root_to_id) + 1)
    for i in range(n):
        if core[i]:
            continue
        core_neighbors = np.flatnonzero(adj[i] & core)
        if core_neighbors.size:
            labels[i] = labels[core_neighbors.min()]

    # renumber by first appearance so the labelling is canonical
    remap: dict[int, int] = {}
    out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if labels[i] != -1:
            out[i] = remap.setdefault(int(labels[i]), len(remap) + 1)
    return out, core


def knn_oracle(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest neighbours (self excluded) by full stable sort."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    deltas = x[:, None, :] - x[None, :, :]
    dists = np.sqrt(np.einsum("ijk,ijk->ij", deltas, deltas))
    idx = np.zeros((n, k), dtype=np.int64)
    val = np.zeros((n, k))
    for i in range(n):
        order = np.argsort(dists[i], kind="stable")
        order = order[order != i][:k]
        idx[i] = order
        val[i] = dists[i][order]
    return idx, val


def silhouette_oracle(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient, direct definition, euclidean metric."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    deltas = points[:, None, :] - points[None, :, :]
    dists = np.sqrt(np.einsum("ijk,ijk->ij", deltas, deltas))
    scores = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            scores[i] = 0.0
            continue
        a = dists[i][own].sum() / (n_own - 1)
        b = min(dists[i][labels == other].mean() for other in uniq if other != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


# ---------------------------------------------------------------------------
# metrics


def pairwise_auc_oracle(scores: np.ndarray, flags: np.ndarray) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(equal)."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    pos = scores[flags]
    neg = scores[~flags]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (pos.size * neg.size)


def tpr_fpr_oracle(
    poisoned_rows, benign_rows, gp_rows, gb_rows
) -> tuple[float, float]:
    """Set-based counting of detection hits and false alarms."""
    flagged = set(int(r) for r in poisoned_rows)
    cleared = set(int(r) for r in benign_rows)
    gp = [int(r) for r in gp_rows]
    gb = [int(r) for r in gb_rows]
    tpr = sum(r in flagged for r in gp) / len(gp) if gp else float("nan")
    fpr = sum(r not in cleared for r in gb) / len(gb)
    return tpr, fpr


def exhaustive_theta_search(
    grid: np.ndarray, per_class_fpr: np.ndarray, target: float
) -> tuple[float, float]:
    """Plain double-loop operating-point search (ties -> smallest theta)."""
    best_theta, best_fpr, best_gap = None, None, float("inf")
    for theta, fprs in zip(grid, per_class_fpr.T):
        mean_fpr = float(np.mean(fprs))
        gap = abs(target - mean_fpr)
        if gap < best_gap:
            best_theta, best_fpr, best_gap = float(theta), float(mean_fpr), gap
    return best_theta, best_fpr


def box_filter_oracle(image: np.ndarray, size: int) -> np.ndarray:
    """Direct double-loop box average with edge replication."""
    img = np.asarray(image, dtype=np.float64)
    h, w, c = img.shape
    half = size // 2
    out = np.zeros_like(img)
    padded = np.pad(img, ((half, half), (half, half), (0, 0)), mode="edge")
    for i in range(h):
        for j in range(w):
            out[i, j] = padded[i : i + size, j : j + size].mean(axis=(0, 1))
    return out
