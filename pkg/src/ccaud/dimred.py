"""Dimensionality reduction: exact PCA and a self-contained UMAP.

The UMAP here follows the standard construction:

1. exact brute-force k-nearest-neighbour graph (Euclidean, self excluded,
   distance ties broken by index);
2. per-point connectivity radius ``rho_i`` (distance to the nearest
   neighbour) and bandwidth ``sigma_i`` solved by bisection so that
   ``sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(n_neighbors)``;
3. directed membership strengths ``v_ij = exp(-max(0, d_ij - rho_i) / sigma_i)``
   symmetrised by fuzzy union ``W = V + V^T - V * V^T``;
4. a low-dimensional layout initialised from PCA (scaled to max coordinate
   10 plus tiny seeded jitter) and optimised by per-edge stochastic gradient
   descent with negative sampling on the kernel ``1 / (1 + a r^(2b))``,
   where ``(a, b)`` are least-squares fit against the target kernel
   ``exp(-(r - min_dist))`` for ``r >= min_dist`` (1 below).

Everything is deterministic for a fixed seed: the SGD runs single-threaded
with an explicit Tausworthe integer RNG for negative sampling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse
from numba import njit

from .errors import ConfigError

SMOOTH_K_TOLERANCE = 1e-6
MIN_K_DIST_SCALE = 1e-3
BANDWIDTH_MAX_ITER = 128


@dataclass(frozen=True)
class ReductionConfig:
    """Knobs of the UMAP reduction (PCA only uses ``n_components``)."""

    n_components: int = 2
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    n_epochs: int = 200
    learning_rate: float = 1.0
    negative_sample_rate: int = 5
    repulsion_strength: float = 1.0
    init_noise: float = 1e-4

    def __post_init__(self) -> None:
        if self.n_components < 1:
            raise ConfigError("n_components must be >= 1")
        if self.n_neighbors < 2:
            raise ConfigError("n_neighbors must be >= 2")
        if not 0.0 <= self.min_dist < self.spread * 3:
            raise ConfigError("min_dist must be >= 0 and small relative to spread")
        if self.n_epochs < 1:
            raise ConfigError("n_epochs must be >= 1")
        if self.negative_sample_rate < 1:
            raise ConfigError("negative_sample_rate must be >= 1")


def pairwise_sq_dists(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances between rows of ``x`` and ``y`` (float64)."""
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    xx = np.einsum("ij,ij->i", x, x)
    yy = xx if y is x else np.einsum("ij,ij->i", y, y)
    sq = xx[:, None] + yy[None, :] - 2.0 * (x @ y.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def knn_graph(x: np.ndarray, n_neighbors: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact k-NN by brute force; returns (indices, distances) of shape (N, k).

    The point itself is excluded from its own row; ties in distance resolve
    to the lower index (stable sort), so the result is order-deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n <= n_neighbors:
        raise ConfigError(f"need more than n_neighbors={n_neighbors} points, got {n}")
    sq = pairwise_sq_dists(x)
    np.fill_diagonal(sq, np.inf)
    order = np.argsort(sq, axis=1, kind="stable")[:, :n_neighbors]
    dists = np.sqrt(np.take_along_axis(sq, order, axis=1))
    return order.astype(np.int64), dists


def smooth_knn_bandwidths(
    knn_dists: np.ndarray, n_neighbors: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve per-point (rho, sigma); returns (rho, sigma, residuals).

    ``rho_i`` is the nearest-neighbour distance.  ``sigma_i`` is found by
    bisection so the smoothed neighbour cardinality equals
    ``log2(n_neighbors)``; a lower guard of ``1e-3`` times the mean
    neighbour distance prevents degenerate zero bandwidths.
    """
    knn_dists = np.asarray(knn_dists, dtype=np.float64)
    n = knn_dists.shape[0]
    target = np.log2(n_neighbors)
    rho = knn_dists[:, 0].copy()
    sigma = np.zeros(n)
    residuals = np.zeros(n)
    mean_all = float(knn_dists.mean()) if knn_dists.size else 0.0
    for i in range(n):
        gaps = knn_dists[i] - rho[i]
        np.maximum(gaps, 0.0, out=gaps)
        lo, hi, mid = 0.0, np.inf, 1.0
        psum = 0.0
        for _ in range(BANDWIDTH_MAX_ITER):
            psum = float(np.exp(-gaps / mid).sum())
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid
        residuals[i] = abs(psum - target)
        floor = MIN_K_DIST_SCALE * (knn_dists[i].mean() if rho[i] > 0.0 else mean_all)
        if sigma[i] < floor:
            sigma[i] = floor
            residuals[i] = abs(float(np.exp(-gaps / sigma[i]).sum()) - target)
    return rho, sigma, residuals


def membership_strengths(
    knn_idx: np.ndarray, knn_dists: np.ndarray, rho: np.ndarray, sigma: np.ndarray
) -> scipy.sparse.coo_matrix:
    """Directed fuzzy membership matrix V with v_ij = exp(-(d_ij - rho_i)/sigma_i)."""
    n, k = knn_idx.shape
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = knn_idx.reshape(-1)
    gaps = knn_dists - rho[:, None]
    vals = np.where(
        (gaps <= 0.0) | (sigma[:, None] <= 0.0),
        1.0,
        np.exp(-gaps / np.where(sigma[:, None] <= 0.0, 1.0, sigma[:, None])),
    ).reshape(-1)
    return scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))


def fuzzy_union(v: scipy.sparse.coo_matrix) -> scipy.sparse.coo_matrix:
    """Symmetrise a directed membership matrix: W = V + V^T - V * V^T."""
    v = v.tocsr()
    vt = v.T.tocsr()
    prod = v.multiply(vt)
    w = (v + vt - prod).tocoo()
    w.eliminate_zeros()
    return w


def fuzzy_graph(x: np.ndarray, n_neighbors: int) -> scipy.sparse.coo_matrix:
    """Full pipeline from points to the symmetrised fuzzy graph."""
    idx, dists = knn_graph(x, n_neighbors)
    rho, sigma, _ = smooth_knn_bandwidths(dists, n_neighbors)
    return fuzzy_union(membership_strengths(idx, dists, rho, sigma))


def fit_kernel_params(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares (a, b) so 1/(1 + a x^(2b)) matches the offset exponential."""
    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = scipy.optimize.curve_fit(curve, xv, yv)
    return float(a), float(b)


def make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    """Sampling interval (in epochs) per edge, proportional to 1/weight."""
    result = -1.0 * np.ones(weights.shape[0])
    n_samples = n_epochs * (weights / weights.max())
    positive = n_samples > 0
    result[positive] = float(n_epochs) / n_samples[positive]
    return result


@njit(cache=True, nogil=True)
def _tau_rand_int(state: np.ndarray) -> np.int64:
    """Tausworthe taus88 step; 32-bit arithmetic carried in int64 slots."""
    mask = np.int64(0xFFFFFFFF)
    state[0] = (((state[0] & np.int64(4294967294)) << 12) & mask) ^ (
        (((state[0] << 13) & mask) ^ state[0]) >> 19
    )
    state[1] = (((state[1] & np.int64(4294967288)) << 4) & mask) ^ (
        (((state[1] << 2) & mask) ^ state[1]) >> 25
    )
    state[2] = (((state[2] & np.int64(4294967280)) << 17) & mask) ^ (
        (((state[2] << 3) & mask) ^ state[2]) >> 11
    )
    return state[0] ^ state[1] ^ state[2]


@njit(cache=True, nogil=True)
def _optimize_layout(
    embedding: np.ndarray,
    head: np.ndarray,
    tail: np.ndarray,
    n_epochs: int,
    epochs_per_sample: np.ndarray,
    a: float,
    b: float,
    gamma: float,
    initial_alpha: float,
    negative_sample_rate: float,
    rng_state: np.ndarray,
) -> None:
    n_vertices = embedding.shape[0]
    dim = embedding.shape[1]
    alpha = initial_alpha
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    epoch_of_next_sample = epochs_per_sample.copy()

    for n in range(n_epochs):
        for i in range(epochs_per_sample.shape[0]):
            if epoch_of_next_sample[i] > n:
                continue
            j = head[i]
            k = tail[i]
            dist_squared = 0.0
            for d in range(dim):
                diff = embedding[j, d] - embedding[k, d]
                dist_squared += diff * diff
            if dist_squared > 0.0:
                grad_coeff = -2.0 * a * b * dist_squared ** (b - 1.0)
                grad_coeff /= a * dist_squared**b + 1.0
            else:
                grad_coeff = 0.0
            for d in range(dim):
                grad_d = grad_coeff * (embedding[j, d] - embedding[k, d])
                if grad_d > 4.0:
                    grad_d = 4.0
                elif grad_d < -4.0:
                    grad_d = -4.0
                embedding[j, d] += grad_d * alpha
                embedding[k, d] -= grad_d * alpha
            epoch_of_next_sample[i] += epochs_per_sample[i]

            n_neg_samples = int(
                (n - epoch_of_next_negative_sample[i]) / epochs_per_negative_sample[i]
            )
            for _ in range(n_neg_samples):
                other = int(_tau_rand_int(rng_state) % n_vertices)
                if other < 0:
                    other += n_vertices
                if other == j:
                    continue
                dist_squared = 0.0
                for d in range(dim):
                    diff = embedding[j, d] - embedding[other, d]
                    dist_squared += diff * diff
                if dist_squared > 0.0:
                    grad_coeff = 2.0 * gamma * b
                    grad_coeff /= (0.001 + dist_squared) * (a * dist_squared**b + 1.0)
                else:
                    grad_coeff = 0.0
                for d in range(dim):
                    if grad_coeff > 0.0:
                        grad_d = grad_coeff * (embedding[j, d] - embedding[other, d])
                        if grad_d > 4.0:
                            grad_d = 4.0
                        elif grad_d < -4.0:
                            grad_d = -4.0
                    else:
                        grad_d = 4.0
                    embedding[j, d] += grad_d * alpha
            epoch_of_next_negative_sample[i] += (
                n_neg_samples * epochs_per_negative_sample[i]
            )
        alpha = initial_alpha * (1.0 - (n + 1) / n_epochs)


def pca_reduce(
    x: np.ndarray, n_components: int, return_basis: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Centered PCA scores with a deterministic sign convention.

    Each component's largest-magnitude loading is made positive.  If the
    data has lower rank than requested, missing components are zero-padded
    and a warning is emitted.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("pca_reduce expects a 2-D array")
    if n_components < 1:
        raise ConfigError("n_components must be >= 1")
    centered = x - x.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(centered.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    if rank < n_components:
        warnings.warn(
            f"data rank {rank} < requested components {n_components}; zero-padding",
            RuntimeWarning,
            stacklevel=2,
        )
    keep = min(n_components, rank)
    basis = np.zeros((n_components, x.shape[1]))
    scores = np.zeros((x.shape[0], n_components))
    if keep:
        comps = vt[:keep]
        flips = np.where(
            comps[np.arange(keep), np.abs(comps).argmax(axis=1)] < 0.0, -1.0, 1.0
        )
        comps = comps * flips[:, None]
        basis[:keep] = comps
        scores[:, :keep] = centered @ comps.T
    if return_basis:
        return scores, basis
    return scores


def umap_reduce(
    x: np.ndarray, cfg: ReductionConfig = ReductionConfig(), seed: int = 0
) -> np.ndarray:
    """Embed rows of ``x`` into ``cfg.n_components`` dimensions (float32)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("umap_reduce expects a 2-D array")
    n = x.shape[0]
    if n <= cfg.n_neighbors:
        raise ConfigError(
            f"umap needs more than n_neighbors={cfg.n_neighbors} points, got {n}"
        )
    rng = np.random.default_rng(seed)
    graph = fuzzy_graph(x, cfg.n_neighbors)

    init = pca_reduce(x, cfg.n_components)
    max_coord = np.abs(init).max()
    if max_coord > 0.0:
        init = init * (10.0 / max_coord)
    embedding = init + rng.normal(scale=cfg.init_noise, size=init.shape)

    a, b = fit_kernel_params(cfg.min_dist, cfg.spread)
    graph = graph.tocoo()
    keep = graph.data >= graph.data.max() / cfg.n_epochs
    head = graph.row[keep].astype(np.int64)
    tail = graph.col[keep].astype(np.int64)
    weights = graph.data[keep]
    epochs_per_sample = make_epochs_per_sample(weights, cfg.n_epochs)
    rng_state = rng.integers(128, 2**30, size=3).astype(np.int64)
    embedding = np.ascontiguousarray(embedding, dtype=np.float64)
    _optimize_layout(
        embedding,
        head,
        tail,
        cfg.n_epochs,
        epochs_per_sample,
        a,
        b,
        cfg.repulsion_strength,
        cfg.learning_rate,
        float(cfg.negative_sample_rate),
        rng_state,
    )
    return embedding.astype(np.float32)
