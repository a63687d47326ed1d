"""Reference defences the detection engine is compared against.

Both are built from scratch on numpy:

* :func:`activation_clustering` — per class, project features to two
  principal components, split them with seeded 2-means, and treat the
  relative size of the smaller cluster as the benignness statistic.  A
  class is flagged poisoned when that relative size falls below the
  threshold, and the smaller cluster's members are reported as the poisons.
* :func:`cluster_impurity` — per class, reduce with the same nonlinear
  embedding the engine uses, fit a full-covariance Gaussian mixture (component
  count chosen by BIC), and score each mixture component by the divergence
  between its label-disagreement rate under a trigger-removing filter and a
  near-zero reference rate.  Components whose divergence clears the
  threshold are flagged poisoned.

Per-sample scores suitable for threshold-free ranking (ROC/AUC) accompany
both: the smaller-cluster membership statistic for the former, the
component divergence for the latter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ABSENT, FeatureDataset
from .dimred import ReductionConfig, pca_reduce, umap_reduce
from .errors import ConfigError

KMEANS_RESTARTS = 50
GMM_RESTARTS = 20
GMM_MAX_COMPONENTS = 10
IMPURITY_EPSILON = 1.0e-6


# ---------------------------------------------------------------------------
# k-means


def _kmeans_pp_init(
    x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Seeded k-means++ seeding: spread initial centers by squared distance."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j:] = x[rng.integers(n, size=k - j)]
            break
        probs = d2 / total
        centers[j] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    x: np.ndarray, centers: np.ndarray, max_iter: int = 300
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd iterations until assignments stop changing."""
    assign = np.full(x.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(centers.shape[0]):
            members = x[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    inertia = float(((x - centers[assign]) ** 2).sum())
    return assign, centers, inertia


def kmeans(
    x: np.ndarray,
    k: int,
    seed=0,
    restarts: int = KMEANS_RESTARTS,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded k-means with restarts; returns (assignments, centers, inertia)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise ConfigError(f"k-means needs a 2-D array with at least {k} rows")
    if k < 1:
        raise ConfigError("k must be >= 1")
    rng = np.random.default_rng(seed)
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(restarts):
        centers = _kmeans_pp_init(x, k, rng)
        assign, centers, inertia = _lloyd(x, centers)
        if best is None or inertia < best[2]:
            best = (assign, centers, inertia)
    return best


# ---------------------------------------------------------------------------
# Activation-clustering defence


@dataclass(frozen=True)
class SplitClassReport:
    """Per-class outcome of the two-means split defence."""

    class_label: int
    class_rows: np.ndarray
    small_fraction: float  # |smaller cluster| / |class|
    poisoned: bool
    flagged_rows: np.ndarray  # global rows judged poisoned (smaller cluster)
    scores: np.ndarray  # per-row ranking score aligned with class_rows


@dataclass(frozen=True)
class SplitResult:
    theta: float
    class_reports: tuple[SplitClassReport, ...]

    def for_class(self, label: int) -> SplitClassReport:
        for rep in self.class_reports:
            if rep.class_label == label:
                return rep
        raise ConfigError(f"no report for class {label}")


def activation_clustering(
    train: FeatureDataset,
    theta: float = 0.35,
    seed: int = 0,
) -> SplitResult:
    """Two-means split on 2-component PCA projections, per class.

    The smaller cluster is presumed to hold the poisons; the class is
    flagged when the smaller cluster's relative size drops below ``theta``
    (balanced splits look benign).  Ranking scores: members of the smaller
    cluster get ``0.5 - small_fraction`` (more lopsided = more suspicious),
    the rest ``-inf``.
    """
    if not 0.0 <= theta <= 0.5:
        raise ConfigError("relative-size threshold must lie in [0, 0.5]")
    reports = []
    for label in range(1, train.num_classes + 1):
        rows = train.class_indices(label)
        if rows.size < 2:
            raise ConfigError(f"class {label} too small for a two-way split")
        projected = pca_reduce(train.features[rows].astype(np.float64), 2)
        assign, _, _ = _lloyd_best_two(projected, seed=np.random.SeedSequence([seed, label]))
        sizes = np.bincount(assign, minlength=2)
        small = int(np.argmin(sizes))  # ties: lower cluster index
        frac = float(sizes[small] / rows.size)
        poisoned = frac < theta
        scores = np.where(assign == small, 0.5 - frac, -np.inf)
        reports.append(
            SplitClassReport(
                class_label=label,
                class_rows=rows,
                small_fraction=frac,
                poisoned=poisoned,
                flagged_rows=rows[assign == small] if poisoned else np.empty(0, np.int64),
                scores=scores,
            )
        )
    return SplitResult(theta=theta, class_reports=tuple(reports))


def _lloyd_best_two(x: np.ndarray, seed) -> tuple[np.ndarray, np.ndarray, float]:
    return kmeans(x, 2, seed=seed)


# ---------------------------------------------------------------------------
# Gaussian mixture with BIC selection


@dataclass
class GaussianMixture:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    covariances: np.ndarray  # (K, D, D)
    log_likelihood: float
    bic: float

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def _log_prob(self, x: np.ndarray) -> np.ndarray:
        """(N, K) log of weight_k * N(x | mu_k, Sigma_k)."""
        d = x.shape[1]
        signs, logdets = np.linalg.slogdet(self.covariances)
        if np.any(signs <= 0):
            raise np.linalg.LinAlgError("covariance not positive definite")
        inverses = np.linalg.inv(self.covariances)  # (K, D, D)
        diffs = x[None, :, :] - self.means[:, None, :]  # (K, N, D)
        maha = np.einsum("knd,kde,kne->kn", diffs, inverses, diffs)
        log_p = (
            np.log(self.weights)[:, None]
            - 0.5 * (d * np.log(2.0 * np.pi) + logdets[:, None] + maha)
        )
        return log_p.T

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        log_p = self._log_prob(np.asarray(x, dtype=np.float64))
        log_norm = _logsumexp(log_p)
        return np.exp(log_p - log_norm[:, None])

    def assign(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self._log_prob(np.asarray(x, dtype=np.float64)), axis=1)


def _logsumexp(log_p: np.ndarray) -> np.ndarray:
    peak = log_p.max(axis=1)
    return peak + np.log(np.exp(log_p - peak[:, None]).sum(axis=1))


def _fit_gmm_once(
    x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100, tol: float = 1.0e-5
) -> GaussianMixture | None:
    n, d = x.shape
    reg = 1.0e-6 * np.eye(d)
    centers = _kmeans_pp_init(x, k, rng)
    base_cov = np.cov(x, rowvar=False) if n > 1 else np.eye(d)
    base_cov = np.atleast_2d(base_cov) + reg
    mix = GaussianMixture(
        weights=np.full(k, 1.0 / k),
        means=centers,
        covariances=np.repeat(base_cov[None, :, :], k, axis=0),
        log_likelihood=-np.inf,
        bic=np.inf,
    )
    prev_ll = -np.inf
    for _ in range(max_iter):
        try:
            log_p = mix._log_prob(x)
        except np.linalg.LinAlgError:
            return None
        log_norm = _logsumexp(log_p)
        ll = float(log_norm.sum())
        resp = np.exp(log_p - log_norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk < 1.0e-10):
            return None
        mix.weights = nk / n
        mix.means = (resp.T @ x) / nk[:, None]
        diffs = x[None, :, :] - mix.means[:, None, :]  # (K, N, D)
        mix.covariances = (
            np.einsum("nk,knd,kne->kde", resp, diffs, diffs) / nk[:, None, None]
            + reg[None, :, :]
        )
        if abs(ll - prev_ll) < tol * max(1.0, abs(ll)):
            prev_ll = ll
            break
        prev_ll = ll
    mix.log_likelihood = prev_ll
    n_params = (k - 1) + k * d + k * d * (d + 1) // 2
    mix.bic = -2.0 * prev_ll + n_params * np.log(n)
    return mix


def fit_gmm(
    x: np.ndarray,
    max_components: int = GMM_MAX_COMPONENTS,
    restarts: int = GMM_RESTARTS,
    seed=0,
) -> GaussianMixture:
    """Best full-covariance mixture over component counts 1..max, by BIC."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigError("mixture fitting needs a 2-D array with >= 2 rows")
    rng = np.random.default_rng(seed)
    best: GaussianMixture | None = None
    top_k = min(max_components, x.shape[0])
    for k in range(1, top_k + 1):
        for _ in range(restarts):
            mix = _fit_gmm_once(x, k, rng)
            if mix is not None and (best is None or mix.bic < best.bic):
                best = mix
    if best is None:
        raise ConfigError("mixture fitting failed for every component count")
    return best


# ---------------------------------------------------------------------------
# Cluster-impurity defence


@dataclass(frozen=True)
class ImpurityCluster:
    cluster_id: int
    size: int
    disagreement: float  # fraction of members whose filtered prediction flips
    divergence: float  # KL vs the near-zero reference rate
    member_rows: np.ndarray
    poisoned: bool


@dataclass(frozen=True)
class ImpurityClassReport:
    class_label: int
    class_rows: np.ndarray
    clusters: tuple[ImpurityCluster, ...]
    scores: np.ndarray  # per-row divergence of the row's cluster

    @property
    def flagged_rows(self) -> np.ndarray:
        parts = [c.member_rows for c in self.clusters if c.poisoned]
        if not parts:
            return np.empty(0, np.int64)
        return np.sort(np.concatenate(parts))


@dataclass(frozen=True)
class ImpurityResult:
    theta: float
    class_reports: tuple[ImpurityClassReport, ...]

    def for_class(self, label: int) -> ImpurityClassReport:
        for rep in self.class_reports:
            if rep.class_label == label:
                return rep
        raise ConfigError(f"no report for class {label}")


def binary_kl(p: float, eps: float = IMPURITY_EPSILON) -> float:
    """KL between Bernoulli(p) and Bernoulli(eps), with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("disagreement rate must lie in [0, 1]")
    out = 0.0
    if p > 0.0:
        out += p * np.log(p / eps)
    if p < 1.0:
        out += (1.0 - p) * np.log((1.0 - p) / (1.0 - eps))
    return float(out)


def cluster_impurity(
    train: FeatureDataset,
    head,
    theta: float = 1.0,
    reduction: ReductionConfig = ReductionConfig(),
    seed: int = 0,
) -> ImpurityResult:
    """Mixture components whose filtered predictions flip too often are poisoned.

    Requires ``train.filtered_predictions`` (the model's predictions after a
    trigger-degrading input filter).  Disagreement is measured against the
    model's prediction on the unfiltered features.
    """
    if theta < 0.0:
        raise ConfigError("divergence threshold must be >= 0")
    if np.any(train.filtered_predictions == ABSENT):
        raise ConfigError("cluster-impurity defence needs filtered predictions for every sample")
    unfiltered = head.classify(train.features)
    reports = []
    for label in range(1, train.num_classes + 1):
        rows = train.class_indices(label)
        if rows.size < 2:
            raise ConfigError(f"class {label} too small to analyse")
        embedding = umap_reduce(
            train.features[rows], reduction, seed=np.random.SeedSequence([seed, label])
        )
        mix = fit_gmm(
            embedding.astype(np.float64), seed=np.random.SeedSequence([seed, label, 1])
        )
        assign = mix.assign(embedding.astype(np.float64))
        flips = train.filtered_predictions[rows] != unfiltered[rows]
        clusters = []
        scores = np.zeros(rows.size)
        for k in range(mix.n_components):
            members = np.flatnonzero(assign == k)
            if members.size == 0:
                continue
            p = float(flips[members].mean())
            div = binary_kl(p)
            clusters.append(
                ImpurityCluster(
                    cluster_id=k + 1,
                    size=int(members.size),
                    disagreement=p,
                    divergence=div,
                    member_rows=rows[members],
                    poisoned=div >= theta,
                )
            )
            scores[members] = div
        reports.append(
            ImpurityClassReport(
                class_label=label,
                class_rows=rows,
                clusters=tuple(clusters),
                scores=scores,
            )
        )
    return ImpurityResult(theta=theta, class_reports=tuple(reports))
