"""Per-class poisoning detection via cluster centroid-deviation analysis.

For every class ``i`` of the training split:

1. the class's feature vectors are embedded with UMAP and clustered by
   DBSCAN; DBSCAN outliers go straight into the poisoned set (they are not
   subject to thresholding);
2. each cluster's centroid is taken in the **full** feature space and its
   deviation ``beta = centroid - mean(validation features of class i)`` is
   computed;
3. the deviation is added to every validation sample of the *other*
   classes; the misclassification ratio ``MR`` is the fraction of those
   samples the classifier head then assigns to class ``i`` (features are
   re-rectified with ReLU after the shift);
4. the cluster is judged poisoned when ``MR >= 1 - theta``.

The intuition: a poisoned cluster's deviation carries the trigger's feature
footprint, which drags arbitrary samples into the target class, while a
benign cluster's deviation only reflects intra-class variation.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import ClassifierHead, FeatureDataset
from .density import DbscanParams, cluster_class
from .dimred import ReductionConfig
from .errors import ConfigError


@dataclass(frozen=True)
class EngineConfig:
    """Pipeline knobs for the clustering stage of the detector."""

    reduction: ReductionConfig = ReductionConfig()
    dbscan: DbscanParams = DbscanParams()


@dataclass(frozen=True)
class ClusterVerdict:
    """One cluster's analysis within its class."""

    class_label: int
    cluster_id: int
    size: int
    mr: float
    deviation: np.ndarray
    member_rows: np.ndarray  # row indices into the inspected training split
    poisoned: bool


@dataclass(frozen=True)
class ClassResult:
    """Detection outcome for a single class."""

    class_label: int
    verdicts: tuple[ClusterVerdict, ...]
    outlier_rows: np.ndarray
    outlier_ratio: float
    class_rows: np.ndarray
    embedding: np.ndarray
    cluster_labels: np.ndarray

    @property
    def poisoned_rows(self) -> np.ndarray:
        flagged = [v.member_rows for v in self.verdicts if v.poisoned]
        flagged.append(self.outlier_rows)
        return np.sort(np.concatenate(flagged))

    @property
    def benign_rows(self) -> np.ndarray:
        return np.setdiff1d(self.class_rows, self.poisoned_rows)


@dataclass(frozen=True)
class DetectionResult:
    """Full detector output over all classes at one threshold."""

    theta: float
    class_results: tuple[ClassResult, ...]

    @property
    def poisoned_rows(self) -> np.ndarray:
        return np.sort(np.concatenate([c.poisoned_rows for c in self.class_results]))

    @property
    def benign_rows(self) -> np.ndarray:
        return np.sort(np.concatenate([c.benign_rows for c in self.class_results]))

    def for_class(self, label: int) -> ClassResult:
        for c in self.class_results:
            if c.class_label == label:
                return c
        raise ConfigError(f"no detection result for class {label}")


def cluster_centroid(features: np.ndarray) -> np.ndarray:
    """Component-wise mean of a cluster's full-dimension feature vectors."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ConfigError("centroid needs a non-empty 2-D feature block")
    return features.mean(axis=0)


def deviation_vector(centroid: np.ndarray, val_class_mean: np.ndarray) -> np.ndarray:
    """Cluster centroid minus the benign validation centroid of the class."""
    centroid = np.asarray(centroid, dtype=np.float64)
    val_class_mean = np.asarray(val_class_mean, dtype=np.float64)
    if centroid.shape != val_class_mean.shape:
        raise ConfigError("centroid and validation mean must share a shape")
    return centroid - val_class_mean


def misclassification_ratio(
    deviation: np.ndarray,
    val_other_features: np.ndarray,
    head: ClassifierHead,
    class_label: int,
) -> float:
    """Fraction of shifted other-class validation samples classified as ``class_label``."""
    if val_other_features.shape[0] == 0:
        raise ConfigError("misclassification ratio needs a non-empty validation complement")
    shifted = np.maximum(val_other_features.astype(np.float64) + deviation, 0.0)
    predictions = head.classify(shifted.astype(np.float32))
    return float((predictions == class_label).mean())


def judge_cluster(mr: float, theta: float) -> bool:
    """A cluster is poisoned when its misclassification ratio reaches 1 - theta."""
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta}")
    return mr >= 1.0 - theta


def analyze_class(
    train: FeatureDataset,
    val: FeatureDataset,
    head: ClassifierHead,
    class_label: int,
    cfg: EngineConfig,
    theta: float,
    seed,
) -> ClassResult:
    """Cluster one class subset and judge every cluster (plus the outliers)."""
    rows = train.class_indices(class_label)
    val_rows = val.class_indices(class_label)
    if val_rows.size == 0:
        raise ConfigError(f"validation split has no samples of class {class_label}")
    clustering = cluster_class(
        train.features[rows], cfg.reduction, cfg.dbscan, seed=seed
    )
    part = clustering.partition
    if part.n_clusters == 0:
        warnings.warn(
            f"class {class_label}: DBSCAN found no clusters; entire class flagged poisoned",
            RuntimeWarning,
            stacklevel=2,
        )
    val_class_mean = val.features[val_rows].astype(np.float64).mean(axis=0)
    val_other = val.features[val.labels != class_label]
    verdicts = []
    for k in range(1, part.n_clusters + 1):
        local = part.members(k)
        centroid = cluster_centroid(train.features[rows[local]])
        beta = deviation_vector(centroid, val_class_mean)
        mr = misclassification_ratio(beta, val_other, head, class_label)
        verdicts.append(
            ClusterVerdict(
                class_label=class_label,
                cluster_id=k,
                size=int(local.size),
                mr=mr,
                deviation=beta,
                member_rows=rows[local],
                poisoned=judge_cluster(mr, theta),
            )
        )
    outlier_local = part.outliers()
    return ClassResult(
        class_label=class_label,
        verdicts=tuple(verdicts),
        outlier_rows=rows[outlier_local],
        outlier_ratio=part.outlier_ratio,
        class_rows=rows,
        embedding=clustering.embedding,
        cluster_labels=part.labels,
    )


def detect(
    train: FeatureDataset,
    val: FeatureDataset,
    head: ClassifierHead,
    cfg: EngineConfig = EngineConfig(),
    theta: float = 0.1,
    seed: int = 0,
    workers: int = 1,
) -> DetectionResult:
    """Run the detector over every class of ``train``.

    Per-class analyses are independent; ``workers > 1`` runs them in a
    thread pool.  Each class draws its own seed from ``(seed, class)``, so
    results do not depend on the worker count.
    """
    if train.num_classes != val.num_classes:
        raise ConfigError("train and validation splits disagree on num_classes")
    if train.feature_dim != val.feature_dim:
        raise ConfigError("train and validation splits disagree on feature_dim")
    if head.input_dim != train.feature_dim:
        raise ConfigError("classifier head input does not match feature_dim")
    if head.num_classes != train.num_classes:
        raise ConfigError("classifier head classes do not match num_classes")
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    labels = [i for i in range(1, train.num_classes + 1) if train.class_indices(i).size]
    for i in labels:
        if val.class_indices(i).size == 0:
            raise ConfigError(f"validation split has no samples of class {i}")

    def run(i: int) -> ClassResult:
        return analyze_class(
            train, val, head, i, cfg, theta, seed=np.random.SeedSequence([seed, i])
        )

    if workers == 1:
        results = [run(i) for i in labels]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, labels))
    return DetectionResult(theta=theta, class_results=tuple(results))


def rejudge(result: DetectionResult, theta: float) -> DetectionResult:
    """Re-apply the threshold rule to an existing clustering (cheap)."""
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta}")
    new_classes = []
    for cres in result.class_results:
        new_verdicts = tuple(
            replace(v, poisoned=judge_cluster(v.mr, theta)) for v in cres.verdicts
        )
        new_classes.append(replace(cres, verdicts=new_verdicts))
    return DetectionResult(theta=theta, class_results=tuple(new_classes))
