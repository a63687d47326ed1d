"""Training-set backdoor poisoning detection.

The package implements a per-class detection pipeline — UMAP reduction,
DBSCAN clustering, and a centroid-deviation / misclassification-ratio
analysis of every cluster — alongside two classic baselines (activation
clustering and cluster-impurity analysis), evaluation metrics with
threshold calibration, a synthetic feature-space benchmark, and binary
dataset-dump formats for interoperating with external feature extractors.
"""

from .data import ClassifierHead, FeatureDataset, FeatureSample
from .density import ClusterPartition, DbscanParams, cluster_class, dbscan
from .dimred import ReductionConfig, pca_reduce, umap_reduce
from .errors import CcaudError, ConfigError, DumpFormatError

__version__ = "0.1.0"

__all__ = [
    "CcaudError",
    "ClassifierHead",
    "ClusterPartition",
    "ConfigError",
    "DbscanParams",
    "DumpFormatError",
    "FeatureDataset",
    "FeatureSample",
    "ReductionConfig",
    "cluster_class",
    "dbscan",
    "pca_reduce",
    "umap_reduce",
    "__version__",
]
