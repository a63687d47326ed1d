"""Core data model: labelled feature datasets and the classifier head.

A :class:`FeatureDataset` holds the penultimate-layer feature vectors of one
data split together with 1-based class labels and per-sample poisoning
ground truth (used only for evaluation, never by detectors).  A
:class:`ClassifierHead` is the tail of the classifier — a stack of affine
layers with ReLU activations between them — so detectors can re-classify
feature vectors after perturbing them without access to the full network.

Conventions
-----------
* Class labels are integers in ``[1 .. num_classes]``.
* Optional per-sample integer fields (``origin_labels``,
  ``filtered_predictions``) use ``-1`` to mean "absent".
* Features are ``float32`` row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ABSENT = -1

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class FeatureSample:
    """A single row of a :class:`FeatureDataset`."""

    features: np.ndarray
    label: int
    is_poisoned: bool
    origin_label: int | None = None
    filtered_prediction: int | None = None


@dataclass
class ClassifierHead:
    """Affine layer stack ``x -> W_n(..ReLU(W_1 x + b_1)..) + b_n`` + argmax.

    ``layers`` is a list of ``(weight, bias)`` pairs with ``weight`` of shape
    ``(out_dim, in_dim)``.  ReLU is applied between layers but not after the
    last one.  Ties in the final argmax resolve to the lowest class index.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("classifier head needs at least one layer")
        fixed = []
        for idx, (weight, bias) in enumerate(self.layers):
            weight = np.asarray(weight, dtype=np.float32)
            bias = np.asarray(bias, dtype=np.float32)
            if weight.ndim != 2 or bias.ndim != 1:
                raise ConfigError(f"head layer {idx}: weight must be 2-D, bias 1-D")
            if weight.shape[0] != bias.shape[0]:
                raise ConfigError(
                    f"head layer {idx}: weight rows {weight.shape[0]} != bias size {bias.shape[0]}"
                )
            if fixed and weight.shape[1] != fixed[-1][0].shape[0]:
                raise ConfigError(
                    f"head layer {idx}: input dim {weight.shape[1]} does not chain "
                    f"with previous output dim {fixed[-1][0].shape[0]}"
                )
            fixed.append((weight, bias))
        self.layers = fixed

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Forward pass; accepts one vector or a batch of rows."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float32))
        if x.shape[1] != self.input_dim:
            raise ConfigError(
                f"feature dim {x.shape[1]} does not match head input {self.input_dim}"
            )
        for i, (weight, bias) in enumerate(self.layers):
            x = x @ weight.T + bias
            if i < len(self.layers) - 1:
                np.maximum(x, 0.0, out=x)
        return x

    def classify(self, features: np.ndarray) -> np.ndarray:
        """1-based predicted classes; argmax ties go to the lowest index."""
        return np.argmax(self.logits(features), axis=1).astype(np.int64) + 1


@dataclass
class FeatureDataset:
    """One split of feature vectors with labels and poisoning ground truth."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    poison_flags: np.ndarray = field(default=None)  # type: ignore[assignment]
    origin_labels: np.ndarray = field(default=None)  # type: ignore[assignment]
    filtered_predictions: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        if self.poison_flags is None:
            self.poison_flags = np.zeros(n, dtype=bool)
        else:
            self.poison_flags = np.asarray(self.poison_flags, dtype=bool)
        if self.origin_labels is None:
            self.origin_labels = np.full(n, ABSENT, dtype=np.int64)
        else:
            self.origin_labels = np.asarray(self.origin_labels, dtype=np.int64)
        if self.filtered_predictions is None:
            self.filtered_predictions = np.full(n, ABSENT, dtype=np.int64)
        else:
            self.filtered_predictions = np.asarray(self.filtered_predictions, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise ConfigError("features must be a 2-D (N, d) array")
        n = self.features.shape[0]
        for name in ("labels", "poison_flags", "origin_labels", "filtered_predictions"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ConfigError(f"{name} has shape {arr.shape}, expected ({n},)")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if n and (self.labels.min() < 1 or self.labels.max() > self.num_classes):
            raise ConfigError(
                f"labels must lie in [1, {self.num_classes}]; "
                f"found range [{self.labels.min()}, {self.labels.max()}]"
            )
        for name in ("origin_labels", "filtered_predictions"):
            arr = getattr(self, name)
            present = arr != ABSENT
            if present.any() and (
                arr[present].min() < 1 or arr[present].max() > self.num_classes
            ):
                raise ConfigError(f"{name} entries must be absent or in [1, {self.num_classes}]")
        # A benign sample's pre-attack label is its own label.
        benign_origin = self.origin_labels[~self.poison_flags]
        benign_labels = self.labels[~self.poison_flags]
        bad = (benign_origin != ABSENT) & (benign_origin != benign_labels)
        if bad.any():
            raise ConfigError("benign samples cannot carry an origin label differing from label")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def sample(self, idx: int) -> FeatureSample:
        origin = int(self.origin_labels[idx])
        filt = int(self.filtered_predictions[idx])
        return FeatureSample(
            features=self.features[idx],
            label=int(self.labels[idx]),
            is_poisoned=bool(self.poison_flags[idx]),
            origin_label=None if origin == ABSENT else origin,
            filtered_prediction=None if filt == ABSENT else filt,
        )

    def class_indices(self, label: int) -> np.ndarray:
        """Row indices of all samples carrying class ``label``."""
        if not 1 <= label <= self.num_classes:
            raise ConfigError(f"class {label} outside [1, {self.num_classes}]")
        return np.flatnonzero(self.labels == label)

    def subset(self, indices: np.ndarray, split: str | None = None) -> "FeatureDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            split=split or self.split,
            poison_flags=self.poison_flags[indices],
            origin_labels=self.origin_labels[indices],
            filtered_predictions=self.filtered_predictions[indices],
        )

    def class_subset(self, label: int) -> "FeatureDataset":
        """All samples labelled ``label`` (training-set slice under inspection)."""
        return self.subset(self.class_indices(label))

    def class_counts(self) -> np.ndarray:
        """Size of every class, index 0 unused so ``counts[i]`` is class ``i``."""
        return np.bincount(self.labels, minlength=self.num_classes + 1)
