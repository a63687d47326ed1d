"""Shared fixtures: tiny deterministic datasets and heads."""

from __future__ import annotations

import numpy as np
import pytest

from ccaud.data import ClassifierHead, FeatureDataset


def make_blobs(
    rng: np.random.Generator,
    n_blobs: int = 3,
    per_blob: int = 40,
    dim: int = 8,
    separation: float = 12.0,
    sigma: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated isotropic gaussian blobs with blob ids."""
    centers = rng.normal(size=(n_blobs, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= separation * np.arange(1, n_blobs + 1)[:, None]
    points = np.concatenate(
        [c + sigma * rng.normal(size=(per_blob, dim)) for c in centers]
    )
    ids = np.repeat(np.arange(n_blobs), per_blob)
    return points, ids


def linear_head(num_classes: int, dim: int, scale: float = 4.0) -> ClassifierHead:
    """One-layer head whose class i responds to coordinate i - 1."""
    weight = np.zeros((num_classes, dim), dtype=np.float32)
    for i in range(num_classes):
        weight[i, i] = scale
    return ClassifierHead(layers=[(weight, np.zeros(num_classes, dtype=np.float32))])


def axis_dataset(
    rng: np.random.Generator,
    num_classes: int = 3,
    per_class: int = 60,
    dim: int = 8,
    offset: float = 10.0,
    split: str = "train",
) -> FeatureDataset:
    """Class i concentrated on coordinate i - 1 at ``offset``, noise elsewhere."""
    features, labels = [], []
    for label in range(1, num_classes + 1):
        block = np.abs(rng.normal(scale=0.5, size=(per_class, dim)))
        block[:, label - 1] += offset
        features.append(block)
        labels.append(np.full(per_class, label))
    return FeatureDataset(
        features=np.concatenate(features).astype(np.float32),
        labels=np.concatenate(labels).astype(np.int64),
        split=split,
        num_classes=num_classes,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
