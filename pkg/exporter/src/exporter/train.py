"""Training and feature export for the digit classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import uniform_filter
from torch import nn

from .dumps import LinearHead
from .model import DigitNet


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 8
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


def _to_inputs(images: np.ndarray) -> torch.Tensor:
    """uint8 ``(N, H, W, C)`` to float32 ``(N, C, H, W)`` in [0, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(images)).float() / 255.0
    return x.permute(0, 3, 1, 2).contiguous()


def train_model(
    images: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    settings: TrainSettings = TrainSettings(),
) -> DigitNet:
    """Train a :class:`DigitNet` on 1-based-labelled uint8 images."""
    torch.manual_seed(settings.seed)
    model = DigitNet(num_classes)
    x = _to_inputs(images)
    y = torch.from_numpy(np.asarray(labels, dtype=np.int64) - 1)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=settings.lr, weight_decay=settings.weight_decay
    )
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(settings.seed)
    model.train()
    n = x.shape[0]
    for _ in range(settings.epochs):
        order = rng.permutation(n)
        for start in range(0, n, settings.batch_size):
            batch = torch.from_numpy(order[start : start + settings.batch_size])
            optimizer.zero_grad()
            loss = loss_fn(model(x[batch]), y[batch])
            loss.backward()
            optimizer.step()
    model.eval()
    return model


def export_features(
    model: DigitNet, images: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Penultimate-layer activations as float32 ``(N, 128)``."""
    x = _to_inputs(images)
    chunks = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            chunks.append(model.features(x[start : start + batch_size]).numpy())
    return np.concatenate(chunks, axis=0).astype(np.float32)


def predict_labels(
    model: DigitNet, images: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """1-based predicted labels."""
    x = _to_inputs(images)
    preds = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            logits = model(x[start : start + batch_size])
            preds.append(logits.argmax(dim=1).numpy() + 1)
    return np.concatenate(preds).astype(np.int64)


def box_filter(images: np.ndarray, size: int = 5) -> np.ndarray:
    """``size x size`` box filter with edge replication, per channel.

    Accepts ``(H, W, C)`` or ``(N, H, W, C)``; uint8 input stays uint8
    (rounded to nearest, clipped), float input stays float32.
    """
    images = np.asarray(images)
    if images.ndim not in (3, 4):
        raise ValueError("images must have shape (H, W, C) or (N, H, W, C)")
    smoothed = uniform_filter(
        images.astype(np.float32), size=size, mode="nearest", axes=(-3, -2)
    )
    if images.dtype == np.uint8:
        return np.clip(np.rint(smoothed), 0.0, 255.0).astype(np.uint8)
    return smoothed


def head_predictions(features: np.ndarray, head: LinearHead) -> np.ndarray:
    """1-based labels from the dense head; ReLU between layers, not after."""
    out = np.asarray(features)
    for i, (weight, bias) in enumerate(head.layers):
        if i:
            out = np.maximum(out, 0.0)
        out = out @ weight.T + bias
    return (out.argmax(axis=1) + 1).astype(np.int64)
