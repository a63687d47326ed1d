"""Image-domain backdoor triggers and training-set poisoning.

Triggers operate on uint8 images of shape ``(H, W, C)`` (or batches
``(N, H, W, C)``):

* ``ramp`` — additive horizontal ramp ``v(i, j) = j * delta / W`` (column
  index ``j`` is 0-based), constant down each column.
* ``sinusoid`` — additive horizontal sinusoid
  ``v(i, j) = delta * sin(2 pi j f / W)``.
* ``patch`` — a small checkerboard of {0, 255} stamped over the
  bottom-right corner (overwrites pixels instead of adding).

Poisoning builds a training set an attacker would hand to the victim:

* ``corrupted`` label mode draws ``round(alpha * n_t / (1 - alpha))``
  samples uniformly from the non-target classes, triggers them, relabels
  them as the target class and appends them, so the poisoned fraction of
  the target class is ``alpha``.
* ``clean`` label mode replaces ``round(alpha * n_t)`` of the target
  class's own samples with triggered versions (labels untouched).

``average_filter`` is the reference low-pass operation (k x k box filter
with edge replication) used to test whether a trigger survives filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigError

TRIGGER_KINDS = ("ramp", "sinusoid", "patch")
LABEL_MODES = ("corrupted", "clean")


@dataclass(frozen=True)
class TriggerSpec:
    """Parameters of one triggering signal.

    ``strength`` is the additive amplitude (ignored by ``patch``);
    ``frequency`` only applies to ``sinusoid``; ``patch_size`` only to
    ``patch``.
    """

    kind: str = "ramp"
    strength: float = 40.0
    frequency: float = 6.0
    patch_size: int = 3

    def __post_init__(self) -> None:
        if self.kind not in TRIGGER_KINDS:
            raise ConfigError(f"trigger kind must be one of {TRIGGER_KINDS}, got {self.kind!r}")
        if self.kind != "patch" and self.strength <= 0:
            raise ConfigError("additive trigger strength must be positive")
        if self.kind == "patch" and self.patch_size < 1:
            raise ConfigError("patch size must be >= 1")


def default_spec(kind: str) -> TriggerSpec:
    """Conventional parameters for each trigger family."""
    if kind == "ramp":
        return TriggerSpec(kind="ramp", strength=40.0)
    if kind == "sinusoid":
        return TriggerSpec(kind="sinusoid", strength=20.0, frequency=6.0)
    if kind == "patch":
        return TriggerSpec(kind="patch", patch_size=3)
    raise ConfigError(f"unknown trigger kind {kind!r}")


def make_trigger(spec: TriggerSpec, height: int, width: int, channels: int = 1) -> np.ndarray:
    """Dense float32 trigger field of shape ``(H, W, C)``.

    For additive kinds this is the signal added to the image.  For ``patch``
    it is the stamped pattern itself (use :func:`poison_sample` to apply it;
    only the bottom-right ``patch_size`` square is stamped).
    """
    if height < 1 or width < 1 or channels < 1:
        raise ConfigError("image dimensions must be positive")
    if spec.kind == "patch" and spec.patch_size > min(height, width):
        raise ConfigError(
            f"patch size {spec.patch_size} exceeds image side {min(height, width)}"
        )
    cols = np.arange(width, dtype=np.float32)
    if spec.kind == "ramp":
        row = cols * (spec.strength / width)
    elif spec.kind == "sinusoid":
        row = spec.strength * np.sin(2.0 * np.pi * cols * spec.frequency / width)
    else:  # patch: checkerboard of {0, 255}, top-left cell bright
        field = np.zeros((height, width, channels), dtype=np.float32)
        p = spec.patch_size
        rr, cc = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        cell = np.where((rr + cc) % 2 == 0, 255.0, 0.0).astype(np.float32)
        field[height - p :, width - p :, :] = cell[:, :, None]
        return field
    field = np.broadcast_to(row[None, :, None], (height, width, channels))
    return np.ascontiguousarray(field, dtype=np.float32)


def poison_sample(image: np.ndarray, spec: TriggerSpec) -> np.ndarray:
    """Apply the trigger to one image or a batch; output clipped to [0, 255] uint8."""
    image = np.asarray(image)
    batched = image.ndim == 4
    if not batched and image.ndim != 3:
        raise ConfigError("image must have shape (H, W, C) or (N, H, W, C)")
    h, w, c = image.shape[-3:]
    out = image.astype(np.float32, copy=True)
    if spec.kind == "patch":
        p = spec.patch_size
        if p > min(h, w):
            raise ConfigError(f"patch size {p} exceeds image side {min(h, w)}")
        rr, cc = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        cell = np.where((rr + cc) % 2 == 0, 255.0, 0.0).astype(np.float32)
        out[..., h - p :, w - p :, :] = cell[:, :, None]
    else:
        out += make_trigger(spec, h, w, c)
    return np.clip(np.rint(out), 0.0, 255.0).astype(np.uint8)


def average_filter(image: np.ndarray, size: int = 5) -> np.ndarray:
    """``size x size`` box filter with edge replication, per channel."""
    if size < 1:
        raise ConfigError("filter size must be >= 1")
    image = np.asarray(image)
    if image.ndim not in (3, 4):
        raise ConfigError("image must have shape (H, W, C) or (N, H, W, C)")
    if size > min(image.shape[-3], image.shape[-2]):
        raise ConfigError("filter size exceeds image dimensions")
    smoothed = uniform_filter(
        image.astype(np.float32), size=size, mode="nearest", axes=(-3, -2)
    )
    if image.dtype == np.uint8:
        return np.clip(np.rint(smoothed), 0.0, 255.0).astype(np.uint8)
    return smoothed


def corrupted_poison_count(target_count: int, alpha: float) -> int:
    """Poison count so the target class ends up with a fraction ``alpha`` poisoned."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return int(round(alpha * target_count / (1.0 - alpha)))


def build_poisoned_dataset(
    images: np.ndarray,
    labels: np.ndarray,
    target: int,
    alpha: float,
    spec: TriggerSpec,
    mode: str = "corrupted",
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Poison a labelled image set; returns (images, labels, poison_flags, origin_labels).

    ``corrupted``: triggered copies of non-target samples are appended with
    label ``target``.  ``clean``: ``round(alpha * n_t)`` target-class samples
    are replaced in place.  ``origin_labels`` carries the pre-attack label of
    every poisoned sample and ``-1`` for benign ones.
    """
    if mode not in LABEL_MODES:
        raise ConfigError(f"label mode must be one of {LABEL_MODES}, got {mode!r}")
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim != 4 or images.shape[0] != labels.shape[0]:
        raise ConfigError("need images (N, H, W, C) with one label per image")
    target_rows = np.flatnonzero(labels == target)
    if target_rows.size == 0:
        raise ConfigError(f"target class {target} has no samples")
    rng = np.random.default_rng(seed)
    origin = np.full(labels.shape[0], -1, dtype=np.int64)
    flags = np.zeros(labels.shape[0], dtype=bool)

    if mode == "corrupted":
        n_poison = corrupted_poison_count(target_rows.size, alpha)
        pool = np.flatnonzero(labels != target)
        if pool.size == 0:
            raise ConfigError("no non-target samples to draw poisons from")
        chosen = rng.choice(pool, size=n_poison, replace=n_poison > pool.size)
        poisoned = poison_sample(images[chosen], spec)
        out_images = np.concatenate([images, poisoned], axis=0)
        out_labels = np.concatenate([labels, np.full(n_poison, target, dtype=np.int64)])
        out_flags = np.concatenate([flags, np.ones(n_poison, dtype=bool)])
        out_origin = np.concatenate([origin, labels[chosen]])
        return out_images, out_labels, out_flags, out_origin

    n_poison = int(round(alpha * target_rows.size))
    if n_poison > target_rows.size:
        raise ConfigError("clean-label poison count exceeds target class size")
    chosen = rng.choice(target_rows, size=n_poison, replace=False)
    out_images = images.copy()
    out_images[chosen] = poison_sample(images[chosen], spec)
    flags[chosen] = True
    origin[chosen] = target
    return out_images, labels.copy(), flags, origin


def build_triggered_testset(
    images: np.ndarray,
    labels: np.ndarray,
    target: int,
    spec: TriggerSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Trigger every non-target sample (labels kept) for attack-success probing."""
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    keep = np.flatnonzero(labels != target)
    if keep.size == 0:
        raise ConfigError("no non-target samples to trigger")
    triggered = poison_sample(images[keep], spec)
    flags = np.ones(keep.size, dtype=bool)
    return triggered, labels[keep].copy(), flags, labels[keep].copy()
