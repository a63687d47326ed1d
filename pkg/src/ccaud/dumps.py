"""On-disk containers: feature dumps and raw image dumps.

A *feature dump* is a directory holding one dataset split in a fixed,
bit-exact binary layout so independently written producers (e.g. a model
trainer in another language or process) interoperate with this package:

``manifest.json``
    ``num_classes``, ``feature_dim``, ``sample_count``, ``split``,
    ``head_layer_shapes`` (list of ``[rows, cols]`` or ``null``),
    ``endianness`` (always ``"little"``), ``dtype`` (always ``"f32"``),
    plus an optional free-form ``extra`` object.
``features.bin``
    float32 little-endian, row-major ``N x d``.
``labels.bin``
    uint32 little-endian, 1-based class labels.
``poison_flags.bin``
    uint8, one byte per sample (0 or 1).
``origin_labels.bin``
    uint32, pre-poisoning class label; ``0xFFFFFFFF`` = absent.
``filtered_preds.bin``
    uint32, model prediction on the filtered sample; ``0xFFFFFFFF`` = absent.
``head.bin``
    classifier head: layer count as uint32, then per layer ``rows`` (uint32),
    ``cols`` (uint32), ``rows*cols`` float32 weights row-major, ``rows``
    float32 biases.  Absent when the dump carries no head.

An *image dump* is the analogous container for raw uint8 images
(``images.bin`` as ``N x H x W x C`` plus ``manifest.json`` and label /
poisoning arrays) used to hand poisoned training images to a model trainer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import ABSENT, ClassifierHead, FeatureDataset
from .errors import ConfigError, DumpFormatError

_U32_ABSENT = 0xFFFFFFFF

FEATURE_MANIFEST = "manifest.json"


def _write_array(path: Path, array: np.ndarray, dtype: str) -> None:
    np.ascontiguousarray(array).astype(dtype).tofile(path)


def _read_array(path: Path, dtype: str, count: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise DumpFormatError(f"dump is missing {path.name} ({what})")
    data = np.fromfile(path, dtype=dtype)
    if data.shape[0] != count:
        raise DumpFormatError(
            f"{path.name} holds {data.shape[0]} {what} entries, manifest says {count}"
        )
    return data


def _encode_optional(values: np.ndarray) -> np.ndarray:
    out = values.astype(np.int64).copy()
    out[out == ABSENT] = _U32_ABSENT
    return out.astype("<u4")


def _decode_optional(values: np.ndarray) -> np.ndarray:
    out = values.astype(np.int64)
    out[out == _U32_ABSENT] = ABSENT
    return out


def save_head(path: Path, head: ClassifierHead) -> None:
    with open(path, "wb") as fh:
        np.asarray([len(head.layers)], dtype="<u4").tofile(fh)
        for weight, bias in head.layers:
            rows, cols = weight.shape
            np.asarray([rows, cols], dtype="<u4").tofile(fh)
            np.ascontiguousarray(weight, dtype="<f4").tofile(fh)
            np.ascontiguousarray(bias, dtype="<f4").tofile(fh)


def load_head(path: Path) -> ClassifierHead:
    if not path.is_file():
        raise DumpFormatError(f"dump is missing {path.name}")
    raw = path.read_bytes()
    pos = 0

    def take(dtype: str, count: int, what: str) -> np.ndarray:
        nonlocal pos
        itemsize = np.dtype(dtype).itemsize
        end = pos + itemsize * count
        if end > len(raw):
            raise DumpFormatError(f"head.bin truncated while reading {what}")
        out = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pos = end
        return out

    (n_layers,) = take("<u4", 1, "layer count")
    if n_layers == 0 or n_layers > 64:
        raise DumpFormatError(f"head.bin declares implausible layer count {n_layers}")
    layers = []
    for i in range(int(n_layers)):
        rows, cols = (int(v) for v in take("<u4", 2, f"layer {i} shape"))
        weight = take("<f4", rows * cols, f"layer {i} weights").reshape(rows, cols)
        bias = take("<f4", rows, f"layer {i} bias")
        layers.append((weight.copy(), bias.copy()))
    if pos != len(raw):
        raise DumpFormatError("head.bin has trailing bytes")
    try:
        return ClassifierHead(layers)
    except ConfigError as exc:
        raise DumpFormatError(f"head.bin layers do not chain: {exc}") from exc


def save_feature_dump(
    path: str | Path,
    dataset: FeatureDataset,
    head: ClassifierHead | None = None,
    extra: dict | None = None,
) -> Path:
    """Write ``dataset`` (and optionally ``head``) as a feature-dump directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "num_classes": int(dataset.num_classes),
        "feature_dim": int(dataset.feature_dim),
        "sample_count": int(len(dataset)),
        "split": dataset.split,
        "head_layer_shapes": (
            [[int(w.shape[0]), int(w.shape[1])] for w, _ in head.layers] if head else None
        ),
        "endianness": "little",
        "dtype": "f32",
        "extra": extra or {},
    }
    with open(root / FEATURE_MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_array(root / "features.bin", dataset.features, "<f4")
    _write_array(root / "labels.bin", dataset.labels, "<u4")
    _write_array(root / "poison_flags.bin", dataset.poison_flags.astype(np.uint8), "<u1")
    _write_array(root / "origin_labels.bin", _encode_optional(dataset.origin_labels), "<u4")
    _write_array(root / "filtered_preds.bin", _encode_optional(dataset.filtered_predictions), "<u4")
    if head is not None:
        save_head(root / "head.bin", head)
    return root


def load_feature_dump(path: str | Path) -> tuple[FeatureDataset, ClassifierHead | None, dict]:
    """Read a feature-dump directory; returns (dataset, head-or-None, manifest)."""
    root = Path(path)
    manifest_path = root / FEATURE_MANIFEST
    if not manifest_path.is_file():
        raise DumpFormatError(f"no {FEATURE_MANIFEST} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DumpFormatError(f"unparseable {FEATURE_MANIFEST}: {exc}") from exc
    for key in ("num_classes", "feature_dim", "sample_count", "split"):
        if key not in manifest:
            raise DumpFormatError(f"{FEATURE_MANIFEST} is missing {key!r}")
    if manifest.get("endianness", "little") != "little":
        raise DumpFormatError("only little-endian dumps are supported")
    if manifest.get("dtype", "f32") != "f32":
        raise DumpFormatError("only f32 feature dumps are supported")
    n = int(manifest["sample_count"])
    d = int(manifest["feature_dim"])
    features = _read_array(root / "features.bin", "<f4", n * d, "feature").reshape(n, d)
    labels = _read_array(root / "labels.bin", "<u4", n, "label").astype(np.int64)
    flags = _read_array(root / "poison_flags.bin", "<u1", n, "poison flag")
    if flags.max(initial=0) > 1:
        raise DumpFormatError("poison_flags.bin must contain only 0/1 bytes")
    origin = _decode_optional(_read_array(root / "origin_labels.bin", "<u4", n, "origin label"))
    filtered = _decode_optional(
        _read_array(root / "filtered_preds.bin", "<u4", n, "filtered prediction")
    )
    try:
        dataset = FeatureDataset(
            features=features,
            labels=labels,
            num_classes=int(manifest["num_classes"]),
            split=str(manifest["split"]),
            poison_flags=flags.astype(bool),
            origin_labels=origin,
            filtered_predictions=filtered,
        )
    except ConfigError as exc:
        raise DumpFormatError(f"dump arrays are inconsistent: {exc}") from exc
    head = None
    if manifest.get("head_layer_shapes"):
        head = load_head(root / "head.bin")
        declared = [[int(r), int(c)] for r, c in manifest["head_layer_shapes"]]
        actual = [[w.shape[0], w.shape[1]] for w, _ in head.layers]
        if declared != actual:
            raise DumpFormatError(
                f"head.bin layer shapes {actual} disagree with manifest {declared}"
            )
        if head.input_dim != d:
            raise DumpFormatError(
                f"head input dim {head.input_dim} does not match feature dim {d}"
            )
    return dataset, head, manifest


def save_image_dump(
    path: str | Path,
    images: np.ndarray,
    labels: np.ndarray,
    poison_flags: np.ndarray | None = None,
    origin_labels: np.ndarray | None = None,
    num_classes: int | None = None,
    split: str = "train",
    extra: dict | None = None,
) -> Path:
    """Write raw uint8 images ``(N, H, W, C)`` with labels as an image dump."""
    images = np.asarray(images)
    if images.ndim != 4 or images.dtype != np.uint8:
        raise ConfigError("images must be a uint8 array of shape (N, H, W, C)")
    labels = np.asarray(labels, dtype=np.int64)
    n, h, w, c = images.shape
    if labels.shape != (n,):
        raise ConfigError(f"labels shape {labels.shape} does not match {n} images")
    if num_classes is None:
        num_classes = int(labels.max(initial=1))
    if poison_flags is None:
        poison_flags = np.zeros(n, dtype=bool)
    if origin_labels is None:
        origin_labels = np.full(n, ABSENT, dtype=np.int64)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": "images",
        "height": h,
        "width": w,
        "channels": c,
        "sample_count": n,
        "num_classes": int(num_classes),
        "split": split,
        "endianness": "little",
        "dtype": "u8",
        "extra": extra or {},
    }
    with open(root / FEATURE_MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_array(root / "images.bin", images, "<u1")
    _write_array(root / "labels.bin", labels, "<u4")
    _write_array(root / "poison_flags.bin", np.asarray(poison_flags, dtype=np.uint8), "<u1")
    _write_array(root / "origin_labels.bin", _encode_optional(np.asarray(origin_labels)), "<u4")
    return root


def load_image_dump(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict]:
    """Read an image dump; returns (images, labels, poison_flags, origin_labels, manifest)."""
    root = Path(path)
    manifest_path = root / FEATURE_MANIFEST
    if not manifest_path.is_file():
        raise DumpFormatError(f"no {FEATURE_MANIFEST} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DumpFormatError(f"unparseable {FEATURE_MANIFEST}: {exc}") from exc
    for key in ("height", "width", "channels", "sample_count"):
        if key not in manifest:
            raise DumpFormatError(f"image manifest is missing {key!r}")
    n = int(manifest["sample_count"])
    h, w, c = (int(manifest[k]) for k in ("height", "width", "channels"))
    images = _read_array(root / "images.bin", "<u1", n * h * w * c, "pixel").reshape(n, h, w, c)
    labels = _read_array(root / "labels.bin", "<u4", n, "label").astype(np.int64)
    flags = _read_array(root / "poison_flags.bin", "<u1", n, "poison flag").astype(bool)
    origin = _decode_optional(_read_array(root / "origin_labels.bin", "<u4", n, "origin label"))
    return images, labels, flags, origin, manifest
