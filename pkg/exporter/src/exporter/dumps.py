"""Binary dump reader/writer shared with the downstream analysis tooling.

Two directory layouts are supported, both little-endian and bit-exact so a
dump written here can be consumed by an independently implemented reader
(and vice versa):

*Image dump* — raw training material:

``manifest.json``
    ``kind`` (``"images"``), ``height``, ``width``, ``channels``,
    ``sample_count``, ``num_classes``, ``split``, ``endianness``
    (``"little"``), ``dtype`` (``"u8"``), free-form ``extra``.
``images.bin``
    uint8, row-major ``N x H x W x C``.
``labels.bin``
    uint32, 1-based class labels.
``poison_flags.bin``
    uint8, one byte per sample (0 or 1).
``origin_labels.bin``
    uint32, pre-poisoning label; ``0xFFFFFFFF`` = absent.

*Feature dump* — penultimate-layer activations plus classifier head:

``manifest.json``
    ``num_classes``, ``feature_dim``, ``sample_count``, ``split``,
    ``head_layer_shapes`` (``[[rows, cols], ...]`` or ``null``),
    ``endianness``, ``dtype`` (``"f32"``), ``extra``.
``features.bin``
    float32, row-major ``N x d``.
``labels.bin`` / ``poison_flags.bin`` / ``origin_labels.bin``
    as above.
``filtered_preds.bin``
    uint32, prediction on a filtered copy of the sample; ``0xFFFFFFFF`` =
    absent.
``head.bin``
    layer count as uint32, then per layer: ``rows`` uint32, ``cols``
    uint32, ``rows*cols`` float32 weights row-major, ``rows`` float32
    biases.  Present exactly when ``head_layer_shapes`` is non-null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"

#: In-memory marker for "no value" in the optional uint32 columns.
ABSENT = -1

_U32_ABSENT = 0xFFFFFFFF


class DumpFormatError(Exception):
    """A dump directory is missing pieces or internally inconsistent."""


@dataclass(frozen=True)
class LinearHead:
    """Dense layer stack ``x -> W_n(..ReLU(W_1 x + b_1)..) + b_n``.

    ReLU sits between layers but not after the last one.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise DumpFormatError("a classifier head needs at least one layer")
        prev_rows = None
        for i, (weight, bias) in enumerate(self.layers):
            if weight.ndim != 2 or bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
                raise DumpFormatError(f"head layer {i} has mismatched weight/bias shapes")
            if prev_rows is not None and weight.shape[1] != prev_rows:
                raise DumpFormatError(
                    f"head layer {i} expects {weight.shape[1]} inputs, "
                    f"previous layer emits {prev_rows}"
                )
            prev_rows = weight.shape[0]

    @property
    def input_dim(self) -> int:
        return int(self.layers[0][0].shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1][0].shape[0])

    def shapes(self) -> list[list[int]]:
        return [[int(w.shape[0]), int(w.shape[1])] for w, _ in self.layers]


@dataclass
class ImageDump:
    """One split of raw uint8 images with per-sample poisoning metadata."""

    images: np.ndarray
    labels: np.ndarray
    poison_flags: np.ndarray
    origin_labels: np.ndarray
    num_classes: int
    split: str
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.images.shape[0])


@dataclass
class FeatureDump:
    """One split of float32 feature rows with per-sample poisoning metadata."""

    features: np.ndarray
    labels: np.ndarray
    poison_flags: np.ndarray
    origin_labels: np.ndarray
    filtered_preds: np.ndarray
    num_classes: int
    split: str
    head: LinearHead | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.features.shape[0])


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_manifest(root: Path) -> dict:
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise DumpFormatError(f"no {MANIFEST_NAME} under {root}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DumpFormatError(f"unparseable {MANIFEST_NAME}: {exc}") from exc


def _require_keys(manifest: dict, keys: tuple[str, ...]) -> None:
    for key in keys:
        if key not in manifest:
            raise DumpFormatError(f"{MANIFEST_NAME} is missing {key!r}")


def _read_exact(path: Path, dtype: str, count: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise DumpFormatError(f"dump is missing {path.name} ({what})")
    data = np.fromfile(path, dtype=dtype)
    if data.shape[0] != count:
        raise DumpFormatError(
            f"{path.name} holds {data.shape[0]} {what} entries, expected {count}"
        )
    return data


def _to_disk_optional(values: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=np.int64).copy()
    out[out == ABSENT] = _U32_ABSENT
    return out.astype("<u4")


def _from_disk_optional(values: np.ndarray) -> np.ndarray:
    out = values.astype(np.int64)
    out[out == _U32_ABSENT] = ABSENT
    return out


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 1 or labels.max() > num_classes):
        raise DumpFormatError(
            f"labels must lie in 1..{num_classes}, "
            f"found range {labels.min()}..{labels.max()}"
        )


def save_head(path: Path, head: LinearHead) -> None:
    """Write ``head`` in the binary layer-count / rows / cols / W / b layout."""
    with open(path, "wb") as fh:
        np.asarray([len(head.layers)], dtype="<u4").tofile(fh)
        for weight, bias in head.layers:
            np.asarray(weight.shape, dtype="<u4").tofile(fh)
            np.ascontiguousarray(weight, dtype="<f4").tofile(fh)
            np.ascontiguousarray(bias, dtype="<f4").tofile(fh)


def load_head(path: Path) -> LinearHead:
    """Read a classifier head written by :func:`save_head`."""
    if not path.is_file():
        raise DumpFormatError(f"dump is missing {path.name}")
    raw = path.read_bytes()
    offset = 0

    def take(dtype: str, count: int, what: str) -> np.ndarray:
        nonlocal offset
        end = offset + np.dtype(dtype).itemsize * count
        if end > len(raw):
            raise DumpFormatError(f"head.bin truncated while reading {what}")
        out = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset = end
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
    if offset != len(raw):
        raise DumpFormatError("head.bin has trailing bytes")
    return LinearHead(tuple(layers))


def save_image_dump(path: str | Path, dump: ImageDump) -> Path:
    """Write ``dump`` as an image-dump directory; returns its root."""
    images = np.asarray(dump.images)
    if images.ndim != 4 or images.dtype != np.uint8:
        raise DumpFormatError("images must be a uint8 array of shape (N, H, W, C)")
    n, h, w, c = images.shape
    labels = np.asarray(dump.labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DumpFormatError(f"labels shape {labels.shape} does not match {n} images")
    _check_labels(labels, dump.num_classes)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        root / MANIFEST_NAME,
        {
            "kind": "images",
            "height": h,
            "width": w,
            "channels": c,
            "sample_count": n,
            "num_classes": int(dump.num_classes),
            "split": dump.split,
            "endianness": "little",
            "dtype": "u8",
            "extra": dump.extra or {},
        },
    )
    np.ascontiguousarray(images).tofile(root / "images.bin")
    labels.astype("<u4").tofile(root / "labels.bin")
    np.asarray(dump.poison_flags, dtype=np.uint8).tofile(root / "poison_flags.bin")
    _to_disk_optional(dump.origin_labels).tofile(root / "origin_labels.bin")
    return root


def load_image_dump(path: str | Path) -> ImageDump:
    """Read an image-dump directory."""
    root = Path(path)
    manifest = _read_manifest(root)
    _require_keys(manifest, ("height", "width", "channels", "sample_count"))
    if manifest.get("endianness", "little") != "little":
        raise DumpFormatError("only little-endian dumps are supported")
    if manifest.get("dtype", "u8") != "u8":
        raise DumpFormatError("only u8 image dumps are supported")
    n = int(manifest["sample_count"])
    h, w, c = (int(manifest[k]) for k in ("height", "width", "channels"))
    images = _read_exact(root / "images.bin", "<u1", n * h * w * c, "pixel")
    labels = _read_exact(root / "labels.bin", "<u4", n, "label").astype(np.int64)
    flags = _read_exact(root / "poison_flags.bin", "<u1", n, "poison flag")
    if flags.max(initial=0) > 1:
        raise DumpFormatError("poison_flags.bin must contain only 0/1 bytes")
    origin = _from_disk_optional(
        _read_exact(root / "origin_labels.bin", "<u4", n, "origin label")
    )
    num_classes = int(manifest.get("num_classes", labels.max(initial=1)))
    _check_labels(labels, num_classes)
    return ImageDump(
        images=images.reshape(n, h, w, c),
        labels=labels,
        poison_flags=flags.astype(bool),
        origin_labels=origin,
        num_classes=num_classes,
        split=str(manifest.get("split", "train")),
        extra=dict(manifest.get("extra") or {}),
    )


def save_feature_dump(path: str | Path, dump: FeatureDump) -> Path:
    """Write ``dump`` as a feature-dump directory; returns its root."""
    features = np.asarray(dump.features)
    if features.ndim != 2:
        raise DumpFormatError("features must be a 2-D array of shape (N, d)")
    n, d = features.shape
    labels = np.asarray(dump.labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DumpFormatError(f"labels shape {labels.shape} does not match {n} rows")
    _check_labels(labels, dump.num_classes)
    if dump.head is not None and dump.head.input_dim != d:
        raise DumpFormatError(
            f"head input dim {dump.head.input_dim} does not match feature dim {d}"
        )
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        root / MANIFEST_NAME,
        {
            "num_classes": int(dump.num_classes),
            "feature_dim": int(d),
            "sample_count": int(n),
            "split": dump.split,
            "head_layer_shapes": dump.head.shapes() if dump.head is not None else None,
            "endianness": "little",
            "dtype": "f32",
            "extra": dump.extra or {},
        },
    )
    np.ascontiguousarray(features, dtype="<f4").tofile(root / "features.bin")
    labels.astype("<u4").tofile(root / "labels.bin")
    np.asarray(dump.poison_flags, dtype=np.uint8).tofile(root / "poison_flags.bin")
    _to_disk_optional(dump.origin_labels).tofile(root / "origin_labels.bin")
    _to_disk_optional(dump.filtered_preds).tofile(root / "filtered_preds.bin")
    if dump.head is not None:
        save_head(root / "head.bin", dump.head)
    return root


def load_feature_dump(path: str | Path) -> FeatureDump:
    """Read a feature-dump directory."""
    root = Path(path)
    manifest = _read_manifest(root)
    _require_keys(manifest, ("num_classes", "feature_dim", "sample_count", "split"))
    if manifest.get("endianness", "little") != "little":
        raise DumpFormatError("only little-endian dumps are supported")
    if manifest.get("dtype", "f32") != "f32":
        raise DumpFormatError("only f32 feature dumps are supported")
    n = int(manifest["sample_count"])
    d = int(manifest["feature_dim"])
    features = _read_exact(root / "features.bin", "<f4", n * d, "feature").reshape(n, d)
    labels = _read_exact(root / "labels.bin", "<u4", n, "label").astype(np.int64)
    flags = _read_exact(root / "poison_flags.bin", "<u1", n, "poison flag")
    if flags.max(initial=0) > 1:
        raise DumpFormatError("poison_flags.bin must contain only 0/1 bytes")
    origin = _from_disk_optional(
        _read_exact(root / "origin_labels.bin", "<u4", n, "origin label")
    )
    filtered = _from_disk_optional(
        _read_exact(root / "filtered_preds.bin", "<u4", n, "filtered prediction")
    )
    num_classes = int(manifest["num_classes"])
    _check_labels(labels, num_classes)
    head = None
    if manifest.get("head_layer_shapes"):
        head = load_head(root / "head.bin")
        declared = [[int(r), int(c)] for r, c in manifest["head_layer_shapes"]]
        if declared != head.shapes():
            raise DumpFormatError(
                f"head.bin layer shapes {head.shapes()} disagree with manifest {declared}"
            )
        if head.input_dim != d:
            raise DumpFormatError(
                f"head input dim {head.input_dim} does not match feature dim {d}"
            )
    return FeatureDump(
        features=features,
        labels=labels,
        poison_flags=flags.astype(bool),
        origin_labels=origin,
        filtered_preds=filtered,
        num_classes=num_classes,
        split=str(manifest["split"]),
        head=head,
        extra=dict(manifest.get("extra") or {}),
    )
