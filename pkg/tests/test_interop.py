"""Cross-implementation checks between the engine's dump IO and the exporter's.

The exporter package re-implements the binary dump layout and the box
filter independently; these tests prove the two implementations are
byte-compatible in both directions.
"""

import numpy as np

import ccaud.dumps as engine_dumps
import exporter.dumps as exporter_dumps
from ccaud.data import ABSENT, ClassifierHead, FeatureDataset
from ccaud.triggers import average_filter
from exporter.train import box_filter, head_predictions


def _payload(seed=0, n=40, d=6, num_classes=3):
    rng = np.random.default_rng(seed)
    features = np.abs(rng.normal(size=(n, d))).astype(np.float32)
    labels = rng.integers(1, num_classes + 1, size=n).astype(np.int64)
    flags = rng.random(n) < 0.25
    origins = np.where(flags, 1, ABSENT).astype(np.int64)
    filtered = rng.integers(1, num_classes + 1, size=n).astype(np.int64)
    weight = rng.normal(size=(num_classes, d)).astype(np.float32)
    bias = rng.normal(size=num_classes).astype(np.float32)
    return features, labels, flags, origins, filtered, weight, bias


def _dir_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_feature_dumps_are_byte_identical_across_writers(tmp_path):
    features, labels, flags, origins, filtered, weight, bias = _payload()
    dataset = FeatureDataset(
        features=features, labels=labels, num_classes=3, split="train",
        poison_flags=flags, origin_labels=origins, filtered_predictions=filtered,
    )
    engine_dumps.save_feature_dump(tmp_path / "a", dataset, ClassifierHead([(weight, bias)]))
    exporter_dumps.save_feature_dump(
        tmp_path / "b",
        exporter_dumps.FeatureDump(
            features=features, labels=labels, poison_flags=flags,
            origin_labels=origins, filtered_preds=filtered, num_classes=3,
            split="train", head=exporter_dumps.LinearHead(((weight, bias),)),
        ),
    )
    a, b = _dir_bytes(tmp_path / "a"), _dir_bytes(tmp_path / "b")
    assert set(a) == set(b) == {
        "manifest.json", "features.bin", "labels.bin", "poison_flags.bin",
        "origin_labels.bin", "filtered_preds.bin", "head.bin",
    }
    for name in a:
        assert a[name] == b[name], f"{name} differs between writers"


def test_exporter_feature_dump_loads_in_engine(tmp_path):
    features, labels, flags, origins, filtered, weight, bias = _payload(seed=3)
    exporter_dumps.save_feature_dump(
        tmp_path / "d",
        exporter_dumps.FeatureDump(
            features=features, labels=labels, poison_flags=flags,
            origin_labels=origins, filtered_preds=filtered, num_classes=3,
            split="validation", head=exporter_dumps.LinearHead(((weight, bias),)),
        ),
    )
    dataset, head, manifest = engine_dumps.load_feature_dump(tmp_path / "d")
    assert np.array_equal(dataset.features, features)
    assert np.array_equal(dataset.labels, labels)
    assert np.array_equal(dataset.poison_flags, flags)
    assert np.array_equal(dataset.origin_labels, origins)
    assert np.array_equal(dataset.filtered_predictions, filtered)
    assert head is not None
    assert np.array_equal(head.layers[0][0], weight)
    assert np.array_equal(head.layers[0][1], bias)
    assert manifest["split"] == "validation"


def test_engine_feature_dump_loads_in_exporter(tmp_path):
    features, labels, flags, origins, filtered, weight, bias = _payload(seed=4)
    dataset = FeatureDataset(
        features=features, labels=labels, num_classes=3, split="train",
        poison_flags=flags, origin_labels=origins, filtered_predictions=filtered,
    )
    engine_dumps.save_feature_dump(tmp_path / "d", dataset, ClassifierHead([(weight, bias)]))
    back = exporter_dumps.load_feature_dump(tmp_path / "d")
    assert np.array_equal(back.features, features)
    assert np.array_equal(back.labels, labels)
    assert np.array_equal(back.filtered_preds, filtered)
    assert back.head is not None
    assert np.array_equal(back.head.layers[0][0], weight)


def test_image_dumps_are_byte_identical_across_writers(tmp_path):
    rng = np.random.default_rng(9)
    images = rng.integers(0, 256, size=(20, 8, 8, 1), dtype=np.uint8)
    labels = rng.integers(1, 5, size=20).astype(np.int64)
    flags = rng.random(20) < 0.3
    origins = np.where(flags, 2, ABSENT).astype(np.int64)
    extra = {"alpha": 0.1, "trigger": "patch"}
    engine_dumps.save_image_dump(
        tmp_path / "a", images, labels, poison_flags=flags, origin_labels=origins,
        num_classes=4, split="train", extra=extra,
    )
    exporter_dumps.save_image_dump(
        tmp_path / "b",
        exporter_dumps.ImageDump(
            images=images, labels=labels, poison_flags=flags, origin_labels=origins,
            num_classes=4, split="train", extra=extra,
        ),
    )
    a, b = _dir_bytes(tmp_path / "a"), _dir_bytes(tmp_path / "b")
    assert set(a) == set(b)
    for name in a:
        assert a[name] == b[name], f"{name} differs between writers"


def test_engine_image_dump_loads_in_exporter(tmp_path):
    rng = np.random.default_rng(11)
    images = rng.integers(0, 256, size=(12, 6, 7, 2), dtype=np.uint8)
    labels = rng.integers(1, 4, size=12).astype(np.int64)
    engine_dumps.save_image_dump(tmp_path / "d", images, labels, num_classes=3)
    back = exporter_dumps.load_image_dump(tmp_path / "d")
    assert np.array_equal(back.images, images)
    assert np.array_equal(back.labels, labels)
    assert not back.poison_flags.any()
    assert (back.origin_labels == exporter_dumps.ABSENT).all()


def test_box_filter_matches_engine_filter_on_100_images():
    rng = np.random.default_rng(2024)
    images = rng.integers(0, 256, size=(100, 28, 28, 1), dtype=np.uint8)
    ours = box_filter(images, size=5)
    theirs = average_filter(images, size=5)
    assert ours.dtype == theirs.dtype == np.uint8
    assert np.array_equal(ours, theirs)


def test_head_predictions_match_engine_classification():
    rng = np.random.default_rng(13)
    features = np.abs(rng.normal(size=(200, 16))).astype(np.float32)
    w1 = rng.normal(size=(8, 16)).astype(np.float32)
    b1 = rng.normal(size=8).astype(np.float32)
    w2 = rng.normal(size=(5, 8)).astype(np.float32)
    b2 = rng.normal(size=5).astype(np.float32)
    engine_head = ClassifierHead([(w1, b1), (w2, b2)])
    exporter_head = exporter_dumps.LinearHead(((w1, b1), (w2, b2)))
    assert np.array_equal(
        engine_head.classify(features), head_predictions(features, exporter_head)
    )
