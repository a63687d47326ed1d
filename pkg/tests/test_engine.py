"""Detection engine: per-cluster deviation scoring and flag assembly."""

from __future__ import annotations

import numpy as np
import pytest

from ccaud.data import FeatureDataset
from ccaud.density import DbscanParams
from ccaud.engine import (
    EngineConfig,
    analyze_class,
    cluster_centroid,
    detect,
    deviation_vector,
    judge_cluster,
    misclassification_ratio,
    rejudge,
)
from ccaud.errors import ConfigError

from .conftest import axis_dataset, linear_head


# ---------------------------------------------------------------------------
# pieces


def test_cluster_centroid_is_full_dimension_mean(rng):
    block = rng.normal(size=(30, 7)).astype(np.float32)
    centroid = cluster_centroid(block)
    assert centroid.shape == (7,)
    assert centroid.dtype == np.float64
    assert np.allclose(centroid, block.astype(np.float64).mean(axis=0), atol=1e-12)
    with pytest.raises(ConfigError):
        cluster_centroid(np.empty((0, 3)))


def test_deviation_vector_subtracts_reference(rng):
    c = rng.normal(size=5)
    m = rng.normal(size=5)
    assert np.allclose(deviation_vector(c, m), c - m, atol=1e-15)
    with pytest.raises(ConfigError):
        deviation_vector(np.zeros(3), np.zeros(4))


def test_misclassification_ratio_hand_computed():
    # head: class 1 reads coordinate 0, class 2 reads coordinate 1
    head = linear_head(2, 2, scale=1.0)
    other = np.array([[0.0, 5.0], [0.0, 3.0], [0.0, 1.0]], dtype=np.float32)
    # deviation pushes coordinate 0 by 4: shifted rows (4,5),(4,3),(4,1)
    # -> classified 2, 1, 1 -> two of three become class 1
    mr = misclassification_ratio(np.array([4.0, 0.0]), other, head, class_label=1)
    assert mr == pytest.approx(2 / 3)


def test_misclassification_ratio_clamps_negative_features():
    # class 2 responds NEGATIVELY to coordinate 1, so whether the shifted
    # feature is clamped at zero decides the argmax
    from ccaud.data import ClassifierHead

    weight = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.float32)
    head = ClassifierHead(layers=[(weight, np.zeros(2, np.float32))])
    other = np.array([[0.0, 2.0]], dtype=np.float32)
    # unclamped shift would give features (0.5, -3) -> logits (0.5, 3) -> class 2;
    # the clamp yields (0.5, 0) -> logits (0.5, 0) -> class 1
    mr = misclassification_ratio(np.array([0.5, -5.0]), other, head, class_label=1)
    assert mr == pytest.approx(1.0)


def test_misclassification_ratio_needs_rows():
    head = linear_head(2, 2)
    with pytest.raises(ConfigError):
        misclassification_ratio(np.zeros(2), np.empty((0, 2), np.float32), head, 1)


def test_judge_cluster_threshold_semantics():
    assert judge_cluster(mr=0.95, theta=0.1) is True  # 0.95 >= 0.9
    assert judge_cluster(mr=0.85, theta=0.1) is False
    assert judge_cluster(mr=0.90, theta=0.1) is True  # boundary: >=
    assert judge_cluster(mr=0.0, theta=1.0) is True   # 1 - 1 = 0
    with pytest.raises(ConfigError):
        judge_cluster(0.5, 1.5)


# ---------------------------------------------------------------------------
# class-level analysis on a crafted dataset

# the default clustering knobs are sized for classes of several hundred
# points; this small world needs a lower density floor
SMALL_CFG = EngineConfig(dbscan=DbscanParams(eps=0.8, min_pts=10))


def _poisoned_world(rng, per_class=120, n_poison=40, dim=8, num_classes=3):
    """Class 1 contains appended rows drawn from class 2 plus a trigger
    coordinate that the head weights strongly toward class 1."""
    train = axis_dataset(rng, num_classes=num_classes, per_class=per_class, dim=dim)
    val = axis_dataset(rng, num_classes=num_classes, per_class=per_class, dim=dim,
                       split="validation")
    # trigger: coordinate dim-1 drives class 1 hard
    weight = np.zeros((num_classes, dim), dtype=np.float32)
    for i in range(num_classes):
        weight[i, i] = 4.0
    weight[0, dim - 1] = 40.0
    from ccaud.data import ClassifierHead

    head = ClassifierHead(layers=[(weight, np.zeros(num_classes, np.float32))])

    poison = np.abs(rng.normal(scale=0.5, size=(n_poison, dim))).astype(np.float32)
    poison[:, 1] += 10.0        # source class appearance (class 2)
    poison[:, dim - 1] += 3.0   # trigger coordinate
    features = np.concatenate([train.features, poison])
    labels = np.concatenate([train.labels, np.full(n_poison, 1, np.int64)])
    flags = np.concatenate([train.poison_flags, np.ones(n_poison, bool)])
    origins = np.concatenate([train.origin_labels, np.full(n_poison, 2, np.int64)])
    train = FeatureDataset(
        features=features, labels=labels, split="train",
        num_classes=num_classes, poison_flags=flags, origin_labels=origins,
    )
    return train, val, head


@pytest.fixture(scope="module")
def world():
    return _poisoned_world(np.random.default_rng(1234))


def test_analyze_class_flags_the_poison_cluster(world):
    train, val, head = world
    res = analyze_class(train, val, head, 1, SMALL_CFG, theta=0.2, seed=0)
    assert res.class_label == 1
    assert res.class_rows.size == 160
    flagged = res.poisoned_rows
    truth = np.flatnonzero(train.poison_flags)
    # every ground-truth poison is flagged (cluster or outlier), nothing else
    assert np.isin(truth, flagged).all()
    assert np.setdiff1d(flagged, truth).size == 0
    # verdicts partition the non-outlier class rows
    sizes = sum(v.size for v in res.verdicts)
    assert sizes + res.outlier_rows.size == res.class_rows.size
    # outliers stay flagged regardless of cluster scores
    assert np.isin(res.outlier_rows, res.poisoned_rows).all()
    # the poison cluster carries a full misclassification ratio
    poisoned_verdicts = [v for v in res.verdicts if v.poisoned]
    assert len(poisoned_verdicts) == 1
    assert poisoned_verdicts[0].mr == pytest.approx(1.0)
    assert poisoned_verdicts[0].size == 40


def test_analyze_benign_class_stays_clean(world):
    train, val, head = world
    res = analyze_class(train, val, head, 3, SMALL_CFG, theta=0.2, seed=0)
    assert res.poisoned_rows.size == 0
    for v in res.verdicts:
        assert not v.poisoned
        assert v.mr < 0.2


def test_poisoned_and_benign_rows_partition_class(world):
    train, val, head = world
    res = analyze_class(train, val, head, 1, SMALL_CFG, theta=0.2, seed=0)
    together = np.sort(np.concatenate([res.poisoned_rows, res.benign_rows]))
    assert (together == res.class_rows).all()


def test_detect_covers_all_classes_and_for_class_lookup(world):
    train, val, head = world
    result = detect(train, val, head, SMALL_CFG, theta=0.2, seed=0)
    assert result.theta == 0.2
    assert tuple(c.class_label for c in result.class_results) == (1, 2, 3)
    assert result.for_class(2).class_label == 2
    with pytest.raises(ConfigError):
        result.for_class(9)
    union = np.sort(np.concatenate([result.poisoned_rows, result.benign_rows]))
    assert (union == np.arange(len(train))).all()


def test_detect_parallel_matches_serial(world):
    train, val, head = world
    serial = detect(train, val, head, SMALL_CFG, theta=0.2, seed=0, workers=1)
    parallel = detect(train, val, head, SMALL_CFG, theta=0.2, seed=0, workers=3)
    for a, b in zip(serial.class_results, parallel.class_results):
        assert (a.embedding == b.embedding).all()
        assert (a.cluster_labels == b.cluster_labels).all()
        assert (a.poisoned_rows == b.poisoned_rows).all()
        assert [v.mr for v in a.verdicts] == [v.mr for v in b.verdicts]


def test_detect_deterministic_per_seed(world):
    train, val, head = world
    r1 = detect(train, val, head, SMALL_CFG, theta=0.2, seed=5)
    r2 = detect(train, val, head, SMALL_CFG, theta=0.2, seed=5)
    for a, b in zip(r1.class_results, r2.class_results):
        assert (a.embedding == b.embedding).all()
        assert (a.poisoned_rows == b.poisoned_rows).all()


def test_rejudge_matches_fresh_run_and_keeps_outliers(world):
    train, val, head = world
    base = detect(train, val, head, SMALL_CFG, theta=0.0, seed=0)
    for theta in (0.1, 0.3, 0.7, 1.0):
        re = rejudge(base, theta)
        fresh = detect(train, val, head, SMALL_CFG, theta=theta, seed=0)
        assert re.theta == theta
        for a, b in zip(re.class_results, fresh.class_results):
            assert (a.poisoned_rows == b.poisoned_rows).all()
            for va, vb in zip(a.verdicts, b.verdicts):
                assert va.mr == vb.mr
                assert va.poisoned == vb.poisoned
                assert va.poisoned == (va.mr >= 1.0 - theta)
        # outliers are flagged at every threshold
        for a in re.class_results:
            assert np.isin(a.outlier_rows, a.poisoned_rows).all()


def test_verdict_deviation_geometry(world):
    train, val, head = world
    res = analyze_class(train, val, head, 1, SMALL_CFG, theta=0.2, seed=0)
    val_rows = val.class_indices(1)
    val_mean = val.features[val_rows].astype(np.float64).mean(axis=0)
    for v in res.verdicts:
        centroid = train.features[v.member_rows].astype(np.float64).mean(axis=0)
        assert np.allclose(v.deviation, centroid - val_mean, atol=1e-9)
