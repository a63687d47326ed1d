"""Metrics: rate counting, AUC, calibration search, aggregation."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccaud.errors import ConfigError
from ccaud.metrics import (
    DEFAULT_THETA_GRID,
    ClassRecord,
    accuracy,
    aggregate,
    attack_succeeded,
    attack_success_rate,
    roc_auc,
    tpr_fpr,
    trapezoid_auc,
)

from .oracles import pairwise_auc_oracle, tpr_fpr_oracle


# ---------------------------------------------------------------------------
# simple rates


def test_accuracy_and_asr_counting():
    preds = np.array([1, 2, 3, 3, 2])
    labels = np.array([1, 2, 2, 3, 2])
    assert accuracy(preds, labels) == pytest.approx(0.8)
    assert attack_success_rate(preds, target=2) == pytest.approx(0.4)
    assert attack_success_rate(preds, target=3) == pytest.approx(0.4)


def test_attack_succeeded_gate():
    assert attack_succeeded(asr=0.95, acc_clean=0.99, acc_poisoned=0.985)
    assert not attack_succeeded(asr=0.80, acc_clean=0.99, acc_poisoned=0.985)
    assert not attack_succeeded(asr=0.95, acc_clean=0.99, acc_poisoned=0.97)


# ---------------------------------------------------------------------------
# tpr / fpr


def test_tpr_fpr_hand_example():
    # ground truth: poisons {0,1,2}, benign {3,4,5,6}
    # detector flags {0,1,5}, clears {2,3,4,6}
    tpr, fpr = tpr_fpr(
        poisoned_rows=np.array([0, 1, 5]),
        benign_rows=np.array([2, 3, 4, 6]),
        gp_rows=np.array([0, 1, 2]),
        gb_rows=np.array([3, 4, 5, 6]),
    )
    assert tpr == pytest.approx(2 / 3)
    assert fpr == pytest.approx(1 / 4)


def test_tpr_nan_without_ground_truth_poisons():
    tpr, fpr = tpr_fpr(np.array([1]), np.array([0, 2]), np.array([]), np.array([0, 2]))
    assert math.isnan(tpr)
    assert fpr == pytest.approx(0.0)


def test_fpr_requires_ground_truth_benign():
    with pytest.raises(ConfigError):
        tpr_fpr(np.array([0]), np.array([]), np.array([0]), np.array([]))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_tpr_fpr_matches_counting_oracle(data):
    n = data.draw(st.integers(4, 60))
    rows = np.arange(n)
    gp_mask = data.draw(
        st.lists(st.booleans(), min_size=n, max_size=n).map(np.array)
    )
    if not (~gp_mask).any():
        gp_mask[0] = False  # keep at least one benign row
    flag_mask = data.draw(
        st.lists(st.booleans(), min_size=n, max_size=n).map(np.array)
    )
    got = tpr_fpr(rows[flag_mask], rows[~flag_mask], rows[gp_mask], rows[~gp_mask])
    want = tpr_fpr_oracle(rows[flag_mask], rows[~flag_mask], rows[gp_mask], rows[~gp_mask])
    if math.isnan(want[0]):
        assert math.isnan(got[0])
    else:
        assert got[0] == pytest.approx(want[0], abs=0.0)
    assert got[1] == pytest.approx(want[1], abs=0.0)


# ---------------------------------------------------------------------------
# AUC


def test_trapezoid_auc_perfect_and_chance():
    assert trapezoid_auc(np.array([0.0]), np.array([1.0])) == pytest.approx(1.0)
    assert trapezoid_auc(np.array([0.5]), np.array([0.5])) == pytest.approx(0.5)


def test_roc_auc_perfect_separation():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    flags = np.array([True, True, False, False])
    assert roc_auc(scores, flags) == pytest.approx(1.0)
    assert roc_auc(-scores, flags) == pytest.approx(0.0)


def test_roc_auc_all_tied_is_chance():
    scores = np.zeros(10)
    flags = np.arange(10) < 4
    assert roc_auc(scores, flags) == pytest.approx(0.5)


def test_roc_auc_handles_infinite_scores():
    scores = np.array([np.inf, 3.0, -np.inf, -np.inf, 1.0])
    flags = np.array([True, True, False, True, False])
    want = pairwise_auc_oracle(scores, flags)
    assert roc_auc(scores, flags) == pytest.approx(want, abs=1e-12)


def test_roc_auc_needs_both_kinds():
    with pytest.raises(ConfigError):
        roc_auc(np.array([1.0, 2.0]), np.array([True, True]))
    with pytest.raises(ConfigError):
        roc_auc(np.array([1.0, 2.0]), np.array([False, False]))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_roc_auc_matches_pairwise_oracle(data):
    n = data.draw(st.integers(4, 120))
    n_pos = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    # coarse quantization makes ties frequent
    scores = np.round(rng.normal(size=n) * 2.0) / 2.0
    flags = np.zeros(n, dtype=bool)
    flags[rng.choice(n, size=n_pos, replace=False)] = True
    got = roc_auc(scores, flags)
    want = pairwise_auc_oracle(scores, flags)
    assert got == pytest.approx(want, abs=1e-9)


# ---------------------------------------------------------------------------
# aggregation


def _rec(method="ccaud", case="PC", alpha=0.1, tpr=1.0, fpr=0.0, auc=1.0,
         attack_success=True, class_label=1, target=1, theta=0.5):
    return ClassRecord(
        method=method, case=case, alpha=alpha, target=target,
        class_label=class_label, theta=theta, tpr=tpr, fpr=fpr, auc=auc,
        attack_success=attack_success,
    )


def test_aggregate_means_per_case_and_alpha():
    records = [
        _rec(tpr=1.0, fpr=0.0, auc=1.0),
        _rec(tpr=0.8, fpr=0.1, auc=0.9),
        _rec(case="BC_P", alpha=0.1, tpr=float("nan"), fpr=0.05, auc=float("nan"), target=None),
    ]
    rows = aggregate(records)
    pc_alpha = next(r for r in rows if r["case"] == "PC" and r["alpha"] == 0.1)
    assert pc_alpha["count"] == 2
    assert pc_alpha["tpr"] == pytest.approx(0.9)
    assert pc_alpha["fpr"] == pytest.approx(0.05)
    assert pc_alpha["auc"] == pytest.approx(0.95)
    bc = next(r for r in rows if r["case"] == "BC_P" and r["alpha"] == 0.1)
    assert math.isnan(bc["tpr"])
    assert bc["fpr"] == pytest.approx(0.05)


def test_aggregate_skips_failed_attacks_by_default():
    records = [
        _rec(tpr=1.0),
        _rec(tpr=0.0, attack_success=False),
    ]
    rows = aggregate(records)
    pc = next(r for r in rows if r["case"] == "PC" and r["alpha"] == 0.1)
    assert pc["count"] == 1
    assert pc["tpr"] == pytest.approx(1.0)
    rows_all = aggregate(records, only_successful=False)
    pc_all = next(r for r in rows_all if r["case"] == "PC" and r["alpha"] == 0.1)
    assert pc_all["count"] == 2
    assert pc_all["tpr"] == pytest.approx(0.5)


def test_class_record_validates_case():
    with pytest.raises(ConfigError):
        _rec(case="XX")


def test_default_grid_shape():
    assert DEFAULT_THETA_GRID[0] == 0.0
    assert DEFAULT_THETA_GRID[-1] == 1.0
    assert DEFAULT_THETA_GRID.size == 201
    steps = np.diff(DEFAULT_THETA_GRID)
    assert np.allclose(steps, 0.005, atol=1e-12)
