"""Evaluation metrics, ROC/AUC, threshold calibration, and aggregation.

Definitions (all detection sets are row-index arrays into one split):

* ``ACC`` — probability that benign test samples are classified correctly.
* ``ASR`` — fraction of triggered non-target test samples classified as the
  attack target; an attack counts as *successful* when ``ASR > 0.90`` and
  clean accuracy dropped by less than ``0.01``.
* ``TPR = |P ∩ GP| / |GP|`` and ``FPR = 1 - |B ∩ GB| / |GB|`` where
  ``(P, B)`` is the detector's split of a class and ``(GP, GB)`` the ground
  truth.
* ROC curves for the cluster detector come from re-judging the fixed
  clustering over a dense threshold grid; the area uses trapezoidal
  integration over the FPR axis with (0,0)/(1,1) anchors.
* ``calibrate_theta`` (the detector's operating point): the benign
  validation split is divided 50/50 per class into an inspected half and a
  reference half; the inspected half is clustered and judged exactly like
  training data, giving a per-class false-positive rate for every threshold
  on the grid.  ``theta*`` minimises ``|target - mean FPR|``; ties resolve
  to the smallest threshold.

Aggregation groups per-class records by evaluation case — ``BC_B`` (benign
class, benign set), ``BC_P`` (benign class, poisoned set), ``PC`` (poisoned
class) — and by poisoning ratio, keeping only successful attacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ClassifierHead, FeatureDataset
from .engine import DetectionResult, EngineConfig, analyze_class
from .errors import ConfigError

CASES = ("BC_B", "BC_P", "PC")

DEFAULT_THETA_GRID = np.linspace(0.0, 1.0, 201)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ConfigError("accuracy needs equal-length, non-empty label arrays")
    return float((predictions == labels).mean())


def attack_success_rate(predictions: np.ndarray, target: int) -> float:
    """Fraction of (already triggered, non-target) samples classified as target."""
    predictions = np.asarray(predictions)
    if predictions.size == 0:
        raise ConfigError("attack success rate needs at least one triggered sample")
    return float((predictions == target).mean())


def attack_succeeded(
    acc_clean: float, acc_poisoned: float, asr: float,
    asr_threshold: float = 0.90, acc_tolerance: float = 0.01,
) -> bool:
    """Gate: high trigger efficacy without a visible accuracy drop."""
    return asr > asr_threshold and (acc_clean - acc_poisoned) < acc_tolerance


def tpr_fpr(
    poisoned_rows: np.ndarray,
    benign_rows: np.ndarray,
    gp_rows: np.ndarray,
    gb_rows: np.ndarray,
) -> tuple[float, float]:
    """Detection true/false positive rates; TPR is NaN when no ground-truth poisons."""
    poisoned_rows = np.asarray(poisoned_rows)
    benign_rows = np.asarray(benign_rows)
    gp = np.asarray(gp_rows)
    gb = np.asarray(gb_rows)
    tpr = float(np.isin(gp, poisoned_rows).mean()) if gp.size else float("nan")
    if gb.size == 0:
        raise ConfigError("tpr_fpr needs at least one ground-truth benign sample")
    # count-and-divide is exact; 1 - mean(...) would pick up roundoff
    fpr = float((~np.isin(gb, benign_rows)).mean())
    return tpr, fpr


def trapezoid_auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    """Area under a ROC polyline, anchored at (0,0) and (1,1)."""
    fpr = np.concatenate([[0.0], np.asarray(fpr, dtype=np.float64), [1.0]])
    tpr = np.concatenate([[0.0], np.asarray(tpr, dtype=np.float64), [1.0]])
    order = np.lexsort((tpr, fpr))
    return float(np.trapezoid(tpr[order], fpr[order]))


def roc_auc(scores: np.ndarray, poison_flags: np.ndarray) -> float:
    """AUC from per-sample scores (higher = more poisonous), exact thresholds.

    Every distinct score is used as a cut, so the result equals the
    pairwise-ranking (Mann-Whitney) statistic with half-credit for ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(poison_flags, dtype=bool)
    if scores.shape != flags.shape:
        raise ConfigError("scores and flags must have equal shape")
    n_pos = int(flags.sum())
    n_neg = flags.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("roc_auc needs both poisoned and benign samples")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_flags = flags[order]
    cum_tp = np.cumsum(sorted_flags)
    cum_fp = np.cumsum(~sorted_flags)
    # keep only the last row of each tied-score block (comparison, not
    # subtraction, so infinite scores tie correctly)
    last = np.flatnonzero(sorted_scores[:-1] != sorted_scores[1:])
    cut = np.concatenate([last, [scores.size - 1]])
    tpr = cum_tp[cut] / n_pos
    fpr = cum_fp[cut] / n_neg
    return trapezoid_auc(fpr, tpr)


def class_roc(
    result: DetectionResult,
    class_label: int,
    gp_rows: np.ndarray,
    gb_rows: np.ndarray,
    grid: np.ndarray = DEFAULT_THETA_GRID,
) -> tuple[np.ndarray, np.ndarray, float]:
    """(FPR, TPR, AUC) for one class by re-judging the clustering per threshold.

    The clustering is fixed; only the cluster decision rule moves with the
    threshold.  DBSCAN outliers stay flagged at every threshold.
    """
    cres = result.for_class(class_label)
    gp = np.asarray(gp_rows)
    gb = np.asarray(gb_rows)
    if gb.size == 0:
        raise ConfigError("class_roc needs ground-truth benign samples")
    mrs = np.array([v.mr for v in cres.verdicts], dtype=np.float64)
    gp_in_cluster = np.array(
        [np.isin(v.member_rows, gp).sum() for v in cres.verdicts], dtype=np.int64
    )
    gb_in_cluster = np.array(
        [np.isin(v.member_rows, gb).sum() for v in cres.verdicts], dtype=np.int64
    )
    gp_outlier = int(np.isin(cres.outlier_rows, gp).sum())
    gb_outlier = int(np.isin(cres.outlier_rows, gb).sum())
    tpr = np.zeros(grid.size)
    fpr = np.zeros(grid.size)
    for t, theta in enumerate(grid):
        flagged = mrs >= 1.0 - theta
        tp = gp_outlier + int(gp_in_cluster[flagged].sum())
        fp = gb_outlier + int(gb_in_cluster[flagged].sum())
        tpr[t] = tp / gp.size if gp.size else float("nan")
        fpr[t] = fp / gb.size
    return fpr, tpr, trapezoid_auc(fpr, tpr)


@dataclass(frozen=True)
class ThetaCalibration:
    """Result of the operating-point search on benign validation data."""

    theta_star: float
    achieved_fpr: float
    target_fpr: float
    grid: np.ndarray
    mean_fpr: np.ndarray  # mean over classes, per grid point


def calibrate_theta(
    val: FeatureDataset,
    head: ClassifierHead,
    cfg: EngineConfig = EngineConfig(),
    target_fpr: float = 0.05,
    grid: np.ndarray = DEFAULT_THETA_GRID,
    seed: int = 0,
) -> ThetaCalibration:
    """Pick the threshold whose mean per-class validation FPR is closest to target.

    Half of each validation class (seeded 50/50 split) is inspected exactly
    like training data — clustered, deviation-scored — against the other
    half as the benign reference, so the score distribution is measured
    without the reference set overlapping the inspected samples.
    """
    if not 0.0 < target_fpr < 1.0:
        raise ConfigError("target_fpr must lie in (0, 1)")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ConfigError("theta grid must be a 1-D array with >= 2 points")
    rng = np.random.default_rng(seed)
    inspect_idx = []
    reference_idx = []
    for label in range(1, val.num_classes + 1):
        rows = val.class_indices(label)
        if rows.size < 2:
            raise ConfigError(f"validation class {label} too small to split for calibration")
        perm = rng.permutation(rows)
        half = (rows.size + 1) // 2
        inspect_idx.append(perm[:half])
        reference_idx.append(perm[half:])
    inspected = val.subset(np.sort(np.concatenate(inspect_idx)), split="train")
    reference = val.subset(np.sort(np.concatenate(reference_idx)), split="validation")

    per_class_fpr = np.zeros((val.num_classes, grid.size))
    for row, label in enumerate(range(1, val.num_classes + 1)):
        cres = analyze_class(
            inspected, reference, head, label, cfg, theta=0.0,
            seed=np.random.SeedSequence([seed, label]),
        )
        n_class = cres.class_rows.size
        sizes = np.array([v.size for v in cres.verdicts], dtype=np.int64)
        mrs = np.array([v.mr for v in cres.verdicts], dtype=np.float64)
        n_outliers = cres.outlier_rows.size
        for t, theta in enumerate(grid):
            flagged = mrs >= 1.0 - theta
            per_class_fpr[row, t] = (n_outliers + sizes[flagged].sum()) / n_class
    mean_fpr = per_class_fpr.mean(axis=0)
    best = int(np.argmin(np.abs(target_fpr - mean_fpr)))  # ties: first = smallest theta
    return ThetaCalibration(
        theta_star=float(grid[best]),
        achieved_fpr=float(mean_fpr[best]),
        target_fpr=target_fpr,
        grid=grid,
        mean_fpr=mean_fpr,
    )


@dataclass(frozen=True)
class ClassRecord:
    """One class's evaluation under one detector run."""

    method: str
    case: str
    alpha: float
    target: int | None
    class_label: int
    theta: float
    tpr: float
    fpr: float
    auc: float
    attack_success: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")


def aggregate(
    records: list[ClassRecord],
    only_successful: bool = True,
) -> list[dict]:
    """Mean TPR/FPR/AUC per (method, case) and per (method, case, alpha).

    Records from unsuccessful attacks are dropped (the standard evaluation
    convention) unless ``only_successful`` is False.  NaN metric entries
    (e.g. TPR of benign classes) are ignored in the means.
    """
    kept = [r for r in records if r.attack_success or not only_successful]
    groups: dict[tuple, list[ClassRecord]] = {}
    for rec in kept:
        groups.setdefault((rec.method, rec.case, rec.alpha), []).append(rec)
        groups.setdefault((rec.method, rec.case, None), []).append(rec)

    def nanmean(vals: list[float]) -> float:
        arr = np.asarray(vals, dtype=np.float64)
        good = ~np.isnan(arr)
        return float(arr[good].mean()) if good.any() else float("nan")

    rows = []
    for (method, case, alpha), recs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1], -1.0 if kv[0][2] is None else kv[0][2])
    ):
        rows.append(
            {
                "method": method,
                "case": case,
                "alpha": alpha,
                "count": len(recs),
                "tpr": nanmean([r.tpr for r in recs]),
                "fpr": nanmean([r.fpr for r in recs]),
                "auc": nanmean([r.auc for r in recs]),
            }
        )
    return rows
