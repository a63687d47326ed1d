"""Evaluation harness: run detectors on a dataset and score them per class.

Case taxonomy for aggregation:

* ``PC`` — a class that actually contains poisoned samples,
* ``BC_P`` — a benign class inside a poisoned dataset,
* ``BC_B`` — a class of an entirely benign dataset.

TPR is only defined for ``PC`` (it is NaN elsewhere); AUC likewise needs
both poisoned and benign samples inside the class.  FPR is defined for
every case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import (
    ImpurityResult,
    SplitResult,
    activation_clustering,
    cluster_impurity,
)
from .data import ClassifierHead, FeatureDataset
from .engine import DetectionResult, EngineConfig, detect
from .errors import ConfigError
from .metrics import (
    DEFAULT_THETA_GRID,
    ClassRecord,
    ThetaCalibration,
    calibrate_theta,
    class_roc,
    roc_auc,
    tpr_fpr,
)

METHODS = ("ccaud", "ac", "ci")


@dataclass
class EvalSubject:
    """A dataset under inspection plus evaluation ground truth."""

    train: FeatureDataset
    val: FeatureDataset
    head: ClassifierHead
    targets: tuple[int, ...] = ()
    alpha: float = 0.0
    attack_success: bool | None = None

    @property
    def attack_ok(self) -> bool:
        # benign datasets have nothing to gate
        return True if self.attack_success is None else bool(self.attack_success)


def subject_from_bundle(bundle) -> EvalSubject:
    """Evaluation view of a synthetic benchmark bundle."""
    targets = bundle.config.targets
    return EvalSubject(
        train=bundle.train,
        val=bundle.val,
        head=bundle.head,
        targets=targets,
        alpha=bundle.config.alpha if targets else 0.0,
        attack_success=bundle.gates["attack_success"] if targets else None,
    )


@dataclass
class MethodReport:
    """One detector's run over one dataset."""

    method: str
    theta: float
    records: list[ClassRecord]
    calibration: ThetaCalibration | None = None
    detection: DetectionResult | None = None
    split_result: SplitResult | None = None
    impurity_result: ImpurityResult | None = None


def _case_for(label: int, targets: tuple[int, ...]) -> str:
    if label in targets:
        return "PC"
    return "BC_P" if targets else "BC_B"


def _class_masks(train: FeatureDataset, label: int) -> tuple[np.ndarray, np.ndarray]:
    rows = train.class_indices(label)
    flags = train.poison_flags[rows]
    return rows[flags], rows[~flags]


def _record(
    subject: EvalSubject,
    method: str,
    label: int,
    theta: float,
    tpr: float,
    fpr: float,
    auc: float,
    extras: dict,
) -> ClassRecord:
    return ClassRecord(
        method=method,
        case=_case_for(label, subject.targets),
        alpha=subject.alpha,
        target=label if label in subject.targets else None,
        class_label=label,
        theta=theta,
        tpr=tpr,
        fpr=fpr,
        auc=auc,
        attack_success=subject.attack_ok,
        extras=extras,
    )


def evaluate_engine(
    subject: EvalSubject,
    theta: float | None = None,
    target_fpr: float = 0.05,
    grid: np.ndarray = DEFAULT_THETA_GRID,
    cfg: EngineConfig = EngineConfig(),
    seed: int = 0,
    workers: int = 1,
) -> MethodReport:
    """Run the deviation-scoring engine; calibrate the threshold if not given."""
    calibration = None
    if theta is None:
        calibration = calibrate_theta(
            subject.val, subject.head, cfg, target_fpr=target_fpr, grid=grid, seed=seed
        )
        theta = calibration.theta_star
    result = detect(
        subject.train, subject.val, subject.head, cfg,
        theta=theta, seed=seed, workers=workers,
    )
    records = []
    for label in range(1, subject.train.num_classes + 1):
        gp, gb = _class_masks(subject.train, label)
        cres = result.for_class(label)
        tpr, fpr = tpr_fpr(cres.poisoned_rows, cres.benign_rows, gp, gb)
        if gp.size and gb.size:
            _, _, auc = class_roc(result, label, gp, gb, grid=grid)
        else:
            auc = float("nan")
        records.append(
            _record(
                subject, "ccaud", label, theta, tpr, fpr, auc,
                extras={
                    "outlier_ratio": cres.outlier_ratio,
                    "n_clusters": len(cres.verdicts),
                },
            )
        )
    return MethodReport(
        method="ccaud", theta=theta, records=records,
        calibration=calibration, detection=result,
    )


def evaluate_split_defence(
    subject: EvalSubject, theta: float = 0.35, seed: int = 0
) -> MethodReport:
    """Run the two-means relative-size defence."""
    result = activation_clustering(subject.train, theta=theta, seed=seed)
    records = []
    for rep in result.class_reports:
        label = rep.class_label
        gp, gb = _class_masks(subject.train, label)
        clean = np.setdiff1d(rep.class_rows, rep.flagged_rows)
        tpr, fpr = tpr_fpr(rep.flagged_rows, clean, gp, gb)
        if gp.size and gb.size:
            flags = subject.train.poison_flags[rep.class_rows]
            auc = roc_auc(rep.scores, flags)
        else:
            auc = float("nan")
        records.append(
            _record(
                subject, "ac", label, theta, tpr, fpr, auc,
                extras={"small_fraction": rep.small_fraction},
            )
        )
    return MethodReport(method="ac", theta=theta, records=records, split_result=result)


def evaluate_impurity_defence(
    subject: EvalSubject,
    theta: float = 1.0,
    cfg: EngineConfig = EngineConfig(),
    seed: int = 0,
) -> MethodReport:
    """Run the mixture-impurity defence on filtered-prediction disagreement."""
    result = cluster_impurity(
        subject.train, subject.head, theta=theta, reduction=cfg.reduction, seed=seed
    )
    records = []
    for rep in result.class_reports:
        label = rep.class_label
        gp, gb = _class_masks(subject.train, label)
        clean = np.setdiff1d(rep.class_rows, rep.flagged_rows)
        tpr, fpr = tpr_fpr(rep.flagged_rows, clean, gp, gb)
        if gp.size and gb.size:
            flags = subject.train.poison_flags[rep.class_rows]
            auc = roc_auc(rep.scores, flags)
        else:
            auc = float("nan")
        records.append(
            _record(
                subject, "ci", label, theta, tpr, fpr, auc,
                extras={"n_clusters": len(rep.clusters)},
            )
        )
    return MethodReport(
        method="ci", theta=theta, records=records, impurity_result=result
    )


def evaluate(
    subject: EvalSubject,
    methods: tuple[str, ...] = METHODS,
    theta: float | None = None,
    theta_ac: float = 0.35,
    theta_ci: float = 1.0,
    target_fpr: float = 0.05,
    cfg: EngineConfig = EngineConfig(),
    seed: int = 0,
    workers: int = 1,
) -> list[MethodReport]:
    """Run the requested detectors over one dataset."""
    reports = []
    for method in methods:
        if method == "ccaud":
            reports.append(
                evaluate_engine(
                    subject, theta=theta, target_fpr=target_fpr, cfg=cfg,
                    seed=seed, workers=workers,
                )
            )
        elif method == "ac":
            reports.append(evaluate_split_defence(subject, theta=theta_ac, seed=seed))
        elif method == "ci":
            reports.append(
                evaluate_impurity_defence(subject, theta=theta_ci, cfg=cfg, seed=seed)
            )
        else:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    return reports
