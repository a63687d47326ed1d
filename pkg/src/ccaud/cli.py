"""Command-line interface.

Subcommands
-----------
* ``ccaud detect``  — run a detector on a training feature dump against a
  validation dump; writes ``report.json`` (+ optional embeddings).
* ``ccaud synth``   — generate a synthetic benchmark bundle as feature dumps.
* ``ccaud sweep``   — run the benchmark sweep in-process and write records,
  aggregates, and a summary.
* ``ccaud poison-images`` — apply a backdoor trigger to an image dump.

Exit codes: 0 success, 2 configuration error, 3 malformed dump.
All report files are deterministic: sorted JSON keys, fixed column orders,
no timestamps.  Worker count comes from ``--workers`` or ``CCAUD_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import FeatureDataset
from .dumps import (
    load_feature_dump,
    load_image_dump,
    save_feature_dump,
    save_image_dump,
)
from .engine import EngineConfig
from .errors import ConfigError, DumpFormatError
from .evals import METHODS, EvalSubject, MethodReport, evaluate, subject_from_bundle
from .metrics import aggregate, calibrate_theta
from .synth import SyntheticConfig, generate
from .triggers import LABEL_MODES, TRIGGER_KINDS, TriggerSpec, build_poisoned_dataset

DEFAULT_ALPHAS = (0.025, 0.05, 0.1, 0.2, 0.35, 0.5, 0.55)
DEFAULT_SWEEP_TARGETS = (1, 4, 5, 8, 9)


def _workers(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("CCAUD_WORKERS", "").strip()
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"CCAUD_WORKERS must be an integer, got {env!r}") from exc
    return 1


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _float_tuple(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _round(x: float, places: int = 10) -> float:
    """Stable rounding for reports (kills last-bit noise in printed floats)."""
    if x != x:  # NaN
        return float("nan")
    return round(float(x), places)


# ---------------------------------------------------------------------------
# report assembly


def _method_payload(report: MethodReport, train: FeatureDataset) -> dict:
    classes = []
    if report.method == "ccaud":
        score_kind = "misclassification_ratio"
        for cres in report.detection.class_results:
            clusters = [
                {
                    "id": v.cluster_id,
                    "size": v.size,
                    "score": _round(v.mr),
                    "poisoned": bool(v.poisoned),
                }
                for v in cres.verdicts
            ]
            classes.append(
                {
                    "class": cres.class_label,
                    "n": int(cres.class_rows.size),
                    "outliers": int(cres.outlier_rows.size),
                    "clusters": clusters,
                    "flagged_rows": [int(r) for r in np.sort(cres.poisoned_rows)],
                }
            )
    elif report.method == "ac":
        score_kind = "relative_size"
        for rep in report.split_result.class_reports:
            n = int(rep.class_rows.size)
            n_small = round(rep.small_fraction * n)
            clusters = [
                {"id": 0, "size": n - n_small, "score": _round(1.0 - rep.small_fraction),
                 "poisoned": False},
                {"id": 1, "size": n_small, "score": _round(rep.small_fraction),
                 "poisoned": bool(rep.poisoned)},
            ]
            classes.append(
                {
                    "class": rep.class_label,
                    "n": n,
                    "outliers": 0,
                    "clusters": clusters,
                    "flagged_rows": [int(r) for r in np.sort(rep.flagged_rows)],
                }
            )
    else:
        score_kind = "divergence"
        for rep in report.impurity_result.class_reports:
            clusters = [
                {
                    "id": c.cluster_id,
                    "size": c.size,
                    "score": _round(c.divergence),
                    "poisoned": bool(c.poisoned),
                }
                for c in rep.clusters
            ]
            classes.append(
                {
                    "class": rep.class_label,
                    "n": int(rep.class_rows.size),
                    "outliers": 0,
                    "clusters": clusters,
                    "flagged_rows": [int(r) for r in np.sort(rep.flagged_rows)],
                }
            )
    flagged_all = sorted({r for c in classes for r in c["flagged_rows"]})
    return {
        "method": report.method,
        "score_kind": score_kind,
        "theta": _round(report.theta),
        "calibration": (
            None
            if report.calibration is None
            else {
                "theta_star": _round(report.calibration.theta_star),
                "achieved_fpr": _round(report.calibration.achieved_fpr),
                "target_fpr": _round(report.calibration.target_fpr),
            }
        ),
        "classes": classes,
        "poisoned_rows": flagged_all,
    }


def cmd_detect(args: argparse.Namespace) -> int:
    train, head, _ = load_feature_dump(args.dump)
    val, val_head, _ = load_feature_dump(args.val_dump)
    if head is None:
        head = val_head
    if head is None:
        raise ConfigError(
            "no classifier head found in either dump; detection needs the head"
        )
    methods = METHODS if args.method == "all" else (args.method,)
    workers = _workers(args.workers)
    cfg = EngineConfig()

    subject = EvalSubject(train=train, val=val, head=head)
    theta = None if args.calibrate else args.theta
    reports = evaluate(
        subject,
        methods=methods,
        theta=theta,
        theta_ac=args.theta_ac,
        theta_ci=args.theta_ci,
        target_fpr=args.target_fpr,
        cfg=cfg,
        seed=args.seed,
        workers=workers,
    )
    out = Path(args.out)
    payload = {
        "schema": "ccaud-report-v1",
        "version": __version__,
        "inputs": {
            "train_dump": str(args.dump),
            "val_dump": str(args.val_dump),
            "num_classes": train.num_classes,
            "feature_dim": train.feature_dim,
            "train_samples": len(train),
            "val_samples": len(val),
        },
        "settings": {
            "methods": list(methods),
            "theta": None if args.calibrate else _round(args.theta),
            "theta_ac": _round(args.theta_ac),
            "theta_ci": _round(args.theta_ci),
            "calibrate": bool(args.calibrate),
            "target_fpr": _round(args.target_fpr),
            "seed": args.seed,
            "workers": workers,
        },
        "results": [_method_payload(rep, train) for rep in reports],
    }
    _write_json(out / "report.json", payload)
    if args.emit_embedding:
        emb = {}
        for rep in reports:
            if rep.detection is None:
                continue
            for cres in rep.detection.class_results:
                emb[f"class_{cres.class_label}_embedding"] = cres.embedding
                emb[f"class_{cres.class_label}_rows"] = cres.class_rows
                emb[f"class_{cres.class_label}_cluster_labels"] = cres.cluster_labels
        if emb:
            out.mkdir(parents=True, exist_ok=True)
            np.savez(out / "embeddings.npz", **emb)
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SyntheticConfig(
        alpha=args.alpha,
        targets=_int_tuple(args.targets) if args.targets else (),
        label_mode=args.mode,
        filter_removable=not args.filter_resistant,
        train_per_class=args.train_per_class,
        val_per_class=args.val_per_class,
        test_per_class=args.test_per_class,
        seed=args.seed,
    )
    bundle = generate(cfg)
    out = Path(args.out)
    save_feature_dump(out / "train", bundle.train, head=bundle.head)
    save_feature_dump(out / "val", bundle.val, head=bundle.head)
    save_feature_dump(out / "test", bundle.test, head=bundle.head)
    for target, ds in bundle.triggered_tests.items():
        save_feature_dump(out / f"test_triggered_{target}", ds, head=bundle.head)
    gates = dict(bundle.gates)
    gates["asr_per_target"] = {str(k): v for k, v in gates["asr_per_target"].items()}
    _write_json(
        out / "gates.json",
        {
            "alpha": cfg.alpha,
            "targets": list(cfg.targets),
            "label_mode": cfg.label_mode,
            "seed": cfg.seed,
            **gates,
        },
    )
    print(f"bundle written to {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    methods = METHODS if args.method == "all" else (args.method,)
    alphas = _float_tuple(args.alphas) if args.alphas else DEFAULT_ALPHAS
    targets = _int_tuple(args.targets) if args.targets else DEFAULT_SWEEP_TARGETS
    workers = _workers(args.workers)
    cfg = EngineConfig()
    records = []
    for ai, alpha in enumerate(alphas):
        seed = args.seed + 1000 * (ai + 1)
        theta = args.theta
        for target in targets:
            bundle = generate(
                SyntheticConfig(alpha=alpha, targets=(target,), seed=seed)
            )
            if theta is None:
                cal = calibrate_theta(
                    bundle.val, bundle.head, cfg, target_fpr=args.target_fpr, seed=seed
                )
                theta = cal.theta_star
            for rep in evaluate(
                subject_from_bundle(bundle), methods=methods, theta=theta,
                cfg=cfg, seed=seed, workers=workers,
            ):
                records.extend(rep.records)
    if args.benign_runs:
        for k in range(args.benign_runs):
            seed = args.seed + 77 * (k + 1)
            bundle = generate(SyntheticConfig(targets=(), seed=seed))
            cal = calibrate_theta(
                bundle.val, bundle.head, cfg, target_fpr=args.target_fpr, seed=seed
            )
            for rep in evaluate(
                subject_from_bundle(bundle), methods=methods, theta=cal.theta_star,
                cfg=cfg, seed=seed, workers=workers,
            ):
                records.extend(rep.records)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "case", "alpha", "target", "class", "theta", "tpr", "fpr", "auc", "attack_success"]
        )
        for r in records:
            writer.writerow(
                [
                    r.method, r.case, r.alpha,
                    "" if r.target is None else r.target,
                    r.class_label, _round(r.theta), _round(r.tpr), _round(r.fpr),
                    _round(r.auc), r.attack_success,
                ]
            )
    rows = aggregate(records)
    with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "case", "alpha", "count", "tpr", "fpr", "auc"])
        for row in rows:
            writer.writerow(
                [
                    row["method"], row["case"],
                    "" if row["alpha"] is None else row["alpha"],
                    row["count"], _round(row["tpr"]), _round(row["fpr"]), _round(row["auc"]),
                ]
            )
    _write_json(
        out / "summary.json",
        {
            "schema": "ccaud-sweep-v1",
            "version": __version__,
            "settings": {
                "methods": list(methods),
                "alphas": list(alphas),
                "targets": list(targets),
                "target_fpr": _round(args.target_fpr),
                "seed": args.seed,
                "benign_runs": args.benign_runs,
            },
            "aggregate": [
                {k: (None if v is None else (_round(v) if isinstance(v, float) else v)) for k, v in row.items()}
                for row in rows
            ],
        },
    )
    print(f"sweep written to {out}")
    return 0


def cmd_poison_images(args: argparse.Namespace) -> int:
    images, labels, _, _, manifest = load_image_dump(args.dump)
    spec = TriggerSpec(
        kind=args.trigger,
        strength=args.strength,
        frequency=args.frequency,
        patch_size=args.patch_size,
    )
    poisoned, new_labels, flags, origins = build_poisoned_dataset(
        images,
        labels,
        target=args.target,
        alpha=args.alpha,
        spec=spec,
        mode=args.mode,
        seed=args.seed,
    )
    extra = dict(manifest.get("extra", {}))
    extra.update(
        {
            "trigger": args.trigger,
            "alpha": args.alpha,
            "target": args.target,
            "label_mode": args.mode,
            "seed": args.seed,
        }
    )
    save_image_dump(
        Path(args.out),
        poisoned,
        new_labels,
        split=manifest.get("split", "train"),
        num_classes=int(manifest["num_classes"]),
        poison_flags=flags,
        origin_labels=origins,
        extra=extra,
    )
    print(f"poisoned image dump written to {args.out} ({int(flags.sum())} poisoned rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccaud",
        description="Backdoor-poisoning detection via cluster deviation scoring.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run detectors on a feature dump")
    p.add_argument("--dump", required=True, help="training feature dump directory")
    p.add_argument("--val-dump", required=True, help="benign validation dump directory")
    p.add_argument("--method", default="ccaud", choices=(*METHODS, "all"))
    p.add_argument("--theta", type=float, default=0.1, help="decision threshold")
    p.add_argument(
        "--calibrate", action="store_true",
        help="pick the threshold from the validation split instead of --theta",
    )
    p.add_argument("--theta-ac", type=float, default=0.35,
                   help="relative-size threshold for the two-means defence")
    p.add_argument("--theta-ci", type=float, default=1.0,
                   help="divergence threshold for the mixture-impurity defence")
    p.add_argument("--target-fpr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--emit-embedding", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate a synthetic benchmark bundle")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--targets", default="1", help="comma-separated 1-based targets; empty = benign")
    p.add_argument("--mode", default="corrupted", choices=LABEL_MODES)
    p.add_argument("--filter-resistant", action="store_true",
                   help="make the trigger survive the reference filter")
    p.add_argument("--train-per-class", type=int, default=500)
    p.add_argument("--val-per-class", type=int, default=1000)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="run the synthetic benchmark sweep")
    p.add_argument("--method", default="all", choices=(*METHODS, "all"))
    p.add_argument("--alphas", default="", help="comma-separated poison ratios")
    p.add_argument("--targets", default="", help="comma-separated 1-based targets")
    p.add_argument("--theta", type=float, default=None,
                   help="fixed threshold; default calibrates per world")
    p.add_argument("--target-fpr", type=float, default=0.05)
    p.add_argument("--benign-runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("poison-images", help="apply a backdoor trigger to an image dump")
    p.add_argument("--dump", required=True, help="input image dump directory")
    p.add_argument("--trigger", default="patch", choices=TRIGGER_KINDS)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--mode", default="corrupted", choices=LABEL_MODES)
    p.add_argument("--strength", type=float, default=40.0)
    p.add_argument("--frequency", type=float, default=6.0)
    p.add_argument("--patch-size", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_poison_images)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DumpFormatError as exc:
        print(f"error: malformed dump: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
