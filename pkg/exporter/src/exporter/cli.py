"""Command-line interface: render digit dumps, train, and export features.

``make-digits``
    Render a procedural digit dataset and write it as an image dump.
``export``
    Train the four-layer CNN on an image dump, then write the training
    split (and any ``--export NAME=DIR`` evaluation dumps) as feature
    dumps carrying the classifier head and box-filtered predictions,
    plus a ``metrics.json`` with per-dump accuracy, prediction rates,
    and the attack-gate verdict.

Exit codes: 0 success, 1 attack gates failed (dumps still written),
2 bad arguments or configuration, 3 malformed dump.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .digits import MAX_CLASSES, render_digits
from .dumps import (
    ABSENT,
    DumpFormatError,
    FeatureDump,
    ImageDump,
    LinearHead,
    load_image_dump,
    save_feature_dump,
    save_image_dump,
)
from .model import ARCH_TAG, DigitNet, FEATURE_DIM, FEATURE_LAYER_TAG
from .train import (
    TrainSettings,
    box_filter,
    export_features,
    head_predictions,
    predict_labels,
    train_model,
)

VERSION = "0.1.0"

#: Minimum agreement between head-applied features and the model's own
#: predictions for a dump to be considered faithful.
HEAD_FIDELITY_FLOOR = 0.999


class GateFailure(Exception):
    """The trained model missed an attack gate; dumps were still written."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="digit-exporter",
        description="procedural digit rendering and CNN feature export",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    mk = sub.add_parser("make-digits", help="render a digit dataset as an image dump")
    mk.add_argument("--per-class", type=int, required=True, help="samples per digit")
    mk.add_argument(
        "--num-classes", type=int, default=MAX_CLASSES, help="how many digits to render"
    )
    mk.add_argument("--split", default="train", help="split name stored in the manifest")
    mk.add_argument("--seed", type=int, default=0, help="rendering seed")
    mk.add_argument("--out", required=True, help="output dump directory")

    ex = sub.add_parser(
        "export", help="train the CNN on an image dump and export feature dumps"
    )
    ex.add_argument(
        "--arch",
        default=ARCH_TAG,
        help=f"architecture tag (only {ARCH_TAG!r} is implemented)",
    )
    ex.add_argument(
        "--feature-layer",
        default=FEATURE_LAYER_TAG,
        help=f"feature hook tag (only {FEATURE_LAYER_TAG!r} is implemented)",
    )
    ex.add_argument("--train-dump", required=True, help="image dump to train on")
    ex.add_argument("--out", required=True, help="output directory")
    ex.add_argument("--epochs", type=int, default=16)
    ex.add_argument("--batch-size", type=int, default=128)
    ex.add_argument("--lr", type=float, default=1e-3)
    ex.add_argument("--weight-decay", type=float, default=0.0)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument(
        "--export",
        action="append",
        default=[],
        metavar="NAME=DIR",
        help="additional image dump to embed; repeatable, written to OUT/NAME",
    )
    ex.add_argument(
        "--gate-test",
        metavar="NAME",
        help="export whose accuracy feeds the clean-accuracy gate",
    )
    ex.add_argument(
        "--gate-triggered",
        metavar="NAME",
        help="export whose to-target prediction rate is the attack success rate",
    )
    ex.add_argument(
        "--gate-target", type=int, help="1-based target label for the ASR gate"
    )
    ex.add_argument(
        "--gate-reference-acc",
        type=float,
        help="clean-model accuracy the test accuracy must stay within 0.01 of",
    )
    return parser


def _parse_exports(specs: list[str]) -> list[tuple[str, Path]]:
    exports = []
    seen = {"train"}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise ValueError(f"--export expects NAME=DIR, got {spec!r}")
        if name in seen:
            raise ValueError(f"duplicate export name {name!r}")
        seen.add(name)
        exports.append((name, Path(path)))
    return exports


def cmd_make_digits(args: argparse.Namespace) -> int:
    images, labels = render_digits(
        per_class=args.per_class, num_classes=args.num_classes, seed=args.seed
    )
    n = images.shape[0]
    dump = ImageDump(
        images=images,
        labels=labels,
        poison_flags=np.zeros(n, dtype=bool),
        origin_labels=np.full(n, ABSENT, dtype=np.int64),
        num_classes=args.num_classes,
        split=args.split,
        extra={"generator": "digit-glyphs", "seed": args.seed},
    )
    root = save_image_dump(args.out, dump)
    print(f"wrote {n} images ({args.num_classes} classes) to {root}")
    return 0


def _embed(
    model: DigitNet, dump: ImageDump, head: LinearHead, source: str, extra: dict
) -> tuple[FeatureDump, np.ndarray]:
    features = export_features(model, dump.images)
    if features.min(initial=0.0) < 0.0:
        raise RuntimeError("exported features must be non-negative (post-ReLU layer)")
    preds = predict_labels(model, dump.images)
    head_preds = head_predictions(features, head)
    fidelity = float(np.mean(head_preds == preds))
    if fidelity < HEAD_FIDELITY_FLOOR:
        raise RuntimeError(
            f"head reproduces only {fidelity:.4%} of model predictions on "
            f"{source} (floor {HEAD_FIDELITY_FLOOR:.1%}); refusing to write"
        )
    filtered_preds = predict_labels(model, box_filter(dump.images))
    feature_dump = FeatureDump(
        features=features,
        labels=dump.labels,
        poison_flags=dump.poison_flags,
        origin_labels=dump.origin_labels,
        filtered_preds=filtered_preds,
        num_classes=dump.num_classes,
        split=dump.split,
        head=head,
        extra={"image_extra": dump.extra, "image_source": source, **extra},
    )
    return feature_dump, preds


def _rates(preds: np.ndarray, labels: np.ndarray, num_classes: int) -> dict:
    return {
        "accuracy": float(np.mean(preds == labels)),
        "class_rates": {
            str(c): float(np.mean(preds == c)) for c in range(1, num_classes + 1)
        },
        "n": int(preds.shape[0]),
    }


def _judge_gates(args: argparse.Namespace, metrics: dict) -> dict:
    """Evaluate the attack gates against the recorded export metrics."""
    exports = metrics["exports"]
    for flag, name in (("--gate-test", args.gate_test), ("--gate-triggered", args.gate_triggered)):
        if name is not None and name not in exports:
            raise ValueError(f"{flag} names unknown export {name!r}")
    if (args.gate_triggered is None) != (args.gate_target is None):
        raise ValueError("--gate-triggered and --gate-target must be given together")
    gates: dict = {
        "acc": None,
        "reference_acc": args.gate_reference_acc,
        "acc_drop": None,
        "asr": None,
        "passed": None,
    }
    checks = []
    if args.gate_test is not None:
        gates["acc"] = exports[args.gate_test]["accuracy"]
        if args.gate_reference_acc is not None:
            gates["acc_drop"] = args.gate_reference_acc - gates["acc"]
            checks.append(gates["acc_drop"] < 0.01)
    if args.gate_triggered is not None:
        rates = exports[args.gate_triggered]["class_rates"]
        if str(args.gate_target) not in rates:
            raise ValueError(f"--gate-target {args.gate_target} is not a class label")
        gates["asr"] = rates[str(args.gate_target)]
        checks.append(gates["asr"] > 0.90)
    if checks:
        gates["passed"] = all(checks)
    return gates


def cmd_export(args: argparse.Namespace) -> int:
    if args.arch != ARCH_TAG:
        raise ValueError(f"architecture {args.arch!r} is a stub; only {ARCH_TAG!r} is implemented")
    if args.feature_layer != FEATURE_LAYER_TAG:
        raise ValueError(
            f"feature layer {args.feature_layer!r} is a stub; "
            f"only {FEATURE_LAYER_TAG!r} is implemented"
        )
    exports = _parse_exports(args.export)
    settings = TrainSettings(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    train_dump = load_image_dump(args.train_dump)
    eval_dumps = []
    for name, path in exports:
        dump = load_image_dump(path)
        if dump.images.shape[1:] != train_dump.images.shape[1:]:
            raise ValueError(
                f"export {name!r} image shape {dump.images.shape[1:]} does not "
                f"match training shape {train_dump.images.shape[1:]}"
            )
        if dump.num_classes != train_dump.num_classes:
            raise ValueError(
                f"export {name!r} has {dump.num_classes} classes, "
                f"training dump has {train_dump.num_classes}"
            )
        eval_dumps.append((name, path, dump))

    print(
        f"training {args.arch} on {len(train_dump)} images "
        f"({train_dump.num_classes} classes, {settings.epochs} epochs)"
    )
    model = train_model(train_dump.images, train_dump.labels, train_dump.num_classes, settings)
    head = LinearHead(tuple(model.head_arrays()))
    dump_extra = {
        "arch": args.arch,
        "feature_layer": args.feature_layer,
        "layers": model.layer_description(),
        "trainer": {
            "epochs": settings.epochs,
            "batch_size": settings.batch_size,
            "lr": settings.lr,
            "weight_decay": settings.weight_decay,
            "seed": settings.seed,
        },
    }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics: dict = {
        "schema": "exporter-metrics-v1",
        "settings": {
            "arch": args.arch,
            "feature_layer": args.feature_layer,
            "epochs": settings.epochs,
            "batch_size": settings.batch_size,
            "lr": settings.lr,
            "weight_decay": settings.weight_decay,
            "seed": settings.seed,
            "train_dump": str(args.train_dump),
            "num_classes": train_dump.num_classes,
            "feature_dim": FEATURE_DIM,
            "train_samples": len(train_dump),
        },
        "exports": {},
    }

    feature_dump, preds = _embed(model, train_dump, head, str(args.train_dump), dump_extra)
    save_feature_dump(out / "train", feature_dump)
    metrics["exports"]["train"] = _rates(preds, train_dump.labels, train_dump.num_classes)

    for name, path, dump in eval_dumps:
        feature_dump, preds = _embed(model, dump, head, str(path), dump_extra)
        save_feature_dump(out / name, feature_dump)
        metrics["exports"][name] = _rates(preds, dump.labels, dump.num_classes)

    metrics["gates"] = _judge_gates(args, metrics)

    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, entry in metrics["exports"].items():
        print(f"  {name}: accuracy {entry['accuracy']:.4f} over {entry['n']} samples")
    print(f"wrote feature dumps and metrics.json to {out}")
    if metrics["gates"]["passed"] is False:
        raise GateFailure(
            f"attack gates failed: acc_drop={metrics['gates']['acc_drop']} "
            f"asr={metrics['gates']['asr']} (dumps and metrics still written)"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "make-digits":
            return cmd_make_digits(args)
        if args.command == "export":
            return cmd_export(args)
        parser.error(f"unknown command {args.command!r}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GateFailure, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DumpFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
