"""Walk a poisoned synthetic dataset through calibration and detection.

Builds a 10-class feature-space world where class 6 has been backdoored
(a fifth of its training rows are relabelled impostors carrying a trigger
direction), calibrates the decision threshold on benign validation data,
runs the detector, and compares its verdicts to the hidden ground truth.

Run:  python3 demos/detect_synthetic_attack.py
"""

import numpy as np

from ccaud.density import DbscanParams
from ccaud.engine import EngineConfig, detect
from ccaud.metrics import calibrate_theta
from ccaud.synth import SyntheticConfig, generate

SMALL = EngineConfig(dbscan=DbscanParams(eps=0.8, min_pts=10))


def main() -> None:
    cfg = SyntheticConfig(
        train_per_class=240, val_per_class=240, test_per_class=60,
        alpha=0.2, targets=(6,), seed=12,
    )
    bundle = generate(cfg)
    print("=== synthetic backdoor world ===")
    print(f"classes: {cfg.num_classes}, feature dim: {cfg.dim}")
    print(f"target class: 6, in-class poison ratio: {cfg.alpha}")
    print(f"train rows: {len(bundle.train)}, poisoned: {bundle.train.poison_flags.sum()}")
    for key, value in bundle.gates.items():
        print(f"  gate {key}: {value}")

    print("\n=== threshold calibration on benign validation data ===")
    cal = calibrate_theta(bundle.val, bundle.head, cfg=SMALL, target_fpr=0.05, seed=12)
    print(f"theta* = {cal.theta_star:.3f} "
          f"(mean benign FPR {cal.achieved_fpr:.3f}, target {cal.target_fpr})")

    print("\n=== per-class verdicts ===")
    result = detect(bundle.train, bundle.val, bundle.head,
                    cfg=SMALL, theta=cal.theta_star, seed=12)
    for cres in result.class_results:
        parts = [f"{v.size} rows @ score {v.mr:.2f}" + (" FLAGGED" if v.poisoned else "")
                 for v in cres.verdicts]
        print(f"class {cres.class_label}: {len(cres.outlier_rows)} outliers; "
              + "; ".join(parts))

    flagged = result.poisoned_rows
    truth = np.where(bundle.train.poison_flags)[0]
    hit = np.intersect1d(flagged, truth).size
    print("\n=== verdicts vs hidden ground truth ===")
    print(f"rows flagged: {flagged.size}, truly poisoned: {truth.size}, overlap: {hit}")
    print(f"recall    {hit / truth.size:.3f}")
    print(f"precision {hit / flagged.size:.3f}" if flagged.size else "precision n/a")
    print("(each class carries a benign decoy sub-population with a graded score;")
    print(" the 5% false-positive budget chosen at calibration admits the strongest")
    print(" decoys, which is exactly the trade the threshold search is making)")


if __name__ == "__main__":
    main()
