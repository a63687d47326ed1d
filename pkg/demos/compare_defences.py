"""Compare the three detectors across attack styles that break the baselines.

Three poisoning scenarios, same world geometry:

  A  corrupted labels, trigger removed by the low-pass filter
     (the easy case: every detector has the signal it needs)
  B  corrupted labels, trigger survives the low-pass filter
     (the impurity detector's signal -- filtered predictions snapping back
     to the origin class -- disappears)
  C  clean labels (poisons keep their true class label)
     (the 2-means split detector loses the cross-class signature it splits
     on, and filtered predictions agree with the labels anyway)

For each scenario every detector reports the attacked class's detection
rates plus the mean false-positive rate over the nine benign classes.

Run:  python3 demos/compare_defences.py   (~2-3 min)
"""
from __future__ import annotations

import numpy as np

from ccaud.evals import evaluate, subject_from_bundle
from ccaud.synth import SyntheticConfig, generate

SCENARIOS = [
    ("A: corrupted labels, removable trigger", {}),
    ("B: corrupted labels, filter-resistant trigger", {"filter_removable": False}),
    ("C: clean labels", {"label_mode": "clean"}),
]


def main() -> None:
    rows = []
    for title, overrides in SCENARIOS:
        cfg = SyntheticConfig(alpha=0.15, targets=(6,), seed=7, **overrides)
        bundle = generate(cfg)
        g = bundle.gates
        print(f"{title}")
        print(f"  attack gates: clean acc {g['acc_clean_model']:.3f}, "
              f"poisoned acc {g['acc_poisoned_model']:.3f}, "
              f"ASR {min(g['asr_per_target'].values()):.3f}, "
              f"success={g['attack_success']}")

        subject = subject_from_bundle(bundle)
        reports = evaluate(subject, theta=0.5, seed=7)
        for rep in reports:
            attacked = [r for r in rep.records if r.case == "PC"]
            benign = [r for r in rep.records if r.case != "PC"]
            tpr = attacked[0].tpr
            auc = attacked[0].auc
            fpr = float(np.mean([r.fpr for r in benign]))
            rows.append((title.split(":")[0], rep.method, tpr, auc, fpr))
            print(f"    {rep.method:<6} attacked-class TPR {tpr:.3f}  "
                  f"AUC {auc:.3f}  benign mean FPR {fpr:.3f}")
        print()

    print("summary (attacked-class TPR at the fixed operating points):\n")
    print("  scenario                      ccaud     ac      ci")
    for scen in ["A", "B", "C"]:
        cells = {m: t for s, m, t, _, _ in rows if s == scen}
        label = {
            "A": "removable trigger",
            "B": "filter-resistant trigger",
            "C": "clean labels",
        }[scen]
        print(f"  {scen} {label:<27} {cells['ccaud']:.3f}   {cells['ac']:.3f}   {cells['ci']:.3f}")

    print(
        "\nReading the table: the impurity detector (ci) goes blind the moment\n"
        "its signal disappears -- a trigger the filter cannot undo (B) or labels\n"
        "that were never corrupted (C).  The 2-means split detector (ac) keeps\n"
        "flagging the poison cluster but pays for it by also flagging a chunk of\n"
        "every benign class (mean FPR ~0.24 above).  The cluster-deviation\n"
        "engine holds both numbers at once because its test is causal rather\n"
        "than structural: it asks whether moving benign samples toward a\n"
        "cluster's centroid direction flips the classifier to that cluster's\n"
        "class, which stays true for a working backdoor in every scenario."
    )


if __name__ == "__main__":
    main()
