"""Synthetic feature-space benchmark with analytically controlled geometry.

The generator builds a world in which the detection problem is real but
every failure mode is controllable:

* Class ``i`` lives along its own orthonormal direction ``u_i`` (separation
  ``class_separation``), with isotropic Gaussian noise, shifted so all mean
  components sit at least three sigma above zero before rectification (so
  clipping is a tail event).
* Each class has a *main* mode and a smaller *deviant* mode offset along a
  dedicated direction ``v_i``.  The classifier head deliberately leaks a
  per-class amount ``kappa_i`` of that direction, so the deviant cluster's
  centroid deviation misclassifies a designed fraction of other-class
  validation samples.  The ``deviant_probits`` ladder spaces those
  misclassification ratios across classes, giving threshold calibration a
  graded false-positive curve exactly like real feature spaces do.
* Triggers are unit directions orthogonal to every class/mode direction
  (and to the constant shift).  A poisoned sample is a benign draw plus
  ``trigger_strength`` times the trigger direction; the head's target-class
  row carries ``trigger_gain`` of the same direction, which dominates every
  achievable benign margin — verified numerically at generation time.
* ``corrupted`` label mode appends relabelled draws from non-target
  classes; ``clean`` mode replaces target-class rows in place.
* Filtered predictions are what the classifier says after the trigger
  component is subtracted (when ``filter_removable``), so impurity-style
  defences see flipped predictions for corrupted-label poisons, unchanged
  ones for clean-label poisons or filter-resistant triggers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ABSENT, ClassifierHead, FeatureDataset
from .errors import ConfigError
from .metrics import accuracy, attack_succeeded, attack_success_rate

DEFAULT_PROBITS = (1.5, 0.6, -0.4, -1.4, -2.4, -3.4, -4.4, -5.4, -6.4, -7.4)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic world; defaults give a well-behaved 10-class bench."""

    num_classes: int = 10
    dim: int = 64
    sigma: float = 1.0
    class_separation: float = 14.0
    head_scale: float = 3.0
    deviant_frac: float = 0.24
    deviant_offset: float = 14.0
    deviant_offset_train: float = 14.7
    deviant_probits: tuple[float, ...] = DEFAULT_PROBITS
    trigger_strength: float = 40.0
    trigger_gain: float = 8.0
    train_per_class: int = 500
    val_per_class: int = 1000
    test_per_class: int = 100
    alpha: float = 0.1
    targets: tuple[int, ...] = (1,)
    label_mode: str = "corrupted"
    filter_removable: bool = True
    benign_disagree_rate: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        l, d = self.num_classes, self.dim
        if l < 2:
            raise ConfigError("need at least two classes")
        if d < 2 * l + len(self.targets) + 1:
            raise ConfigError(
                f"dim {d} too small for {l} classes and {len(self.targets)} triggers "
                f"(need >= {2 * l + len(self.targets) + 1} orthogonal directions)"
            )
        if len(self.deviant_probits) != l:
            raise ConfigError("deviant_probits must supply one value per class")
        if not 0.0 <= self.deviant_frac < 0.5:
            raise ConfigError("deviant_frac must lie in [0, 0.5)")
        if self.label_mode not in ("corrupted", "clean"):
            raise ConfigError("label_mode must be 'corrupted' or 'clean'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        seen = set()
        for t in self.targets:
            if not 1 <= t <= l:
                raise ConfigError(f"target {t} outside [1, {l}]")
            if t in seen:
                raise ConfigError(f"duplicate target {t}")
            seen.add(t)
        if min(self.train_per_class, self.val_per_class, self.test_per_class) < 2:
            raise ConfigError("per-class sample counts must be >= 2")


@dataclass
class SyntheticBundle:
    """Everything one benchmark run needs."""

    config: SyntheticConfig
    train: FeatureDataset
    val: FeatureDataset
    test: FeatureDataset
    triggered_tests: dict[int, FeatureDataset]  # target -> triggered non-target test set
    head: ClassifierHead
    clean_head: ClassifierHead
    gates: dict


class _World:
    """Frame vectors and per-class mean structure shared by all splits."""

    def __init__(self, cfg: SyntheticConfig, rng: np.random.Generator):
        l, d = cfg.num_classes, cfg.dim
        base = rng.normal(size=(d, d))
        base[:, 0] = 1.0  # first frame vector is the constant direction
        q, _ = np.linalg.qr(base)
        q *= np.sign(q[0, 0]) or 1.0
        self.ones_dir = q[:, 0]
        self.u = q[:, 1 : 1 + l].T.copy()  # class directions
        self.v = q[:, 1 + l : 1 + 2 * l].T.copy()  # deviant-mode directions
        self.triggers = {
            t: q[:, 1 + 2 * l + m].copy() for m, t in enumerate(cfg.targets)
        }
        self.kappa = self._solve_kappa(cfg)
        # per-split mode means, before the nonnegativity shift; the training
        # split's deviant mode sits slightly farther out so the calibrated
        # operating point stays clear of the training clusters' decision
        # knife-edge (mild train/val covariate shift, as in the wild)
        self.mode_means = {"train": {}, "other": {}}
        for i in range(1, l + 1):
            main = cfg.class_separation * self.u[i - 1]
            self.mode_means["train"][i] = (
                main,
                main + cfg.deviant_offset_train * self.v[i - 1],
            )
            self.mode_means["other"][i] = (
                main,
                main + cfg.deviant_offset * self.v[i - 1],
            )
        self.shift = self._solve_shift(cfg)

    def modes_for(self, split: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        return self.mode_means["train" if split == "train" else "other"]

    def _solve_kappa(self, cfg: SyntheticConfig) -> np.ndarray:
        """Head leak per class so deviant-cluster deviations hit the probit ladder."""
        s, d_sep, m = cfg.head_scale, cfg.class_separation, cfg.deviant_offset
        base = s * d_sep
        noise = cfg.sigma * np.sqrt(2.0) * s
        kappa = np.array(
            [(base + z * noise) / ((1.0 - cfg.deviant_frac) * m) for z in cfg.deviant_probits]
        )
        return np.maximum(kappa, 0.0)

    def _solve_shift(self, cfg: SyntheticConfig) -> float:
        """Constant offset keeping every relevant mean >= 3 sigma above zero.

        Candidates include all benign/poisoned mode means and every
        deviation-shifted combination the detector can evaluate, so ReLU
        clipping stays a noise-tail event.
        """
        l = cfg.num_classes
        candidates = []
        for split_modes in self.mode_means.values():
            for i in range(1, l + 1):
                candidates.extend(split_modes[i])
        modes = self.mode_means["train"]
        val_modes = self.mode_means["other"]
        for t, ez in self.triggers.items():
            tvec = cfg.trigger_strength * ez
            for j in range(1, l + 1):
                for mode_j in modes[j]:
                    candidates.append(mode_j + tvec)
                    for mode_t in val_modes[t]:
                        for mode_x in val_modes[j]:
                            candidates.append(mode_x + (mode_j + tvec) - mode_t)
        low = min(float(c.min()) for c in candidates)
        return max(0.0, 3.0 * cfg.sigma - low)

    def head(self, cfg: SyntheticConfig, with_trigger: bool) -> ClassifierHead:
        l, d = cfg.num_classes, cfg.dim
        weight = np.zeros((l, d))
        for i in range(l):
            weight[i] = cfg.head_scale * self.u[i] + self.kappa[i] * self.v[i]
        if with_trigger:
            for t, ez in self.triggers.items():
                weight[t - 1] += cfg.trigger_gain * ez
        bias = -weight @ (self.shift * self.ones_dir * np.sqrt(cfg.dim))
        return ClassifierHead([(weight.astype(np.float32), bias.astype(np.float32))])

    def base_point(self, cfg: SyntheticConfig) -> np.ndarray:
        return self.shift * self.ones_dir * np.sqrt(cfg.dim)


def _draw_class(
    world: _World,
    cfg: SyntheticConfig,
    label: int,
    n: int,
    rng: np.random.Generator,
    split: str,
) -> tuple[np.ndarray, np.ndarray]:
    """n rows of class ``label``; returns (features, deviant_mask)."""
    n_dev = int(round(cfg.deviant_frac * n))
    n_main = n - n_dev
    main, dev = world.modes_for(split)[label]
    base = world.base_point(cfg)
    rows = np.empty((n, cfg.dim))
    rows[:n_main] = base + main
    rows[n_main:] = base + dev
    rows += rng.normal(scale=cfg.sigma, size=rows.shape)
    mask = np.zeros(n, dtype=bool)
    mask[n_main:] = True
    return np.maximum(rows, 0.0), mask


def _draw_split(
    world: _World, cfg: SyntheticConfig, per_class: int, split: str, rng: np.random.Generator
) -> FeatureDataset:
    feats, labels = [], []
    for label in range(1, cfg.num_classes + 1):
        block, _ = _draw_class(world, cfg, label, per_class, rng, split)
        feats.append(block)
        labels.append(np.full(per_class, label, dtype=np.int64))
    return FeatureDataset(
        features=np.concatenate(feats).astype(np.float32),
        labels=np.concatenate(labels),
        num_classes=cfg.num_classes,
        split=split,
    )


def _poison_train(
    world: _World, cfg: SyntheticConfig, train: FeatureDataset, rng: np.random.Generator
) -> FeatureDataset:
    feats = train.features.astype(np.float64)
    labels = train.labels.copy()
    flags = train.poison_flags.copy()
    origin = train.origin_labels.copy()
    for t in cfg.targets:
        tvec = cfg.trigger_strength * world.triggers[t]
        t_rows = np.flatnonzero(labels == t)
        if cfg.label_mode == "corrupted":
            n_poison = int(round(cfg.alpha * t_rows.size / (1.0 - cfg.alpha)))
            sources = np.setdiff1d(np.arange(1, cfg.num_classes + 1), [t])
            src_labels = rng.choice(sources, size=n_poison, replace=True)
            srcs, counts = np.unique(src_labels, return_counts=True)
            blocks = [
                _draw_class(world, cfg, int(src), int(cnt), rng, "train")[0]
                for src, cnt in zip(srcs, counts)
            ]
            new_rows = (
                np.concatenate(blocks) if blocks else np.empty((0, cfg.dim))
            )
            new_rows = np.maximum(new_rows + tvec, 0.0)
            feats = np.concatenate([feats, new_rows])
            labels = np.concatenate([labels, np.full(n_poison, t, dtype=np.int64)])
            flags = np.concatenate([flags, np.ones(n_poison, dtype=bool)])
            origin = np.concatenate([origin, np.repeat(srcs, counts).astype(np.int64)])
        else:
            n_poison = int(round(cfg.alpha * t_rows.size))
            chosen = rng.choice(t_rows, size=n_poison, replace=False)
            feats[chosen] = np.maximum(feats[chosen] + tvec, 0.0)
            flags[chosen] = True
            origin[chosen] = t
    return FeatureDataset(
        features=feats.astype(np.float32),
        labels=labels,
        num_classes=cfg.num_classes,
        split="train",
        poison_flags=flags,
        origin_labels=origin,
    )


def _filtered_predictions(
    world: _World,
    cfg: SyntheticConfig,
    ds: FeatureDataset,
    head: ClassifierHead,
    rng: np.random.Generator,
) -> np.ndarray:
    """Model predictions after the reference low-pass filter.

    Removable triggers lose their feature component, so the prediction is
    recomputed on the de-triggered features; benign samples keep their
    prediction up to a small disagreement rate from filtering distortion.
    """
    feats = ds.features.astype(np.float64).copy()
    if cfg.filter_removable:
        for t in cfg.targets:
            rows = np.flatnonzero(ds.poison_flags & (ds.labels == t))
            feats[rows] = np.maximum(
                feats[rows] - cfg.trigger_strength * world.triggers[t], 0.0
            )
    preds = head.classify(feats.astype(np.float32)).astype(np.int64)
    benign_rows = np.flatnonzero(~ds.poison_flags)
    n_flip = int(round(cfg.benign_disagree_rate * benign_rows.size))
    if n_flip:
        flips = rng.choice(benign_rows, size=n_flip, replace=False)
        offsets = rng.integers(1, cfg.num_classes, size=n_flip)
        preds[flips] = (preds[flips] - 1 + offsets) % cfg.num_classes + 1
    return preds


def _verify_margins(
    world: _World, cfg: SyntheticConfig, head: ClassifierHead, val: FeatureDataset
) -> None:
    """Every canonical poisoned-cluster deviation must flip every val sample.

    Checks each trigger against per-source and pooled deviations; raises a
    configuration error naming the violated margin otherwise.
    """
    for t, ez in world.triggers.items():
        tvec = cfg.trigger_strength * ez
        val_t_mean = val.features[val.labels == t].astype(np.float64).mean(axis=0)
        others = val.features[val.labels != t].astype(np.float64)
        betas = []
        pooled = []
        for j in range(1, cfg.num_classes + 1):
            if j == t and cfg.label_mode == "corrupted":
                continue
            main_j, dev_j = world.modes_for("train")[j]
            mix = (1 - cfg.deviant_frac) * main_j + cfg.deviant_frac * dev_j
            beta = (world.base_point(cfg) + mix + tvec) - val_t_mean
            betas.append((j, beta))
            pooled.append(beta)
        betas.append((0, np.mean(pooled, axis=0)))
        for j, beta in betas:
            shifted = np.maximum(others + beta, 0.0).astype(np.float32)
            logits = head.logits(shifted)
            target_logit = logits[:, t - 1]
            rival = np.max(np.delete(logits, t - 1, axis=1), axis=1)
            margin = float((target_logit - rival).min())
            if margin <= 0.0:
                src = "pooled sources" if j == 0 else f"source class {j}"
                raise ConfigError(
                    f"infeasible trigger margin for target {t} ({src}): "
                    f"min logit margin {margin:.3f} <= 0; raise trigger_gain or "
                    f"trigger_strength"
                )


def generate(cfg: SyntheticConfig) -> SyntheticBundle:
    """Build one benchmark bundle (poisoned train, benign val/test, heads, gates)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0FFEE]))
    world = _World(cfg, rng)
    head = world.head(cfg, with_trigger=True)
    clean_head = world.head(cfg, with_trigger=False)

    train_benign = _draw_split(world, cfg, cfg.train_per_class, "train", rng)
    val = _draw_split(world, cfg, cfg.val_per_class, "validation", rng)
    test = _draw_split(world, cfg, cfg.test_per_class, "test", rng)
    train = _poison_train(world, cfg, train_benign, rng)

    triggered_tests = {}
    for t in cfg.targets:
        tvec = cfg.trigger_strength * world.triggers[t]
        keep = np.flatnonzero(test.labels != t)
        feats = np.maximum(test.features[keep].astype(np.float64) + tvec, 0.0)
        triggered_tests[t] = FeatureDataset(
            features=feats.astype(np.float32),
            labels=test.labels[keep].copy(),
            num_classes=cfg.num_classes,
            split="test",
            poison_flags=np.ones(keep.size, dtype=bool),
            origin_labels=test.labels[keep].copy(),
        )

    train.filtered_predictions = _filtered_predictions(world, cfg, train, head, rng)
    train.validate()

    _verify_margins(world, cfg, head, val)

    acc_clean_model = accuracy(clean_head.classify(test.features), test.labels)
    acc_poisoned_model = accuracy(head.classify(test.features), test.labels)
    asr_per_target = {
        t: attack_success_rate(head.classify(ds.features), t)
        for t, ds in triggered_tests.items()
    }
    gates = {
        "acc_clean_model": acc_clean_model,
        "acc_poisoned_model": acc_poisoned_model,
        "asr_per_target": asr_per_target,
        "attack_success": (
            attack_succeeded(
                acc_clean_model, acc_poisoned_model, min(asr_per_target.values())
            )
            if asr_per_target
            else None
        ),
    }
    return SyntheticBundle(
        config=cfg,
        train=train,
        val=val,
        test=test,
        triggered_tests=triggered_tests,
        head=head,
        clean_head=clean_head,
        gates=gates,
    )
