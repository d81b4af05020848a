"""Self-supervised training of the collision and fall classifiers.

Random-command rollouts in randomised training worlds are labelled from the
simulator's ground-truth contact and fall events, then fed to the logistic
trainer in :mod:`propnav.safety`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import safety, sim

DEFAULT_ROLLOUTS = 400
DEFAULT_STRIDE = 10
HELD_OUT_OFFSET = 100_000


@dataclass
class TrainedModels:
    collision: safety.SafetyClassifier
    fall: safety.SafetyClassifier
    report: dict


def corpus(seeds, stride: int = DEFAULT_STRIDE, duration: float = 20.0):
    """Stack labelled windows from one rollout per seed."""
    xs, ycs, yfs = [], [], []
    for s in seeds:
        X, yc, yf = safety.make_labels(sim.collect_rollout(int(s), duration), stride)
        if len(X):
            xs.append(X)
            ycs.append(yc)
            yfs.append(yf)
    return np.concatenate(xs), np.concatenate(ycs), np.concatenate(yfs)


def evaluate(models: TrainedModels | tuple, X, yc, yf) -> dict:
    mc, mf = (models.collision, models.fall) if isinstance(models, TrainedModels) else models
    pc = mc.predict_proba(X)
    pf = mf.predict_proba(X)
    out = {"n_windows": int(len(X)), "n_collision": int(yc.sum()), "n_fall": int(yf.sum())}
    out["collision_auc"] = safety.roc_auc(pc, yc)
    out["fall_auc"] = safety.roc_auc(pf, yf)
    out["fall_recall"] = float((pf[yf] > safety.THRESHOLD).mean())
    out["fall_flag_rate_negatives"] = float((pf[~yf] > safety.THRESHOLD).mean())
    return out


def train_safety(n_rollouts: int = DEFAULT_ROLLOUTS, seed: int = 0, stride: int = DEFAULT_STRIDE,
                 n_eval: int | None = None, iters: int = 400) -> TrainedModels:
    """Collect rollouts, train both classifiers and score them on held-out rollouts."""
    base = seed * 1_000_003
    X, yc, yf = corpus(range(base, base + n_rollouts), stride)
    mc = safety.train_classifier(X, yc, seed=seed, iters=iters)
    mf = safety.train_classifier(X, yf, seed=seed + 1, iters=iters)
    n_eval = n_rollouts // 2 if n_eval is None else n_eval
    held = range(base + HELD_OUT_OFFSET, base + HELD_OUT_OFFSET + n_eval)
    report = evaluate((mc, mf), *corpus(held, stride))
    report.update(n_train=int(len(X)), seed=seed, n_rollouts=n_rollouts,
                  collision_loss_monotone=_monotone(mc.loss_history),
                  fall_loss_monotone=_monotone(mf.loss_history))
    return TrainedModels(mc, mf, report)


def _monotone(history) -> bool:
    return all(b <= a for a, b in zip(history, history[1:]))


def save_models(models: TrainedModels, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "collision.csv").write_text(models.collision.to_csv())
    (out / "fall.csv").write_text(models.fall.to_csv())


def load_models(model_dir) -> tuple[safety.SafetyClassifier, safety.SafetyClassifier]:
    d = Path(model_dir)
    return (safety.SafetyClassifier.from_csv((d / "collision.csv").read_text()),
            safety.SafetyClassifier.from_csv((d / "fall.csv").read_text()))


def cached_models(cache_dir=None, seed: int = 0):
    """Train once with default settings and reuse the CSV weights afterwards."""
    cache_dir = Path(cache_dir or os.environ.get("PROPNAV_MODEL_CACHE",
                                                 Path.home() / ".cache" / "propnav" / f"models-{seed}"))
    if (cache_dir / "collision.csv").exists() and (cache_dir / "fall.csv").exists():
        return load_models(cache_dir)
    models = train_safety(seed=seed)
    save_models(models, cache_dir)
    return models.collision, models.fall
