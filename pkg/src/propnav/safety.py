"""Proprioceptive safety advisor: collision and fall classifiers plus the
run-time rules that turn their outputs into map patches and speed limits."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

WINDOW = 50
FEATURES = ("v_cmd", "w_cmd", "v_meas", "w_meas", "slip", "yaw_residual", "stall", "payload")
N_FEATURES = len(FEATURES)

THRESHOLD = 0.5
V_FLOOR = 0.15
V_CEIL = 1.0
V_DROP = 0.2
V_RISE = 0.05
PATCH_LENGTH = 0.03  # along heading
PATCH_WIDTH = 0.09
PATCH_AHEAD = 0.15
REFRACTORY = 1.0
FALL_HORIZON = 1.0


class ProprioWindow:
    """Fixed-length rolling history of per-tick proprioceptive features."""

    def __init__(self, length: int = WINDOW, n_features: int = N_FEATURES):
        self.buf = np.zeros((length, n_features))
        self.length = length
        self.count = 0
        self._head = 0

    def push(self, sample) -> None:
        if self.count == 0:
            self.buf[:] = sample
        else:
            self.buf[self._head] = sample
        self._head = (self._head + 1) % self.length
        self.count += 1

    @property
    def full(self) -> bool:
        return self.count >= self.length

    def array(self) -> np.ndarray:
        """Oldest-first copy of the window."""
        return np.roll(self.buf, -self._head, axis=0)

    def flat(self) -> np.ndarray:
        return self.array().ravel()


@dataclass
class SafetyClassifier:
    weights: np.ndarray
    bias: float = 0.0
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    loss_history: list = field(default_factory=list)

    def logit(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mean is not None:
            x = (x - self.mean) / self.scale
        return x @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logit(x))

    def to_csv(self) -> str:
        n = len(self.weights)
        mean = self.mean if self.mean is not None else np.zeros(n)
        scale = self.scale if self.scale is not None else np.ones(n)
        buf = io.StringIO()
        buf.write("param,index,value\n")
        buf.write(f"bias,0,{self.bias!r}\n")
        for name, arr in (("weight", self.weights), ("mean", mean), ("scale", scale)):
            for i, v in enumerate(arr):
                buf.write(f"{name},{i},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SafetyClassifier":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        parts: dict[str, dict[int, float]] = {}
        for name, idx, val in rows:
            parts.setdefault(name, {})[int(idx)] = float(val)

        def vec(name):
            d = parts[name]
            return np.array([d[i] for i in range(len(d))])

        return cls(vec("weight"), parts["bias"][0], vec("mean"), vec("scale"))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def predict(classifier: SafetyClassifier, window) -> float:
    x = window.flat() if isinstance(window, ProprioWindow) else np.ravel(window)
    return float(classifier.predict_proba(x))


def _weighted_bce(w, b, X, y, sw, l2):
    z = X @ w + b
    # log(1 + exp(-z)) and log(1 + exp(z)) evaluated stably
    lp = np.logaddexp(0.0, -z)
    ln = np.logaddexp(0.0, z)
    loss = np.sum(sw * (y * lp + (1 - y) * ln)) / np.sum(sw) + 0.5 * l2 * w @ w
    p = _sigmoid(z)
    g = sw * (p - y) / np.sum(sw)
    return loss, X.T @ g + l2 * w, g.sum()


def train_classifier(X, y, seed: int = 0, iters: int = 400, lr: float = 1.0,
                     l2: float = 1e-4, min_samples: int = 1000) -> SafetyClassifier:
    """Logistic regression by full-batch gradient descent on class-balanced BCE.

    A step is accepted only if it does not increase the loss; otherwise the
    step size is halved and the step retried, so the recorded loss history
    is non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) < min_samples:
        raise ValueError(f"need at least {min_samples} labelled windows, got {len(X)}")
    pos = y.sum()
    if pos == 0 or pos == len(y):
        raise ValueError("training labels contain a single class")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-8] = 1.0
    Xs = (X - mean) / scale
    sw = np.where(y > 0.5, (len(y) - pos) / pos, 1.0)
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1e-3, X.shape[1])
    b = 0.0
    loss, gw, gb = _weighted_bce(w, b, Xs, y, sw, l2)
    history = [loss]
    step = lr
    for _ in range(iters):
        while step > 1e-8:
            w2, b2 = w - step * gw, b - step * gb
            loss2, gw2, gb2 = _weighted_bce(w2, b2, Xs, y, sw, l2)
            if loss2 <= loss:
                break
            step *= 0.5
        else:
            break
        w, b, loss, gw, gb = w2, b2, loss2, gw2, gb2
        history.append(loss)
    return SafetyClassifier(w, float(b), mean, scale, history)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with tie correction."""
    from scipy.stats import rankdata

    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n1, n0 = y.sum(), (~y).sum()
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def window_at(features: np.ndarray, k: int, length: int = WINDOW) -> np.ndarray:
    """Window ending at tick ``k``, padded by repeating the first sample."""
    lo = k - length + 1
    if lo >= 0:
        return features[lo:k + 1]
    return np.concatenate([np.repeat(features[:1], -lo, axis=0), features[:k + 1]])


def make_labels(rollout, stride: int = 1, length: int = WINDOW):
    """Windows with collision-now and fall-within-1s labels.

    Returns ``(X, y_collision, y_fall)`` with one row per ``stride`` control
    ticks. Rollouts shorter than one window yield empty arrays.
    """
    feats = np.asarray(rollout.features)
    n = len(feats)
    if n < length:
        return (np.zeros((0, length * feats.shape[1] if feats.ndim == 2 else 0)),
                np.zeros(0, bool), np.zeros(0, bool))
    horizon = int(round(FALL_HORIZON / rollout.dt))
    ks = np.arange(length - 1, n, stride)
    X = np.stack([window_at(feats, k, length).ravel() for k in ks])
    yc = np.asarray(rollout.collided, dtype=bool)[ks]
    if rollout.fall_tick is None:
        yf = np.zeros(len(ks), dtype=bool)
    else:
        yf = (ks < rollout.fall_tick) & (ks >= rollout.fall_tick - horizon)
        yf |= ks == rollout.fall_tick
    return X, yc, yf


# --------------------------------------------------------------------------
# run-time advisor

@dataclass
class SafetyState:
    v_max: float = V_CEIL
    pending_patches: list = field(default_factory=list)
    last_collision_time: float = -math.inf


def advisor_step(state: SafetyState, p_collision: float, p_fall: float, pose,
                 t: float = 0.0, refractory: float = REFRACTORY):
    """Apply one advisor tick. Returns ``(state, patch_or_None)``.

    A patch is ``(cx, cy, heading, length, width)`` with its 3 cm side along
    the robot heading, centred ``PATCH_AHEAD`` in front of the robot.
    """
    patch = None
    if p_collision > THRESHOLD and t - state.last_collision_time >= refractory - 1e-9:
        x, y, th = pose
        patch = (x + PATCH_AHEAD * math.cos(th), y + PATCH_AHEAD * math.sin(th), th,
                 PATCH_LENGTH, PATCH_WIDTH)
        state.pending_patches.append(patch)
        state.last_collision_time = t
    if p_fall > THRESHOLD:
        state.v_max = max(V_FLOOR, state.v_max - V_DROP)
    else:
        state.v_max = min(V_CEIL, state.v_max + V_RISE)
    # keep the limit on the 0.05 m/s lattice
    state.v_max = round(state.v_max, 10)
    return state, patch
