from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from propnav import commander as cmd, safety, sim, world
from propnav.safety import SafetyClassifier, SafetyState, advisor_step


# ---------------------------------------------------------------- advisor

def test_collision_patch_ahead_of_pose():
    st_ = SafetyState()
    _, patch = advisor_step(st_, 0.7, 0.0, (1.0, 2.0, math.pi / 2), t=3.0)
    cx, cy, th, length, width = patch
    assert (cx, cy) == pytest.approx((1.0, 2.15))
    assert th == pytest.approx(math.pi / 2)
    assert (length, width) == (0.03, 0.09)
    assert st_.pending_patches == [patch]


def test_fall_limit_steps():
    s = SafetyState(v_max=1.0)
    advisor_step(s, 0.0, 0.6, (0, 0, 0))
    assert s.v_max == pytest.approx(0.8)
    advisor_step(s, 0.0, 0.2, (0, 0, 0))
    assert s.v_max == pytest.approx(0.85)


def test_floor_in_five_and_ceiling_in_seventeen():
    s = SafetyState()
    seq = []
    for _ in range(8):
        advisor_step(s, 0.0, 0.9, (0, 0, 0))
        seq.append(s.v_max)
    assert seq.index(0.15) == 4 and seq[4:] == [0.15] * 4
    ups = []
    for _ in range(20):
        advisor_step(s, 0.0, 0.1, (0, 0, 0))
        ups.append(s.v_max)
    assert ups.index(1.0) == 16 and ups[16:] == [1.0] * 4


def test_one_patch_per_refractory_period():
    s = SafetyState()
    n = 0
    for k in range(100):  # 10 s of sustained contact at 10 Hz
        _, p = advisor_step(s, 0.95, 0.0, (0, 0, 0), t=k * 0.1)
        n += p is not None
    assert n == 10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=80))
def test_advisor_invariants(seq):
    s = SafetyState()
    times = []
    for k, (pc, pf) in enumerate(seq):
        _, p = advisor_step(s, pc, pf, (0.0, 0.0, 0.0), t=k * 0.1)
        assert 0.15 <= s.v_max <= 1.0
        if p is not None:
            times.append(k * 0.1)
    assert all(b - a >= 1.0 - 1e-9 for a, b in zip(times, times[1:]))


# ---------------------------------------------------------------- classifier

def test_zero_weight_classifier_gives_half():
    c = SafetyClassifier(np.zeros(safety.WINDOW * safety.N_FEATURES))
    assert safety.predict(c, safety.ProprioWindow()) == 0.5


def test_separable_synthetic():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3000, 6))
    y = X[:, 0] + 0.5 * X[:, 3] > 0.2
    m = safety.train_classifier(X[:2000], y[:2000])
    acc = ((m.predict_proba(X[2000:]) > 0.5) == y[2000:]).mean()
    assert acc >= 0.99
    assert all(b <= a for a, b in zip(m.loss_history, m.loss_history[1:]))


def test_no_signal_auc_near_half():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4000, 5))
    y = rng.random(4000) < 0.3
    m = safety.train_classifier(X[:2000], y[:2000])
    assert abs(safety.roc_auc(m.predict_proba(X[2000:]), y[2000:]) - 0.5) <= 0.05


def test_training_errors():
    X = np.zeros((1500, 3))
    with pytest.raises(ValueError):
        safety.train_classifier(X, np.zeros(1500))
    with pytest.raises(ValueError):
        safety.train_classifier(X[:10], np.arange(10) % 2)


def test_classifier_csv_round_trip():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(1200, 4))
    m = safety.train_classifier(X, X[:, 1] > 0)
    m2 = SafetyClassifier.from_csv(m.to_csv())
    assert np.array_equal(m.predict_proba(X), m2.predict_proba(X))


def test_roc_auc_ties_and_errors():
    assert safety.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert safety.roc_auc([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(ValueError):
        safety.roc_auc([0.1, 0.2], [1, 1])


# ---------------------------------------------------------------- windows and labels

def test_window_initialised_by_repetition():
    w = safety.ProprioWindow(length=4, n_features=2)
    w.push([1.0, 2.0])
    assert np.array_equal(w.array(), [[1, 2]] * 4)
    w.push([3.0, 4.0])
    assert np.array_equal(w.array()[-1], [3, 4]) and np.array_equal(w.array()[0], [1, 2])


def test_make_labels_examples():
    n = 300
    feats = np.zeros((n, safety.N_FEATURES))
    coll = np.zeros(n, bool)
    coll[120:140] = True
    ro = sim.Rollout(feats, coll, fall_tick=250)
    X, yc, yf = safety.make_labels(ro)
    ks = np.arange(safety.WINDOW - 1, n)
    assert len(X) == len(ks) and X.shape[1] == safety.WINDOW * safety.N_FEATURES
    assert yc[ks == 130][0]
    assert yf[ks == 200][0]          # 0.5 s before the fall
    assert not yf[ks == 100][0]      # 1.5 s before
    assert not yc[ks == 60][0] and not yf[ks == 60][0]
    short = sim.Rollout(feats[:10], coll[:10], None)
    assert len(safety.make_labels(short)[0]) == 0


def _run_commands(world_, pose, command, seconds, seed=0):
    state = sim.RobotState(*pose)
    contact = sim.Contact(world_)
    rng = np.random.default_rng(seed)
    for k in range(int(seconds / sim.CONTROL_DT)):
        sim.step_control(state, command, world_, sim.CONTROL_DT, rng, k * sim.CONTROL_DT, contact)
    return state


def test_trained_models_on_scripted_windows(models):
    mc, mf = models
    wall = world.TerrainWorld(60, 60, np.full((60, 60), 0.8), np.zeros((60, 60)),
                              invisible_obstacles=((3.5, 0.0, 3.6, 6.0),))
    stalled = _run_commands(wall, (3.0, 3.0, 0.0), cmd.VelocityCommand(0.6, 0.0, cmd.CURVE), 2.0)
    assert stalled.collided_now
    assert safety.predict(mc, stalled.proprio) > 0.5
    flat = world.flat_world(np.zeros((200, 200), bool))
    cruise = _run_commands(flat, (1.0, 10.0, 0.0), cmd.VelocityCommand(1.0, 0.0, cmd.CURVE), 3.0)
    assert safety.predict(mf, cruise.proprio) < 0.5
    assert safety.predict(mc, cruise.proprio) < 0.5
