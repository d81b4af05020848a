"""Acceptance suite: one test per numbered criterion.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run, with the measured
numbers. The benchmark criteria run the full 100-episode suites, so this
module takes roughly 12 minutes on one core.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from propnav import bench, cli, fields, oracles, training
from propnav.safety import SafetyState, advisor_step, V_CEIL, V_FLOOR

N_LAYOUTS, N_GOALS = 20, 5  # 100 episodes per suite run


@pytest.fixture(scope="module")
def trained():
    """Classifiers trained from scratch with the default protocol."""
    return training.train_safety()


@pytest.fixture(scope="module")
def suite(trained):
    """Memoised full-size suite runs keyed by (suite, config)."""
    cache = {}

    def run(suite_tag, config_tag, n_layouts=N_LAYOUTS, n_goals=N_GOALS):
        key = (suite_tag, config_tag, n_layouts, n_goals)
        if key not in cache:
            t0 = time.perf_counter()
            res = bench.run_suite(suite_tag, config_tag, n_layouts, n_goals, seed=0,
                                  collision_model=trained.collision, fall_model=trained.fall)
            cache[key] = (res, time.perf_counter() - t0)
        return cache[key]

    return run


@pytest.mark.criterion(1, "FMM oracle")
def test_fmm_oracle(record_property):
    t0 = time.perf_counter()
    rep = oracles.cross_check(n_fmm=200, n_sdf=0, seed=0)
    secs = time.perf_counter() - t0
    record_property("grids", rep["fmm_grids"])
    record_property("excess_over_dijkstra", f"{rep['fmm_max_excess_over_dijkstra']:.2e}")
    record_property("deficit_below_euclid", f"{rep['fmm_max_deficit_below_euclid']:.2e}")
    record_property("open_rel_error", f"{rep['open_grid_max_rel_error']:.4f}")
    record_property("seconds", f"{secs:.1f}")
    assert rep["fmm_grids"] == 200
    assert rep["fmm_max_excess_over_dijkstra"] <= 1e-9
    assert rep["fmm_max_deficit_below_euclid"] <= 1e-9
    assert rep["fmm_reachability_mismatches"] == 0
    assert rep["open_grid_max_rel_error"] <= 0.05
    assert secs < 30.0


@pytest.mark.criterion(2, "SDF oracle")
def test_sdf_oracle(record_property):
    rep = oracles.cross_check(n_fmm=0, n_sdf=100, seed=1)
    record_property("grids", rep["sdf_grids"])
    record_property("mismatches", rep["sdf_mismatches"])
    assert rep["sdf_grids"] == 100 and rep["sdf_mismatches"] == 0


@pytest.mark.criterion(3, "cost identities")
def test_cost_identities(record_property):
    rng = np.random.default_rng(3)
    far = near = 0
    worst = 0.0
    for _ in range(50):
        occ = oracles.random_connected_grid(rng, (50, 50), 0.3)
        free = np.argwhere(~occ)
        goal = fields.cell_center(tuple(free[rng.integers(len(free))]))
        f = fields.CostField.compute(occ, goal)
        ok = np.isfinite(f.d_goal)
        a = ok & (f.d_sdf >= 0.3)
        b = ok & (f.d_sdf > 0) & (f.d_sdf < 0.3)
        assert np.array_equal(f.cost[a], f.d_goal[a])
        err = np.abs((f.cost[b] - f.d_goal[b]) - 0.5 * (0.3 - f.d_sdf[b]))
        scale = np.maximum(1.0, f.cost[b])
        worst = max(worst, float((err / scale).max(initial=0.0)))
        far += int(a.sum())
        near += int(b.sum())
    record_property("cells_far", far)
    record_property("cells_near", near)
    record_property("max_rel_residual", f"{worst:.1e}")
    assert far > 0 and near > 0
    assert worst <= 8 * np.finfo(float).eps


def _descend(field, start, goal):
    """Step 0.05 m along descent_direction; return (reached, steps, bound)."""
    p = np.array(start, dtype=float)
    d0 = field.distance_at(p)
    bound = int(math.ceil(4 * d0 / 0.05))
    for k in range(bound + 1):
        if math.hypot(p[0] - goal[0], p[1] - goal[1]) <= 0.3:
            return True, k, bound
        if k == bound:
            break
        th = fields.descent_direction(field, p)
        p = p + 0.05 * np.array([math.cos(th), math.sin(th)])
    return False, bound, bound


@pytest.mark.criterion(4, "descent termination")
def test_descent_termination(record_property):
    rng = np.random.default_rng(4)
    failures, worst, runs = [], 0.0, 0
    for m in range(20):
        occ = oracles.random_connected_grid(rng, (50, 50), 0.3)
        free = np.argwhere(~occ)
        g = tuple(free[rng.integers(len(free))])
        goal = fields.cell_center(g)
        f = fields.CostField.compute(occ, goal)
        for s in range(10):
            r, c = free[rng.integers(len(free))]
            start = ((c + rng.uniform(0.05, 0.95)) * fields.CELL,
                     (r + rng.uniform(0.05, 0.95)) * fields.CELL)
            reached, steps, bound = _descend(f, start, goal)
            runs += 1
            if not reached:
                failures.append((m, s))
            else:
                worst = max(worst, steps / max(bound, 1))
    record_property("runs", runs)
    record_property("failures", len(failures))
    record_property("worst_steps_over_bound", f"{worst:.3f}")
    assert not failures


@pytest.mark.criterion(5, "InvObstacle8 proprio benefit")
def test_invobstacle8(suite, record_property):
    on, t_on = suite("InvObstacle8", "vpnav")
    off, t_off = suite("InvObstacle8", "no_proprio")
    record_property("vpnav", on.success_rate)
    record_property("no_proprio", off.success_rate)
    record_property("seconds", f"{t_on + t_off:.0f}")
    assert on.n_episodes == off.n_episodes == 100
    assert on.success_rate - off.success_rate >= 10.0
    assert t_on + t_off < 600.0


@pytest.mark.criterion(6, "Randomized proprio benefit and throttling")
def test_randomized(suite, record_property):
    on, _ = suite("Randomized", "vpnav")
    off, _ = suite("Randomized", "no_proprio")
    v_hazard, v_clear = on.hazard_speeds()
    record_property("vpnav", on.success_rate)
    record_property("no_proprio", off.success_rate)
    record_property("v_cmd_hazard", f"{v_hazard:.3f}")
    record_property("v_cmd_clear", f"{v_clear:.3f}")
    assert on.n_episodes == off.n_episodes == 100
    assert on.success_rate - off.success_rate >= 5.0
    assert v_hazard < v_clear


@pytest.mark.criterion(7, "continuous vs discrete time")
def test_flat_time(suite, record_property):
    cont, _ = suite("Flat", "vpnav")
    disc, _ = suite("Flat", "vpnav_discrete")
    ratio = cont.mean_time / disc.mean_time
    record_property("continuous_s", f"{cont.mean_time:.2f}")
    record_property("discrete_s", f"{disc.mean_time:.2f}")
    record_property("ratio", f"{ratio:.3f}")
    assert cont.n_episodes == disc.n_episodes == 100
    assert ratio <= 0.9


@pytest.mark.criterion(8, "wheeled baselines on rough terrain")
def test_rough_terrain(suite, record_property):
    legged, _ = suite("RoughTerrain", "vpnav")
    proceed, _ = suite("RoughTerrain", "wheeled_proceed")
    avoid, _ = suite("RoughTerrain", "wheeled_avoid")
    record_property("vpnav", legged.success_rate)
    record_property("wheeled_proceed", proceed.success_rate)
    record_property("wheeled_avoid", avoid.success_rate)
    assert proceed.success_rate <= legged.success_rate - 30.0
    assert proceed.success_rate <= avoid.success_rate <= legged.success_rate


@pytest.mark.criterion(9, "glass wall")
def test_glass_wall(suite, record_property):
    on, _ = suite("GlassWall", "vpnav", 8, 1)
    off, _ = suite("GlassWall", "no_proprio", 8, 1)
    n_on = sum(r.outcome == "success" for r in on.records)
    n_off = sum(r.outcome == "success" for r in off.records)
    record_property("proprio_on", f"{n_on}/8")
    record_property("proprio_off", f"{n_off}/8")
    assert on.n_episodes == off.n_episodes == 8
    assert n_on >= 7 and n_off == 0


@pytest.mark.criterion(10, "classifier quality")
def test_classifier_quality(trained, record_property):
    r = trained.report
    record_property("collision_auc", f"{r['collision_auc']:.3f}")
    record_property("fall_recall", f"{r['fall_recall']:.3f}")
    record_property("loss_monotone", r["collision_loss_monotone"] and r["fall_loss_monotone"])
    assert r["collision_auc"] >= 0.9
    assert r["fall_recall"] >= 0.8
    for m in (trained.collision, trained.fall):
        h = m.loss_history
        assert len(h) > 1 and all(b <= a for a, b in zip(h, h[1:]))


@pytest.mark.criterion(11, "advisor dynamics")
def test_advisor_dynamics(record_property):
    rng = np.random.default_rng(11)
    s = SafetyState()
    for k in range(2000):  # random sequences never leave the band
        advisor_step(s, rng.random(), rng.random(), (0.0, 0.0, 0.0), t=k * 0.1)
        assert V_FLOOR <= s.v_max <= V_CEIL

    s = SafetyState()
    down = []
    for _ in range(8):
        advisor_step(s, 0.0, 0.9, (0.0, 0.0, 0.0))
        down.append(s.v_max)
    up = []
    for _ in range(20):
        advisor_step(s, 0.0, 0.1, (0.0, 0.0, 0.0))
        up.append(s.v_max)
    floor_steps = down.index(V_FLOOR) + 1
    ceil_steps = up.index(V_CEIL) + 1
    assert down[floor_steps - 1:] == [V_FLOOR] * (9 - floor_steps)
    assert up[ceil_steps - 1:] == [V_CEIL] * (21 - ceil_steps)

    s = SafetyState()
    times = []
    for k in range(300):  # 30 s of p_collision above threshold at 10 Hz
        _, patch = advisor_step(s, 0.6 + 0.4 * rng.random(), 0.0, (0.0, 0.0, 0.0), t=k * 0.1)
        if patch is not None:
            times.append(k * 0.1)
    gaps = np.diff(times)
    record_property("floor_steps", floor_steps)
    record_property("ceiling_steps", ceil_steps)
    record_property("patches_in_30s", len(times))
    assert floor_steps == 5 and ceil_steps == 17
    assert len(times) == 30 and (gaps >= 1.0 - 1e-9).all()


@pytest.mark.criterion(12, "determinism")
def test_determinism(trained, tmp_path, capsys, record_property):
    mdir = tmp_path / "models"
    training.save_models(trained, mdir)
    runs = [("Flat", "vpnav"), ("RoughTerrain", "wheeled_proceed"), ("InvObstacle4", "vpnav"),
            ("Randomized", "no_proprio"), ("GlassWall", "vpnav"), ("Flat", "vpnav_discrete")]
    checked = 0
    for suite_tag, config_tag in runs:
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{suite_tag}-{config_tag}-{rep}"
            argv = ["run", "--suite", suite_tag, "--pipeline", config_tag, "--layouts", "2",
                    "--goals", "2", "--seed", "7", "--models", str(mdir), "--out", str(out)]
            capsys.readouterr()
            assert cli.main(argv) == 0
            stdout = capsys.readouterr().out
            outputs.append((stdout, (out / "summary.json").read_bytes(),
                            (out / "episodes.csv").read_bytes()))
        assert outputs[0] == outputs[1], (suite_tag, config_tag)
        json.loads(outputs[0][1])
        checked += 1
    record_property("invocations_compared", checked)
