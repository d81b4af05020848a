from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from propnav import fields, oracles
from propnav.fields import CostField


def _field_from_cost(cost):
    cost = np.asarray(cost, dtype=float)
    return CostField(cost.copy(), np.ones_like(cost), cost, (0.0, 0.0))


def test_fmm_zero_at_goal_and_open_grid_distance():
    free = np.zeros((60, 60), bool)
    goal = fields.cell_center((10, 10))
    d = fields.fmm_goal_distance(free, goal)
    assert d[10, 10] == 0.0
    # 3.0 m straight along a row and along a diagonal-ish direction
    assert d[10, 40] == pytest.approx(3.0, rel=0.05)
    r, c = 10 + 18, 10 + 24  # 0.1*hypot(18, 24) = 3.0
    assert d[r, c] == pytest.approx(3.0, rel=0.05)


def test_fmm_goal_errors_and_disconnected():
    g = np.zeros((20, 20), bool)
    g[:, 10] = True
    with pytest.raises(fields.PlannerError):
        fields.fmm_goal_distance(g, fields.cell_center((5, 10)))
    d = fields.fmm_goal_distance(g, fields.cell_center((5, 2)))
    assert np.isinf(d[:, 11:]).all() and np.isinf(d[:, 10]).all()
    assert np.isfinite(d[:, :10]).all()


def test_fmm_acceptance_order_non_decreasing():
    occ = oracles.random_connected_grid(np.random.default_rng(0))
    g = tuple(np.argwhere(~occ)[0])
    d, order = fields.fmm_goal_distance(occ, fields.cell_center(g), return_order=True)
    vals = d.ravel()[order]
    assert np.all(np.diff(vals) >= -1e-12)


def test_fmm_wall_between_oracle_bounds():
    g = np.zeros((50, 50), bool)
    g[10:40, 25] = True
    goal = (25, 40)
    d = fields.fmm_goal_distance(g, fields.cell_center(goal))
    dj = oracles.dijkstra8(~g, goal)
    eu = oracles.euclidean_from(g.shape, goal)
    fin = np.isfinite(dj)
    assert np.all(d[fin] <= dj[fin] + 1e-9)
    assert np.all(d[fin] >= eu[fin] - 1e-9)


def test_sdf_examples():
    g = np.zeros((30, 30), bool)
    assert (fields.sdf_l1(g) == 1.0).all()
    g[15, 15] = True
    s = fields.sdf_l1(g)
    assert s[15, 15] == 0.0
    assert s[15, 18] == pytest.approx(0.3)
    assert s[17, 16] == pytest.approx(0.3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.4))
def test_sdf_matches_brute_force(seed, density):
    occ = np.random.default_rng(seed).random((23, 31)) < density
    assert np.array_equal(fields.sdf_l1(occ), oracles.brute_l1_sdf(occ))


def test_build_cost_examples():
    assert fields.build_cost([2.0], [0.5])[0] == 2.0
    assert fields.build_cost([2.0], [0.1])[0] == pytest.approx(2.1)
    assert fields.build_cost([0.0], [1.0])[0] == 0.0
    assert np.isinf(fields.build_cost([np.inf], [0.0])[0])
    with pytest.raises(ValueError):
        fields.build_cost(np.zeros(3), np.zeros(4))


def test_descent_direction_axis_corridor():
    x = (np.arange(40) + 0.5) * 0.1
    cost = np.tile(10.0 - x, (5, 1))
    th = fields.descent_direction(_field_from_cost(cost), (2.0, 0.25))
    assert th == pytest.approx(0.0, abs=1e-9)


def test_descent_direction_bowl_points_at_goal():
    free = np.zeros((80, 80), bool)
    goal = fields.cell_center((40, 40))
    f = CostField.compute(free, goal)
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = rng.uniform(0.5, 7.5, 2)
        if math.hypot(p[0] - goal[0], p[1] - goal[1]) < 0.5:
            continue
        th = fields.descent_direction(f, p)
        ref = math.atan2(goal[1] - p[1], goal[0] - p[0])
        assert abs(math.remainder(th - ref, 2 * math.pi)) < math.radians(2.0)


def test_descent_tilts_away_from_obstacle():
    g = np.zeros((60, 60), bool)
    g[:, 31:] = False
    g[20:40, 28] = True  # wall to the right of the path
    goal = fields.cell_center((55, 26))
    with_pen = CostField.compute(g, goal)
    no_pen = CostField.compute(g, goal, alpha2=0.0)
    p = (2.55, 3.0)  # 0.25 m left of the wall, sdf < alpha1
    a = fields.descent_direction(with_pen, p)
    b = fields.descent_direction(no_pen, p)
    # the obstacle is in +x, so the penalised direction has a smaller x component
    assert math.cos(a) < math.cos(b)


def test_descent_undefined_gradient():
    cost = np.full((5, 5), np.inf)
    cost[2, 2] = 1.0
    with pytest.raises(fields.UndefinedGradient):
        fields.descent_direction(_field_from_cost(cost), (0.25, 0.25))


def test_descent_enters_one_cell_channel():
    # open room on the left, goal at the far end of a one-cell corridor on the right
    occ = np.ones((21, 40), dtype=bool)
    occ[1:20, 1:20] = False
    occ[10, 20:39] = False
    goal = fields.cell_center((10, 37))
    f = CostField.compute(occ, goal)
    p = np.array(fields.cell_center((4, 5)))
    for _ in range(200):
        if math.dist(p, goal) <= 0.3:
            break
        th = fields.descent_direction(f, p)
        p = p + 0.05 * np.array([math.cos(th), math.sin(th)])
    assert math.dist(p, goal) <= 0.3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_descent_terminates_on_random_grids(seed):
    rng = np.random.default_rng(seed)
    occ = oracles.random_connected_grid(rng, (30, 30), 0.3)
    free = np.argwhere(~occ)
    goal = fields.cell_center(tuple(free[rng.integers(len(free))]))
    f = CostField.compute(occ, goal)
    r, c = free[rng.integers(len(free))]
    p = np.array([(c + rng.random()) * fields.CELL, (r + rng.random()) * fields.CELL])
    bound = math.ceil(4 * f.distance_at(p) / 0.05)
    for _ in range(bound):
        if math.dist(p, goal) <= 0.3:
            break
        th = fields.descent_direction(f, p)
        p = p + 0.05 * np.array([math.cos(th), math.sin(th)])
    assert math.dist(p, goal) <= 0.3


def test_line_search_examples():
    x = (np.arange(80) + 0.5) * 0.1
    v_shape = np.tile(np.abs(x - 1.75), (5, 1))
    f = _field_from_cost(v_shape)
    assert fields.line_search_alpha0(f, (0.55, 0.25), 0.0) == pytest.approx(1.2)
    assert fields.line_search_alpha0(f, (0.55, 0.25), math.pi) == 0.0
    ramp = _field_from_cost(np.tile(10.0 - x, (5, 1)))
    assert fields.line_search_alpha0(ramp, (0.55, 0.25), 0.0) == pytest.approx(2.0)


def test_inserting_obstacle_never_decreases_distance():
    rng = np.random.default_rng(8)
    for _ in range(10):
        occ = oracles.random_connected_grid(rng, (40, 40), 0.2)
        free = np.argwhere(~occ)
        g = tuple(free[rng.integers(len(free))])
        d0 = fields.fmm_goal_distance(occ, fields.cell_center(g))
        more = occ.copy()
        extra = free[rng.integers(len(free), size=15)]
        more[extra[:, 0], extra[:, 1]] = True
        more[g] = False
        d1 = fields.fmm_goal_distance(more, fields.cell_center(g))
        assert np.all(d1 >= d0 - 1e-9)


def test_interpolate_finite_ignores_inf_corners():
    cost = np.array([[1.0, np.inf], [3.0, np.inf]])
    v = fields.interpolate_finite(cost, np.array([0.1]), np.array([0.1]), 0.1)
    assert v[0] == pytest.approx(2.0)
