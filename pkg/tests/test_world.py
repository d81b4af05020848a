from __future__ import annotations

import math

import numpy as np
import pytest

from propnav import world
from propnav.world import LayoutError


def test_ascii_layout_basics():
    assert not world.import_layout("...\n...\n...\n").any()
    g = world.import_layout("...\n.#.\n...")
    assert g.sum() == 1 and g[1, 1]


@pytest.mark.parametrize("fmt", ["ascii", "pgm"])
def test_layout_round_trip(fmt):
    g = np.random.default_rng(3).random((17, 23)) < 0.3
    assert np.array_equal(world.import_layout(world.export_layout(g, fmt)), g)


@pytest.mark.parametrize("text", ["..\n...\n", "..x\n...\n", "", b"P5\n3 3\n255\n\x00"])
def test_layout_errors(text):
    with pytest.raises(LayoutError):
        world.import_layout(text)


def test_flat_world_terrain():
    w = world.flat_world(np.zeros((100, 100), bool))
    assert world.sample_terrain(w, (3.3, 7.1), 12.0) == (0.8, 0.0, 0.0)
    with pytest.raises(ValueError):
        world.sample_terrain(w, (10.5, 1.0))


def test_world_invariants():
    z = np.zeros((10, 10))
    with pytest.raises(ValueError):
        world.TerrainWorld(10, 10, z, z)  # zero friction
    with pytest.raises(ValueError):
        world.TerrainWorld(10, 10, z + 1, z, visible_obstacles=((0.5, 0.5, 1.5, 1.5),))
    with pytest.raises(ValueError):
        world.TerrainWorld(10, 10, z + 1, z, cell_size=0.2)


def test_payload_schedule_alternates():
    sc = world.build_scenario("Randomized", 3, layout_seed=3)
    ps = sc.world.payload_schedule
    assert [ps.mass_at(t) for t in (0.0, 4.9, 5.0, 6.0, 10.0, 14.0)] == [0, 0, 8, 8, 0, 0]


def test_flat_suite_on_empty_room(empty_layout):
    sc = world.build_scenario("Flat", 5, empty_layout)
    w = sc.world
    assert (w.friction == 0.8).all() and not w.roughness.any()
    assert w.invisible_obstacles == ()


@pytest.mark.parametrize("n", [2, 4, 8])
def test_invisible_obstacle_count(n):
    sc = _first_feasible(f"InvObstacle{n}", 7)
    rects = sc.world.invisible_obstacles
    assert len(rects) == n
    for x0, y0, x1, y1 in rects:
        assert math.isclose(x1 - x0, 0.2) and math.isclose(y1 - y0, 0.2)
    # obstacles sit on the planned path
    path = np.array(sc.path)
    for x0, y0, x1, y1 in rects:
        c = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        assert np.min(np.hypot(*(path - c).T)) < 0.11


def _first_feasible(suite, seed):
    for s in range(seed, seed + 50):
        try:
            return world.build_scenario(suite, s, layout_seed=seed)
        except world.InfeasibleScenario:
            continue
    raise AssertionError("no feasible scenario")


def test_infeasible_placement_is_rejected():
    with pytest.raises(world.InfeasibleScenario):
        world.build_scenario("InvObstacle4", 7, layout_seed=7)


def test_rough_and_randomized_patches():
    rt = world.build_scenario("RoughTerrain", 11, layout_seed=11)
    assert set(np.unique(rt.world.roughness)) <= {0.0, 0.05}
    assert rt.world.roughness.any()
    rz = world.build_scenario("Randomized", 11, layout_seed=11)
    mu = np.unique(rz.world.friction)
    assert set(mu) <= set(world.SLIPPERY_FRICTIONS) | {0.8}
    assert ((rz.world.roughness > 0) == (rz.world.friction != 0.8)).all()


def test_build_scenario_deterministic_and_feasible():
    for suite in world.SUITES:
        a = world.build_scenario(suite, 21)
        b = world.build_scenario(suite, 21)
        assert a.start_pose == b.start_pose and a.goal == b.goal
        assert a.world.invisible_obstacles == b.world.invisible_obstacles
        assert np.array_equal(a.world.roughness, b.world.roughness)
        assert a.feasible()


def test_glass_wall_blocks_direct_route():
    sc = world.build_scenario("GlassWall", 0)
    assert len(sc.world.invisible_obstacles) >= 1
    # without the opening the start would be cut off
    assert sc.feasible()


def test_scenario_spec_file(tmp_path, empty_layout):
    (tmp_path / "room.txt").write_text(world.export_layout(empty_layout))
    world.save_scenario_spec(tmp_path / "s.json", "InvObstacle2", 9, "room.txt")
    sc = world.load_scenario_spec(tmp_path / "s.json")
    ref = world.build_scenario("InvObstacle2", 9, empty_layout)
    assert sc.goal == ref.goal and sc.world.invisible_obstacles == ref.world.invisible_obstacles


def test_unknown_suite():
    with pytest.raises(ValueError):
        world.build_scenario("Lava", 0)
