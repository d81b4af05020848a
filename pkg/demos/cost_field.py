"""What the planner sees: goal distance, clearance, and the cost that mixes them.

A room layout is dilated by the robot radius, the fast-marching goal
distance and the L1 clearance field are computed on it, and the hinge
penalty turns them into the planning cost. Stepping along the negative
cost gradient from the far corner walks to the goal while keeping clear
of the walls. All three fields and the descent path are written as PGM
images so they can be opened in any image viewer.

Run:  python demos/cost_field.py [out_dir]
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from propnav import fields, world

out = Path(sys.argv[1] if len(sys.argv) > 1 else "cost_field_demo")
out.mkdir(parents=True, exist_ok=True)

layout = world.room_layout(seed=11)
config = world.dilate(layout, world.ROBOT_RADIUS)
scenario = world.build_scenario("Flat", 7, layout)
goal = scenario.goal
field = fields.CostField.compute(config, goal)

finite = np.isfinite(field.d_goal)
print(f"map {layout.shape[1] * fields.CELL:.1f} m x {layout.shape[0] * fields.CELL:.1f} m, "
      f"{finite.sum()} reachable cells, farthest {field.d_goal[finite].max():.2f} m from the goal")


def to_image(values, hi=None):
    """Scale finite values to 0..254 (brighter is larger); obstacles and unreachable cells are 255."""
    v = np.where(np.isfinite(values), values, np.nan)
    hi = np.nanmax(v) if hi is None else hi
    img = np.full(values.shape, 255, dtype=np.uint8)
    ok = np.isfinite(v)
    img[ok] = np.clip(v[ok] / hi * 254, 0, 254).astype(np.uint8)
    return img[::-1]  # row 0 at the bottom


# gradient descent from the start pose
p = np.array(scenario.start_pose[:2], dtype=float)
path = [p.copy()]
for _ in range(4000):
    if math.dist(p, goal) <= 0.3:
        break
    th = fields.descent_direction(field, p)
    p = p + 0.05 * np.array([math.cos(th), math.sin(th)])
    path.append(p.copy())
length = sum(math.dist(a, b) for a, b in zip(path, path[1:]))
print(f"descent reached within {math.dist(p, goal):.2f} m of the goal in {len(path) - 1} steps "
      f"({length:.2f} m walked, geodesic distance {field.distance_at(path[0]):.2f} m)")

cost_img = to_image(field.cost)
for q in path:
    r, c = fields.world_to_cell(q)
    cost_img[layout.shape[0] - 1 - r, c] = 0

for name, img in [("goal_distance", to_image(field.d_goal)),
                  ("clearance", to_image(np.where(config, np.inf, field.d_sdf), hi=fields.SDF_CAP)),
                  ("cost_with_path", cost_img)]:
    (out / f"{name}.pgm").write_bytes(world.write_pgm(np.kron(img, np.ones((4, 4), np.uint8))))
    print(f"wrote {out / name}.pgm")
