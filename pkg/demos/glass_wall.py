"""A legged robot meets a wall its depth camera cannot see.

The same GlassWall scenario is run twice. Without proprioception the robot
presses against the invisible wall until the 220 s timeout. With the
collision detector on, the stall shows up in the proprioceptive window,
the advisor drops an obstacle patch in front of the robot, the planner
routes through the side opening, and the episode ends at the goal.

Run:  python demos/glass_wall.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from propnav import bench, sim, training, world

out = Path(sys.argv[1] if len(sys.argv) > 1 else "glass_wall_demo")
out.mkdir(parents=True, exist_ok=True)

mc, mf = training.cached_models()  # trains once (about a minute) and caches the weights
layout_seed = 3
layout = world.layout_for("GlassWall", layout_seed)
scenario = world.build_scenario("GlassWall", 1000 * layout_seed, layout, layout_seed=layout_seed)
x0, y0 = scenario.start_pose[:2]
print(f"start ({x0:.2f}, {y0:.2f})  goal ({scenario.goal[0]:.2f}, {scenario.goal[1]:.2f})  "
      f"invisible rects {len(scenario.world.invisible_obstacles)}")

for tag in ("no_proprio", "vpnav"):
    rec = sim.run_episode(scenario, sim.make_config(tag, mc, mf), seed=0)
    patches = [e for e in rec.events if e[1] == "patch"]
    print(f"\n{tag:>10}: {rec.outcome} after {rec.time:.1f} s, "
          f"{len(patches)} advisor patches")
    for e in patches[:5]:
        print(f"            t={e[0]:6.2f}s  p_collision={e[2]:.2f}  patch at ({e[3]:.2f}, {e[4]:.2f})")
    img = bench.render_episode(rec, "world", scale=4, scenario=scenario)
    path = out / f"glass_wall_{tag}.pgm"
    path.write_bytes(world.write_pgm(img))
    print(f"            trajectory image: {path}")
