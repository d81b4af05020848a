"""Ground-truth environments and the seeded scenario suites.

A layout is a boolean grid (True = occupied) at 0.1 m per cell. Worlds carry
per-cell friction and roughness, visible and invisible obstacle rectangles
and a payload schedule. Everything here is immutable once built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import fields

CELL = fields.CELL
ROBOT_RADIUS = 0.2
FLAT_FRICTION = 0.8
PATCH_ROUGHNESS = 0.05
SLIPPERY_FRICTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)
PAYLOAD_MASS = 8.0
PAYLOAD_PERIOD = 5.0
MIN_PATH = 5.0

SUITES = ("Flat", "RoughTerrain", "InvObstacle2", "InvObstacle4", "InvObstacle8",
          "Randomized", "GlassWall")

Rect = tuple[float, float, float, float]  # x0, y0, x1, y1 in meters


class LayoutError(ValueError):
    pass


class InfeasibleScenario(ValueError):
    pass


# --------------------------------------------------------------------------
# layout import / export

def import_layout(text) -> np.ndarray:
    """Parse an ASCII grid ('#' occupied, '.' free) or a binary PGM (P5).

    Row 0 of the text is row 0 of the grid (y grows with the line number).
    """
    if isinstance(text, (bytes, bytearray)):
        if text[:2] == b"P5":
            return _read_pgm_layout(bytes(text))
        text = text.decode("ascii")
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise LayoutError("empty layout")
    width = len(lines[0])
    grid = np.zeros((len(lines), width), dtype=bool)
    for i, ln in enumerate(lines):
        if len(ln) != width:
            raise LayoutError(f"ragged row {i}: {len(ln)} != {width}")
        bad = set(ln) - {"#", "."}
        if bad:
            raise LayoutError(f"unknown characters {sorted(bad)!r} in row {i}")
        grid[i] = np.frombuffer(ln.encode("ascii"), dtype=np.uint8) == ord("#")
    return grid


def export_layout(grid: np.ndarray, fmt: str = "ascii"):
    grid = np.asarray(grid, dtype=bool)
    if fmt == "ascii":
        return "\n".join("".join("#" if v else "." for v in row) for row in grid) + "\n"
    if fmt == "pgm":
        return write_pgm(np.where(grid, 0, 255).astype(np.uint8))
    raise ValueError(f"unknown layout format {fmt!r}")


def write_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise LayoutError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise LayoutError(f"not a binary PGM: {tokens[0]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise LayoutError("malformed PGM header") from exc
    if maxval != 255:
        raise LayoutError("only 8-bit PGM is supported")
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise LayoutError("PGM body shorter than header says")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def _read_pgm_layout(data: bytes) -> np.ndarray:
    img = read_pgm(data)
    if not np.isin(img, (0, 255)).all():
        raise LayoutError("layout PGM must contain only 0 and 255")
    return img == 0


# --------------------------------------------------------------------------
# geometry helpers

def rasterize(rects, shape, h: float = CELL) -> np.ndarray:
    """Cells whose square overlaps any rectangle (conservative)."""
    grid = np.zeros(shape, dtype=bool)
    eps = 1e-9
    for x0, y0, x1, y1 in rects:
        c0 = max(int(math.floor(x0 / h + eps)), 0)
        c1 = min(int(math.ceil(x1 / h - eps)), shape[1])
        r0 = max(int(math.floor(y0 / h + eps)), 0)
        r1 = min(int(math.ceil(y1 / h - eps)), shape[0])
        if c1 > c0 and r1 > r0:
            grid[r0:r1, c0:c1] = True
    return grid


def grid_to_rects(grid: np.ndarray, h: float = CELL) -> tuple[Rect, ...]:
    """Merge occupied cells into row-run rectangles."""
    rects = []
    for r, row in enumerate(np.asarray(grid, dtype=bool)):
        padded = np.concatenate([[False], row, [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        for c0, c1 in zip(edges[::2], edges[1::2]):
            rects.append((round(c0 * h, 9), round(r * h, 9),
                          round(c1 * h, 9), round((r + 1) * h, 9)))
    return tuple(rects)


def dilate(grid: np.ndarray, radius: float, h: float = CELL) -> np.ndarray:
    k = int(math.ceil(radius / h - 1e-9))
    grid = np.asarray(grid, dtype=bool)
    if k <= 0:
        return grid.copy()
    return ndimage.binary_dilation(grid, structure=np.ones((2 * k + 1, 2 * k + 1), bool))


# --------------------------------------------------------------------------
# world

@dataclass(frozen=True)
class PayloadSchedule:
    """Piecewise-constant payload; ``masses[i]`` holds on ``[i*segment, (i+1)*segment)``.

    With ``cyclic`` the sequence repeats, otherwise the last mass persists.
    """
    masses: tuple[float, ...] = (0.0,)
    segment: float = math.inf
    cyclic: bool = False

    def mass_at(self, t: float) -> float:
        if not math.isfinite(self.segment):
            return self.masses[0]
        i = int(math.floor(t / self.segment))
        if self.cyclic:
            return self.masses[i % len(self.masses)]
        return self.masses[min(max(i, 0), len(self.masses) - 1)]


@dataclass(frozen=True, eq=False)
class TerrainWorld:
    width: int
    height: int
    friction: np.ndarray
    roughness: np.ndarray
    visible_obstacles: tuple[Rect, ...] = ()
    invisible_obstacles: tuple[Rect, ...] = ()
    payload_schedule: PayloadSchedule = field(default_factory=PayloadSchedule)
    cell_size: float = CELL

    def __post_init__(self):
        if self.cell_size != CELL:
            raise ValueError("cell_size must be 0.1 m")
        for name in ("friction", "roughness"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.height, self.width):
                raise ValueError(f"{name} has shape {arr.shape}, expected "
                                 f"{(self.height, self.width)}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.friction > 0).all():
            raise ValueError("friction must be positive everywhere")
        if not (self.roughness >= 0).all():
            raise ValueError("roughness must be non-negative")
        W, H = self.width * CELL, self.height * CELL
        for x0, y0, x1, y1 in self.visible_obstacles + self.invisible_obstacles:
            if x0 < -1e-9 or y0 < -1e-9 or x1 > W + 1e-9 or y1 > H + 1e-9 or x1 <= x0 or y1 <= y0:
                raise ValueError(f"obstacle {(x0, y0, x1, y1)} outside world bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width * CELL, self.height * CELL)

    @cached_property
    def visible_grid(self) -> np.ndarray:
        g = rasterize(self.visible_obstacles, self.shape)
        g.flags.writeable = False
        return g

    @cached_property
    def invisible_grid(self) -> np.ndarray:
        g = rasterize(self.invisible_obstacles, self.shape)
        g.flags.writeable = False
        return g

    @cached_property
    def solid_grid(self) -> np.ndarray:
        g = self.visible_grid | self.invisible_grid
        g.flags.writeable = False
        return g

    def in_bounds(self, point) -> bool:
        W, H = self.extent
        return 0.0 <= point[0] < W and 0.0 <= point[1] < H


def sample_terrain(world: TerrainWorld, point, time: float = 0.0):
    """(friction, roughness, payload mass) at ``point`` and ``time``."""
    if not world.in_bounds(point):
        raise ValueError(f"point {tuple(point)} outside world bounds")
    r, c = fields.world_to_cell(point)
    return (float(world.friction[r, c]), float(world.roughness[r, c]),
            float(world.payload_schedule.mass_at(time)))


def flat_world(layout: np.ndarray, friction: float = FLAT_FRICTION) -> TerrainWorld:
    layout = np.asarray(layout, dtype=bool)
    h, w = layout.shape
    return TerrainWorld(w, h, np.full((h, w), friction), np.zeros((h, w)),
                        grid_to_rects(layout))


# --------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True, eq=False)
class Scenario:
    world: TerrainWorld
    start_pose: tuple[float, float, float]
    goal: tuple[float, float]
    suite_tag: str
    seed: int
    path: tuple[tuple[float, float], ...] = ()
    layout_seed: int | None = None

    def feasible(self, radius: float = ROBOT_RADIUS) -> bool:
        return check_feasible(self.world, self.start_pose[:2], self.goal, radius)


def check_feasible(world: TerrainWorld, start, goal, radius: float = ROBOT_RADIUS) -> bool:
    """Start and goal are clear of all obstacles by ``radius`` and connected."""
    cfg = dilate(world.solid_grid, radius)
    s = fields.world_to_cell(start)
    g = fields.world_to_cell(goal)
    for r, c in (s, g):
        if not (0 <= r < cfg.shape[0] and 0 <= c < cfg.shape[1]) or cfg[r, c]:
            return False
    lab, _ = ndimage.label(~cfg)
    return lab[s] == lab[g] != 0


def _shortest_path(d_goal: np.ndarray, start_rc) -> list[tuple[int, int]]:
    """Steepest 8-neighbour descent of a distance field from start to its zero."""
    rows, cols = d_goal.shape
    path = [tuple(start_rc)]
    r, c = start_rc
    while d_goal[r, c] > 0:
        best = (d_goal[r, c], r, c)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols and d_goal[rr, cc] < best[0]:
                    best = (d_goal[rr, cc], rr, cc)
        if (best[1], best[2]) == (r, c):
            break
        r, c = best[1], best[2]
        path.append((r, c))
    return path


def _points_along(path_xy: np.ndarray, n: int) -> np.ndarray:
    """``n`` points at arc-length fractions i/(n+1), i = 1..n."""
    seg = np.hypot(*np.diff(path_xy, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = s[-1] * np.arange(1, n + 1) / (n + 1)
    x = np.interp(targets, s, path_xy[:, 0])
    y = np.interp(targets, s, path_xy[:, 1])
    return np.stack([x, y], axis=1)


def _square(cx, cy, half) -> Rect:
    return (round(cx - half, 9), round(cy - half, 9), round(cx + half, 9), round(cy + half, 9))


def _clip_rect(rect: Rect, W: float, H: float) -> Rect:
    x0, y0, x1, y1 = rect
    return (max(x0, 0.0), max(y0, 0.0), min(x1, W), min(y1, H))


def _snap(v: float) -> float:
    # nearest grid line, so 0.2 m squares cover whole cells
    return round(round(v / CELL) * CELL, 9)


def _suite_index(tag: str) -> int:
    return SUITES.index(tag)


def build_scenario(suite_tag: str, seed: int, layout: np.ndarray | None = None,
                   min_path: float = MIN_PATH, radius: float = ROBOT_RADIUS,
                   layout_seed: int | None = None) -> Scenario:
    """Deterministic scenario for ``(suite_tag, seed, layout)``.

    The goal is drawn from the free configuration space, the start is the
    reachable cell farthest from it, and suite hazards are spaced at equal
    arc-length fractions of the shortest start-goal path on the layout.
    For a given layout, start/goal selection depends only on ``seed`` so
    that different suites share episodes. Without ``layout`` the suite's
    generator is called with ``layout_seed`` (default ``seed``).
    """
    if suite_tag not in SUITES:
        raise ValueError(f"unknown suite {suite_tag!r}")
    if layout is None:
        layout_seed = seed if layout_seed is None else layout_seed
        layout = layout_for(suite_tag, layout_seed)
    layout = np.asarray(layout, dtype=bool)
    if layout.ndim != 2 or layout.all():
        raise LayoutError("layout must be a 2D grid with free cells")
    rows, cols = layout.shape
    W, H = cols * CELL, rows * CELL
    cfg = dilate(layout, radius)
    free = np.argwhere(~cfg)
    if len(free) == 0:
        raise InfeasibleScenario("layout has no free configuration space")

    pick = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    for _ in range(50):
        g = tuple(free[pick.integers(len(free))])
        goal = fields.cell_center(g)
        d = fields.fmm_goal_distance(cfg, goal)
        reach = np.where(np.isfinite(d), d, -1.0)
        s = np.unravel_index(np.argmax(reach), reach.shape)
        if reach[s] >= min_path:
            break
    else:
        raise InfeasibleScenario("no goal with a long enough path in this layout")
    start = fields.cell_center(s)
    theta = float(pick.uniform(-math.pi, math.pi))
    path_rc = _shortest_path(d, s)
    path_xy = np.array([fields.cell_center(p) for p in path_rc])

    hz = np.random.default_rng(np.random.SeedSequence([seed, 1, _suite_index(suite_tag)]))
    friction = np.full((rows, cols), FLAT_FRICTION)
    roughness = np.zeros((rows, cols))
    invisible: list[Rect] = []
    payload = PayloadSchedule()

    if suite_tag == "RoughTerrain":
        for cx, cy in _points_along(path_xy, 8):
            patch = rasterize([_clip_rect(_square(cx, cy, 0.4), W, H)], (rows, cols))
            roughness[patch] = PATCH_ROUGHNESS
    elif suite_tag.startswith("InvObstacle"):
        n = int(suite_tag[len("InvObstacle"):])
        for cx, cy in _points_along(path_xy, n):
            invisible.append(_square(_snap(cx), _snap(cy), 0.1))
    elif suite_tag == "Randomized":
        for cx, cy in _points_along(path_xy, 8):
            patch = rasterize([_clip_rect(_square(cx, cy, 1.2), W, H)], (rows, cols))
            roughness[patch] = PATCH_ROUGHNESS
            friction[patch] = SLIPPERY_FRICTIONS[hz.integers(len(SLIPPERY_FRICTIONS))]
        payload = PayloadSchedule((0.0, PAYLOAD_MASS), PAYLOAD_PERIOD, cyclic=True)
    elif suite_tag == "GlassWall":
        invisible.extend(_glass_wall(layout, path_xy, hz))

    invisible = [_clip_rect(r, W, H) for r in invisible]
    world = TerrainWorld(cols, rows, friction, roughness, grid_to_rects(layout),
                         tuple(invisible), payload)
    scen = Scenario(world, (start[0], start[1], theta), goal, suite_tag, int(seed),
                    tuple(map(tuple, path_xy.tolist())),
                    None if layout_seed is None else int(layout_seed))
    if not scen.feasible(radius):
        raise InfeasibleScenario(f"{suite_tag} hazards block every route (seed {seed})")
    return scen


def _glass_wall(layout, path_xy, rng, gap: float = 1.0) -> list[Rect]:
    """Invisible 0.1 m wall across the free span at the path midpoint.

    The wall runs perpendicular to the path's dominant direction and leaves
    one ``gap``-wide opening offset to one side of the path crossing.
    """
    rows, cols = layout.shape
    mid = _points_along(path_xy, 1)[0]
    k = len(path_xy) // 2
    a = path_xy[max(k - 5, 0)]
    b = path_xy[min(k + 5, len(path_xy) - 1)]
    horizontal_path = abs(b[0] - a[0]) >= abs(b[1] - a[1])
    r, c = fields.world_to_cell(mid)
    gap_cells = int(round(gap / CELL))
    if horizontal_path:
        # wall is a column segment at column c
        lo = r
        while lo > 0 and not layout[lo - 1, c]:
            lo -= 1
        hi = r
        while hi < rows - 1 and not layout[hi + 1, c]:
            hi += 1
        span = (lo, hi + 1)
        cross = r
    else:
        lo = c
        while lo > 0 and not layout[r, lo - 1]:
            lo -= 1
        hi = c
        while hi < cols - 1 and not layout[r, hi + 1]:
            hi += 1
        span = (lo, hi + 1)
        cross = c
    # gap centre at least 0.8 m from the crossing, on a side with room
    sides = []
    for sign in (-1, 1):
        centre = cross + sign * (8 + gap_cells // 2)
        if span[0] + 1 <= centre - gap_cells // 2 and centre + gap_cells // 2 <= span[1] - 1:
            sides.append(centre)
    if not sides:
        # narrow span: put the gap against whichever end is farther away
        centre = span[0] + gap_cells // 2 if cross - span[0] > span[1] - cross else span[1] - gap_cells // 2
    else:
        centre = sides[int(rng.integers(len(sides)))]
    g0, g1 = centre - gap_cells // 2, centre - gap_cells // 2 + gap_cells
    pieces = [(span[0], g0), (g1, span[1])]
    rects = []
    for p0, p1 in pieces:
        if p1 <= p0:
            continue
        if horizontal_path:
            rects.append((c * CELL, p0 * CELL, (c + 1) * CELL, p1 * CELL))
        else:
            rects.append((p0 * CELL, r * CELL, p1 * CELL, (r + 1) * CELL))
    return [tuple(round(v, 9) for v in rect) for rect in rects]


# --------------------------------------------------------------------------
# procedural layouts

def room_layout(seed: int, size=(80, 100)) -> np.ndarray:
    """Walled room split by one or two interior walls with wide doorways,
    plus a few furniture blocks. Returns the largest free region only."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    rows, cols = size
    g = np.zeros(size, dtype=bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    n_walls = int(rng.integers(1, 3))
    for i in range(n_walls):
        vertical = (i == 0) == bool(rng.integers(2))
        if vertical:
            c = int(rng.integers(cols // 3, 2 * cols // 3))
            g[:, c] = True
            for _ in range(int(rng.integers(1, 3))):
                w = int(rng.integers(15, 21))
                r0 = int(rng.integers(2, rows - w - 2))
                g[r0:r0 + w, c] = False
        else:
            r = int(rng.integers(rows // 3, 2 * rows // 3))
            g[r, :] = True
            for _ in range(int(rng.integers(1, 3))):
                w = int(rng.integers(15, 21))
                c0 = int(rng.integers(2, cols - w - 2))
                g[r, c0:c0 + w] = False
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    for _ in range(int(rng.integers(3, 7))):
        h, w = int(rng.integers(4, 13)), int(rng.integers(4, 13))
        r0 = int(rng.integers(1, rows - h - 1))
        c0 = int(rng.integers(1, cols - w - 1))
        g[r0:r0 + h, c0:c0 + w] = True
    return _largest_region(g)


def corridor_layout(seed: int, length: int = 90, width: int = 30) -> np.ndarray:
    """Straight corridor with a little furniture near the ends."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 8]))
    g = np.zeros((width + 2, length + 2), dtype=bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    for c0 in (int(rng.integers(3, 12)), int(rng.integers(length - 14, length - 4))):
        h = int(rng.integers(3, 6))
        top = bool(rng.integers(2))
        if top:
            g[1:1 + h, c0:c0 + 4] = True
        else:
            g[-1 - h:-1, c0:c0 + 4] = True
    return g


def _largest_region(g: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(~dilate(g, ROBOT_RADIUS))
    if n == 0:
        return g
    sizes = np.bincount(lab.ravel())
    sizes[0] = 0
    keep = dilate(lab == np.argmax(sizes), ROBOT_RADIUS) & ~g
    return ~keep


def layout_for(suite_tag: str, seed: int) -> np.ndarray:
    if suite_tag == "GlassWall":
        return corridor_layout(seed)
    return room_layout(seed)


# --------------------------------------------------------------------------
# scenario files

def save_scenario_spec(path, suite: str, seed: int, layout_path=None, **overrides) -> None:
    doc = {"suite": suite, "seed": int(seed), "layout": str(layout_path) if layout_path else None,
           "overrides": overrides}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_scenario_spec(path) -> Scenario:
    """Build a scenario from a JSON document ``{suite, seed, layout, overrides}``."""
    path = Path(path)
    doc = json.loads(path.read_text())
    suite, seed = doc["suite"], int(doc["seed"])
    lay = doc.get("layout")
    if lay:
        lp = Path(lay)
        if not lp.is_absolute():
            lp = path.parent / lp
        layout = import_layout(lp.read_bytes())
    else:
        layout = None
    kw = {k: v for k, v in (doc.get("overrides") or {}).items()
          if k in ("min_path", "radius", "layout_seed")}
    return build_scenario(suite, seed, layout, **kw)
