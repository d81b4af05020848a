"""Planar range sensing and log-odds occupancy mapping.

The belief stores the log-odds of a cell being *free*; ``prob`` is the
corresponding free-space probability. Cells below 0.5 are occupied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from numba import njit

from .world import CELL, ROBOT_RADIUS, TerrainWorld, dilate, rasterize, write_pgm

FOV = math.radians(90.0)
ANGLE_STEP = math.radians(1.0)
MAX_RANGE = 4.0
MIN_RANGE = 0.3
HIT_DELTA = -0.85
MISS_DELTA = 0.4
P_MIN, P_MAX = 0.01, 0.99
L_MIN = math.log(P_MIN / (1 - P_MIN))
L_MAX = math.log(P_MAX / (1 - P_MAX))
_MARCH = CELL / 4


@dataclass
class Scan:
    """One fan of rays: bearings (world frame), ranges (nan = no return)."""
    origin: tuple[float, float]
    angles: np.ndarray
    ranges: np.ndarray
    valid: np.ndarray  # False for rays blocked inside the near-blind zone

    @property
    def hits(self) -> np.ndarray:
        return np.isfinite(self.ranges)


@njit(cache=True)
def _scan_kernel(grid, x, y, angles, step, n_steps, h):
    H, W = grid.shape
    out = np.empty(angles.shape[0])
    for i in range(angles.shape[0]):
        ca = np.cos(angles[i])
        sa = np.sin(angles[i])
        out[i] = np.nan
        for j in range(1, n_steps + 1):
            d = j * step
            c = int(np.floor((x + ca * d) / h))
            r = int(np.floor((y + sa * d) / h))
            if r < 0 or r >= H or c < 0 or c >= W or grid[r, c]:
                out[i] = d
                break
    return out


def _fan(theta):
    n = int(round(FOV / ANGLE_STEP)) + 1
    return theta + np.linspace(-FOV / 2, FOV / 2, n)


def scan(world: TerrainWorld, pose) -> Scan:
    """Raycast a 90 degree fan against visible obstacles and the map boundary.

    Returns range ``nan`` for rays with no return inside ``MAX_RANGE``. A ray
    whose first obstacle is closer than ``MIN_RANGE`` reports nothing and is
    flagged invalid. Invisible obstacles are transparent.
    """
    x, y, th = pose
    angles = _fan(th)
    grid = np.ascontiguousarray(world.visible_grid, dtype=np.bool_)
    dist = _scan_kernel(grid, float(x), float(y), angles, _MARCH, int(MAX_RANGE / _MARCH), CELL)
    near = dist < MIN_RANGE
    ranges = np.where(near, np.nan, dist)
    return Scan((float(x), float(y)), angles, ranges, ~near)


def scan_reference(world: TerrainWorld, pose) -> Scan:
    """Raycast a 90 degree fan against visible obstacles and the map boundary.

    Returns range ``nan`` for rays with no return inside ``MAX_RANGE``. A ray
    whose first obstacle is closer than ``MIN_RANGE`` reports nothing and is
    flagged invalid. Invisible obstacles are transparent.
    """
    x, y, th = pose
    n = int(round(FOV / ANGLE_STEP)) + 1
    angles = th + np.linspace(-FOV / 2, FOV / 2, n)
    s = np.arange(1, int(MAX_RANGE / _MARCH) + 1) * _MARCH
    px = x + np.cos(angles)[:, None] * s[None, :]
    py = y + np.sin(angles)[:, None] * s[None, :]
    cols = np.floor(px / CELL).astype(np.int64)
    rows = np.floor(py / CELL).astype(np.int64)
    H, W = world.shape
    outside = (rows < 0) | (rows >= H) | (cols < 0) | (cols >= W)
    blocked = outside.copy()
    inside = ~outside
    blocked[inside] = world.visible_grid[rows[inside], cols[inside]]
    any_hit = blocked.any(axis=1)
    first = np.argmax(blocked, axis=1)
    dist = np.where(any_hit, s[first], np.nan)
    ranges = np.where(dist >= MIN_RANGE, dist, np.nan)
    valid = ~(any_hit & (dist < MIN_RANGE))
    return Scan((float(x), float(y)), angles, ranges, valid)


@dataclass
class BeliefMap:
    shape: tuple[int, int]
    logodds: np.ndarray = None
    advisor_patches: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.logodds is None:
            self.logodds = np.zeros(self.shape)
        self._pinned = np.zeros(self.shape, dtype=bool)
        self._patch_grid = np.zeros(self.shape, dtype=bool)
        for p in self.advisor_patches:
            self._patch_grid |= patch_cells(p, self.shape)

    @property
    def prob(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logodds))

    @property
    def binar(self) -> np.ndarray:
        """Occupied cells: free probability below 0.5, or under an advisor patch."""
        if "binar" not in self._cache:
            self._cache["binar"] = (self.logodds < 0.0) | self._patch_grid
        return self._cache["binar"]

    def config(self, radius: float = ROBOT_RADIUS) -> np.ndarray:
        key = ("config", radius)
        if key not in self._cache:
            self._cache[key] = to_config_space(self, radius)
        return self._cache[key]

    def add_patch(self, patch) -> None:
        self.advisor_patches.append(patch)
        self._patch_grid |= patch_cells(patch, self.shape)
        self._cache.clear()

    def clear_patches(self) -> None:
        """Drop all advisor patches (prior pins from ``mark_occupied`` are kept)."""
        self.advisor_patches = []
        self._patch_grid = self._pinned.copy()
        self._cache.clear()

    def mark_occupied(self, grid: np.ndarray) -> None:
        """Pin cells as occupied (used for prior knowledge such as known rough terrain)."""
        self._pinned |= np.asarray(grid, dtype=bool)
        self._patch_grid |= self._pinned
        self._cache.clear()

    def export_pgm(self, which: str = "prob") -> bytes:
        if which == "prob":
            img = np.round(self.prob * 255)
        elif which == "binar":
            img = np.where(self.binar, 0, 255)
        elif which == "config":
            img = np.where(self.config(), 0, 255)
        else:
            raise ValueError(f"unknown layer {which!r}")
        return write_pgm(img.astype(np.uint8))


def patch_cells(patch, shape) -> np.ndarray:
    """Rasterise an oriented rectangle ``(cx, cy, heading, length, width)``.

    ``length`` runs along ``heading``. Any overlap with a cell occupies it.
    """
    cx, cy, th, length, width = patch
    c, s = math.cos(th), math.sin(th)
    hl, hw = length / 2, width / 2
    corners = np.array([[cx + c * a - s * b, cy + s * a + c * b]
                        for a in (-hl, hl) for b in (-hw, hw)])
    x0, y0 = corners.min(axis=0)
    x1, y1 = corners.max(axis=0)
    bbox = rasterize([(x0, y0, x1, y1)], shape)
    # separating-axis test of each candidate cell square against the rectangle
    out = np.zeros(shape, dtype=bool)
    for r, col in np.argwhere(bbox):
        sq = np.array([[col * CELL, r * CELL], [(col + 1) * CELL, r * CELL],
                       [col * CELL, (r + 1) * CELL], [(col + 1) * CELL, (r + 1) * CELL]])
        sep = False
        for ax in ((c, s), (-s, c)):
            p_rect = corners @ np.array(ax)
            p_sq = sq @ np.array(ax)
            if p_rect.max() <= p_sq.min() + 1e-12 or p_sq.max() <= p_rect.min() + 1e-12:
                sep = True
                break
        if not sep:
            out[r, col] = True
    return out


def _ray_events(sc: Scan, shape):
    """Per-ray (free cells, hit cell) events, deduplicated within each ray.

    Returns flat cell indices of free observations (one per ray per cell,
    so a cell seen by k rays appears k times) and of hits.
    """
    ox, oy = sc.origin
    H, W = shape
    s = np.arange(MIN_RANGE, MAX_RANGE, _MARCH)
    ang = sc.angles[sc.valid]
    rng_ = sc.ranges[sc.valid]
    end = np.where(np.isfinite(rng_), rng_ - 1e-9, MAX_RANGE)
    cos, sin = np.cos(ang)[:, None], np.sin(ang)[:, None]
    r = np.floor((oy + sin * s) / CELL).astype(np.int64)
    c = np.floor((ox + cos * s) / CELL).astype(np.int64)
    m = (s[None, :] < end[:, None]) & (r >= 0) & (r < H) & (c >= 0) & (c < W)
    hit = np.isfinite(rng_)
    hr = np.floor((oy + sin[:, 0] * rng_) / CELL)
    hc = np.floor((ox + cos[:, 0] * rng_) / CELL)
    hit &= (hr >= 0) & (hr < H) & (hc >= 0) & (hc < W)
    hit_idx = np.where(hit, hr * W + hc, -1).astype(np.int64)
    cell = r * W + c
    m &= cell != hit_idx[:, None]
    ray = np.broadcast_to(np.arange(len(ang))[:, None], cell.shape)
    key = np.unique(ray[m] * (H * W) + cell[m])
    return key % (H * W), hit_idx[hit]


@njit(cache=True)
def _integrate_kernel(logodds, ox, oy, angles, ranges, valid, s0, step, s_max, h,
                      miss, hit, lo, hi):
    H, W = logodds.shape
    delta = np.zeros((H, W))
    n_steps = int(np.ceil((s_max - s0) / step))
    for i in range(angles.shape[0]):
        if not valid[i]:
            continue
        ca = np.cos(angles[i])
        sa = np.sin(angles[i])
        rg = ranges[i]
        has_hit = not np.isnan(rg)
        hr = -1
        hc = -1
        if has_hit:
            hr = int(np.floor((oy + sa * rg) / h))
            hc = int(np.floor((ox + ca * rg) / h))
            if hr < 0 or hr >= H or hc < 0 or hc >= W:
                has_hit = False
                hr = -1
                hc = -1
        end = rg - 1e-9 if not np.isnan(rg) else s_max
        pr = -1
        pc = -1
        for j in range(n_steps):
            d = s0 + j * step
            if d >= s_max or d >= end:
                break
            r = int(np.floor((oy + sa * d) / h))
            c = int(np.floor((ox + ca * d) / h))
            if r < 0 or r >= H or c < 0 or c >= W:
                continue
            if r == hr and c == hc:
                continue
            if r == pr and c == pc:
                continue
            delta[r, c] += miss
            pr = r
            pc = c
        if has_hit:
            delta[hr, hc] += hit
    changed = False
    for r in range(H):
        for c in range(W):
            if delta[r, c] != 0.0:
                old = logodds[r, c]
                v = min(max(old + delta[r, c], lo), hi)
                logodds[r, c] = v
                if (old < 0.0) != (v < 0.0):
                    changed = True
    return changed


def integrate(belief: BeliefMap, sc: Scan, pose=None) -> BeliefMap:
    """Apply one scan's log-odds updates in place and return the belief."""
    if not belief.logodds.flags.c_contiguous or belief.logodds.dtype != np.float64:
        belief.logodds = np.ascontiguousarray(belief.logodds, dtype=np.float64)
    ox, oy = sc.origin
    changed = _integrate_kernel(belief.logodds, float(ox), float(oy),
                                np.asarray(sc.angles, dtype=float),
                                np.asarray(sc.ranges, dtype=float),
                                np.asarray(sc.valid, dtype=np.bool_),
                                MIN_RANGE, _MARCH, MAX_RANGE, CELL,
                                MISS_DELTA, HIT_DELTA, L_MIN, L_MAX)
    if changed:
        belief._cache.clear()
    return belief


def integrate_reference(belief: BeliefMap, sc: Scan, pose=None) -> BeliefMap:
    """Vectorised equivalent of :func:`integrate`, kept as a cross-check."""
    free_idx, hit_idx = _ray_events(sc, belief.shape)
    n = belief.logodds.size
    delta = (np.bincount(free_idx, minlength=n) * MISS_DELTA
             + np.bincount(hit_idx, minlength=n) * HIT_DELTA).reshape(belief.shape)
    touched = delta != 0
    if touched.any():
        before = belief.logodds < 0.0
        belief.logodds[touched] = np.clip(belief.logodds[touched] + delta[touched], L_MIN, L_MAX)
        if not np.array_equal(before, belief.logodds < 0.0):
            belief._cache.clear()
    return belief


def to_config_space(belief: BeliefMap, robot_radius: float = ROBOT_RADIUS) -> np.ndarray:
    """Dilate occupied cells (including advisor patches) by a square of half-side ``robot_radius``."""
    if robot_radius < 0:
        raise ValueError("robot_radius must be non-negative")
    return dilate(belief.binar, robot_radius)


def config_fingerprint(config: np.ndarray) -> bytes:
    return np.packbits(config).tobytes()
