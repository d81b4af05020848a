"""Goal-distance, obstacle-distance and combined cost fields on a 2D grid.

Grids are indexed ``[row, col]`` with row ``r`` spanning ``y in [r*h, (r+1)*h)``
and column ``c`` spanning ``x in [c*h, (c+1)*h)``. Cell values live at cell
centers. Distances are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

CELL = 0.1
ALPHA1 = 0.3
ALPHA2 = 0.5
SDF_CAP = 1.0
INF_PENALTY = 10.0
LINE_STEP = 0.05
LINE_CAP = 2.0
_BIG = 1e12
SEED_RADIUS = 8  # cells around the goal initialised with exact distances



class PlannerError(ValueError):
    """Raised for invalid planner queries (occupied goal, undefined gradient)."""


class UndefinedGradient(PlannerError):
    pass


# Axis neighbour offsets (row, col).
_AX = np.array([[0, 1], [0, -1], [1, 0], [-1, 0]], dtype=np.int64)


@numba.njit(cache=True)
def _heap_push(hv, hi, n, v, idx):
    hv[n] = v
    hi[n] = idx
    k = n
    while k > 0:
        p = (k - 1) >> 1
        if hv[p] <= hv[k]:
            break
        hv[p], hv[k] = hv[k], hv[p]
        hi[p], hi[k] = hi[k], hi[p]
        k = p
    return n + 1


@numba.njit(cache=True)
def _heap_pop(hv, hi, n):
    v = hv[0]
    idx = hi[0]
    n -= 1
    hv[0] = hv[n]
    hi[0] = hi[n]
    k = 0
    while True:
        l = 2 * k + 1
        if l >= n:
            break
        c = l
        if l + 1 < n and hv[l + 1] < hv[l]:
            c = l + 1
        if hv[k] <= hv[c]:
            break
        hv[k], hv[c] = hv[c], hv[k]
        hi[k], hi[c] = hi[c], hi[k]
        k = c
    return v, idx, n


@numba.njit(cache=True)
def _simplex(ua, ud, h):
    # Triangle (x, a, d): a is the axis neighbour at distance h, d the diagonal
    # neighbour; the front crosses segment a-d. Closed-form minimiser of
    # ua + s*(ud-ua) + h*sqrt(1+s^2) over s in [0, 1].
    best = min(ua + h, ud + h * 1.4142135623730951)
    delta = ud - ua
    if delta < 0.0 and -delta < h * 0.7071067811865476:
        cand = ua + math.sqrt(h * h - delta * delta)
        if cand < best:
            best = cand
    return best


@numba.njit(cache=True)
def _fmm_kernel(free, goal_r, goal_c, h, seed_radius):
    rows, cols = free.shape
    u = np.full((rows, cols), np.inf)
    state = np.zeros((rows, cols), dtype=np.int8)  # 0 far, 1 band, 2 accepted
    cap = rows * cols * 8 + 8
    hv = np.empty(cap)
    hi = np.empty(cap, dtype=np.int64)
    n = 0
    u[goal_r, goal_c] = 0.0
    state[goal_r, goal_c] = 1
    n = _heap_push(hv, hi, n, 0.0, goal_r * cols + goal_c)
    # Seed a disk around the goal with exact distances, using the largest
    # radius whose enclosing box is obstacle free, so the point-source error
    # does not spread outward.
    k = seed_radius
    while k > 0:
        r0, r1 = goal_r - k, goal_r + k
        c0, c1 = goal_c - k, goal_c + k
        clear = r0 >= 0 and c0 >= 0 and r1 < rows and c1 < cols
        if clear:
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    if not free[r, c]:
                        clear = False
        if clear:
            break
        k -= 1
    for r in range(goal_r - k, goal_r + k + 1):
        for c in range(goal_c - k, goal_c + k + 1):
            d2 = (r - goal_r) ** 2 + (c - goal_c) ** 2
            if 0 < d2 <= k * k:
                u[r, c] = h * math.sqrt(d2)
                state[r, c] = 1
                n = _heap_push(hv, hi, n, u[r, c], r * cols + c)
    order = np.empty(rows * cols, dtype=np.int64)
    n_acc = 0
    while n > 0:
        v, idx, n = _heap_pop(hv, hi, n)
        r = idx // cols
        c = idx - r * cols
        if state[r, c] == 2 or v > u[r, c]:
            continue
        state[r, c] = 2
        order[n_acc] = idx
        n_acc += 1
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                rr = r + dr
                cc = c + dc
                if rr < 0 or rr >= rows or cc < 0 or cc >= cols:
                    continue
                if not free[rr, cc] or state[rr, cc] == 2:
                    continue
                best = u[rr, cc]
                # Recompute from the accepted neighbourhood of (rr, cc).
                for k in range(4):
                    ar = _AX[k, 0]
                    ac = _AX[k, 1]
                    pr = rr + ar
                    pc = cc + ac
                    a_in = 0 <= pr < rows and 0 <= pc < cols
                    ua = np.inf
                    if a_in and state[pr, pc] == 2:
                        ua = u[pr, pc]
                    for s in range(-1, 2, 2):
                        er = s if ar == 0 else 0
                        ec = s if ac == 0 else 0
                        qr = pr + er
                        qc = pc + ec
                        br = rr + er
                        bc = cc + ec
                        cand = np.inf
                        if (a_in and 0 <= qr < rows and 0 <= qc < cols
                                and state[qr, qc] == 2):
                            if ua < np.inf:
                                cand = _simplex(ua, u[qr, qc], h)
                            elif (free[pr, pc] and 0 <= br < rows and 0 <= bc < cols
                                  and free[br, bc]):
                                # bare diagonal edge, no corner cutting
                                cand = u[qr, qc] + h * 1.4142135623730951
                        elif ua < np.inf:
                            cand = ua + h
                        if cand < best:
                            best = cand
                if best < u[rr, cc]:
                    u[rr, cc] = best
                    state[rr, cc] = 1
                    n = _heap_push(hv, hi, n, best, rr * cols + cc)
    return u, order[:n_acc]


def world_to_cell(point, h: float = CELL) -> tuple[int, int]:
    x, y = point
    return int(math.floor(y / h)), int(math.floor(x / h))


def cell_center(rc, h: float = CELL) -> tuple[float, float]:
    r, c = rc
    return ((c + 0.5) * h, (r + 0.5) * h)


def fmm_goal_distance(config: np.ndarray, goal, h: float = CELL,
                      return_order: bool = False, seed_radius: int = SEED_RADIUS):
    """Geodesic distance (m) from every free cell to ``goal`` (x, y in meters).

    ``config`` is a boolean occupancy grid (True = occupied). Occupied and
    unreachable cells get ``inf``. Upwind first-order eikonal update on the
    8-neighbour simplex stencil, accepted in narrow-band (heap) order. Cells
    within ``seed_radius`` of the goal get exact distances when their box is
    clear of obstacles.
    """
    config = np.asarray(config, dtype=bool)
    gr, gc = world_to_cell(goal, h)
    rows, cols = config.shape
    if not (0 <= gr < rows and 0 <= gc < cols):
        raise PlannerError(f"goal {goal} outside the grid")
    if config[gr, gc]:
        raise PlannerError(f"goal {goal} lies in an occupied cell")
    u, order = _fmm_kernel(~config, gr, gc, float(h), int(seed_radius))
    if return_order:
        return u, order
    return u


@numba.njit(cache=True)
def _l1_sweep(occ):
    rows, cols = occ.shape
    big = rows + cols + 1
    d = np.empty((rows, cols), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            if occ[r, c]:
                d[r, c] = 0
            else:
                v = big
                if r > 0 and d[r - 1, c] + 1 < v:
                    v = d[r - 1, c] + 1
                if c > 0 and d[r, c - 1] + 1 < v:
                    v = d[r, c - 1] + 1
                d[r, c] = v
    for r in range(rows - 1, -1, -1):
        for c in range(cols - 1, -1, -1):
            v = d[r, c]
            if r < rows - 1 and d[r + 1, c] + 1 < v:
                v = d[r + 1, c] + 1
            if c < cols - 1 and d[r, c + 1] + 1 < v:
                v = d[r, c + 1] + 1
            d[r, c] = v
    return d


def sdf_l1(config: np.ndarray, h: float = CELL, cap: float = SDF_CAP) -> np.ndarray:
    """L1 distance (m) from each cell to the nearest occupied cell, capped."""
    occ = np.asarray(config, dtype=bool)
    if not occ.any():
        return np.full(occ.shape, cap)
    d = _l1_sweep(occ).astype(float) * h
    return np.minimum(d, cap)


def build_cost(d_goal, d_sdf, alpha1: float = ALPHA1, alpha2: float = ALPHA2):
    """Goal distance plus a hinge penalty for being within ``alpha1`` of obstacles."""
    d_goal = np.asarray(d_goal, dtype=float)
    d_sdf = np.asarray(d_sdf, dtype=float)
    if d_goal.shape != d_sdf.shape:
        raise ValueError("d_goal and d_sdf must have the same shape")
    return d_goal + alpha2 * np.maximum(0.0, alpha1 - d_sdf)


@dataclass
class CostField:
    d_goal: np.ndarray
    d_sdf: np.ndarray
    cost: np.ndarray
    goal: tuple[float, float]
    alpha1: float = ALPHA1
    alpha2: float = ALPHA2
    h: float = CELL

    @classmethod
    def compute(cls, config, goal, alpha1: float = ALPHA1, alpha2: float = ALPHA2,
                h: float = CELL) -> "CostField":
        d_goal = fmm_goal_distance(config, goal, h)
        d_sdf = sdf_l1(config, h)
        return cls(d_goal, d_sdf, build_cost(d_goal, d_sdf, alpha1, alpha2),
                   (float(goal[0]), float(goal[1])), alpha1, alpha2, h)

    def value_at(self, point) -> float:
        r, c = world_to_cell(point, self.h)
        rows, cols = self.cost.shape
        if not (0 <= r < rows and 0 <= c < cols):
            return math.inf
        return float(self.cost[r, c])

    def distance_at(self, point) -> float:
        r, c = world_to_cell(point, self.h)
        rows, cols = self.d_goal.shape
        if not (0 <= r < rows and 0 <= c < cols):
            return math.inf
        return float(self.d_goal[r, c])


def _bilinear(cost, x, y, h, fill):
    """Bilinear interpolation on cell centers; inf corners replaced by ``fill``.

    Vectorised over ``x``/``y`` arrays. Points off the grid read ``fill``.
    """
    rows, cols = cost.shape
    fx = np.asarray(x, dtype=float) / h - 0.5
    fy = np.asarray(y, dtype=float) / h - 0.5
    c0 = np.floor(fx).astype(np.int64)
    r0 = np.floor(fy).astype(np.int64)
    tx = fx - c0
    ty = fy - r0

    def at(r, c):
        inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
        v = np.full(np.shape(r), fill, dtype=float)
        v[inside] = cost[r[inside], c[inside]]
        v[~np.isfinite(v)] = fill if np.isscalar(fill) else fill[~np.isfinite(v)]
        return v

    v00 = at(r0, c0)
    v01 = at(r0, c0 + 1)
    v10 = at(r0 + 1, c0)
    v11 = at(r0 + 1, c0 + 1)
    return ((1 - ty) * ((1 - tx) * v00 + tx * v01)
            + ty * ((1 - tx) * v10 + tx * v11))


def interpolate_finite(cost, x, y, h: float = CELL):
    """Bilinear interpolation that averages only the finite corners.

    Corner weights are renormalised over finite, on-grid corners; a point
    with no finite corner reads ``inf``.
    """
    rows, cols = cost.shape
    fx = np.asarray(x, dtype=float) / h - 0.5
    fy = np.asarray(y, dtype=float) / h - 0.5
    c0 = np.floor(fx).astype(np.int64)
    r0 = np.floor(fy).astype(np.int64)
    tx = fx - c0
    ty = fy - r0
    num = np.zeros(np.shape(fx))
    den = np.zeros(np.shape(fx))
    for dr, dc, w in ((0, 0, (1 - ty) * (1 - tx)), (0, 1, (1 - ty) * tx),
                      (1, 0, ty * (1 - tx)), (1, 1, ty * tx)):
        r, c = r0 + dr, c0 + dc
        inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
        v = np.full(np.shape(fx), np.inf)
        v[inside] = cost[r[inside], c[inside]]
        ok = np.isfinite(v) & (w > 0)
        num[ok] += w[ok] * v[ok]
        den[ok] += w[ok]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


_N8 = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def _stencil_finite(cost, x, y, h) -> bool:
    """True when every corner used by the four difference samples is finite."""
    rows, cols = cost.shape
    for sx, sy in ((x + h, y), (x - h, y), (x, y + h), (x, y - h)):
        c0 = int(math.floor(sx / h - 0.5))
        r0 = int(math.floor(sy / h - 0.5))
        for r in (r0, r0 + 1):
            for c in (c0, c0 + 1):
                if not np.isfinite(cost[min(max(r, 0), rows - 1), min(max(c, 0), cols - 1)]):
                    return False
    return True


def _neighbour_heading(cost, r, c, x, y, h):
    """Heading toward the centre of the cheapest 8-neighbour (no corner cutting)."""
    rows, cols = cost.shape
    best, br, bc = cost[r, c], r, c
    for dr, dc in _N8:
        rr, cc = r + dr, c + dc
        if not (0 <= rr < rows and 0 <= cc < cols) or not np.isfinite(cost[rr, cc]):
            continue
        if dr and dc and not (np.isfinite(cost[r + dr, c]) and np.isfinite(cost[r, c + dc])):
            continue
        if cost[rr, cc] < best:
            best, br, bc = cost[rr, cc], rr, cc
    tx, ty = (bc + 0.5) * h, (br + 0.5) * h
    if math.hypot(tx - x, ty - y) < 1e-9:
        raise UndefinedGradient(f"cell-level minimum at {(x, y)}")
    return math.atan2(ty - y, tx - x)


def descent_direction(field: CostField, position) -> float:
    """Heading (rad) of the normalised negative cost gradient at ``position``.

    Away from obstacles this is the central difference of the bilinearly
    interpolated cost with a one-cell baseline. When a difference sample
    would touch an infinite cell, the heading instead points at the centre
    of the cheapest reachable neighbour cell. A surrogate fill for the
    infinite corners (cell cost plus ``INF_PENALTY``) makes one-cell
    channels look uphill, so gradient following stalls at their mouths.
    Raises :class:`UndefinedGradient` when no finite direction exists.
    """
    cost = field.cost
    h = field.h
    r, c = world_to_cell(position, h)
    rows, cols = cost.shape
    if not (0 <= r < rows and 0 <= c < cols) or not np.isfinite(cost[r, c]):
        raise UndefinedGradient(f"no finite cost at {position}")
    window = cost[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
    if np.isfinite(window).sum() <= 1:
        raise UndefinedGradient(f"all neighbours of {position} are infinite")
    x, y = float(position[0]), float(position[1])
    if not _stencil_finite(cost, x, y, h):
        return _neighbour_heading(cost, r, c, x, y, h)
    xs = np.array([x + h, x - h, x, x])
    ys = np.array([y, y, y + h, y - h])
    v = _bilinear(cost, xs, ys, h, float(cost[r, c]) + INF_PENALTY)
    gx = (v[0] - v[1]) / (2 * h)
    gy = (v[2] - v[3]) / (2 * h)
    if gx == 0.0 and gy == 0.0:
        raise UndefinedGradient(f"flat cost at {position}")
    return math.atan2(-gy, -gx)


def line_search_alpha0(field: CostField, position, heading: float,
                       step: float = LINE_STEP, cap: float = LINE_CAP) -> float:
    """Furthest distance along ``heading`` over which the cost keeps strictly decreasing."""
    n = int(round(cap / step))
    s = np.arange(n + 1) * step
    xs = position[0] + s * math.cos(heading)
    ys = position[1] + s * math.sin(heading)
    v = _bilinear(field.cost, xs, ys, field.h, _BIG)
    dec = np.diff(v) < 0
    if not dec[0]:
        return 0.0
    stop = np.flatnonzero(~dec)
    k = n if stop.size == 0 else int(stop[0])
    return min(k * step, cap)


def escape_direction(field: CostField, position, max_radius: float = 1.0):
    """Heading and distance to the nearest free cell, if that cell reaches the goal.

    Used when the robot's own cell has become occupied in configuration
    space (typically right after a collision patch is inserted ahead of it).
    Returns ``None`` when no free cell lies within ``max_radius`` or when the
    nearest free cells are cut off from the goal.
    """
    h = field.h
    r, c = world_to_cell(position, h)
    rows, cols = field.cost.shape
    k = int(math.ceil(max_radius / h))
    r0, r1 = max(r - k, 0), min(r + k + 1, rows)
    c0, c1 = max(c - k, 0), min(c + k + 1, cols)
    sub = field.cost[r0:r1, c0:c1]
    free = field.d_sdf[r0:r1, c0:c1] > 0.0
    rr, cc = np.nonzero(free)
    if rr.size == 0:
        return None
    cx = (cc + c0 + 0.5) * h
    cy = (rr + r0 + 0.5) * h
    d = np.hypot(cx - position[0], cy - position[1])
    # nearest first, cheaper cost breaks ties
    i = np.lexsort((sub[rr, cc], np.round(d, 6)))[0]
    if not np.isfinite(sub[rr[i], cc[i]]):
        return None
    return math.atan2(cy[i] - position[1], cx[i] - position[0]), float(d[i])

_NEIGHBOURS8 = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def cell_path_lookahead(field: CostField, position, n_cells: int = 5):
    """Follow the discrete steepest-descent cell path for up to ``n_cells`` moves.

    Each move goes to the 8-neighbour with the lowest cost, provided it is
    strictly lower than the current cell; diagonal moves need both adjacent
    axis cells finite so the path never cuts an obstacle corner. Returns the
    heading and distance from ``position`` to the last cell centre reached,
    or ``None`` if the walk cannot leave the starting cell.
    """
    cost = field.cost
    rows, cols = cost.shape
    r, c = world_to_cell(position, field.h)
    if not (0 <= r < rows and 0 <= c < cols) or not np.isfinite(cost[r, c]):
        return None
    start = (r, c)
    for _ in range(n_cells):
        best = None
        for dr, dc in _NEIGHBOURS8:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols):
                continue
            if dr and dc and not (np.isfinite(cost[r + dr, c]) and np.isfinite(cost[r, c + dc])):
                continue
            v = cost[nr, nc]
            if v < cost[r, c] and (best is None or v < best[0]):
                best = (v, nr, nc)
        if best is None:
            break
        r, c = best[1], best[2]
    if (r, c) == start:
        return None
    x, y = cell_center((r, c), field.h)
    return math.atan2(y - position[1], x - position[0]), math.hypot(x - position[0], y - position[1])
