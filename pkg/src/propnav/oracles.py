"""Brute-force reference computations used to cross-check the field solvers.

These are deliberately simple and slow. They share no code with
:mod:`propnav.fields` beyond the cell-indexing convention.
"""

from __future__ import annotations

import heapq
import math
import time

import numpy as np


def dijkstra8(free: np.ndarray, goal_rc, h: float = 0.1) -> np.ndarray:
    """8-connected grid Dijkstra with edge weights h and h*sqrt(2).

    Diagonal moves require both side cells to be free (no corner cutting).
    """
    rows, cols = free.shape
    dist = np.full((rows, cols), np.inf)
    gr, gc = goal_rc
    dist[gr, gc] = 0.0
    pq = [(0.0, gr, gc)]
    diag = h * math.sqrt(2.0)
    while pq:
        d, r, c = heapq.heappop(pq)
        if d > dist[r, c]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < rows and 0 <= cc < cols) or not free[rr, cc]:
                    continue
                if dr and dc:
                    if not (free[r + dr, c] and free[r, c + dc]):
                        continue
                    nd = d + diag
                else:
                    nd = d + h
                if nd < dist[rr, cc]:
                    dist[rr, cc] = nd
                    heapq.heappush(pq, (nd, rr, cc))
    return dist


def euclidean_from(shape, goal_rc, h: float = 0.1) -> np.ndarray:
    rr, cc = np.indices(shape)
    return h * np.hypot(rr - goal_rc[0], cc - goal_rc[1])


def brute_l1_sdf(occ: np.ndarray, h: float = 0.1, cap: float = 1.0) -> np.ndarray:
    """Nearest occupied cell by exhaustive L1 scan; O(cells * obstacles)."""
    occ = np.asarray(occ, dtype=bool)
    out = np.full(occ.shape, cap)
    pts = np.argwhere(occ)
    if len(pts) == 0:
        return out
    for r in range(occ.shape[0]):
        for c in range(occ.shape[1]):
            d = np.min(np.abs(pts[:, 0] - r) + np.abs(pts[:, 1] - c))
            out[r, c] = min(d * h, cap)
    return out


def random_connected_grid(rng: np.random.Generator, shape=(50, 50),
                          density: float = 0.3):
    """Random obstacle grid restricted to its largest free component.

    Cells outside that component are marked occupied, so every free cell is
    reachable from every other. Returns the occupancy grid.
    """
    from scipy import ndimage

    occ = rng.random(shape) < density
    lab, n = ndimage.label(~occ)
    if n == 0:
        return occ
    sizes = np.bincount(lab.ravel())
    sizes[0] = 0
    keep = lab == np.argmax(sizes)
    return ~keep


def open_grid_error(shape=(50, 50), goals=((25, 25), (0, 0), (10, 37)), min_dist: float = 1.0,
                    h: float = 0.1) -> float:
    """Largest relative FMM error against the straight-line distance on empty grids."""
    from . import fields

    worst = 0.0
    free = np.zeros(shape, dtype=bool)
    for g in goals:
        u = fields.fmm_goal_distance(free, fields.cell_center(g, h), h)
        eu = euclidean_from(shape, g, h)
        far = eu >= min_dist
        worst = max(worst, float(np.max(np.abs(u[far] - eu[far]) / eu[far])))
    return worst


def cross_check(n_fmm: int = 200, n_sdf: int = 100, seed: int = 0,
                shape=(50, 50)) -> dict:
    """Run the FMM and SDF oracle comparisons; returns a summary dict."""
    from . import fields

    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_over = -np.inf
    worst_under = -np.inf
    reach_mismatch = 0
    for _ in range(n_fmm):
        occ = random_connected_grid(rng, shape)
        free_cells = np.argwhere(~occ)
        g = tuple(free_cells[rng.integers(len(free_cells))])
        goal = fields.cell_center(g)
        u = fields.fmm_goal_distance(occ, goal)
        dj = dijkstra8(~occ, g)
        eu = euclidean_from(occ.shape, g)
        fin = np.isfinite(dj)
        if not np.array_equal(fin, np.isfinite(u)):
            reach_mismatch += 1
        worst_over = max(worst_over, float(np.max(u[fin] - dj[fin])))
        worst_under = max(worst_under, float(np.max(eu[fin] - u[fin])))
    open_err = open_grid_error(shape)
    sdf_mismatch = 0
    for _ in range(n_sdf):
        occ = rng.random(shape) < rng.uniform(0.01, 0.3)
        if not np.array_equal(fields.sdf_l1(occ), brute_l1_sdf(occ)):
            sdf_mismatch += 1
    return {
        "fmm_grids": n_fmm,
        "fmm_max_excess_over_dijkstra": worst_over,
        "fmm_max_deficit_below_euclid": worst_under,
        "fmm_reachability_mismatches": reach_mismatch,
        "open_grid_max_rel_error": open_err,
        "sdf_grids": n_sdf,
        "sdf_mismatches": sdf_mismatch,
        "seconds": time.perf_counter() - t0,
    }


def cross_check_passed(report: dict, tol: float = 1e-9) -> bool:
    return (report["fmm_max_excess_over_dijkstra"] <= tol
            and report["fmm_max_deficit_below_euclid"] <= tol
            and report["fmm_reachability_mismatches"] == 0
            and report["open_grid_max_rel_error"] <= 0.05
            and report["sdf_mismatches"] == 0)
