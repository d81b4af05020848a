"""Benchmark metrics, seeded suite runs and file exports."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fields, sim, world
from .world import write_pgm

TIMEOUT_PENALTY = sim.TIMEOUT
EPISODE_COLUMNS = ("layout_seed", "scenario_seed", "episode_seed", "outcome", "time",
                   "path_length", "shortest_path", "energy", "hazard_ticks", "hazard_v_cmd_sum",
                   "clear_ticks", "clear_v_cmd_sum")
TRAJECTORY_VALUE = 128


@dataclass
class SuiteResult:
    suite_tag: str
    config_tag: str
    success_rate: float
    spl: float
    mean_time: float
    mean_energy: float | None
    n_episodes: int
    records: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "suite": self.suite_tag, "config": self.config_tag,
            "n_episodes": self.n_episodes, "success_rate": self.success_rate,
            "spl": self.spl, "mean_time": self.mean_time, "mean_energy": self.mean_energy,
            "episodes": [r.summary() for r in self.records],
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SuiteResult":
        d = json.loads(text)
        recs = [sim.EpisodeRecord.from_files(e) for e in d["episodes"]]
        return cls(d["suite"], d["config"], d["success_rate"], d["spl"], d["mean_time"],
                   d["mean_energy"], d["n_episodes"], recs)

    def hazard_speeds(self) -> tuple[float, float]:
        """Mean commanded speed on hazard cells and on clear cells over all episodes."""
        return hazard_speeds(self.records)


def hazard_speeds(records) -> tuple[float, float]:
    hn = sum(r.hazard_ticks for r in records)
    cn = sum(r.clear_ticks for r in records)
    hv = math.fsum(r.hazard_v_cmd_sum for r in records)
    cv = math.fsum(r.clear_v_cmd_sum for r in records)
    return (hv / hn if hn else math.nan, cv / cn if cn else math.nan)


def compute_metrics(records, suite_tag: str | None = None,
                    config_tag: str | None = None) -> SuiteResult:
    """Success rate (%), SPL, mean time with the timeout penalty, mean energy of successes.

    Sums use ``math.fsum`` so the aggregates do not depend on record order.
    """
    records = list(records)
    if not records:
        raise ValueError("no episode records")
    n = len(records)
    succ = [r for r in records if r.success]
    spl_terms = [r.shortest_path / max(r.path_length, r.shortest_path) if r.success else 0.0
                 for r in records]
    times = [r.time if r.success else TIMEOUT_PENALTY for r in records]
    energy = math.fsum(r.energy for r in succ) / len(succ) if succ else None
    return SuiteResult(
        suite_tag if suite_tag is not None else records[0].suite,
        config_tag if config_tag is not None else records[0].config,
        100.0 * len(succ) / n, math.fsum(spl_terms) / n, math.fsum(times) / n, energy, n,
        records)


# --------------------------------------------------------------------------
# suites

def episode_plan(suite_tag: str, n_layouts: int, goals_per_layout: int, seed: int,
                 max_tries: int = 200):
    """Deterministic list of ``(layout_seed, scenario_seed, episode_seed)``.

    Layout ``i`` uses seed ``1000*seed + i``; goals on it use scenario seeds
    ``1000*layout_seed + j`` for increasing ``j``, skipping infeasible ones.
    Episode seeds come from a counter-based split of the suite seed, so they
    do not depend on the suite or pipeline configuration.
    """
    plan = []
    for i in range(n_layouts):
        layout_seed = 1000 * seed + i
        layout = world.layout_for(suite_tag, layout_seed)
        found = 0
        for j in range(max_tries):
            if found == goals_per_layout:
                break
            sc_seed = 1000 * layout_seed + j
            try:
                world.build_scenario(suite_tag, sc_seed, layout, layout_seed=layout_seed)
            except world.InfeasibleScenario:
                continue
            ep = int(np.random.SeedSequence(seed, spawn_key=(i, found)).generate_state(1)[0])
            plan.append((layout_seed, sc_seed, ep))
            found += 1
        else:
            if found < goals_per_layout:
                raise world.InfeasibleScenario(
                    f"layout {layout_seed}: only {found} feasible goals in {max_tries} tries")
    return plan


def _run_one(args):
    suite_tag, layout_seed, sc_seed, ep_seed, config = args
    sc = world.build_scenario(suite_tag, sc_seed, layout_seed=layout_seed)
    return sim.run_episode(sc, config, ep_seed)


def run_suite(suite_tag: str, config_tag: str, n_layouts: int = 20, goals_per_layout: int = 5,
              seed: int = 0, collision_model=None, fall_model=None, workers: int = 1,
              record_ticks: bool = False, keep_belief: bool = False) -> SuiteResult:
    """Run ``n_layouts * goals_per_layout`` seeded episodes and aggregate them."""
    if suite_tag not in world.SUITES:
        raise ValueError(f"unknown suite {suite_tag!r}")
    if config_tag not in sim.CONFIG_TAGS:
        raise ValueError(f"unknown config {config_tag!r}")
    config = sim.make_config(config_tag, collision_model, fall_model,
                             record_ticks=record_ticks, keep_belief=keep_belief)
    jobs = [(suite_tag, ls, ss, es, config)
            for ls, ss, es in episode_plan(suite_tag, n_layouts, goals_per_layout, seed)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    return compute_metrics(records, suite_tag, config_tag)


# --------------------------------------------------------------------------
# exports

def episodes_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_COLUMNS)
    for r in records:
        row = []
        for c in EPISODE_COLUMNS:
            v = getattr(r, c)
            row.append(repr(float(v)) if isinstance(v, float) else "" if v is None else str(v))
        w.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str, suite_tag: str, config_tag: str) -> list:
    """Minimal records (enough for the aggregates) from an episodes CSV."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(sim.EpisodeRecord(
            suite_tag, config_tag, int(row["scenario_seed"]), int(row["episode_seed"]),
            row["outcome"], float(row["time"]), float(row["path_length"]),
            float(row["shortest_path"]), float(row["energy"]), (), (),
            layout_seed=int(row["layout_seed"]) if row["layout_seed"] else None,
            hazard_ticks=int(row["hazard_ticks"]), hazard_v_cmd_sum=float(row["hazard_v_cmd_sum"]),
            clear_ticks=int(row["clear_ticks"]), clear_v_cmd_sum=float(row["clear_v_cmd_sum"])))
    return out


def export(result: SuiteResult, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``summary.json``, ``episodes.csv`` and optionally per-episode files.

    ``formats`` may include ``"json"``, ``"csv"``, ``"ticks"`` (one tick CSV
    plus summary JSON per episode) and ``"pgm"`` (trajectory renders).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(path: Path, data):
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
        written.append(path)

    if "json" in formats:
        put(out / "summary.json", result.summary_json())
    if "csv" in formats:
        put(out / "episodes.csv", episodes_csv(result.records))
    if "ticks" in formats or "pgm" in formats:
        ep_dir = out / "episodes"
        ep_dir.mkdir(exist_ok=True)
        for r in result.records:
            stem = f"{r.suite}_{r.config}_{r.scenario_seed}"
            if "ticks" in formats:
                if r.ticks is None:
                    raise ValueError("tick export needs records run with record_ticks=True")
                put(ep_dir / f"{stem}.json", r.summary_json())
                put(ep_dir / f"{stem}.csv", r.to_csv())
            if "pgm" in formats:
                if r.ticks is None:
                    raise ValueError("PGM renders need records run with record_ticks=True")
                put(ep_dir / f"{stem}_world.pgm", write_pgm(render_episode(r, "world")))
                if r.belief is not None:
                    put(ep_dir / f"{stem}_belief.pgm", write_pgm(render_episode(r, "belief")))
                    put(ep_dir / f"{stem}_cost.pgm", write_pgm(render_episode(r, "cost")))
    return written


def load_result(out_dir) -> SuiteResult:
    return SuiteResult.from_json((Path(out_dir) / "summary.json").read_text())


# --------------------------------------------------------------------------
# renders

def scenario_for(record) -> world.Scenario:
    return world.build_scenario(record.suite, record.scenario_seed,
                                layout_seed=record.layout_seed if record.layout_seed is not None
                                else record.scenario_seed)


def _background(record, layer: str, scenario=None) -> np.ndarray:
    if layer == "world":
        w = (scenario or scenario_for(record)).world
        img = np.full(w.shape, 255, dtype=np.uint8)
        hazard = (w.roughness > 0) | (np.abs(w.friction - world.FLAT_FRICTION) > 1e-9)
        img[hazard] = 192
        img[w.invisible_grid] = 64
        img[w.visible_grid] = 0
        return img
    belief = record.belief
    if belief is None:
        raise ValueError(f"layer {layer!r} needs a record run with keep_belief=True")
    if layer == "belief":
        img = np.round(belief.prob * 255).astype(np.uint8)
        img[belief.binar & ~(belief.logodds < 0)] = 0  # advisor patches
        return img
    if layer == "cost":
        cfg = belief.config()
        gr, gc = fields.world_to_cell(record.goal)
        cfg = cfg.copy()
        cfg[gr, gc] = False
        cost = fields.CostField.compute(cfg, record.goal).cost
        finite = np.isfinite(cost)
        img = np.zeros(cost.shape, dtype=np.uint8)
        if finite.any():
            top = cost[finite].max() or 1.0
            img[finite] = np.round(255 - 230 * cost[finite] / top).astype(np.uint8)
        return img
    raise ValueError(f"unknown layer {layer!r}")


def trajectory_pixels(record, shape, scale: int = 1) -> np.ndarray:
    """Boolean mask of the pixels under the recorded poses."""
    xs = np.asarray(record.ticks["x"], dtype=float)
    ys = np.asarray(record.ticks["y"], dtype=float)
    h = fields.CELL / scale
    r = np.clip(np.floor(ys / h).astype(int), 0, shape[0] - 1)
    c = np.clip(np.floor(xs / h).astype(int), 0, shape[1] - 1)
    mask = np.zeros(shape, dtype=bool)
    mask[r, c] = True
    return mask


def render_episode(record, layer: str = "world", scale: int = 1, scenario=None) -> np.ndarray:
    """Grayscale image (row 0 at the bottom of the map) with the trajectory marked.

    Trajectory pixels carry ``TRAJECTORY_VALUE`` and no background pixel does,
    so the marked pixels are exactly the distinct pixels visited by pose samples.
    """
    if record.ticks is None:
        raise ValueError("record has no tick data to render")
    bg = _background(record, layer, scenario)
    if scale > 1:
        bg = np.kron(bg, np.ones((scale, scale), dtype=np.uint8))
    bg[bg == TRAJECTORY_VALUE] = TRAJECTORY_VALUE - 1
    mask = trajectory_pixels(record, bg.shape, scale)
    bg[mask] = TRAJECTORY_VALUE
    # image rows run top-down, map rows bottom-up
    return bg[::-1].copy()
