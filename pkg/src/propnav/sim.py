"""Closed-loop episode simulation.

The legged robot is a kinematic proxy: first-order tracking of the commanded
velocities with friction-dependent slip, body-disk contact that stalls
forward motion, roughness-driven yaw disturbances and a stochastic fall
hazard. Episodes follow a fixed multi-rate schedule so that they are
bitwise reproducible for a given seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from . import commander as cmd
from . import fields, mapper, safety
from .world import FLAT_FRICTION, ROBOT_RADIUS, Scenario, TerrainWorld, dilate

CONTROL_DT = 0.01
TAU_V = 0.3
TAU_W = 0.15
SLIP_MU = 0.4
FEATURE_NOISE = 0.02
PAYLOAD_NOISE = 0.05
YAW_DISTURBANCE = 10.0  # rad/s of yaw-rate noise per (m of roughness * (m/s)^2)
STALL_SPEED = 0.02
RESIDUAL_FLOOR = 0.02  # rad/s, about the gyro noise level
TIMEOUT = 220.0
COMMIT_DROP = 0.3  # cost drop (m) that ends a cell-path fallback
SUCCESS_RADIUS = 0.3
BODY_RADIUS = ROBOT_RADIUS

HAZARD_K = 0.08
HAZARD_ROUGHNESS = 0.05
HAZARD_MU = 0.4
HAZARD_PAYLOAD = 12.0
HAZARD_V0 = 0.3  # gait is statically stable below this speed

WHEEL_RADIUS = 0.035
WHEEL_BASE = 0.23
WHEEL_KP = 10.0
WHEEL_KD = 0.05
WHEEL_ROUGH_STALL = 0.04
WHEEL_STALL_HALF_LIFE = 1.0

DISCRETE_V = 0.6
DISCRETE_W = 0.8


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class RateSchedule:
    control_dt: float = CONTROL_DT
    planner_period: float = 0.1
    advisor_period: float = 0.1
    mapper_period: float = 0.1

    def __post_init__(self):
        for name in ("planner_period", "advisor_period", "mapper_period"):
            ratio = getattr(self, name) / self.control_dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ScheduleError(f"{name} must be an integer multiple of control_dt")

    def every(self, name: str) -> int:
        return int(round(getattr(self, name) / self.control_dt))

    def due(self, k: int) -> tuple[str, ...]:
        """Tasks due at control tick ``k`` in their fixed execution order."""
        out = []
        for task, per in (("mapper", "mapper_period"), ("planner", "planner_period"),
                          ("advisor", "advisor_period")):
            if k % self.every(per) == 0:
                out.append(task)
        out.append("control")
        return tuple(out)


@dataclass
class RobotState:
    x: float
    y: float
    theta: float
    v_real: float = 0.0
    w_real: float = 0.0
    v_max: float = safety.V_CEIL
    proprio: safety.ProprioWindow = field(default_factory=safety.ProprioWindow)
    fallen: bool = False
    collided_now: bool = False
    stalled: bool = False
    v_meas: float = 0.0
    attempted: tuple[float, float] = (math.nan, math.nan)
    wheel_l: float = 0.0
    wheel_r: float = 0.0
    wheel_err: tuple[float, float] = (0.0, 0.0)

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


# --------------------------------------------------------------------------
# contact geometry

@njit(cache=True)
def _disk_hits_grid(solid, x, y, radius, h):
    rows, cols = solid.shape
    k = int(math.ceil(radius / h)) + 1
    r0 = int(math.floor(y / h))
    c0 = int(math.floor(x / h))
    r2 = radius * radius
    for r in range(max(r0 - k, 0), min(r0 + k + 1, rows)):
        for c in range(max(c0 - k, 0), min(c0 + k + 1, cols)):
            if not solid[r, c]:
                continue
            dx = max(c * h - x, 0.0, x - (c + 1) * h)
            dy = max(r * h - y, 0.0, y - (r + 1) * h)
            if dx * dx + dy * dy < r2 - 1e-12:
                return True
    return False


def disk_hits_grid(solid: np.ndarray, x: float, y: float, radius: float = BODY_RADIUS,
                   h: float = fields.CELL) -> bool:
    """True if the open disk intersects the interior of any occupied cell."""
    return bool(_disk_hits_grid(np.ascontiguousarray(solid, dtype=np.bool_),
                                float(x), float(y), float(radius), float(h)))


def disk_hits_rects(rects, x: float, y: float, radius: float = BODY_RADIUS) -> bool:
    """Brute-force disk/rectangle test against a list of ``(x0, y0, x1, y1)``."""
    r2 = radius * radius
    for x0, y0, x1, y1 in rects:
        dx = max(x0 - x, 0.0, x - x1)
        dy = max(y0 - y, 0.0, y - y1)
        if dx * dx + dy * dy < r2 - 1e-12:
            return True
    return False


class Contact:
    """Fast disk-contact queries against a world's solid obstacles."""

    def __init__(self, world: TerrainWorld, radius: float = BODY_RADIUS):
        self.solid = np.ascontiguousarray(world.solid_grid, dtype=np.bool_)
        self.near = dilate(self.solid, radius + fields.CELL)
        self.radius = radius
        self.rows, self.cols = self.solid.shape

    def hits(self, x: float, y: float) -> bool:
        r = int(math.floor(y / fields.CELL))
        c = int(math.floor(x / fields.CELL))
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            return True
        if not self.near[r, c]:
            return False
        return _disk_hits_grid(self.solid, x, y, self.radius, fields.CELL)


# --------------------------------------------------------------------------
# legged proxy

def slip_factor(mu: float) -> float:
    return min(1.0, mu / SLIP_MU)


def fall_rate(v_real: float, roughness: float, mu: float, payload: float) -> float:
    """Fall hazard rate (1/s).

    Zero below ``HAZARD_V0`` and quadratic in the excess speed above it,
    normalised so that ``v_real = 1`` gives ``HAZARD_K`` at the reference
    terrain. Scaled linearly by roughness, by low friction below 0.4 and by
    payload relative to body mass.
    """
    excess = max(abs(v_real) - HAZARD_V0, 0.0) / (1.0 - HAZARD_V0)
    return (HAZARD_K * excess * excess * (roughness / HAZARD_ROUGHNESS)
            * max(1.0, HAZARD_MU / mu) * (1.0 + payload / HAZARD_PAYLOAD))


def hazard_fall_step(state: RobotState, terrain, dt: float, rng) -> bool:
    """Sample a fall for one control tick; ``terrain`` is (mu, roughness, payload)."""
    mu, rough, payload = terrain
    lam = fall_rate(abs(state.v_real), rough, mu, payload)
    if lam <= 0.0:
        return False
    if rng.random() < -math.expm1(-lam * dt):
        state.fallen = True
    return state.fallen


def _move(state: RobotState, contact: Contact, v: float, dt: float, heading: float):
    """Translate along ``heading`` unless the body would hit something.

    On contact the robot stops at the last free point along the step and
    ``collided_now`` is raised.
    """
    dx = v * math.cos(heading) * dt
    dy = v * math.sin(heading) * dt
    nx, ny = state.x + dx, state.y + dy
    state.attempted = (nx, ny)
    if not contact.hits(nx, ny):
        state.x, state.y = nx, ny
        state.collided_now = False
        return math.hypot(dx, dy)
    lo, hi = 0.0, 1.0
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        if contact.hits(state.x + mid * dx, state.y + mid * dy):
            hi = mid
        else:
            lo = mid
    state.x += lo * dx
    state.y += lo * dy
    state.collided_now = True
    return lo * math.hypot(dx, dy)


def _features(state: RobotState, command, v_meas: float, w_meas: float, payload: float,
              rng) -> list:
    n = rng.normal(0.0, 1.0, 3)
    vm = v_meas + FEATURE_NOISE * n[0]
    wm = w_meas + FEATURE_NOISE * n[1]
    v_cmd, w_cmd = command.v_cmd, command.w_cmd
    slip = min(max(vm / v_cmd, -1.0), 2.0) if v_cmd >= 0.05 else 1.0
    stall = 1.0 if (v_meas < STALL_SPEED and v_cmd >= cmd.V_CURVE_MIN) else 0.0
    # yaw-rate residual against the rate the gait controller is tracking, on
    # a log scale so a linear model sees terrain severity multiplicatively
    resid = math.log(abs(wm - state.w_real) + RESIDUAL_FLOOR)
    return [v_cmd, w_cmd, vm, wm, slip, resid, stall,
            payload / HAZARD_PAYLOAD + PAYLOAD_NOISE * n[2]]


def step_control(state: RobotState, command, world: TerrainWorld, dt: float = CONTROL_DT,
                 rng=None, t: float = 0.0, contact: Contact | None = None,
                 terrain=None) -> RobotState:
    """Advance the legged proxy by one control tick (in place)."""
    if rng is None:
        rng = np.random.default_rng(0)
    if contact is None:
        contact = Contact(world)
    if terrain is None:
        terrain = _terrain(world, state.x, state.y, t)
    mu, rough, payload = terrain
    s = slip_factor(mu)
    state.v_real += (dt / TAU_V) * (command.v_cmd * s - state.v_real)
    state.w_real += (dt / TAU_W) * (command.w_cmd - state.w_real)
    w_act = state.w_real
    if rough > 0.0:
        w_act += YAW_DISTURBANCE * rough * state.v_real * state.v_real * rng.normal()
    heading_mid = state.theta + 0.5 * w_act * dt
    moved = _move(state, contact, state.v_real, dt, heading_mid)
    if state.collided_now:
        state.v_real = 0.0
    state.theta = cmd.wrap(state.theta + w_act * dt)
    state.v_meas = moved / dt
    state.proprio.push(_features(state, command, state.v_meas, w_act, payload, rng))
    return state


def _terrain(world: TerrainWorld, x: float, y: float, t: float):
    r = min(max(int(math.floor(y / fields.CELL)), 0), world.height - 1)
    c = min(max(int(math.floor(x / fields.CELL)), 0), world.width - 1)
    return (float(world.friction[r, c]), float(world.roughness[r, c]),
            world.payload_schedule.mass_at(t))


# --------------------------------------------------------------------------
# wheeled baseline

def wheeled_step(state: RobotState, command, world: TerrainWorld, dt: float = CONTROL_DT,
                 rng=None, t: float = 0.0, contact: Contact | None = None,
                 terrain=None) -> RobotState:
    """Differential drive with PD wheel-speed tracking.

    While on rough cells the base gets stuck with probability one half per
    second of contact; being stuck is permanent.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if contact is None:
        contact = Contact(world)
    if terrain is None:
        terrain = _terrain(world, state.x, state.y, t)
    _, rough, _ = terrain
    if not state.stalled and rough >= WHEEL_ROUGH_STALL:
        if rng.random() < 1.0 - 0.5 ** (dt / WHEEL_STALL_HALF_LIFE):
            state.stalled = True
    tl = (command.v_cmd - 0.5 * command.w_cmd * WHEEL_BASE) / WHEEL_RADIUS
    tr = (command.v_cmd + 0.5 * command.w_cmd * WHEEL_BASE) / WHEEL_RADIUS
    el, er = tl - state.wheel_l, tr - state.wheel_r
    pl, pr = state.wheel_err
    al = WHEEL_KP * el + WHEEL_KD * (el - pl) / dt
    ar = WHEEL_KP * er + WHEEL_KD * (er - pr) / dt
    state.wheel_err = (el, er)
    state.wheel_l += al * dt
    state.wheel_r += ar * dt
    if state.stalled:
        state.wheel_l = state.wheel_r = 0.0
    state.v_real = 0.5 * WHEEL_RADIUS * (state.wheel_l + state.wheel_r)
    state.w_real = WHEEL_RADIUS * (state.wheel_r - state.wheel_l) / WHEEL_BASE
    heading_mid = state.theta + 0.5 * state.w_real * dt
    moved = _move(state, contact, state.v_real, dt, heading_mid)
    if state.collided_now:
        state.v_real = 0.0
        state.wheel_l = state.wheel_r = 0.0
    state.theta = cmd.wrap(state.theta + state.w_real * dt)
    state.v_meas = moved / dt
    return state


# --------------------------------------------------------------------------
# discrete planner baseline

DISCRETE_ACTIONS = (
    ("forward", cmd.VelocityCommand(DISCRETE_V, 0.0, cmd.CURVE)),
    ("left", cmd.VelocityCommand(0.0, DISCRETE_W, cmd.IN_PLACE)),
    ("right", cmd.VelocityCommand(0.0, -DISCRETE_W, cmd.IN_PLACE)),
    ("stop", cmd.STOP),
)


def discrete_planner_step(field_: fields.CostField, pose, theta_target: float | None = None,
                          period: float = 0.1, at_goal: bool = False):
    """Pick forward / left / right / stop by a one-period lookahead.

    Each action is scored by the estimated time to go after executing it for
    one planner period: remaining cost at forward speed plus the remaining
    heading error at turning speed. Returns ``(name, command)``.
    """
    if at_goal:
        return DISCRETE_ACTIONS[3]
    x, y, th = pose
    if theta_target is None:
        theta_target = fields.descent_direction(field_, (x, y))
    step = DISCRETE_V * period
    turn = DISCRETE_W * period
    best = None
    for name, c in DISCRETE_ACTIONS:
        if name == "forward":
            px, py, ph = x + step * math.cos(th), y + step * math.sin(th), th
        elif name == "left":
            px, py, ph = x, y, th + turn
        elif name == "right":
            px, py, ph = x, y, th - turn
        else:
            px, py, ph = x, y, th
        C = float(fields.interpolate_finite(field_.cost, np.array([px]), np.array([py]),
                                            field_.h)[0])
        eta = C / DISCRETE_V + abs(cmd.wrap(theta_target - ph)) / DISCRETE_W
        if name == "stop":
            eta += period  # idling wastes a period
        if best is None or eta < best[0] - 1e-12:
            best = (eta, name, c)
    return best[1], best[2]


# --------------------------------------------------------------------------
# pipeline configurations

@dataclass
class PipelineConfig:
    tag: str = "vpnav"
    robot: str = "legged"          # legged | wheeled
    planner: str = "continuous"    # continuous | discrete
    proprio: bool = True
    avoid_rough: bool = False
    collision_model: safety.SafetyClassifier | None = None
    fall_model: safety.SafetyClassifier | None = None
    schedule: RateSchedule = field(default_factory=RateSchedule)
    timeout: float = TIMEOUT
    record_ticks: bool = True
    keep_belief: bool = False


CONFIG_TAGS = ("vpnav", "no_proprio", "vpnav_discrete", "wheeled_proceed", "wheeled_avoid",
               "wheeled_discrete")
PROPRIO_TAGS = ("vpnav", "vpnav_discrete")


def make_config(tag: str, collision_model=None, fall_model=None, **kw) -> PipelineConfig:
    presets = {
        "vpnav": dict(robot="legged", planner="continuous", proprio=True),
        "no_proprio": dict(robot="legged", planner="continuous", proprio=False),
        "vpnav_discrete": dict(robot="legged", planner="discrete", proprio=True),
        "wheeled_proceed": dict(robot="wheeled", planner="continuous", proprio=False),
        "wheeled_avoid": dict(robot="wheeled", planner="continuous", proprio=False, avoid_rough=True),
        "wheeled_discrete": dict(robot="wheeled", planner="discrete", proprio=False),
    }
    if tag not in presets:
        raise ValueError(f"unknown config tag {tag!r}")
    cfg = PipelineConfig(tag=tag, **presets[tag], **kw)
    if cfg.proprio:
        if collision_model is None or fall_model is None:
            raise ValueError(f"config {tag!r} needs trained collision and fall models")
        cfg.collision_model = collision_model
        cfg.fall_model = fall_model
    return cfg


# --------------------------------------------------------------------------
# episode records

TICK_COLUMNS = ("t", "x", "y", "theta", "v_real", "w_real", "v_cmd", "w_cmd", "mode",
                "v_max", "collided", "hazard")


@dataclass
class EpisodeRecord:
    suite: str
    config: str
    scenario_seed: int
    episode_seed: int
    outcome: str
    time: float
    path_length: float
    shortest_path: float
    energy: float
    start: tuple
    goal: tuple
    events: list = field(default_factory=list)
    ticks: dict | None = None
    layout_seed: int | None = None
    hazard_ticks: int = 0
    hazard_v_cmd_sum: float = 0.0
    clear_ticks: int = 0
    clear_v_cmd_sum: float = 0.0
    belief: object = field(default=None, repr=False, compare=False)

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def summary(self) -> dict:
        return {
            "suite": self.suite, "config": self.config,
            "layout_seed": self.layout_seed,
            "scenario_seed": self.scenario_seed, "episode_seed": self.episode_seed,
            "outcome": self.outcome, "success": self.success,
            "time": self.time, "path_length": self.path_length,
            "shortest_path": self.shortest_path, "energy": self.energy,
            "start": [float(v) for v in self.start], "goal": [float(v) for v in self.goal],
            "hazard_ticks": self.hazard_ticks, "hazard_v_cmd_sum": self.hazard_v_cmd_sum,
            "clear_ticks": self.clear_ticks, "clear_v_cmd_sum": self.clear_v_cmd_sum,
            "events": [[v if isinstance(v, str) else float(v) for v in e] for e in self.events],
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    @property
    def n_ticks(self) -> int:
        return 0 if not self.ticks else len(self.ticks["t"])

    def to_csv(self) -> str:
        """One row per control tick; floats are written with ``repr`` so they round-trip."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TICK_COLUMNS)
        if self.ticks:
            cols = []
            for c in TICK_COLUMNS:
                col = self.ticks[c]
                if c == "mode":
                    cols.append([str(v) for v in col])
                elif c in _INT_COLUMNS:
                    cols.append([str(int(v)) for v in col])
                else:
                    cols.append([repr(float(v)) for v in col])
            w.writerows(zip(*cols))
        return buf.getvalue()

    @classmethod
    def from_files(cls, summary: str | dict, ticks_csv: str | None = None) -> "EpisodeRecord":
        d = json.loads(summary) if isinstance(summary, str) else dict(summary)
        ticks = None
        if ticks_csv is not None:
            rows = list(csv.reader(io.StringIO(ticks_csv)))
            header, body = rows[0], rows[1:]
            ticks = {}
            for i, name in enumerate(header):
                col = [r[i] for r in body]
                if name == "mode":
                    ticks[name] = np.array(col)
                elif name in _INT_COLUMNS:
                    ticks[name] = np.array([int(v) for v in col], dtype=np.int8)
                else:
                    ticks[name] = np.array([float(v) for v in col])
        return cls(d["suite"], d["config"], d["scenario_seed"], d["episode_seed"], d["outcome"],
                   d["time"], d["path_length"], d["shortest_path"], d["energy"],
                   tuple(d["start"]), tuple(d["goal"]), [tuple(e) for e in d["events"]], ticks,
                   d.get("layout_seed"), d.get("hazard_ticks", 0), d.get("hazard_v_cmd_sum", 0.0),
                   d.get("clear_ticks", 0), d.get("clear_v_cmd_sum", 0.0))


_INT_COLUMNS = ("collided", "hazard")


def shortest_path_length(scenario: Scenario) -> float:
    """Geodesic start-goal distance on the true map (visible and invisible obstacles)."""
    cfg = dilate(scenario.world.solid_grid, ROBOT_RADIUS)
    r, c = fields.world_to_cell(scenario.start_pose[:2])
    cfg[r, c] = False
    d = fields.fmm_goal_distance(cfg, scenario.goal)
    return float(d[r, c])


def energy_rate(v: float, w: float) -> float:
    return 20.0 + 120.0 * v * v + 30.0 * w * w


# --------------------------------------------------------------------------
# the episode loop

class _Planner:
    """Cost-field cache keyed on the configuration-space contents."""

    def __init__(self, goal):
        self.goal = goal
        self.key = None
        self.field = None
        self.last_heading = None
        self.recomputes = 0
        self._labels = None
        self._commit = None

    def update(self, config: np.ndarray) -> fields.CostField:
        key = mapper.config_fingerprint(config)
        if key != self.key:
            cfg = config
            gr, gc = fields.world_to_cell(self.goal)
            if cfg[gr, gc]:
                cfg = cfg.copy()
                cfg[gr, gc] = False
            self.field = fields.CostField.compute(cfg, self.goal)
            self.key = key
            self._labels = None
            self.recomputes += 1
        return self.field

    def sealed_in(self, pos) -> bool:
        """True when the free region nearest the robot is cut off from the goal."""
        f = self.field
        if self._labels is None:
            self._labels, _ = ndimage.label(f.d_sdf > 0.0)
        r, c = fields.world_to_cell(pos, f.h)
        rows, cols = f.cost.shape
        k = int(math.ceil(1.0 / f.h))
        r0, c0 = max(r - k, 0), max(c - k, 0)
        sub = self._labels[r0:r + k + 1, c0:c + k + 1]
        rr, cc = np.nonzero(sub)
        if rr.size == 0:
            return False
        i = np.argmin(np.hypot((cc + c0 + 0.5) * f.h - pos[0], (rr + r0 + 0.5) * f.h - pos[1]))
        gr, gc = fields.world_to_cell(self.goal, f.h)
        return sub[rr[i], cc[i]] != self._labels[gr, gc]

    def target(self, pos):
        """Target heading and an upper bound on useful travel distance.

        Returns ``None`` when the belief seals the robot off from the goal.
        """
        f = self.field
        if self._commit is not None:
            key, level = self._commit
            if key == self.key and f.value_at(pos) > level:
                look = fields.cell_path_lookahead(f, pos)
                if look is not None:
                    self.last_heading = look[0]
                    return look
            self._commit = None
        try:
            th = fields.descent_direction(f, pos)
            if fields.line_search_alpha0(f, pos, th) > 0.0:
                self.last_heading = th
                return th, None
            # the interpolated gradient points uphill, which happens at the
            # mouth of a one-cell channel; follow the cell path instead and
            # stay with it until the cost has dropped appreciably
            look = fields.cell_path_lookahead(f, pos)
            if look is not None:
                self._commit = (self.key, f.value_at(pos) - COMMIT_DROP)
                self.last_heading = look[0]
                return look
            return th, None
        except fields.UndefinedGradient:
            esc = fields.escape_direction(f, pos)
            if esc is not None:
                return esc
            if self.sealed_in(pos):
                return None
            if self.last_heading is not None:
                return self.last_heading, 0.0
            gx, gy = self.goal
            return math.atan2(gy - pos[1], gx - pos[0]), 0.0


def run_episode(scenario: Scenario, config: PipelineConfig, seed: int) -> EpisodeRecord:
    """Simulate one closed-loop episode. Deterministic for fixed arguments."""
    if not scenario.feasible():
        raise ValueError("infeasible scenario")
    world = scenario.world
    rng = np.random.default_rng(seed)
    sched = config.schedule
    dt = sched.control_dt
    n_plan = sched.every("planner_period")
    n_adv = sched.every("advisor_period")
    n_map = sched.every("mapper_period")
    contact = Contact(world)
    belief = mapper.BeliefMap(world.shape)
    if config.avoid_rough:
        belief.mark_occupied(world.roughness >= WHEEL_ROUGH_STALL)
    planner = _Planner(scenario.goal)
    smoother = cmd.SmootherState()
    sstate = safety.SafetyState()
    x0, y0, th0 = scenario.start_pose
    state = RobotState(x0, y0, th0)
    step = wheeled_step if config.robot == "wheeled" else step_control
    legged = config.robot == "legged"
    gx, gy = scenario.goal

    n_max = int(round(config.timeout / dt))
    rec = config.record_ticks
    cols = {c: [] for c in TICK_COLUMNS} if rec else None
    events = []
    command = cmd.STOP
    path = 0.0
    energy = 0.0
    outcome = "timeout"
    k = 0
    hz_n = clear_n = 0
    hz_v = clear_v = 0.0
    terrain = _terrain(world, state.x, state.y, 0.0)
    while True:
        t = k * dt
        at_goal = math.hypot(state.x - gx, state.y - gy) <= SUCCESS_RADIUS
        if k % n_map == 0:
            mapper.integrate(belief, mapper.scan(world, state.pose))
        if k % n_plan == 0:
            if at_goal:
                outcome = "success"
                break
            field_ = planner.update(belief.config())
            pos = (state.x, state.y)
            tgt = planner.target(pos)
            if tgt is None and belief.advisor_patches:
                # collision patches closed every route: forget them and replan
                belief.clear_patches()
                events.append((round(t, 2), "patches_cleared", 1.0))
                field_ = planner.update(belief.config())
                tgt = planner.target(pos)
            if tgt is None:
                gx_, gy_ = scenario.goal
                tgt = (math.atan2(gy_ - state.y, gx_ - state.x), 0.0)
            th_t, reach = tgt
            if config.planner == "discrete":
                _, command = discrete_planner_step(field_, state.pose, th_t)
            else:
                if reach is None:
                    alpha0 = fields.line_search_alpha0(field_, pos, state.theta)
                else:
                    alpha0 = reach if abs(cmd.wrap(th_t - state.theta)) < cmd.HEADING_DEADBAND else 0.0
                v_cap = sstate.v_max if config.proprio else safety.V_CEIL
                command = cmd.compose(th_t, state.theta, state.w_real, alpha0, v_cap, smoother)
        if config.proprio and k % n_adv == 0 and state.proprio.count > 0:
            pc = safety.predict(config.collision_model, state.proprio)
            pf = safety.predict(config.fall_model, state.proprio)
            v_before = sstate.v_max
            _, patch = safety.advisor_step(sstate, pc, pf, state.pose, t)
            if patch is not None:
                belief.add_patch(patch)
                events.append((round(t, 2), "patch", round(pc, 6), *[round(v, 6) for v in patch[:3]]))
            if sstate.v_max != v_before:
                events.append((round(t, 2), "v_max", round(pf, 6), sstate.v_max))
        if k >= n_max:
            break
        # control
        terrain = _terrain(world, state.x, state.y, t)
        step(state, command, world, dt, rng, t, contact, terrain)
        state.v_max = sstate.v_max
        path += state.v_meas * dt
        energy += energy_rate(state.v_real, state.w_real) * dt
        on_hazard = terrain[1] > 0 or abs(terrain[0] - FLAT_FRICTION) > 1e-9
        if on_hazard:
            hz_n += 1
            hz_v += command.v_cmd
        else:
            clear_n += 1
            clear_v += command.v_cmd
        if rec:
            cols["t"].append(round(t + dt, 2))
            cols["x"].append(state.x)
            cols["y"].append(state.y)
            cols["theta"].append(state.theta)
            cols["v_real"].append(state.v_real)
            cols["w_real"].append(state.w_real)
            cols["v_cmd"].append(command.v_cmd)
            cols["w_cmd"].append(command.w_cmd)
            cols["mode"].append(command.mode)
            cols["v_max"].append(sstate.v_max if config.proprio else safety.V_CEIL)
            cols["collided"].append(int(state.collided_now))
            cols["hazard"].append(int(on_hazard))
        k += 1
        if legged and hazard_fall_step(state, terrain, dt, rng):
            outcome = "fall"
            events.append((round(k * dt, 2), "fall", 1.0))
            break
        if state.stalled:
            outcome = "stuck"
            events.append((round(k * dt, 2), "stuck", 1.0))
            break
    if rec:
        cols = {c: (np.array(v) if c == "mode" else
                    np.array(v, dtype=np.int8) if c in _INT_COLUMNS else np.array(v, dtype=float))
                for c, v in cols.items()}
    return EpisodeRecord(
        suite=scenario.suite_tag, config=config.tag, scenario_seed=scenario.seed,
        episode_seed=int(seed), outcome=outcome, time=round(k * dt, 2),
        path_length=path, shortest_path=shortest_path_length(scenario), energy=energy,
        start=tuple(float(v) for v in scenario.start_pose),
        goal=tuple(float(v) for v in scenario.goal), events=events, ticks=cols,
        layout_seed=scenario.layout_seed, hazard_ticks=hz_n, hazard_v_cmd_sum=hz_v,
        clear_ticks=clear_n, clear_v_cmd_sum=clear_v,
        belief=belief if config.keep_belief else None)


# --------------------------------------------------------------------------
# self-supervised data collection

FRICTIONS = (0.1, 0.6, 1.1, 1.6, 2.1)
PAYLOADS = (0.0, 1.2, 2.4, 3.6, 4.8, 6.0)
ROUGHNESS = (0.0, 0.01, 0.05, 0.08, 0.14, 0.23)
CMD_V = (0.0, 0.5, 1.0)
CMD_W = (-0.4, 0.0, 0.4)
RESAMPLE_P = 0.004


@dataclass
class Rollout:
    features: np.ndarray      # (ticks, N_FEATURES)
    collided: np.ndarray      # (ticks,) bool
    fall_tick: int | None     # index of the tick at which the robot fell
    dt: float = CONTROL_DT


def training_world(rng, size=(100, 100)) -> TerrainWorld:
    """Walled square with random visible and invisible boxes and uniform terrain."""
    from .world import grid_to_rects

    rows, cols = size
    g = np.zeros(size, dtype=bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    invisible = []
    for i in range(12):
        h, w = int(rng.integers(2, 10)), int(rng.integers(2, 10))
        r0, c0 = int(rng.integers(1, rows - h - 1)), int(rng.integers(1, cols - w - 1))
        if i % 2:
            g[r0:r0 + h, c0:c0 + w] = True
        else:
            invisible.append((c0 * 0.1, r0 * 0.1, (c0 + w) * 0.1, (r0 + h) * 0.1))
    mu = FRICTIONS[rng.integers(len(FRICTIONS))]
    rough = ROUGHNESS[rng.integers(len(ROUGHNESS))]
    payload = PAYLOADS[rng.integers(len(PAYLOADS))]
    from .world import PayloadSchedule
    return TerrainWorld(cols, rows, np.full(size, mu), np.full(size, rough), grid_to_rects(g),
                        tuple(tuple(round(v, 9) for v in r) for r in invisible),
                        PayloadSchedule((payload,)))


def collect_rollout(seed: int, duration: float = 20.0) -> Rollout:
    """Random-command walk in a random training world, with ground-truth labels."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    world = training_world(rng)
    contact = Contact(world)
    free = ~dilate(world.solid_grid, BODY_RADIUS)
    cells = np.argwhere(free)
    r, c = cells[rng.integers(len(cells))]
    state = RobotState((c + 0.5) * 0.1, (r + 0.5) * 0.1, float(rng.uniform(-math.pi, math.pi)))

    def draw():
        v = CMD_V[rng.integers(len(CMD_V))]
        w = CMD_W[rng.integers(len(CMD_W))]
        return cmd.VelocityCommand(v, w, cmd.CURVE if v >= cmd.V_CURVE_MIN else cmd.IN_PLACE)

    command = draw()
    feats, coll = [], []
    fall_tick = None
    n = int(round(duration / CONTROL_DT))
    for k in range(n):
        t = k * CONTROL_DT
        if rng.random() < RESAMPLE_P:
            command = draw()
        terrain = _terrain(world, state.x, state.y, t)
        step_control(state, command, world, CONTROL_DT, rng, t, contact, terrain)
        feats.append(state.proprio.buf[(state.proprio._head - 1) % state.proprio.length].copy())
        coll.append(state.collided_now)
        if hazard_fall_step(state, terrain, CONTROL_DT, rng):
            fall_tick = k
            break
    return Rollout(np.array(feats), np.array(coll, dtype=bool), fall_tick)
