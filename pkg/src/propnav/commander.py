"""Velocity command generation from cost-field queries and the speed limit."""

from __future__ import annotations

import math
from dataclasses import dataclass

KP = 1.0
KD = 0.02
LOOKAHEAD_T = 1.0
V_CEIL = 1.0
V_CURVE_MIN = 0.15
W_CURVE_MAX = 0.4
V_INPLACE_MAX = 0.15
W_INPLACE_MIN = 0.4
W_INPLACE_MAX = 0.8
INPLACE_SPEED = 0.2
HEADING_DEADBAND = 0.1
BETA_UP = 0.3
BETA_DOWN = 0.8

CURVE = "curve_following"
IN_PLACE = "in_place"


def wrap(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(angle + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class VelocityCommand:
    v_cmd: float
    w_cmd: float
    mode: str

    def within_envelope(self) -> bool:
        eps = 1e-12
        if self.mode == CURVE:
            return (V_CURVE_MIN - eps <= self.v_cmd <= V_CEIL + eps
                    and abs(self.w_cmd) <= W_CURVE_MAX + eps)
        if self.mode == IN_PLACE:
            if not (-eps <= self.v_cmd <= V_INPLACE_MAX + eps):
                return False
            return self.w_cmd == 0.0 or W_INPLACE_MIN - eps <= abs(self.w_cmd) <= W_INPLACE_MAX + eps
        return False


STOP = VelocityCommand(0.0, 0.0, IN_PLACE)


@dataclass
class SmootherState:
    v_smooth: float = 0.0
    beta_up: float = BETA_UP
    beta_down: float = BETA_DOWN


def angular_cmd(theta_target: float, theta: float, omega: float, mode: str) -> float:
    """PD on heading error with zero target yaw rate, clipped to the mode's range."""
    err = wrap(theta_target - theta)
    w = KP * err + KD * (0.0 - omega)
    if mode == IN_PLACE:
        if err == 0.0:
            return 0.0
        mag = min(max(abs(w), W_INPLACE_MIN), W_INPLACE_MAX)
        # turn toward the error even if the damping term flipped the sign
        return math.copysign(mag, err)
    return min(max(w, -W_CURVE_MAX), W_CURVE_MAX)


def linear_cmd(alpha0: float, T: float = LOOKAHEAD_T, v_max: float = V_CEIL) -> float:
    if T <= 0:
        raise ValueError("lookahead T must be positive")
    return min(max(alpha0, 0.0) / T, v_max)


def smooth(smoother: SmootherState, v_target: float) -> float:
    """Asymmetric EMA toward ``v_target``; updates ``smoother`` in place."""
    v = smoother.v_smooth
    beta = smoother.beta_up if v_target > v else smoother.beta_down
    v = (1 - beta) * v + beta * v_target
    smoother.v_smooth = min(max(v, 0.0), V_CEIL)
    return smoother.v_smooth


def compose(theta_target: float, theta: float, omega: float, alpha0: float,
            v_max: float, smoother: SmootherState, T: float = LOOKAHEAD_T,
            at_goal: bool = False) -> VelocityCommand:
    """Full command for one planner tick.

    Low speed together with a heading error outside the deadband selects
    in-place turning; otherwise the robot follows the curve with its
    speed floored at the curve-following minimum.
    """
    if at_goal:
        smoother.v_smooth = 0.0
        return STOP
    v = smooth(smoother, linear_cmd(alpha0, T, v_max))
    err = wrap(theta_target - theta)
    if v < INPLACE_SPEED and abs(err) > HEADING_DEADBAND:
        return VelocityCommand(min(v, V_INPLACE_MAX), angular_cmd(theta_target, theta, omega, IN_PLACE),
                               IN_PLACE)
    return VelocityCommand(min(max(v, V_CURVE_MIN), V_CEIL),
                           angular_cmd(theta_target, theta, omega, CURVE), CURVE)
