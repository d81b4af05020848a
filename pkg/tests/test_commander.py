from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from propnav import commander as cmd
from propnav.commander import CURVE, IN_PLACE, SmootherState


def test_angular_examples():
    assert cmd.angular_cmd(0.3, 0.3, 0.0, CURVE) == 0.0
    assert cmd.angular_cmd(0.5, 0.0, 0.0, CURVE) == pytest.approx(0.4)
    assert cmd.angular_cmd(0.1, 0.0, 0.0, IN_PLACE) == pytest.approx(0.4)
    assert cmd.angular_cmd(-2.0, 0.0, 0.0, IN_PLACE) == pytest.approx(-0.8)
    # PD arithmetic below the clip
    assert cmd.angular_cmd(0.2, 0.0, 1.0, CURVE) == pytest.approx(0.2 - 0.02)


def test_wrap_range():
    assert cmd.wrap(math.pi) == pytest.approx(math.pi)
    assert cmd.wrap(-math.pi) == pytest.approx(math.pi)
    assert cmd.wrap(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_linear_examples():
    assert cmd.linear_cmd(1.2, 1.0, 1.0) == 1.0
    assert cmd.linear_cmd(0.5, 1.0, 0.3) == 0.3
    assert cmd.linear_cmd(0.0) == 0.0
    with pytest.raises(ValueError):
        cmd.linear_cmd(1.0, 0.0)


def test_smooth_examples():
    s = SmootherState(0.4)
    assert cmd.smooth(s, 0.4) == pytest.approx(0.4)
    assert cmd.smooth(SmootherState(0.0), 1.0) == pytest.approx(0.3)
    assert cmd.smooth(SmootherState(1.0), 0.0) == pytest.approx(0.2)


@given(st.floats(0, 1), st.floats(0, 1))
def test_smooth_contraction(v, target):
    s = SmootherState(v)
    beta = cmd.BETA_UP if target > v else cmd.BETA_DOWN
    out = cmd.smooth(s, target)
    assert abs(out - target) <= (1 - beta) * abs(v - target) + 1e-12
    assert 0.0 <= out <= 1.0


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(-1, 1),
       st.floats(0, 3), st.floats(0.15, 1.0), st.floats(0, 1))
def test_compose_envelope(tt, th, om, a0, vmax, vs):
    c = cmd.compose(tt, th, om, a0, vmax, SmootherState(vs))
    assert c.within_envelope()


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0, 3),
       st.floats(0.15, 1.0), st.floats(0.15, 1.0), st.floats(0, 1))
def test_lower_limit_never_faster(tt, th, a0, v1, v2, vs):
    lo, hi = sorted((v1, v2))
    a = cmd.compose(tt, th, 0.0, a0, lo, SmootherState(vs))
    b = cmd.compose(tt, th, 0.0, a0, hi, SmootherState(vs))
    assert a.v_cmd <= b.v_cmd + 1e-12


def test_compose_modes():
    c = cmd.compose(math.pi, 0.0, 0.0, 0.0, 1.0, SmootherState())
    assert c.mode == IN_PLACE and 0.4 <= abs(c.w_cmd) <= 0.8
    assert cmd.compose(0.0, 0.0, 0.0, 1.0, 1.0, SmootherState(), at_goal=True) == cmd.STOP


def test_straight_corridor_ramps_up():
    s = SmootherState()
    vs = [cmd.compose(0.0, 0.0, 0.0, 2.0, 1.0, s).v_cmd for _ in range(30)]
    assert all(b >= a for a, b in zip(vs, vs[1:]))
    assert vs[-1] == pytest.approx(1.0, abs=1e-3)
