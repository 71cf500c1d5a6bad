import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tankguard.control_core import map_action_stiffness
from tankguard.passivity import (
    TankConfig,
    TankState,
    flow_scale,
    gate_stiffness,
    passivity_layer_step,
    spring_power,
    tank_step,
)

CFG = TankConfig(e_max=6.0, e_min=0.0, flow_min=-0.5)


def test_spring_power_examples():
    assert spring_power((5, 0), (0.1, 0)) == pytest.approx(0.5, abs=1e-15)
    assert spring_power((5, 0), (0, 0)) == 0.0
    assert spring_power((3, -4), (-0.2, 0.1)) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("flow,expected", [(-1.0, 0.5), (-0.3, 1.0), (0.4, 1.0), (-0.5, 1.0)])
def test_flow_scale_examples(flow, expected):
    assert flow_scale(flow, CFG) == expected


@given(st.floats(-1e3, 1e3), st.floats(-10.0, 0.0))
def test_flow_scale_meets_limit(flow, limit):
    alpha = flow_scale(flow, TankConfig(flow_min=limit))
    assert 0.0 <= alpha <= 1.0 and math.copysign(1.0, alpha) == 1.0
    if limit < 0.0:
        assert alpha > 0.0
    if flow < limit:
        assert alpha * flow >= limit
    else:
        assert alpha == 1.0


def test_tank_config_validation():
    with pytest.raises(ValueError):
        TankConfig(e_max=1.0, e_min=2.0)
    with pytest.raises(ValueError):
        TankConfig(flow_min=0.1)


def test_tank_step_in_bounds():
    s = tank_step(TankState(e=6.0), -0.4, 1.0, CFG)
    assert s.e == pytest.approx(5.6, abs=1e-15)
    assert s.alpha == 1.0 and s.last_flow_applied == -0.4 and not s.depleted


def test_tank_step_refuses_depletion():
    s = tank_step(TankState(e=0.2), -0.4, 1.0, CFG)
    assert s.e == 0.2 and s.last_flow_applied == 0.0 and s.depleted


def test_tank_step_does_not_store_above_max():
    s = tank_step(TankState(e=6.0), 0.3, 1.0, CFG)
    assert s.e == 6.0 and s.last_flow_applied == 0.0


def test_tank_step_flow_limit():
    s = tank_step(TankState(e=6.0), -1.0, 1e-3, CFG)
    assert s.alpha == 0.5 and s.last_flow_applied == -0.5
    assert s.e == pytest.approx(6.0 - 0.5e-3, abs=1e-15)


def test_tank_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        tank_step(TankState(e=1.0), 0.0, 0.0, CFG)


def test_disabled_layer_tracks_without_floor():
    off = CFG.disabled()
    s = tank_step(TankState(e=0.2), -1.0, 1.0, off)
    assert s.e == pytest.approx(-0.8) and s.alpha == 1.0 and s.last_flow_applied == -1.0
    s = tank_step(TankState(e=6.0), 1.0, 1.0, off)
    assert s.e == 6.0


@given(st.floats(0.0, 6.0), st.floats(-100.0, 100.0), st.floats(1e-4, 1e-2))
def test_tank_step_invariants(e, flow, dt):
    s = tank_step(TankState(e=e), flow, dt, CFG)
    assert CFG.e_min <= s.e <= CFG.e_max
    assert s.last_flow_applied >= CFG.flow_min
    assert 0.0 < s.alpha <= 1.0


def test_gate_stiffness_examples():
    k500, k900, k300 = np.diag([500.0, 500.0]), np.diag([900.0, 900.0]), np.diag([300.0, 300.0])
    assert gate_stiffness(True, k500, k900) is not None
    np.testing.assert_array_equal(gate_stiffness(True, k500, k900), k500)
    np.testing.assert_array_equal(gate_stiffness(False, k500, k900), k900)
    np.testing.assert_array_equal(gate_stiffness(True, k500, k300), k300)


def test_gate_stiffness_mixed_change_counts_as_increase():
    # stiffer along y, softer along x: still an increase in one direction
    prev, new = np.diag([500.0, 500.0]), np.diag([300.0, 600.0])
    np.testing.assert_array_equal(gate_stiffness(True, prev, new), prev)


def test_layer_disabled_is_passthrough():
    k = map_action_stiffness(800, 400, (0.01, 0.02))
    prev = np.diag([500.0, 500.0])
    out, alpha, s = passivity_layer_step(k, prev, (0.02, 0.0), (-0.5, 0.1), TankState(e=0.001), CFG.disabled())
    np.testing.assert_array_equal(out, k)
    assert alpha == 1.0
    assert s.last_flow_raw == s.last_flow_applied == -((k @ [0.02, 0.0]) @ [-0.5, 0.1])


def test_layer_holds_stiffness_when_depleted():
    prev = np.diag([500.0, 500.0])
    req = np.diag([900.0, 900.0])
    # moving toward equilibrium: the spring releases energy and drains the tank
    out, alpha, s = passivity_layer_step(req, prev, (0.02, 0.0), (0.1, 0.0), TankState(e=0.0), CFG)
    np.testing.assert_array_equal(out, prev)
    assert s.depleted and s.e == 0.0 and s.last_flow_applied == 0.0
    assert s.last_flow_raw == -(500.0 * 0.02 * 0.1)
    assert alpha == pytest.approx(CFG.flow_min / s.last_flow_raw) or alpha == 1.0


def test_layer_flow_limit_composes_with_force_scaling():
    k = np.diag([500.0, 500.0])
    # raw flow -(500 * 0.02 * 0.1) = -1.0 W
    out, alpha, s = passivity_layer_step(k, k, (0.02, 0.0), (0.1, 0.0), TankState(e=6.0), CFG)
    assert s.last_flow_raw == pytest.approx(-1.0, abs=1e-15)
    assert s.last_flow_applied == -0.5 and alpha == pytest.approx(0.5, abs=1e-15)
    force = alpha * (k @ [0.02, 0.0])
    np.testing.assert_allclose(force, [5.0, 0.0], atol=1e-12)


@given(st.floats(300, 1000), st.floats(300, 1000), st.floats(0, 2 * math.pi), st.floats(-0.03, 0.03),
       st.floats(-0.03, 0.03), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.0, 6.0))
def test_layer_step_invariants(k1, k2, t, dx, dy, vx, vy, e):
    req = map_action_stiffness(k1, k2, (math.cos(t), math.sin(t)))
    prev = np.diag([500.0, 500.0])
    _, alpha, s = passivity_layer_step(req, prev, (dx, dy), (vx, vy), TankState(e=e), CFG)
    assert 0.0 <= s.e <= 6.0
    assert s.last_flow_applied >= -0.5
    assert 0.0 < alpha <= 1.0


@given(st.floats(300, 900), st.floats(1.0, 100.0), st.floats(0.001, 0.03), st.floats(0.01, 0.5))
def test_stiffening_along_motion_never_raises_tank(k, dk, d, v):
    # spring releasing energy along x; a stiffer request must not add energy
    dp, vel = (d, 0.0), (v, 0.0)
    tank = TankState(e=3.0)
    _, _, soft = passivity_layer_step(np.diag([k, k]), np.diag([k, k]), dp, vel, tank, CFG.disabled())
    _, _, stiff = passivity_layer_step(np.diag([k + dk, k]), np.diag([k, k]), dp, vel, tank, CFG.disabled())
    assert stiff.e <= soft.e <= tank.e


def _prescribed_motion(k, eq, p0, v, duration, dt):
    """Tank integrated by the layer along p(t) = p0 + v t; returns (dE, dU)."""
    k = np.asarray(k)
    cfg = TankConfig(e_max=1e6, e_min=-1e6, flow_min=-1e6, enabled_budget=False, enabled_flow=False)
    tank = TankState(e=0.0)
    n = int(round(duration / dt))
    p = np.array(p0, dtype=float)
    for i in range(n):
        p = np.asarray(p0) + np.asarray(v) * (i * dt)
        _, _, tank = passivity_layer_step(k, k, eq - p, v, tank, cfg, dt)
    p_end = np.asarray(p0) + np.asarray(v) * (n * dt)
    d0, d1 = eq - np.asarray(p0), eq - p_end
    return tank.e, 0.5 * d1 @ k @ d1 - 0.5 * d0 @ k @ d0, n


@pytest.mark.parametrize("k1,k2,angle", [(500, 500, 0.0), (1000, 300, 0.7), (300, 800, 2.5)])
def test_energy_oracle_prescribed_motion(k1, k2, angle):
    k = map_action_stiffness(k1, k2, (math.cos(angle), math.sin(angle)))
    eq = np.array([0.0, 0.0])
    v = np.array([0.05, -0.02])  # moving away from equilibrium, against the spring
    de, du, n = _prescribed_motion(k, eq, (0.01, 0.0), v, 0.5, 1e-3)
    assert abs(de - du) <= 1e-3
    # the residual is exactly the left Riemann-sum defect of a linear integrand
    assert de - du == pytest.approx(-0.5 * 1e-3 * (v @ k @ v) * n * 1e-3, rel=1e-6)
