import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slopeland import so3
from slopeland.dynamics import (ActuatorCommand, VehicleParams, VehicleState,
                                attitude_rate_response, hover_command, hover_state,
                                planar_body_accel, state_derivative, step_rk4, vertical_accel)
from slopeland.errors import ConstraintViolation, StepTooLarge

P = VehicleParams()
M, G = 1.3, 9.81


def test_planar_accel_examples():
    assert planar_body_accel(0, 0, 12.7, 0, 0, P) == (0.0, 0.0)
    du, dv = planar_body_accel(0, 0, 12.7, 0.1, 0, P)
    assert du == pytest.approx(-12.7 * 0.1 / 1.3) and dv == 0.0


def test_planar_drag_opposes_motion():
    # magnitude k_du/m = 0.03846, signed against the velocity
    du, _ = planar_body_accel(1.0, 0, 12.7, 0, 0, P)
    assert du == pytest.approx(-0.05 / 1.3)
    du, _ = planar_body_accel(-1.0, 0, 12.7, 0, 0, P)
    assert du == pytest.approx(0.05 / 1.3)


def test_vertical_accel_examples():
    assert vertical_accel(0, M * G, 0, 0, P) == pytest.approx(0.0, abs=1e-15)
    assert vertical_accel(0, 0, 0, 0, P) == pytest.approx(G)
    assert vertical_accel(0.5, M * G, 0, 0, P) == pytest.approx(-0.1 * 0.5 / 1.3)


def test_rate_response_examples():
    p3 = VehicleParams(k_act=3.0, tau_att=0.15)
    assert np.array_equal(attitude_rate_response(np.zeros(3), ActuatorCommand(), p3), np.zeros(3))
    d = attitude_rate_response(np.zeros(3), ActuatorCommand(roll_cyclic=0.5), p3)
    assert d[0] == pytest.approx(10.0)


def test_rate_step_converges_to_steady_state():
    p3 = VehicleParams(k_act=3.0, tau_att=0.15)
    cmd = ActuatorCommand(coll=p3.hover_collective, roll_cyclic=0.4)
    s = hover_state()
    dt = 0.005
    for _ in range(int(round(5 * 0.15 / dt))):
        s = step_rk4(s, cmd, dt, p3)
    assert s.omega[0] == pytest.approx(3.0 * 0.4, rel=0.01)
    # first-order oracle
    assert s.omega[0] == pytest.approx(1.2 * (1 - math.exp(-5)), rel=1e-6)


def test_hover_derivative_is_zero():
    d = state_derivative(hover_state(1.0, -2.0, 3.0, 0.4), hover_command(P), P)
    assert np.abs(d.to_vector()).max() < 1e-12


def test_pure_pitch_deflection_only_moves_x_channel():
    s = hover_state().with_(R=so3.rot_y(0.1))
    d = state_derivative(s, ActuatorCommand(P.hover_collective, 0.3, 0, 0), P)
    assert d.velocity[0] != 0.0
    assert d.velocity[1] == 0.0


def test_drag_contribution_linear_in_coefficient():
    s = hover_state().with_(velocity=np.array([1.5, 0.0, 0.0]))
    cmd = hover_command(P)
    base = state_derivative(s, cmd, VehicleParams(k_du=0.0)).velocity[0]
    one = state_derivative(s, cmd, VehicleParams(k_du=0.05)).velocity[0] - base
    two = state_derivative(s, cmd, VehicleParams(k_du=0.10)).velocity[0] - base
    assert two == pytest.approx(2 * one, rel=1e-12)


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        step_rk4(hover_state(), hover_command(P), 0.021, P)
    with pytest.raises(StepTooLarge):
        step_rk4(hover_state(), hover_command(P), 0.0, P)


@given(st.floats(1e-4, 0.02))
def test_hover_fixed_point_any_dt(dt):
    s = hover_state(0.3, 0.2, 1.5, -0.7)
    n = step_rk4(s, hover_command(P), dt, P)
    assert np.abs(n.to_vector() - s.to_vector()).max() < 1e-12


def test_ballistic_fall_closed_form():
    p = VehicleParams(k_du=0, k_dv=0, k_zdot=0)
    s = VehicleState(np.array([0.0, 0.0, -10.0]), np.array([0.7, -0.2, 0.0]), np.eye(3), np.zeros(3))
    for _ in range(100):
        s = step_rk4(s, ActuatorCommand(), 0.01, p)
    assert s.position[2] == pytest.approx(-10.0 + 0.5 * G, abs=1e-8)
    # zero thrust, zero drag: horizontal velocity conserved, v_z grows at g
    assert np.allclose(s.velocity, [0.7, -0.2, G], atol=1e-12)


def _excited(dt, T=1.0):
    s = VehicleState(np.array([0.0, 0.0, -2.0]), np.array([1.0, 0.5, -0.2]),
                     so3.euler_to_rotation((0.05, -0.1, 0.3)), np.array([0.2, -0.1, 0.05]))
    cmd = ActuatorCommand(0.55, 0.2, -0.15, 0.1)
    for _ in range(int(round(T / dt))):
        s = step_rk4(s, cmd, dt, P)
    return s.to_vector()


def test_rk4_error_shrinks_sixteenfold():
    a, b, c = _excited(0.01), _excited(0.005), _excited(0.0025)
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert 12.0 < ratio < 20.0


def test_orthonormality_under_random_commands():
    rng = np.random.default_rng(8)
    s = hover_state()
    for _ in range(5000):
        c = rng.uniform(-1, 1, 3)
        s = step_rk4(s, ActuatorCommand(P.hover_collective, *c), 0.005, P)
    assert so3.orthonormality_error(s.R) < 1e-9


def test_state_vector_round_trip():
    s = VehicleState(np.array([1.0, 2, 3]), np.array([4.0, 5, 6]), so3.rot_x(0.3), np.array([7.0, 8, 9]))
    t = VehicleState.from_vector(s.to_vector())
    assert np.array_equal(t.to_vector(), s.to_vector())


@pytest.mark.parametrize("field,value,name", [
    ("mass", -1.0, "m > 0"), ("k_coll", 0.0, "k_coll > 0"), ("tau_att", 0.0, "tau_att > 0"),
    ("k_act", 0.0, "k_act != 0"), ("k_du", -0.1, "k_du >= 0"), ("mass", math.nan, "mass finite"),
])
def test_params_validation_names_constraint(field, value, name):
    with pytest.raises(ConstraintViolation) as exc:
        VehicleParams(**{field: value}).validate()
    assert exc.value.constraint == name


def test_hover_collective_value():
    assert P.hover_collective == pytest.approx(0.51012, abs=1e-5)
