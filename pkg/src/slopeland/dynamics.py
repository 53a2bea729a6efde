"""Simplified rotorcraft plant integrated with fixed-step RK4.

Inertial frame is north-east-down: z grows toward the ground, altitude is -z.
Translational channels follow the planar small-angle model (body-axis
accelerations from thrust tilt and quadratic drag, rotated through yaw) and the
vertical thrust/gravity/drag balance. Attitude is propagated on the rotation
group from body rates that follow a first-order response to cyclic and rudder
deflections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .errors import ConstraintViolation, StepTooLarge

MAX_DT = 0.02


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.3
    k_du: float = 0.05
    k_dv: float = 0.05
    k_zdot: float = 0.10
    k_coll: float = 25.0
    g: float = 9.81
    tau_att: float = 0.08
    # Servo sign convention: a positive cyclic/rudder deflection drives the
    # body rate negative, so the proportional law on log(R_cmd^T R) is
    # restoring with positive gains.
    k_act: float = -8.0

    def validate(self) -> None:
        for name in ("mass", "k_du", "k_dv", "k_zdot", "k_coll", "g", "tau_att", "k_act"):
            if not math.isfinite(getattr(self, name)):
                raise ConstraintViolation(f"{name} finite", f"{name}={getattr(self, name)}")
        checks = [
            ("m > 0", self.mass > 0),
            ("k_coll > 0", self.k_coll > 0),
            ("tau_att > 0", self.tau_att > 0),
            ("g > 0", self.g > 0),
            ("k_du >= 0", self.k_du >= 0),
            ("k_dv >= 0", self.k_dv >= 0),
            ("k_zdot >= 0", self.k_zdot >= 0),
            ("k_act != 0", self.k_act != 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConstraintViolation(name, "vehicle parameter out of range")

    @property
    def hover_collective(self) -> float:
        return self.g * self.mass / self.k_coll


@dataclass(frozen=True)
class ActuatorCommand:
    coll: float = 0.0
    pitch_cyclic: float = 0.0
    roll_cyclic: float = 0.0
    rudder: float = 0.0

    def clamped(self) -> "ActuatorCommand":
        return ActuatorCommand(
            min(1.0, max(0.0, self.coll)),
            min(1.0, max(-1.0, self.pitch_cyclic)),
            min(1.0, max(-1.0, self.roll_cyclic)),
            min(1.0, max(-1.0, self.rudder)),
        )


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def altitude(self) -> float:
        return -float(self.position[2])

    @property
    def euler(self) -> so3.EulerAngles:
        return so3.euler_unchecked(self.R)

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.position, self.velocity, self.R.ravel(), self.omega))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "VehicleState":
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:15].reshape(3, 3).copy(), x[15:18].copy())

    def with_(self, **kw) -> "VehicleState":
        return replace(self, **kw)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_vector())))


@dataclass(frozen=True)
class VehicleStateDerivative:
    position: np.ndarray
    velocity: np.ndarray
    R: np.ndarray
    omega: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.position, self.velocity, self.R.ravel(), self.omega))


def hover_state(x: float = 0.0, y: float = 0.0, altitude: float = 1.0, yaw: float = 0.0) -> VehicleState:
    return VehicleState(np.array([x, y, -altitude]), np.zeros(3), so3.rot_z(yaw), np.zeros(3))


def hover_command(params: VehicleParams) -> ActuatorCommand:
    return ActuatorCommand(coll=params.hover_collective)


def planar_body_accel(u: float, v: float, t_coll: float, pitch: float, roll: float,
                      params: VehicleParams) -> tuple[float, float]:
    """Body-axis planar accelerations of the small-angle model.

    Drag is applied with the sign that opposes motion.
    """
    m = params.mass
    du = (-t_coll * pitch - params.k_du * abs(u) * u) / m
    dv = (t_coll * roll - params.k_dv * abs(v) * v) / m
    return du, dv


def vertical_accel(vz: float, t_coll: float, pitch: float, roll: float, params: VehicleParams) -> float:
    m = params.mass
    return (-t_coll * math.cos(pitch) * math.cos(roll) + m * params.g - params.k_zdot * vz) / m


def attitude_rate_response(omega, cmd: ActuatorCommand, params: VehicleParams) -> np.ndarray:
    """First-order body-rate response: d(omega)/dt = (k_act * delta - omega) / tau_att."""
    delta = np.array([cmd.roll_cyclic, cmd.pitch_cyclic, cmd.rudder])
    return (params.k_act * delta - np.asarray(omega, dtype=float)) / params.tau_att


def _derivative_vector(x: np.ndarray, cmd: ActuatorCommand, params: VehicleParams,
                       disturbance: np.ndarray | None) -> np.ndarray:
    R = x[6:15].reshape(3, 3)
    omega = x[15:18]
    e = so3.euler_unchecked(R)
    vx, vy, vz = x[3], x[4], x[5]
    t_coll = params.k_coll * cmd.coll
    u, v = so3.inertial_to_body_planar(vx, vy, e.yaw)
    du, dv = planar_body_accel(u, v, t_coll, e.pitch, e.roll, params)
    ax, ay = so3.body_to_inertial_planar(du, dv, e.yaw)
    az = vertical_accel(vz, t_coll, e.pitch, e.roll, params)
    out = np.empty(18)
    out[0:3] = x[3:6]
    out[3] = ax
    out[4] = ay
    out[5] = az
    if disturbance is not None:
        out[3:6] += disturbance
    p, q, r = omega
    # R_dot = R skew(omega)
    out[6:15] = (R @ np.array([[0.0, -r, q], [r, 0.0, -p], [-q, p, 0.0]])).ravel()
    k, tau = params.k_act, params.tau_att
    out[15] = (k * cmd.roll_cyclic - p) / tau
    out[16] = (k * cmd.pitch_cyclic - q) / tau
    out[17] = (k * cmd.rudder - r) / tau
    return out


def state_derivative(s: VehicleState, cmd: ActuatorCommand, params: VehicleParams,
                     disturbance=None) -> VehicleStateDerivative:
    """Time derivative of the full state under actuator command ``cmd``.

    ``disturbance`` is an optional inertial acceleration (m/s^2) added to the
    translational channels.
    """
    d = None if disturbance is None else np.asarray(disturbance, dtype=float)
    out = _derivative_vector(s.to_vector(), cmd, params, d)
    return VehicleStateDerivative(out[0:3], out[3:6], out[6:15].reshape(3, 3), out[15:18])


def step_rk4(s: VehicleState, cmd: ActuatorCommand, dt: float, params: VehicleParams,
             disturbance=None) -> VehicleState:
    """One classical RK4 step with the command held constant over ``dt``.

    The attitude block is projected back onto the rotation group afterward.
    """
    if not dt > 0.0:
        raise StepTooLarge(f"dt must be positive, got {dt}")
    if dt > MAX_DT:
        raise StepTooLarge(f"dt={dt} exceeds {MAX_DT}")
    d = None if disturbance is None else np.asarray(disturbance, dtype=float)
    x = s.to_vector()
    k1 = _derivative_vector(x, cmd, params, d)
    k2 = _derivative_vector(x + 0.5 * dt * k1, cmd, params, d)
    k3 = _derivative_vector(x + 0.5 * dt * k2, cmd, params, d)
    k4 = _derivative_vector(x + dt * k3, cmd, params, d)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Rn = xn[6:15].reshape(3, 3)
    if not np.array_equal(Rn, s.R):
        Rn = so3.project_to_rotation(Rn)
    return VehicleState(xn[0:3], xn[3:6], Rn, xn[15:18])
