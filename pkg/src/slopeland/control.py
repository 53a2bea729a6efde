"""Cascaded flight controller.

Position loop (saturated proportional) -> yaw frame change -> velocity loop
(dynamic inversion of the planar model with integral action) -> attitude loop
(proportional on the rotation-error logarithm). The vertical channel inverts the
vertical thrust balance for the collective. The forward-velocity and pitch
channels can each bypass the loop above them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import so3
from .dynamics import ActuatorCommand, VehicleParams, VehicleState
from .errors import AttitudeTooSteep, ConstraintViolation, ThrustTooLow

THRUST_EPS = 0.5
MIN_VERTICAL_AUTHORITY = 0.1


@dataclass(frozen=True)
class GainSet:
    v_max: float = 1.5
    lambda_p: float = 1.2
    lambda_z: float = 1.2
    lambda_u: float = 2.0
    lambda_v: float = 2.0
    k_iu: float = 0.5
    k_iv: float = 0.5
    lambda_vz: float = 3.0
    k_ivz: float = 0.8
    k_phi: float = 3.0
    k_theta: float = 3.0
    k_psi: float = 2.0
    pitch_filter_tau: float = 0.05
    theta_max: float = math.radians(75.0)

    def validate(self) -> None:
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ConstraintViolation(f"{name} > 0", f"gain {name}={value}")


class ForwardSource(enum.Enum):
    POSITION = "position"
    DIRECT_VELOCITY = "direct_velocity"


class PitchSource(enum.Enum):
    VELOCITY_LOOP = "velocity_loop"
    DIRECT_PITCH = "direct_pitch"


@dataclass(frozen=True)
class ControlMode:
    forward: ForwardSource = ForwardSource.POSITION
    pitch: PitchSource = PitchSource.VELOCITY_LOOP


HOVER_MODE = ControlMode()


@dataclass(frozen=True)
class Setpoint:
    x: float
    y: float
    z: float
    yaw: float = 0.0
    vx: float | None = None
    theta_d: float | None = None

    def check(self, mode: ControlMode) -> None:
        if mode.forward is ForwardSource.DIRECT_VELOCITY and self.vx is None:
            raise ValueError("direct_velocity mode needs a vx setpoint")
        if mode.pitch is PitchSource.DIRECT_PITCH and self.theta_d is None:
            raise ValueError("direct_pitch mode needs a theta_d setpoint")


class ControllerMemory(NamedTuple):
    i_u: float = 0.0
    i_v: float = 0.0
    i_vz: float = 0.0
    theta_filtered: float = 0.0
    # thrust commanded on the previous step, fed to the planar inversion
    t_coll_prev: float = 0.0

    @classmethod
    def initial(cls, params: VehicleParams) -> "ControllerMemory":
        return cls(t_coll_prev=params.mass * params.g)


def sat(x: float) -> float:
    return min(1.0, max(-1.0, x))


def _clip(x: float, lim: float) -> tuple[float, bool]:
    if x > lim:
        return lim, True
    if x < -lim:
        return -lim, True
    return x, False


def position_loop(s: VehicleState, sp: Setpoint, gains: GainSet) -> tuple[float, float, float]:
    """Saturated proportional position laws, one per inertial axis."""
    x, y, z = s.position
    vm = gains.v_max
    vx = -vm * sat(gains.lambda_p * (x - sp.x) / vm)
    vy = -vm * sat(gains.lambda_p * (y - sp.y) / vm)
    vz = -vm * sat(gains.lambda_z * (z - sp.z) / vm)
    return vx, vy, vz


def invert_planar(u: float, v: float, u_cmd: float, v_cmd: float, i_u: float, i_v: float,
                  t_coll: float, params: VehicleParams, gains: GainSet) -> tuple[float, float]:
    """Pitch/roll that make the planar model follow the desired second-order response."""
    if not t_coll > THRUST_EPS:
        raise ThrustTooLow(f"T_coll={t_coll:.4f} N <= {THRUST_EPS} N")
    m = params.mass
    theta = -(gains.lambda_u * m * (i_u + u_cmd - u) + params.k_du * u * abs(u)) / t_coll
    phi = (gains.lambda_v * m * (i_v + v_cmd - v) + params.k_dv * v * abs(v)) / t_coll
    return theta, phi


def velocity_loop(u: float, v: float, u_cmd: float, v_cmd: float, mem: ControllerMemory,
                  t_coll: float, params: VehicleParams, gains: GainSet, dt: float,
                  integrate_u: bool = True) -> tuple[float, float, ControllerMemory]:
    theta, phi = invert_planar(u, v, u_cmd, v_cmd, mem.i_u, mem.i_v, t_coll, params, gains)
    theta, theta_clamped = _clip(theta, gains.theta_max)
    phi, phi_clamped = _clip(phi, gains.theta_max)
    i_u, i_v = mem.i_u, mem.i_v
    if integrate_u and not theta_clamped:
        i_u += gains.k_iu * (u_cmd - u) * dt
    if not phi_clamped:
        i_v += gains.k_iv * (v_cmd - v) * dt
    return theta, phi, mem._replace(i_u=i_u, i_v=i_v)


def direct_pitch_filter(theta_d: float, mem: ControllerMemory, gains: GainSet,
                        dt: float) -> tuple[float, ControllerMemory]:
    """First-order low-pass on the direct pitch input (exact zero-order-hold update)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = 1.0 - math.exp(-dt / gains.pitch_filter_tau)
    theta = mem.theta_filtered + a * (theta_d - mem.theta_filtered)
    return theta, mem._replace(theta_filtered=theta)


def attitude_loop(R: np.ndarray, theta_cmd: float, phi_cmd: float, psi_cmd: float,
                  gains: GainSet) -> tuple[float, float, float]:
    """Returns (roll cyclic, pitch cyclic, rudder), each clamped to [-1, 1]."""
    R_cmd = so3.euler_to_rotation((phi_cmd, theta_cmd, psi_cmd))
    ex, ey, ez = so3.attitude_error(R_cmd, R)
    return sat(gains.k_phi * ex), sat(gains.k_theta * ey), sat(gains.k_psi * ez)


def collective_loop(vz: float, vz_cmd: float, theta: float, phi: float, mem: ControllerMemory,
                    params: VehicleParams, gains: GainSet, dt: float) -> tuple[float, ControllerMemory]:
    """Collective that inverts the vertical thrust balance (z-down convention).

    The tracking error is taken as (command - actual), the same orientation used
    by the planar channels.
    """
    tilt = math.cos(theta) * math.cos(phi)
    if tilt <= MIN_VERTICAL_AUTHORITY:
        raise AttitudeTooSteep(f"cos(theta)cos(phi)={tilt:.4f}")
    m = params.mass
    num = params.g * m - gains.lambda_vz * m * (mem.i_vz + vz_cmd - vz) - params.k_zdot * vz
    coll = num / (params.k_coll * tilt)
    clamped = coll > 1.0 or coll < 0.0
    coll = min(1.0, max(0.0, coll))
    i_vz = mem.i_vz if clamped else mem.i_vz + gains.k_ivz * (vz_cmd - vz) * dt
    return coll, mem._replace(i_vz=i_vz)


def controller_step(s: VehicleState, sp: Setpoint, mode: ControlMode, mem: ControllerMemory,
                    params: VehicleParams, gains: GainSet,
                    dt: float) -> tuple[ActuatorCommand, ControllerMemory]:
    """One pass through the full cascade; pure in all of its arguments."""
    sp.check(mode)
    vx_cmd, vy_cmd, vz_cmd = position_loop(s, sp, gains)
    if mode.forward is ForwardSource.DIRECT_VELOCITY:
        vx_cmd = sp.vx
    e = so3.euler_unchecked(s.R)
    u_cmd, v_cmd = so3.inertial_to_body_planar(vx_cmd, vy_cmd, e.yaw)
    u, v = so3.inertial_to_body_planar(s.velocity[0], s.velocity[1], e.yaw)

    direct = mode.pitch is PitchSource.DIRECT_PITCH
    theta_cmd, phi_cmd, mem = velocity_loop(u, v, u_cmd, v_cmd, mem, mem.t_coll_prev,
                                            params, gains, dt, integrate_u=not direct)
    if direct:
        theta_cmd, mem = direct_pitch_filter(sp.theta_d, mem, gains, dt)
    else:
        # keep the filter state on the live command so a switch is bumpless
        mem = mem._replace(theta_filtered=theta_cmd)

    d_roll, d_pitch, d_rud = attitude_loop(s.R, theta_cmd, phi_cmd, sp.yaw, gains)
    coll, mem = collective_loop(s.velocity[2], vz_cmd, e.pitch, e.roll, mem, params, gains, dt)
    mem = mem._replace(t_coll_prev=params.k_coll * coll)
    return ActuatorCommand(coll, d_pitch, d_roll, d_rud), mem
