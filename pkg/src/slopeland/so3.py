"""Rotation-group numerics.

Rotation matrices map body-frame vectors to the inertial (north-east-down)
frame. Euler angles use the aerospace Z-Y-X sequence, R = Rz(yaw) Ry(pitch) Rx(roll).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import GimbalLock, NearPiRotation

SMALL_ANGLE = 1e-5
PI_MARGIN = 1e-6
GIMBAL_MARGIN = 1e-6


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(e) -> np.ndarray:
    """Body-to-inertial rotation for Z-Y-X Euler angles (roll, pitch, yaw)."""
    roll, pitch, yaw = e
    cf, sf = math.cos(roll), math.sin(roll)
    ct, st = math.cos(pitch), math.sin(pitch)
    cp, sp = math.cos(yaw), math.sin(yaw)
    return np.array([
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct],
    ])


def rotation_to_euler(R: np.ndarray) -> EulerAngles:
    """Inverse of :func:`euler_to_rotation` away from pitch = +/-90 deg.

    Raises GimbalLock when |R[2, 0]| >= 1 - 1e-6.
    """
    r31 = R[2, 0]
    if abs(r31) >= 1.0 - GIMBAL_MARGIN:
        raise GimbalLock(f"pitch at singularity (R31={r31:.9f})")
    return EulerAngles(
        math.atan2(R[2, 1], R[2, 2]),
        -math.asin(r31),
        math.atan2(R[1, 0], R[0, 0]),
    )


def euler_unchecked(R: np.ndarray) -> EulerAngles:
    """Euler extraction with pitch clipped instead of raising; used by the plant."""
    r31 = min(1.0, max(-1.0, R[2, 0]))
    return EulerAngles(
        math.atan2(R[2, 1], R[2, 2]),
        -math.asin(r31),
        math.atan2(R[1, 0], R[0, 0]),
    )


def rotation_exp(v) -> np.ndarray:
    """Rodrigues formula: rotation by |v| about v/|v|."""
    v = np.asarray(v, dtype=float)
    theta2 = float(v @ v)
    theta = math.sqrt(theta2)
    K = skew(v)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_angle(R: np.ndarray) -> float:
    s = 0.5 * float(np.linalg.norm(vee(R - R.T)))
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.atan2(s, c)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of R, the inverse of :func:`rotation_exp`.

    Raises NearPiRotation when the rotation angle is within 1e-6 of pi,
    where the axis is ill-conditioned.
    """
    w = vee(R - R.T)
    s = 0.5 * float(np.linalg.norm(w))
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if theta >= math.pi - PI_MARGIN:
        raise NearPiRotation(f"rotation angle {theta:.9f} too close to pi")
    if theta < SMALL_ANGLE:
        return 0.5 * (1.0 + theta * theta / 6.0) * w
    return (theta / (2.0 * s)) * w


def attitude_error(R_cmd: np.ndarray, R: np.ndarray) -> np.ndarray:
    """log(R_cmd^T R): body-frame rotation taking the commanded attitude to the actual one."""
    return rotation_log(R_cmd.T @ R)


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def inertial_to_body_planar(vx: float, vy: float, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return c * vx + s * vy, -s * vx + c * vy


def body_to_inertial_planar(u: float, v: float, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return c * u - s * v, s * u + c * v


def orthonormality_error(R: np.ndarray) -> float:
    return float(np.max(np.abs(R.T @ R - np.eye(3))))
