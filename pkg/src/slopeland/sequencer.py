"""Landing maneuver automaton.

Phases run Hover -> Approach -> Flare -> (Bonded | Abort), Abort -> Recovered.
The approach flies a constant forward speed toward the configured pad pose; the
flare is triggered when the along-track position passes ``x_switch`` and
commands the pad pitch through the direct-pitch path. The abort is scheduled
unconditionally a fixed delay after flare entry; a bonded vehicle ignores it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .control import ControlMode, ForwardSource, PitchSource, Setpoint
from .dynamics import VehicleState
from .errors import NotInContact, TerminalPhase

# body-frame skid reference points: front/rear of the left/right skids
DEFAULT_SKIDS = np.array([
    [0.10, 0.15, 0.12],
    [0.10, -0.15, 0.12],
    [-0.10, 0.15, 0.12],
    [-0.10, -0.15, 0.12],
])
SKID_DEPTH = 0.12


class Phase(enum.Enum):
    HOVER = "hover"
    APPROACH = "approach"
    FLARE = "flare"
    BONDED = "bonded"
    ABORT = "abort"
    RECOVERED = "recovered"


ALLOWED = {
    Phase.HOVER: {Phase.APPROACH},
    Phase.APPROACH: {Phase.FLARE},
    Phase.FLARE: {Phase.BONDED, Phase.ABORT},
    Phase.ABORT: {Phase.RECOVERED},
    Phase.BONDED: set(),
    Phase.RECOVERED: set(),
}


@dataclass(frozen=True)
class ManeuverPhase:
    phase: Phase = Phase.HOVER
    entered_at: float = 0.0

    def to(self, phase: Phase, t: float) -> "ManeuverPhase":
        if phase not in ALLOWED[self.phase]:
            raise ValueError(f"illegal transition {self.phase.value} -> {phase.value}")
        return ManeuverPhase(phase, t)


@dataclass(frozen=True)
class LandingPad:
    """Square bonding surface pitched by ``pitch`` about the inertial y axis.

    ``center`` is inertial NED (z down). ``orientation`` overrides the
    heading/pitch construction when a general pose is needed.
    """

    center: np.ndarray = field(default_factory=lambda: np.array([4.0, 0.0, -1.0]))
    pitch: float = math.radians(10.0)
    heading: float = 0.0
    side: float = 1.2
    bond_distance: float = 0.02
    bond_attitude_tol: float = math.radians(15.0)
    orientation: np.ndarray | None = None

    @property
    def rotation(self) -> np.ndarray:
        if self.orientation is not None:
            return self.orientation
        return so3.rot_z(self.heading) @ so3.rot_y(self.pitch)

    @property
    def normal_in(self) -> np.ndarray:
        """Unit normal pointing from the approach side into the pad."""
        return self.rotation[:, 2]

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance of points to the pad plane, positive on the approach side."""
        return -(np.asarray(points) - self.center) @ self.normal_in

    def touch_position(self) -> np.ndarray:
        """Vehicle reference-point position when resting on the pad center."""
        return self.center - SKID_DEPTH * self.normal_in

    def displaced(self, offset) -> "LandingPad":
        return replace(self, center=self.center + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class Corridor:
    """Trapezoidal-prism flight volume, widening linearly along track."""

    x_start: float = -0.5
    depth: float = 6.0
    width_start: float = 1.0
    width_end: float = 3.2
    height: float = 3.0
    y_center: float = 0.0

    def half_width(self, x: float) -> float:
        f = min(1.0, max(0.0, (x - self.x_start) / self.depth))
        return 0.5 * (self.width_start + f * (self.width_end - self.width_start))


@dataclass(frozen=True)
class ManeuverConfig:
    hover_start: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    start_time: float = 1.0
    approach_speed: float = 0.7
    # None: placed by rehearsing the nominal flare (planner.resolve_maneuver)
    x_switch: float | None = None
    flare_pitch: float | None = None
    # weight of each new position fix in the along-track estimate used for
    # the switch decision (1 = raw measurement)
    switch_filter_gain: float = 0.1
    flare_descent: float = 0.3
    t_abort: float | None = None
    abort_margin: float = 0.2
    abort_waypoint: np.ndarray | None = None
    abort_climb: float = 1.0
    abort_level_time: float = 0.3
    recover_radius: float = 0.2
    recover_speed: float = 0.2
    # "pad": hold the pad heading; "approach": hold the start-to-pad bearing
    yaw_hold: str = "pad"

    def waypoint(self, pad: LandingPad) -> np.ndarray:
        if self.abort_waypoint is not None:
            return np.asarray(self.abort_waypoint, dtype=float)
        return self.hover_start.copy()

    def abort_altitude_z(self, pad: LandingPad) -> float:
        return min(self.waypoint(pad)[2], pad.touch_position()[2] - self.abort_climb)


def hold_yaw(pad: LandingPad, cfg: ManeuverConfig) -> float:
    if cfg.yaw_hold == "pad":
        return pad.heading
    if cfg.yaw_hold == "approach":
        d = pad.center - cfg.hover_start
        return math.atan2(d[1], d[0])
    raise ValueError(f"unknown yaw hold {cfg.yaw_hold!r}")


def skid_points(s: VehicleState, skids: np.ndarray = DEFAULT_SKIDS) -> np.ndarray:
    return s.position + skids @ s.R.T


def contact_check(s: VehicleState, pad: LandingPad, skids: np.ndarray = DEFAULT_SKIDS) -> bool:
    """True when every skid point sits on the pad within the bonding tolerances."""
    pts = skid_points(s, skids)
    d = pad.signed_distance(pts)
    if np.any(np.abs(d) > pad.bond_distance):
        return False
    Rp = pad.rotation
    rel = pts - pad.center
    half = 0.5 * pad.side
    if np.any(np.abs(rel @ Rp[:, 0]) > half) or np.any(np.abs(rel @ Rp[:, 1]) > half):
        return False
    return so3.rotation_angle(Rp.T @ s.R) < pad.bond_attitude_tol


def apply_bond(s: VehicleState, pad: LandingPad, skids: np.ndarray = DEFAULT_SKIDS) -> VehicleState:
    """Freeze the vehicle to the pad: pose kept, all motion removed."""
    if not contact_check(s, pad, skids):
        raise NotInContact("skids are not bonded to the pad")
    return VehicleState(s.position.copy(), np.zeros(3), s.R.copy(), np.zeros(3))


def corridor_violation(s: VehicleState, c: Corridor) -> float:
    """Distance (m) by which the position lies outside the corridor, 0 inside."""
    x, y, z = s.position
    h = -z
    dx = max(c.x_start - x, x - (c.x_start + c.depth), 0.0)
    dy = max(abs(y - c.y_center) - c.half_width(x), 0.0)
    dh = max(-h, h - c.height, 0.0)
    return math.sqrt(dx * dx + dy * dy + dh * dh)


def corridor_check(s: VehicleState, c: Corridor) -> bool:
    return corridor_violation(s, c) == 0.0


def phase_transition(ph: ManeuverPhase, s: VehicleState, pad: LandingPad, cfg: ManeuverConfig,
                     t: float, contact: bool | None = None) -> ManeuverPhase:
    """Total transition function of the landing automaton.

    ``cfg`` must have ``x_switch`` and ``t_abort`` resolved (see
    :func:`resolve_maneuver`). ``contact`` may be supplied by a caller that
    evaluates it on a different state (true versus sensed).
    """
    p = ph.phase
    if p is Phase.HOVER:
        if t >= cfg.start_time:
            return ph.to(Phase.APPROACH, t)
    elif p is Phase.APPROACH:
        if s.position[0] > cfg.x_switch:
            return ph.to(Phase.FLARE, t)
    elif p is Phase.FLARE:
        if contact is None:
            contact = contact_check(s, pad)
        if contact:
            return ph.to(Phase.BONDED, t)
        if t - ph.entered_at >= cfg.t_abort - 1e-9:
            return ph.to(Phase.ABORT, t)
    elif p is Phase.ABORT:
        wp = cfg.waypoint(pad)
        if (np.linalg.norm(s.position - wp) < cfg.recover_radius
                and np.linalg.norm(s.velocity) < cfg.recover_speed):
            return ph.to(Phase.RECOVERED, t)
    return ph


def setpoints_for_phase(ph: ManeuverPhase, pad: LandingPad, cfg: ManeuverConfig,
                        t: float | None = None) -> tuple[Setpoint, ControlMode]:
    """Setpoint and loop configuration for a phase, targeting the configured pad pose.

    ``t`` selects the abort sub-stage (level-off, then return); without it the
    return stage is used.
    """
    p = ph.phase
    touch = pad.touch_position()
    yaw = hold_yaw(pad, cfg)
    if p is Phase.HOVER:
        x, y, z = cfg.hover_start
        return Setpoint(x, y, z, yaw), ControlMode()
    if p is Phase.APPROACH:
        return (Setpoint(touch[0], touch[1], touch[2], yaw, vx=cfg.approach_speed),
                ControlMode(ForwardSource.DIRECT_VELOCITY, PitchSource.VELOCITY_LOOP))
    if p is Phase.FLARE:
        theta = pad.pitch if cfg.flare_pitch is None else cfg.flare_pitch
        return (Setpoint(touch[0], touch[1], touch[2] + cfg.flare_descent, yaw,
                         vx=0.0, theta_d=theta),
                ControlMode(ForwardSource.DIRECT_VELOCITY, PitchSource.DIRECT_PITCH))
    if p is Phase.ABORT:
        wp = cfg.waypoint(pad)
        z_abort = cfg.abort_altitude_z(pad)
        if t is not None and t - ph.entered_at < cfg.abort_level_time:
            return (Setpoint(wp[0], touch[1], z_abort, yaw, vx=0.0, theta_d=0.0),
                    ControlMode(ForwardSource.DIRECT_VELOCITY, PitchSource.DIRECT_PITCH))
        return Setpoint(wp[0], wp[1], wp[2], yaw), ControlMode()
    if p is Phase.RECOVERED:
        wp = cfg.waypoint(pad)
        return Setpoint(wp[0], wp[1], wp[2], yaw), ControlMode()
    raise TerminalPhase(f"no setpoints in terminal phase {p.value}")
