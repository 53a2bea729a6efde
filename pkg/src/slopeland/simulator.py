"""Closed-loop scenario execution.

Each control step runs sense -> setpoints -> controller -> phase transition ->
plant step (or bond). The controller only sees motion-capture measurements; the
contact and crash checks use the true state. The log keeps every
``decimation``-th step; termination is deferred to the next log instant so the
final sample always carries the terminal phase.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .control import ControllerMemory, GainSet, Setpoint, controller_step
from .dynamics import ActuatorCommand, VehicleParams, VehicleState, step_rk4
from .errors import ConstraintViolation, EmptyLog, LandingError
from .planner import resolve_maneuver, switch_filter
from .sequencer import (Corridor, LandingPad, ManeuverConfig, ManeuverPhase, Phase, apply_bond,
                        contact_check, corridor_violation, hold_yaw, phase_transition, setpoints_for_phase)

log = logging.getLogger(__name__)


class FeedbackMode(enum.Enum):
    DIRECT = "direct"
    DIFFERENCING = "differencing"


@dataclass(frozen=True)
class SensorModel:
    """Motion-capture measurement model.

    Position and attitude are perturbed with white noise. Velocity and body
    rates either carry their own low-pass filtered noise with stationary
    deviation ``sigma_vel`` / ``sigma_rate`` (``direct``), or the filtered
    finite difference of the pose noise (``differencing``).
    """

    sigma_pos: float = 0.01
    sigma_att: float = 0.01
    sigma_vel: float = 0.02
    sigma_rate: float = 0.02
    feedback: FeedbackMode = FeedbackMode.DIRECT
    filter_tau: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        for name in ("sigma_pos", "sigma_att", "sigma_vel", "sigma_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConstraintViolation(f"{name} >= 0", f"{name}={v}")
        if not self.filter_tau > 0:
            raise ConstraintViolation("filter_tau > 0", f"filter_tau={self.filter_tau}")


@dataclass
class SensorState:
    rng: np.random.Generator
    vel_noise: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rate_noise: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_pos_noise: np.ndarray | None = None
    prev_att_noise: np.ndarray | None = None

    @classmethod
    def seeded(cls, seed: int) -> "SensorState":
        return cls(np.random.default_rng(seed))


def sense(s: VehicleState, sm: SensorModel, st: SensorState,
          dt: float = 0.005) -> tuple[VehicleState, SensorState]:
    """Noisy measurement of ``s``. ``st`` is advanced in place and returned."""
    rng = st.rng
    n_pos = rng.normal(0.0, sm.sigma_pos, 3) if sm.sigma_pos > 0 else np.zeros(3)
    n_att = rng.normal(0.0, sm.sigma_att, 3) if sm.sigma_att > 0 else np.zeros(3)
    a = 1.0 - math.exp(-dt / sm.filter_tau)
    if sm.feedback is FeedbackMode.DIRECT:
        # white input scaled so the filtered process has the requested deviation
        gain = math.sqrt((2.0 - a) / a)
        if sm.sigma_vel > 0:
            st.vel_noise = st.vel_noise + a * (gain * rng.normal(0.0, sm.sigma_vel, 3) - st.vel_noise)
        if sm.sigma_rate > 0:
            st.rate_noise = st.rate_noise + a * (gain * rng.normal(0.0, sm.sigma_rate, 3) - st.rate_noise)
    else:
        dp = np.zeros(3) if st.prev_pos_noise is None else (n_pos - st.prev_pos_noise) / dt
        if st.prev_att_noise is None:
            dr = np.zeros(3)
        else:
            dr = so3.rotation_log(so3.rotation_exp(st.prev_att_noise).T @ so3.rotation_exp(n_att)) / dt
        st.vel_noise = st.vel_noise + a * (dp - st.vel_noise)
        st.rate_noise = st.rate_noise + a * (dr - st.rate_noise)
        st.prev_pos_noise, st.prev_att_noise = n_pos, n_att
    R = s.R if sm.sigma_att == 0 else s.R @ so3.rotation_exp(n_att)
    return VehicleState(s.position + n_pos, s.velocity + st.vel_noise, R, s.omega + st.rate_noise), st


@dataclass(frozen=True)
class ScenarioConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    gains: GainSet = field(default_factory=GainSet)
    pad: LandingPad = field(default_factory=LandingPad)
    # true pad = configured pad shifted by this offset; the vehicle never sees it
    pad_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    corridor: Corridor = field(default_factory=Corridor)
    maneuver: ManeuverConfig = field(default_factory=ManeuverConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    dt: float = 0.005
    t_max: float = 20.0
    decimation: float = 0.06

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConstraintViolation("dt > 0", f"dt={self.dt}")
        if self.dt > 0.02:
            raise ConstraintViolation("dt <= 0.02", f"dt={self.dt}")
        if not self.t_max > 0:
            raise ConstraintViolation("t_max > 0", f"t_max={self.t_max}")
        if not self.decimation >= self.dt:
            raise ConstraintViolation("decimation >= dt", f"decimation={self.decimation}")
        self.vehicle.validate()
        self.gains.validate()
        self.sensor.validate()
        p = self.pad
        for name, ok in (("pad.side > 0", p.side > 0), ("bond_distance > 0", p.bond_distance > 0),
                         ("bond_attitude_tol > 0", p.bond_attitude_tol > 0),
                         ("0 <= pad.pitch < 90 deg", 0 <= p.pitch < math.pi / 2)):
            if not ok:
                raise ConstraintViolation(name, "landing pad out of range")
        m = self.maneuver
        if not m.approach_speed > 0:
            raise ConstraintViolation("approach_speed > 0", f"{m.approach_speed}")
        if m.t_abort is not None and not m.t_abort > 0:
            raise ConstraintViolation("t_abort > 0", f"{m.t_abort}")
        if m.x_switch is not None and not (m.hover_start[0] < m.x_switch < p.center[0]):
            raise ConstraintViolation("hover start < x_switch < pad", f"x_switch={m.x_switch}")
        c = self.corridor
        if not (c.depth > 0 and c.width_start > 0 and c.width_end > 0 and c.height > 0):
            raise ConstraintViolation("corridor dimensions > 0", "corridor out of range")

    @property
    def true_pad(self) -> LandingPad:
        return self.pad.displaced(self.pad_offset)


@dataclass(frozen=True)
class LogSample:
    t: float
    state: VehicleState
    sensed: VehicleState
    setpoint: Setpoint | None
    command: ActuatorCommand
    phase: Phase
    corridor_ok: bool


@dataclass(frozen=True)
class PhaseEvent:
    t: float
    source: Phase
    target: Phase


@dataclass
class TrajectoryLog:
    samples: list[LogSample] = field(default_factory=list)
    events: list[PhaseEvent] = field(default_factory=list)
    # true state at the bond instant, before motion is frozen
    contact_state: VehicleState | None = None
    contact_time: float | None = None
    crashed: bool = False
    fault: str | None = None
    max_corridor_violation: float = 0.0
    min_altitude: float = math.inf
    x_switch: float | None = None
    t_abort: float | None = None

    def __len__(self):
        return len(self.samples)


class Outcome(enum.Enum):
    LANDED = "Landed"
    ABORTED_RECOVERED = "Aborted+Recovered"
    CRASHED = "Crashed"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class RunSummary:
    outcome: Outcome
    touchdown_pitch: float | None
    touchdown_normal_speed: float | None
    max_corridor_violation: float
    timeline: tuple[tuple[float, Phase], ...]
    min_altitude: float
    final_time: float

    def to_dict(self) -> dict:
        deg = None if self.touchdown_pitch is None else math.degrees(self.touchdown_pitch)
        return {
            "outcome": self.outcome.value,
            "touchdown_pitch_deg": deg,
            "touchdown_normal_speed": self.touchdown_normal_speed,
            "max_corridor_violation": self.max_corridor_violation,
            "min_altitude": self.min_altitude,
            "final_time": self.final_time,
            "timeline": [{"t": t, "phase": p.value} for t, p in self.timeline],
        }


def summarize(tlog: TrajectoryLog, pad: LandingPad) -> RunSummary:
    """Classify a finished run. ``pad`` is the pad actually touched."""
    if not tlog.samples:
        raise EmptyLog("trajectory log has no samples")
    timeline = [(tlog.samples[0].t, tlog.samples[0].phase)]
    timeline += [(e.t, e.target) for e in tlog.events]
    final = tlog.samples[-1].phase
    pitch = speed = None
    if final is Phase.BONDED:
        outcome = Outcome.LANDED
        s = tlog.contact_state if tlog.contact_state is not None else tlog.samples[-1].state
        pitch = so3.euler_unchecked(s.R).pitch
        speed = float(s.velocity @ pad.normal_in)
    elif final is Phase.RECOVERED:
        outcome = Outcome.ABORTED_RECOVERED
    elif tlog.crashed:
        outcome = Outcome.CRASHED
    else:
        outcome = Outcome.TIMEOUT
    return RunSummary(outcome, pitch, speed, tlog.max_corridor_violation, tuple(timeline),
                      tlog.min_altitude, tlog.samples[-1].t)


def plant_step(s: VehicleState, cmd: ActuatorCommand, dt: float, params: VehicleParams,
               phase: Phase, disturbance=None) -> VehicleState:
    """Advance the plant one step; a bonded vehicle does not move whatever the command."""
    if phase is Phase.BONDED:
        return s
    return step_rk4(s, cmd, dt, params, disturbance)


def _initial_state(m: ManeuverConfig, pad: LandingPad) -> VehicleState:
    return VehicleState(np.array(m.hover_start, dtype=float), np.zeros(3),
                        so3.rot_z(hold_yaw(pad, m)), np.zeros(3))


def run_scenario(cfg: ScenarioConfig) -> tuple[TrajectoryLog, RunSummary]:
    """Fly one scenario to termination. Raises ConfigInvalid for a bad config."""
    cfg.validate()
    dt = cfg.dt
    params, gains = cfg.vehicle, cfg.gains
    pad, true_pad = cfg.pad, cfg.true_pad
    mcfg = resolve_maneuver(pad, cfg.maneuver, params, gains, dt, cfg.sensor.sigma_pos)
    log.info("x_switch=%.4f m, t_abort=%.3f s", mcfg.x_switch, mcfg.t_abort)

    every = max(1, int(round(cfg.decimation / dt)))
    n_max = int(math.floor(cfg.t_max / dt + 1e-9))
    tlog = TrajectoryLog(x_switch=mcfg.x_switch, t_abort=mcfg.t_abort)
    s = _initial_state(mcfg, pad)
    mem = ControllerMemory.initial(params)
    sst = SensorState.seeded(cfg.sensor.seed)
    ph = ManeuverPhase(Phase.HOVER, 0.0)
    stop_at = None
    cmd = ActuatorCommand()
    x_est, prev_vx = None, 0.0

    for k in range(n_max + 1):
        t = k * dt
        sensed, sst = sense(s, cfg.sensor, sst, dt)
        if x_est is None:
            x_est = float(sensed.position[0])
        else:
            x_est = switch_filter(x_est, float(sensed.position[0]), prev_vx, dt,
                                  mcfg.switch_filter_gain)
        prev_vx = float(sensed.velocity[0])
        sp = None
        if ph.phase is not Phase.BONDED and not tlog.crashed:
            sp, mode = setpoints_for_phase(ph, pad, mcfg, t)
            try:
                cmd, mem = controller_step(sensed, sp, mode, mem, params, gains, dt)
            except LandingError as exc:
                # loss of control authority: nothing sensible left to command
                log.warning("controller fault at t=%.3f: %s", t, exc)
                tlog.fault = f"{type(exc).__name__}: {exc}"
                tlog.crashed = True
                stop_at = stop_at if stop_at is not None else k
        viol = corridor_violation(s, cfg.corridor)
        tlog.max_corridor_violation = max(tlog.max_corridor_violation, viol)
        tlog.min_altitude = min(tlog.min_altitude, s.altitude)
        if k % every == 0:
            tlog.samples.append(LogSample(t, s, sensed, sp, cmd, ph.phase, viol == 0.0))
        if stop_at is not None and k % every == 0:
            break
        if k == n_max:
            break

        if ph.phase not in (Phase.BONDED,) and not tlog.crashed:
            contact = ph.phase is Phase.FLARE and contact_check(s, true_pad)
            decide = sensed
            if ph.phase is Phase.APPROACH:
                pos = sensed.position.copy()
                pos[0] = x_est
                decide = replace(sensed, position=pos)
            new = phase_transition(ph, decide, true_pad, mcfg, t, contact=contact)
            if new.phase is not ph.phase:
                tlog.events.append(PhaseEvent(t, ph.phase, new.phase))
                log.info("t=%.3f %s -> %s", t, ph.phase.value, new.phase.value)
                ph = new
                if ph.phase is Phase.BONDED:
                    tlog.contact_state, tlog.contact_time = s, t
                    s = apply_bond(s, true_pad)
                if ph.phase in (Phase.BONDED, Phase.RECOVERED):
                    stop_at = k
        if tlog.crashed:
            continue
        nxt = plant_step(s, cmd, dt, params, ph.phase)
        if not nxt.is_finite():
            tlog.fault = "non-finite state"
            tlog.crashed = True
            stop_at = k
            continue
        s = nxt
        if ph.phase is not Phase.BONDED and s.altitude <= 0.0:
            tlog.crashed = True
            stop_at = k
    return tlog, summarize(tlog, true_pad)
