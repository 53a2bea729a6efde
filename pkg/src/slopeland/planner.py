"""Flare switch-point planning by rehearsal.

The flare is open loop with respect to the pad: once the approach passes
``x_switch`` the vehicle pitches up toward the pad attitude and the remaining
forward speed carries it onto the surface. Whether the skids arrive flat and
slowly depends on where the pitch-up starts, and the usable band is only a few
centimetres wide on steep pads. The planner locates that band by flying the
nominal approach and a family of flares on a noiseless longitudinal reduction of
the closed loop (the same control-law functions as the full controller,
restricted to the x-z plane), then centres the switch point in the widest band.

The mocap position noise makes the threshold crossing fire early on average;
that advance is estimated and compensated.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import so3
from .control import (ControllerMemory, GainSet, collective_loop, direct_pitch_filter, sat,
                      velocity_loop)
from .dynamics import VehicleParams, VehicleState, planar_body_accel, vertical_accel
from .errors import LandingError
from .sequencer import SKID_DEPTH, LandingPad, ManeuverConfig, contact_check

log = logging.getLogger(__name__)

COARSE_STEP = 0.01
FINE_STEP = 0.0025
MAX_LEAD = 1.5
STOP_AFTER = 15
FLARE_HORIZON = 1.5
PITCH_MARGIN = math.radians(4.0)
NORMAL_SPEED_LIMIT = 0.4


@dataclass(frozen=True)
class FlarePlan:
    x_switch: float
    lead: float
    contact_time: float
    trigger_advance: float
    band: tuple[float, float]


@dataclass
class _Lon:
    x: float
    z: float
    u: float
    w: float
    th: float
    q: float
    mem: ControllerMemory


def _lon_command(st: _Lon, vx_cmd, z_cmd, theta_d, params, gains, dt):
    """Longitudinal slice of controller_step (roll, lateral and yaw at zero)."""
    vz_cmd = -gains.v_max * sat(gains.lambda_z * (st.z - z_cmd) / gains.v_max)
    mem = st.mem
    direct = theta_d is not None
    theta_cmd, _, mem = velocity_loop(st.u, 0.0, vx_cmd, 0.0, mem, mem.t_coll_prev,
                                      params, gains, dt, integrate_u=not direct)
    if direct:
        theta_cmd, mem = direct_pitch_filter(theta_d, mem, gains, dt)
    else:
        mem = mem._replace(theta_filtered=theta_cmd)
    # log(Ry(theta_cmd)^T Ry(theta)) is (0, theta - theta_cmd, 0)
    d_pitch = sat(gains.k_theta * (st.th - theta_cmd))
    coll, mem = collective_loop(st.w, vz_cmd, st.th, 0.0, mem, params, gains, dt)
    mem = mem._replace(t_coll_prev=params.k_coll * coll)
    return coll, d_pitch, mem


def _lon_step(st: _Lon, coll, d_pitch, params: VehicleParams, dt) -> _Lon:
    T = params.k_coll * coll
    rate_cmd = params.k_act * d_pitch
    tau = params.tau_att

    def f(x, z, u, w, th, q):
        du, _ = planar_body_accel(u, 0.0, T, th, 0.0, params)
        return u, w, du, vertical_accel(w, T, th, 0.0, params), q, (rate_cmd - q) / tau

    s0 = (st.x, st.z, st.u, st.w, st.th, st.q)
    k1 = f(*s0)
    k2 = f(*(a + 0.5 * dt * b for a, b in zip(s0, k1)))
    k3 = f(*(a + 0.5 * dt * b for a, b in zip(s0, k2)))
    k4 = f(*(a + dt * b for a, b in zip(s0, k3)))
    s1 = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(s0, k1, k2, k3, k4)]
    return _Lon(*s1, st.mem)


def _as_state(st: _Lon) -> VehicleState:
    return VehicleState(np.array([st.x, 0.0, st.z]), np.array([st.u, 0.0, st.w]),
                        so3.rot_y(st.th), np.array([0.0, st.q, 0.0]))


def _approach_track(pad, cfg, params, gains, dt, x_stop):
    """States at every control step of the nominal hover + approach, up to x_stop."""
    x0, _, z0 = cfg.hover_start
    st = _Lon(float(x0), float(z0), 0.0, 0.0, 0.0, 0.0, ControllerMemory.initial(params))
    touch = pad.touch_position()
    track = []
    t = 0.0
    k = 0
    approach = False
    while st.x < x_stop:
        if not approach and t >= cfg.start_time:
            approach = True
        if approach:
            vx, zc = cfg.approach_speed, touch[2]
        else:
            vx = -gains.v_max * sat(gains.lambda_p * (st.x - x0) / gains.v_max)
            zc = z0
        coll, dp, mem = _lon_command(st, vx, zc, None, params, gains, dt)
        track.append((t, st, mem, coll, dp, approach))
        st = _lon_step(replace(st, mem=mem), coll, dp, params, dt)
        k += 1
        t = k * dt
        if t > 120.0:
            raise LandingError("nominal approach never reaches the pad")
    return track


def _flare(track, x_switch, pad, cfg, params, gains, dt):
    """Rehearse one flare; returns (contact_time, pitch, normal_speed) or None."""
    xs = [rec[1].x if rec[5] else -math.inf for rec in track]
    idx = bisect.bisect_right(xs, x_switch)
    if idx + 1 >= len(track):
        return None
    _, _, mem, coll, dp, _ = track[idx]
    st = _lon_step(replace(track[idx][1], mem=mem), coll, dp, params, dt)
    touch = pad.touch_position()
    theta_d = pad.pitch if cfg.flare_pitch is None else cfg.flare_pitch
    z_cmd = touch[2] + cfg.flare_descent
    n = pad.normal_in
    nx, nz = float(n[0]), float(n[2])
    cx, cz = float(pad.center[0]), float(pad.center[2])
    near = pad.bond_distance + 0.3
    for k in range(1, int(FLARE_HORIZON / dt) + 1):
        d = -((st.x - cx) * nx + (st.z - cz) * nz)
        if abs(d - SKID_DEPTH) < near:
            s = _as_state(st)
            if contact_check(s, pad):
                return k * dt, st.th, st.u * nx + st.w * nz
        if st.u < -0.2 or d < -0.2:
            return None
        try:
            coll, dp, mem = _lon_command(st, 0.0, z_cmd, theta_d, params, gains, dt)
        except LandingError:
            return None
        st = _lon_step(replace(st, mem=mem), coll, dp, params, dt)
    return None


def _valid(res, beta) -> bool:
    return (res is not None and abs(res[1] - beta) < PITCH_MARGIN
            and abs(res[2]) < NORMAL_SPEED_LIMIT)


def trigger_advance(sigma: float, speed: float, dt: float, gain: float = 1.0,
                    trials: int = 4000) -> float:
    """Mean distance by which a noisy threshold crossing precedes the noiseless one.

    Positions are measured every ``dt`` at constant ``speed`` with Gaussian
    noise ``sigma`` and passed through the velocity-aided switch filter with
    ``gain`` (1 = raw measurement). The noiseless trigger is the first sample
    past the threshold.
    """
    if sigma <= 0.0:
        return 0.0
    h = speed * dt
    settle = int(math.ceil(8.0 / gain)) if gain < 1.0 else 0
    n_before = int(math.ceil(6.0 * sigma / h)) + 1
    rng = np.random.default_rng(12345)
    phase = rng.uniform(0.0, h, size=trials)
    fired = np.full(trials, np.nan)
    est = None
    for j in range(-n_before - settle, n_before + 1):
        past = phase + j * h
        meas = past + rng.normal(0.0, sigma, size=trials)
        est = meas if est is None else switch_filter(est, meas, speed, dt, gain)
        if j >= -n_before:
            hit = np.isnan(fired) & (est > 0.0)
            fired[hit] = past[hit]
    fired[np.isnan(fired)] = phase[np.isnan(fired)]
    return float(np.mean(phase - fired))


def switch_filter(est, meas, speed, dt, gain):
    """Velocity-aided complementary filter on the along-track position."""
    pred = est + speed * dt
    return pred + gain * (meas - pred)


def _longest_run(flags):
    best, start = None, None
    for i, f in enumerate(list(flags) + [False]):
        if f and start is None:
            start = i
        elif not f and start is not None:
            if best is None or i - 1 - start > best[1] - best[0]:
                best = (start, i - 1)
            start = None
    return best


def _refine(ok, edge, direction):
    """Walk outward from a valid coarse lead in fine steps while it stays valid."""
    last = float(edge)
    for i in range(1, int(round(COARSE_STEP / FINE_STEP))):
        trial = float(edge) + direction * i * FINE_STEP
        if trial < 0.0 or not ok(trial):
            break
        last = trial
    return last


def plan_flare(pad: LandingPad, cfg: ManeuverConfig, params: VehicleParams, gains: GainSet,
               dt: float, sigma_pos: float = 0.0) -> FlarePlan:
    """Choose the flare switch point for the configured pad."""
    touch_x = float(pad.touch_position()[0])
    track = _approach_track(pad, cfg, params, gains, dt, touch_x)
    beta = pad.pitch if cfg.flare_pitch is None else cfg.flare_pitch

    def ok(lead):
        return _valid(_flare(track, touch_x - lead, pad, cfg, params, gains, dt), beta)

    leads = np.arange(0.0, MAX_LEAD + 1e-9, COARSE_STEP)
    flags = []
    for L in leads:
        flags.append(ok(L))
        # past the first band by a clear margin: longer leads only stop short
        if any(flags) and not any(flags[-STOP_AFTER:]) and len(flags) > STOP_AFTER:
            break
    run = _longest_run(flags)
    if run is None:
        raise LandingError(f"no flare switch point lands on a {math.degrees(beta):.1f} deg pad")
    # refine both edges of the widest coarse band
    lo_edge = _refine(ok, leads[run[0]], -1)
    hi_edge = _refine(ok, leads[run[1]], +1)
    band = (lo_edge, hi_edge)
    centre = 0.5 * (band[0] + band[1])
    grid = np.arange(band[0], band[1] + 1e-9, FINE_STEP)
    lead, res = centre, None
    # the band may have isolated holes; take the valid lead closest to its centre
    for cand in [centre] + sorted(grid, key=lambda L: abs(L - centre)):
        r = _flare(track, touch_x - cand, pad, cfg, params, gains, dt)
        if _valid(r, beta):
            lead, res = float(cand), r
            break
    if res is None:
        raise LandingError("planned flare lost contact on rehearsal")
    adv = trigger_advance(sigma_pos, cfg.approach_speed, dt, cfg.switch_filter_gain)
    plan = FlarePlan(touch_x - lead + adv, lead, res[0], adv, band)
    log.debug("flare plan %s", plan)
    return plan


def resolve_maneuver(pad: LandingPad, cfg: ManeuverConfig, params: VehicleParams,
                     gains: GainSet, dt: float, sigma_pos: float = 0.0) -> ManeuverConfig:
    """Fill in an automatic ``x_switch`` and ``t_abort``."""
    if cfg.x_switch is not None and cfg.t_abort is not None:
        return cfg
    plan = plan_flare(pad, cfg, params, gains, dt, sigma_pos)
    x_switch = plan.x_switch if cfg.x_switch is None else cfg.x_switch
    t_abort = plan.contact_time + cfg.abort_margin if cfg.t_abort is None else cfg.t_abort
    return replace(cfg, x_switch=x_switch, t_abort=t_abort)
