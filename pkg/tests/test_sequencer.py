import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from slopeland import so3
from slopeland.control import ForwardSource, PitchSource
from slopeland.dynamics import ActuatorCommand, VehicleParams, VehicleState, hover_state
from slopeland.errors import NotInContact, TerminalPhase
from slopeland.sequencer import (ALLOWED, DEFAULT_SKIDS, Corridor, LandingPad, ManeuverConfig,
                                 ManeuverPhase, Phase, apply_bond, contact_check, corridor_check,
                                 corridor_violation, phase_transition, setpoints_for_phase)
from slopeland.simulator import plant_step

CFG = ManeuverConfig(x_switch=2.0, t_abort=1.5)


def resting(pad, lift=0.0, extra_pitch=0.0):
    """Vehicle pose with the skid plane parallel to the pad, ``lift`` m off it."""
    R = pad.rotation @ so3.rot_y(extra_pitch)
    pos = pad.touch_position() - lift * pad.normal_in
    return VehicleState(pos, np.zeros(3), R, np.zeros(3))


def test_transition_table_is_the_documented_graph():
    assert ALLOWED[Phase.BONDED] == set()
    ManeuverPhase().to(Phase.APPROACH, 1.0)
    with pytest.raises(ValueError):
        ManeuverPhase(Phase.APPROACH).to(Phase.BONDED, 1.0)
    with pytest.raises(ValueError):
        ManeuverPhase(Phase.BONDED).to(Phase.ABORT, 1.0)


def test_hover_to_approach_on_start_time():
    ph = ManeuverPhase()
    assert phase_transition(ph, hover_state(), LandingPad(), CFG, 0.5).phase is Phase.HOVER
    assert phase_transition(ph, hover_state(), LandingPad(), CFG, 1.0).phase is Phase.APPROACH


def test_approach_switch_is_a_strict_crossing():
    ph = ManeuverPhase(Phase.APPROACH, 1.0)
    pad = LandingPad()
    below = hover_state().with_(position=np.array([1.999, 0, -1]))
    at = hover_state().with_(position=np.array([2.0, 0, -1]))
    past = hover_state().with_(position=np.array([2.003, 0, -1]))
    assert phase_transition(ph, below, pad, CFG, 3.0).phase is Phase.APPROACH
    assert phase_transition(ph, at, pad, CFG, 3.0).phase is Phase.APPROACH
    nxt = phase_transition(ph, past, pad, CFG, 3.0)
    assert nxt == ManeuverPhase(Phase.FLARE, 3.0)


def test_flare_latch_survives_moving_back():
    ph = ManeuverPhase(Phase.FLARE, 3.0)
    back = hover_state().with_(position=np.array([0.0, 0, -1]))
    assert phase_transition(ph, back, LandingPad(), CFG, 3.1).phase is Phase.FLARE


def test_flare_abort_after_delay_without_contact():
    ph = ManeuverPhase(Phase.FLARE, 3.0)
    s = hover_state()
    assert phase_transition(ph, s, LandingPad(), CFG, 4.49).phase is Phase.FLARE
    assert phase_transition(ph, s, LandingPad(), CFG, 4.51).phase is Phase.ABORT


def test_flare_contact_wins_over_abort():
    pad = LandingPad(pitch=math.radians(40))
    ph = ManeuverPhase(Phase.FLARE, 3.0)
    assert phase_transition(ph, resting(pad), pad, CFG, 10.0).phase is Phase.BONDED
    assert phase_transition(ph, hover_state(), pad, CFG, 3.2, contact=True).phase is Phase.BONDED


def test_abort_recovers_near_waypoint():
    ph = ManeuverPhase(Phase.ABORT, 5.0)
    pad = LandingPad()
    near = hover_state(0.1, 0.05, 1.0)
    far = hover_state(0.5, 0.0, 1.0)
    assert phase_transition(ph, near, pad, CFG, 8.0).phase is Phase.RECOVERED
    assert phase_transition(ph, far, pad, CFG, 8.0).phase is Phase.ABORT
    fast = near.with_(velocity=np.array([0.5, 0, 0]))
    assert phase_transition(ph, fast, pad, CFG, 8.0).phase is Phase.ABORT


def test_terminal_phases_do_not_move():
    for p in (Phase.BONDED, Phase.RECOVERED):
        ph = ManeuverPhase(p, 1.0)
        assert phase_transition(ph, hover_state(), LandingPad(), CFG, 100.0) is ph


def test_contact_examples():
    pad = LandingPad()
    assert contact_check(resting(pad), pad)
    assert not contact_check(resting(pad, lift=1.0), pad)


def test_contact_60deg_pad_oracle():
    pad = LandingPad(pitch=math.radians(60))
    s = resting(pad, lift=0.01, extra_pitch=math.radians(-2))
    # independent point-plane distances
    pts = s.position + (s.R @ DEFAULT_SKIDS.T).T
    n = Rotation.from_euler("y", 60, degrees=True).as_matrix()[:, 2]
    dist = np.abs((pts - pad.center) @ n)
    assert dist.max() <= pad.bond_distance
    assert contact_check(s, pad)


def test_contact_rejects_large_attitude_mismatch():
    pad = LandingPad(pitch=math.radians(60))
    assert not contact_check(resting(pad, extra_pitch=math.radians(-20)), pad)


def test_contact_rejects_off_pad():
    pad = LandingPad(pitch=math.radians(25))
    s = resting(pad)
    s = s.with_(position=s.position + 0.8 * pad.rotation[:, 1])
    assert not contact_check(s, pad)


@settings(max_examples=100)
@given(st.floats(0, math.radians(70)), st.floats(-0.03, 0.03), st.floats(-0.2, 0.2),
       st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)), st.floats(-3, 3))
def test_contact_invariant_under_rigid_motion(beta, lift, tilt, axis, angle):
    pad = LandingPad(pitch=beta)
    s = resting(pad, lift=lift, extra_pitch=tilt)
    a = np.array(axis)
    if np.linalg.norm(a) < 1e-3:
        return
    Q = so3.rotation_exp(a / np.linalg.norm(a) * angle)
    t = np.array([1.0, -2.0, 0.5])
    pad2 = LandingPad(center=Q @ pad.center + t, orientation=Q @ pad.rotation)
    s2 = VehicleState(Q @ s.position + t, s.velocity, Q @ s.R, s.omega)
    # stay away from the tolerance boundaries where rounding could flip the answer
    d = pad.signed_distance(s.position + DEFAULT_SKIDS @ s.R.T)
    if np.any(np.abs(np.abs(d) - pad.bond_distance) < 1e-9):
        return
    assert contact_check(s, pad) == contact_check(s2, pad2)


def test_bond_zeroes_motion_and_keeps_pose():
    pad = LandingPad(pitch=math.radians(40))
    s = resting(pad).with_(velocity=np.array([0.2, 0, 0.1]), omega=np.array([0.1, 0.2, 0.3]))
    b = apply_bond(s, pad)
    assert np.array_equal(b.velocity, np.zeros(3)) and np.array_equal(b.omega, np.zeros(3))
    assert np.array_equal(b.position, s.position) and np.array_equal(b.R, s.R)
    with pytest.raises(NotInContact):
        apply_bond(hover_state(), pad)


def test_bonded_state_ignores_full_abort_command():
    pad = LandingPad(pitch=math.radians(60))
    b = apply_bond(resting(pad), pad)
    s = b
    for _ in range(100):
        s = plant_step(s, ActuatorCommand(1.0, -1.0, 1.0, 1.0), 0.01, VehicleParams(), Phase.BONDED)
    assert np.array_equal(s.to_vector(), b.to_vector())


def test_corridor_examples():
    c = Corridor()
    assert corridor_check(hover_state(0, 0, 1), c)
    assert not corridor_check(hover_state(0, 2, 1), c)
    assert not corridor_check(hover_state(1, 0, 5), c)
    assert corridor_violation(hover_state(1, 0, 5), c) == pytest.approx(2.0)


def test_corridor_widens_along_track():
    c = Corridor()
    assert c.half_width(c.x_start) == 0.5
    assert c.half_width(c.x_start + c.depth) == pytest.approx(1.6)
    assert corridor_check(hover_state(4.0, 1.0, 1), c)


def test_setpoints_approach():
    sp, mode = setpoints_for_phase(ManeuverPhase(Phase.APPROACH), LandingPad(), CFG)
    assert mode.forward is ForwardSource.DIRECT_VELOCITY and mode.pitch is PitchSource.VELOCITY_LOOP
    assert sp.vx == CFG.approach_speed


def test_setpoints_flare_60():
    pad = LandingPad(pitch=math.radians(60))
    sp, mode = setpoints_for_phase(ManeuverPhase(Phase.FLARE), pad, CFG)
    assert mode.pitch is PitchSource.DIRECT_PITCH
    assert sp.theta_d == pytest.approx(math.radians(60))
    # aims below the touch point: descending onto the pad plane
    assert sp.z > pad.touch_position()[2]


def test_setpoints_abort_stages():
    pad = LandingPad()
    ph = ManeuverPhase(Phase.ABORT, 5.0)
    sp, mode = setpoints_for_phase(ph, pad, CFG, t=5.1)
    assert mode.pitch is PitchSource.DIRECT_PITCH and sp.theta_d == 0.0
    assert sp.z <= pad.touch_position()[2] - CFG.abort_climb
    sp, mode = setpoints_for_phase(ph, pad, CFG, t=6.0)
    assert mode.forward is ForwardSource.POSITION and mode.pitch is PitchSource.VELOCITY_LOOP
    assert (sp.x, sp.y, sp.z) == tuple(CFG.hover_start)


def test_setpoints_custom_waypoint():
    cfg = replace(CFG, abort_waypoint=np.array([2.0, 1.0, -1.0]))
    sp, _ = setpoints_for_phase(ManeuverPhase(Phase.RECOVERED), LandingPad(), cfg)
    assert (sp.x, sp.y, sp.z) == (2.0, 1.0, -1.0)


def test_setpoints_bonded_is_terminal():
    with pytest.raises(TerminalPhase):
        setpoints_for_phase(ManeuverPhase(Phase.BONDED), LandingPad(), CFG)


def test_pad_geometry():
    pad = LandingPad(pitch=math.radians(30))
    assert np.allclose(pad.normal_in, [math.sin(math.radians(30)), 0, math.cos(math.radians(30))])
    assert pad.signed_distance(pad.center - 0.5 * pad.normal_in) == pytest.approx(0.5)
    assert np.allclose(pad.displaced([0, 0.5, 0]).center, [4, 0.5, -1])
