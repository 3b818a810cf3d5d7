import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import unwrapped_winding
from wiretie.geometry import Pose, quat_from_axis_angle, quat_from_yaw
from wiretie.planner import (DEFAULT_WAYPOINTS, DONE, FollowState, TyingTrajectory, advance,
                             min_axis_clearance, mirror_waypoints, plan_tying, winding_angle_xz)
from wiretie.simulator import ANCHOR_RADIUS

# approach point in front of and below the bar, where a launched anchor hovers
APPROACH = np.array([1.5, 0.0, -1.25])


def test_default_shape_constants():
    assert DEFAULT_WAYPOINTS.shape == (6, 3)
    assert np.allclose(DEFAULT_WAYPOINTS[0], [0.8, 0.35, 0.3])
    assert np.allclose(DEFAULT_WAYPOINTS[5], [0.8, -0.25, -0.5])


def test_mirror_negates_y_and_is_involution():
    base = plan_tying(Pose())
    mir = plan_tying(Pose(), mirrored=True)
    assert np.array_equal(mir.waypoints[:, 1], -base.waypoints[:, 1])
    assert np.array_equal(mir.waypoints[:, [0, 2]], base.waypoints[:, [0, 2]])
    assert np.array_equal(mirror_waypoints(mirror_waypoints(DEFAULT_WAYPOINTS)), DEFAULT_WAYPOINTS)
    assert mir.mirrored and not base.mirrored


def test_identity_target_world_equals_frame():
    t = plan_tying(Pose())
    assert np.array_equal(t.world_waypoints(), t.waypoints)


def test_world_waypoints_follow_target_pose():
    target = Pose([1, 2, 3], quat_from_yaw(0.7))
    t = plan_tying(target, target_id=4)
    assert t.target_id == 4
    assert np.allclose(t.world_waypoints(), target.transform(DEFAULT_WAYPOINTS))
    assert np.allclose(t.world_waypoint(2), target.transform(DEFAULT_WAYPOINTS[2]))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        TyingTrajectory(np.zeros((5, 3)))
    wp = DEFAULT_WAYPOINTS.copy()
    wp[3] = wp[2]
    with pytest.raises(ValueError):
        TyingTrajectory(wp)


def test_winding_of_default_polyline_oracle():
    # the six waypoints alone sweep 5.366 rad about the bar; the full turn closes only
    # once the path is entered from the launch side below the bar (see test below)
    xz = DEFAULT_WAYPOINTS[:, [0, 2]]
    expected = unwrapped_winding(xz)
    assert winding_angle_xz(DEFAULT_WAYPOINTS) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(5.365815321565452, abs=1e-9)


@pytest.mark.parametrize("mirrored", [False, True])
def test_winding_from_approach_exceeds_full_turn(mirrored):
    path = np.vstack((APPROACH, plan_tying(Pose(), mirrored).waypoints))
    w = winding_angle_xz(path)
    assert w == pytest.approx(unwrapped_winding(path[:, [0, 2]]), abs=1e-12)
    assert w > 2 * math.pi


@pytest.mark.parametrize("mirrored", [False, True])
def test_default_shape_clearance(mirrored):
    wp = plan_tying(Pose(), mirrored).waypoints
    for bar_radius in (0.02, 0.03, 0.05, 0.1):
        assert min_axis_clearance(wp) >= bar_radius + ANCHOR_RADIUS
    assert np.min(np.hypot(wp[:, 0], wp[:, 2])) >= 0.15 + ANCHOR_RADIUS


def test_advance_examples():
    target = Pose([0, 0, 2], quat_from_axis_angle([0, 0, 1], 0.3))
    t = plan_tying(target)
    f = FollowState()
    f = advance(f, t, t.world_waypoint(0))
    assert f.active_index == 1
    same = advance(f, t, t.world_waypoint(1) + [1.0, 0, 0])
    assert same.active_index == 1
    f = FollowState()
    for j in range(6):
        f = advance(f, t, t.world_waypoint(j))
    assert f.done and f.active_index == DONE
    with pytest.raises(ValueError):
        advance(f, t, t.world_waypoint(0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.floats(0.01, 0.3))
def test_advance_never_skips_or_regresses(visits, tol):
    t = plan_tying(Pose([0.5, 0, 2.0]))
    f = FollowState(reach_tolerance=tol)
    for j in visits:
        if f.done:
            break
        nxt = advance(f, t, t.world_waypoint(j))
        assert nxt.active_index in (f.active_index, f.active_index + 1)
        if nxt.active_index == f.active_index + 1:
            assert j == f.active_index
        f = nxt
