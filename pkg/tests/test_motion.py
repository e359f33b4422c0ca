import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrasp.geometry.collision import Box, aabb
from regrasp.kinematics import RobotModel, default_robot_dict, fk, ik
from regrasp.motion import (Failure, MotionConfig, PlanningScene, Trajectory, densify,
                            interpolate, path_length, plan_motion, segment_valid, smooth,
                            validate_trajectory)

WALL = aabb([0.25, -0.45, 0.0], [0.30, -0.05, 0.30])
QA = np.array([1.56, -2.597, 1.107, -0.649, -1.871, 2.751])
QB = np.array([-2.546, -3.111, 0.84, 3.083, -1.478, 2.078])


@pytest.fixture(scope="module")
def robot():
    return RobotModel.from_dict(default_robot_dict())


@pytest.fixture(scope="module")
def walled(robot):
    return PlanningScene(robot, "right", obstacles=(WALL,))


def test_blocked_query_is_solved(walled):
    assert walled.valid(np.stack([QA, QB])).all()
    assert not segment_valid(walled, QA, QB, 0.05)
    tr = plan_motion(walled, QA, QB)
    assert np.allclose(tr.waypoints[0], QA) and np.allclose(tr.waypoints[-1], QB)
    assert validate_trajectory(walled, tr, 0.05)
    assert np.abs(np.diff(tr.waypoints, axis=0)).max() <= 0.05 + 1e-12


def test_deterministic(walled):
    a = plan_motion(walled, QA, QB, MotionConfig(seed=3))
    b = plan_motion(walled, QA, QB, MotionConfig(seed=3))
    assert np.array_equal(a.waypoints, b.waypoints)


def test_plain_rrt_mode(walled):
    tr = plan_motion(walled, QA, QB, MotionConfig(transition=False))
    assert validate_trajectory(walled, tr)


def test_budget_exhausted(walled):
    with pytest.raises(Failure) as e:
        plan_motion(walled, QA, QB, MotionConfig(budget_ticks=0))
    assert e.value.reason == "budget exhausted"


def test_same_endpoints(walled):
    tr = plan_motion(walled, QA, QA)
    assert tr.waypoints.shape == (1, 6)


def test_free_space_is_straight(robot):
    sc = PlanningScene(robot, "right")
    arm = robot.arms["right"]
    q = arm.home + np.array([0.3, -0.2, 0.2, 0.1, 0.0, 0.5])
    tr = plan_motion(sc, arm.home, q)
    assert path_length(tr.waypoints) == pytest.approx(np.linalg.norm(q - arm.home))


def test_goal_in_obstacle_fails(robot):
    arm = robot.arms["right"]
    p = fk(arm, arm.home)[:3, 3]
    block = Box(p, np.eye(3), np.full(3, 0.03))
    sc = PlanningScene(robot, "right", obstacles=(block,))
    q = arm.home.copy()
    q[0] += 0.8
    with pytest.raises(Failure, match="goal"):
        plan_motion(sc, q, arm.home)
    with pytest.raises(Failure, match="start"):
        plan_motion(sc, arm.home, q)


def test_route_through_table_is_invalid(robot):
    arm = robot.arms["right"]
    table = aabb([0.15, -0.6, 0.0], [0.8, 0.6, 0.15])
    sc = PlanningScene(robot, "right", obstacles=(table,))
    down = arm.home.copy()
    down[1] += 1.2
    assert fk(arm, down)[2, 3] < 0.15
    assert sc.valid(arm.home)[0]
    assert not validate_trajectory(sc, np.stack([arm.home, down, arm.home]))
    assert not validate_trajectory(sc, np.zeros((0, 6)))


def test_frozen_arm_is_an_obstacle(robot):
    right, left = robot.arms["right"], robot.arms["left"]
    # reach the left hand to where the right hand is at home
    T = fk(right, right.home)
    q_left = ik(left, T)
    if q_left is None:
        pytest.skip("left arm cannot reach the right home frame")
    assert PlanningScene(robot, "right").valid(right.home)[0]
    assert not PlanningScene(robot, "right", other_q=q_left).valid(right.home)[0]
    bad = left.home.copy()
    bad[2] = -1.0
    with pytest.raises(ValueError):
        PlanningScene(robot, "right", other_q=bad)


def test_held_table_allowance(robot):
    arm = robot.arms["right"]
    T = fk(arm, arm.home)
    h = np.full(3, 0.015)
    c = np.array([0.0, 0.0, 0.06])
    p = T[:3, :3] @ c + T[:3, 3]
    low = p[2] - np.abs(T[2, :3]) @ h
    # a small pad under the held box, penetrated by 3 mm
    table = aabb([p[0] - 0.05, p[1] - 0.05, low - 0.05], [p[0] + 0.05, p[1] + 0.05, low + 0.003])
    held = (Box(c, np.eye(3), h),)
    strict = PlanningScene(robot, "right", table=(table,), held=held)
    loose = strict.with_(allow=0.01)
    assert not strict.valid(arm.home)[0]
    assert loose.valid(arm.home)[0]
    # the allowance only applies to the held object
    sc = PlanningScene(robot, "right", table=(table,), hand=held, allow=0.01)
    assert sc.body_clearances(arm.home)[0, -1] == pytest.approx(-0.003)
    assert not sc.valid(arm.home)[0]


def test_cost_is_clearance_penalty(walled, robot):
    far = PlanningScene(robot, "right")
    q = robot.arms["right"].home.copy()
    q[1] -= 0.8
    assert far.clearance(q)[0] > 0.02 and far.cost(q)[0] == 0.0
    c = walled.body_clearances(QA)
    assert walled.cost(QA)[0] == pytest.approx(np.maximum(0, 0.02 - c).sum())


def test_smooth_straight_unchanged(walled):
    W = interpolate(QA, QA + 0.1, 0.05)
    tr = Trajectory(W, "right")
    out = smooth(tr, walled.with_(obstacles=()))
    assert path_length(out.waypoints) == pytest.approx(path_length(W))


def test_smooth_zigzag_shorter(robot):
    sc = PlanningScene(robot, "right")
    h = robot.arms["right"].home
    W = np.array([h + [0, 0, 0, 0, 0, 0], h + [0.2, 0.2, 0, 0, 0, 0], h + [0.4, 0, 0, 0, 0, 0],
                  h + [0.6, 0.2, 0, 0, 0, 0], h + [0.8, 0, 0, 0, 0, 0]])
    out = smooth(Trajectory(W, "right"), sc)
    assert path_length(out.waypoints) < path_length(W)
    assert np.allclose(out.waypoints[0], W[0]) and np.allclose(out.waypoints[-1], W[-1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6),
       st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0.01, 0.5))
def test_interpolate_step(a, b, step):
    Q = interpolate(a, b, step)
    assert np.allclose(Q[0], a) and np.allclose(Q[-1], b)
    assert np.abs(np.diff(Q, axis=0)).max(initial=0) <= step + 1e-9
    D = densify(np.stack([a, b, a]), step)
    assert np.abs(np.diff(D, axis=0)).max(initial=0) <= step + 1e-9
