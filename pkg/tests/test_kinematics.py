import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fd_jacobian
from regrasp.kinematics import (IKConfig, JointLimit, RobotModel, default_robot_dict, fk,
                                ik, ik_batch, jacobian, manipulability, pose_error)


@pytest.fixture(scope="module")
def robot():
    return RobotModel.from_dict(default_robot_dict())


def test_jacobian_matches_finite_differences(robot, rng):
    for arm in robot.arms.values():
        for q in arm.random_q(rng, 30):
            J = jacobian(arm, q)
            Jn = fd_jacobian(arm, q)
            assert np.linalg.norm(J - Jn) / np.linalg.norm(Jn) <= 1e-6


def test_manipulability_is_product_of_singular_values(robot, rng):
    arm = robot.arms["right"]
    Q = arm.random_q(rng, 50)
    w = manipulability(arm, Q)
    s = np.linalg.svd(jacobian(arm, Q), compute_uv=False)
    assert np.allclose(w, np.prod(s, axis=1), atol=1e-9, rtol=0)


def test_manipulability_zero_at_singularity(robot):
    arm = robot.arms["right"]
    q = arm.home.copy()
    q[2] = 0.0              # straight elbow
    q[4] = 0.0              # wrist roll axes aligned with forearm roll
    assert manipulability(arm, q) == 0.0


def test_batch_matches_single(robot, rng):
    arm = robot.arms["left"]
    Q = arm.random_q(rng, 5)
    F = fk(arm, Q)
    for q, T in zip(Q, F):
        assert np.allclose(fk(arm, q), T)
    assert jacobian(arm, Q).shape == (5, 6, 6)


def test_joint_limits_raise(robot):
    arm = robot.arms["right"]
    q = arm.home.copy()
    q[2] = -0.5
    with pytest.raises(JointLimit):
        fk(arm, q)
    with pytest.raises(JointLimit):
        jacobian(arm, q)


def test_ik_round_trip(robot, rng):
    arm = robot.arms["right"]
    cfg = IKConfig()
    Q = arm.random_q(rng, 40)
    T = fk(arm, Q)
    q, ok = ik_batch(arm, T, config=cfg)
    assert ok.mean() >= 0.95
    err = pose_error(T[ok], fk(arm, q[ok]))
    assert np.all(np.linalg.norm(err[:, :3], axis=1) < cfg.pos_tol)
    assert np.all(np.linalg.norm(err[:, 3:], axis=1) < cfg.rot_tol)
    assert np.all(arm.within_limits(q[ok]))


def test_ik_is_deterministic(robot, rng):
    arm = robot.arms["right"]
    T = fk(arm, arm.random_q(rng, 8))
    a, oka = ik_batch(arm, T)
    b, okb = ik_batch(arm, T)
    assert np.array_equal(oka, okb)
    assert np.array_equal(a[oka], b[okb])


def test_ik_unreachable_returns_none(robot):
    arm = robot.arms["right"]
    T = np.eye(4)
    T[:3, 3] = [3.0, 0.0, 0.0]
    assert ik(arm, T) is None


def test_ik_seed_is_used(robot):
    arm = robot.arms["left"]
    T = fk(arm, arm.home)
    q = ik(arm, T, seeds=[arm.home], config=IKConfig(restarts=0))
    assert np.allclose(q, arm.home, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_fk_is_rigid(u):
    arm = RobotModel.from_dict(default_robot_dict()).arms["right"]
    lo, hi = arm.limits[:, 0], arm.limits[:, 1]
    T = fk(arm, lo + (hi - lo) * np.array(u))
    R = T[:3, :3]
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert np.linalg.norm(T[:3, 3] - arm.base[:3, 3]) <= arm.reach() + 1e-12
