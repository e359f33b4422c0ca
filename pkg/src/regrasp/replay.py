"""Independent re-validation of a plan dictionary.

Re-derives node frames from the task, re-solves IK, re-checks every
trajectory configuration for collisions with the kinematics-level clearance
functions (not the planner's fused scene), and tracks the object pose
through the whole sequence to check continuity.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from regrasp.geometry.collision import box_box_separation, stack_boxes
from regrasp.geometry.transforms import inv, rotation_angle
from regrasp.kinematics import (arm_bodies, clearance_between, clearance_to_boxes, fk, ik,
                                internal_clearance, torso_clearance)


@dataclass
class ReplayReport:
    ok: bool = True
    errors: list = field(default_factory=list)
    checked: int = 0             # configurations collision-checked

    def fail(self, msg):
        self.ok = False
        self.errors.append(msg)


def _pose_close(A, B, pos_tol, rot_tol):
    A, B = np.asarray(A), np.asarray(B)
    return (np.linalg.norm(A[:3, 3] - B[:3, 3]) <= pos_tol
            and rotation_angle(A[:3, :3], B[:3, :3]) <= rot_tol)


def _arm_of(robot, hand):
    return robot.slave if hand == "slave" else robot.master


def _subdivide(W, step):
    W = np.asarray(W, dtype=float)
    out = [W[:1]]
    for a, b in zip(W[:-1], W[1:]):
        n = max(1, int(np.ceil(np.abs(b - a).max() / step - 1e-12)))
        t = np.linspace(0.0, 1.0, n + 1)[1:, None]
        out.append(a + t * (b - a))
    return np.vstack(out)


def configuration_clearance(world, obj, seg, Q):
    """(N,) clearance of the active arm in segment ``seg`` at configurations Q."""
    r = world.robot
    d = seg["scene"]
    arm = d["arm"]
    other = r.other(arm)
    grip = world.config.gripper
    g = obj.grasp

    def hand(gid):
        return tuple(grip.boxes(None if gid is None else g(gid).jaw_width))

    def held(gid):
        return () if gid is None else obj.boxes_in(inv(g(gid).frame))

    jaw = d["held"] if d["held"] is not None else d["jaw"]
    B = arm_bodies(r.arms[arm], Q, hand(jaw), held(d["held"]))
    oj = d["other_held"] if d["other_held"] is not None else d["other_jaw"]
    O = arm_bodies(r.arms[other], np.asarray(d["other_q"]), hand(oj), held(d["other_held"]))
    O = replace(O, seg_a=np.repeat(O.seg_a, len(Q), 0), seg_b=np.repeat(O.seg_b, len(Q), 0),
                box_c=np.repeat(O.box_c, len(Q), 0), box_R=np.repeat(O.box_R, len(Q), 0))
    obst = []
    if d["object_pose"] is not None:
        obst = list(obj.boxes_in(np.array(d["object_pose"]).reshape(4, 4)))
    c = clearance_to_boxes(B, obst)
    c = np.minimum(c, clearance_to_boxes(B, [world.table], skip_held=True))
    c = np.minimum(c, torso_clearance(B, r.torso))
    c = np.minimum(c, internal_clearance(B))
    c = np.minimum(c, clearance_between(B, O))
    hk = [k for k, t in enumerate(B.box_tag) if t == "held"]
    if hk:
        tc, tR, th = stack_boxes([world.table])
        s = box_box_separation(B.box_c[:, hk, None], B.box_R[:, hk, None],
                               B.box_h[None, hk, None], tc[None, None], tR[None, None],
                               th[None, None])
        c = np.minimum(c, s.reshape(len(Q), -1).min(axis=1) + d["allow"])
    return c


def replay_plan(plan, world, obj, step=None, pos_tol=1e-3, rot_tol=5e-3, ik_seed=7):
    """Re-validate ``plan`` (a dict as produced by ``RegraspPlan.to_dict``)."""
    rep = ReplayReport()
    cfg = world.config
    step = cfg.motion.step if step is None else step
    eps = cfg.motion.eps
    r = world.robot
    task = plan["task"]
    places = {p.id: p for p in obj.placements}

    def place_pose(pid, yaw):
        c, s = np.cos(yaw), np.sin(yaw)
        T = np.eye(4)
        T[:3, :3] = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
        T[:2, 3] = cfg.scene.anchor
        return T @ places[pid].transform

    T_goal = place_pose(task["goal"], task["goal_yaw"])
    T_obj = place_pose(task["initial"], task["init_yaw"])

    # nodes: frames recomputed from the task, stored joints checked by FK and re-solved
    ikc = replace(cfg.ik, seed=ik_seed)
    for nd in plan["nodes"]:
        kind, sid = nd["state"]
        grasp = obj.grasp(nd["grasp"])
        arm = r.arms[_arm_of(r, nd["hand"])]
        if kind == "placement":
            if nd["yaw"] is None:
                rep.fail(f"node {nd['id']}: placement without a yaw")
                continue
            T = place_pose(sid, nd["yaw"])
            if nd["grasp"] not in places[sid].valid_grasps(arm.name):
                rep.fail(f"node {nd['id']}: grasp {nd['grasp']} not valid at placement {sid}")
        else:
            R = world.rotations[sid]
            T = np.eye(4)
            T[:3, :3] = R
            T[:3, 3] = world.handover_point - R @ obj.com
        Tg = T @ grasp.frame
        if not np.allclose(Tg, nd["frame"], atol=1e-9):
            rep.fail(f"node {nd['id']}: recorded frame differs from the task frame")
        q = np.asarray(nd["q_grasp"])
        reach = _pose_close(fk(arm, q, check=False), Tg, pos_tol, rot_tol)
        if not arm.within_limits(q)[0] or not reach:
            rep.fail(f"node {nd['id']}: grasp configuration does not reach its frame")
        Tp = Tg.copy()
        Tp[:3, 3] -= cfg.scene.pregrasp * Tg[:3, 2]
        if not _pose_close(fk(arm, np.asarray(nd["q_pre"]), check=False), Tp, pos_tol, rot_tol):
            rep.fail(f"node {nd['id']}: pre-grasp configuration does not reach its frame")
        if ik(arm, Tg, None, ikc) is None:
            rep.fail(f"node {nd['id']}: independent IK re-solve failed")

    # segments: continuity of both arms and of the object, collisions
    track = {a: r.home(a) for a in r.arms}
    for i, seg in enumerate(plan["segments"]):
        d = seg["scene"]
        arm, other = d["arm"], r.other(d["arm"])
        W = np.asarray(seg["waypoints"], dtype=float)
        if len(W) == 0:
            rep.fail(f"segment {i}: empty")
            continue
        if np.abs(W[0] - track[arm]).max() > 1e-9:
            rep.fail(f"segment {i} ({seg['label']}): starts away from the arm's configuration")
        if np.abs(np.asarray(d["other_q"]) - track[other]).max() > 1e-9:
            rep.fail(f"segment {i} ({seg['label']}): frozen arm configuration mismatch")
        if d["object_pose"] is not None:
            P = np.array(d["object_pose"]).reshape(4, 4)
            if not _pose_close(P, T_obj, pos_tol, rot_tol):
                rep.fail(f"segment {i} ({seg['label']}): object is not where it was left")
            T_obj = P
        if d["held"] is not None:
            F = inv(obj.grasp(d["held"]).frame)
            Th = fk(r.arms[arm], W[0], check=False) @ F
            if not _pose_close(Th, T_obj, pos_tol, rot_tol):
                rep.fail(f"segment {i} ({seg['label']}): held object not in the hand")
        if d["other_held"] is not None:
            F = inv(obj.grasp(d["other_held"]).frame)
            To = fk(r.arms[other], np.asarray(d["other_q"]), check=False) @ F
            if not _pose_close(To, T_obj, pos_tol, rot_tol):
                rep.fail(f"segment {i} ({seg['label']}): object not in the frozen hand")
        Q = _subdivide(W, step)
        lim = r.arms[arm].within_limits(Q)
        if not np.all(lim):
            rep.fail(f"segment {i} ({seg['label']}): joint limits violated")
        c = configuration_clearance(world, obj, seg, Q)
        rep.checked += len(Q)
        if np.any(c < eps):
            k = int(np.argmin(c))
            rep.fail(f"segment {i} ({seg['label']}): collision at sample {k} "
                     f"(clearance {c[k]:.2e})")
        track[arm] = W[-1]
        if d["held"] is not None:
            T_obj = fk(r.arms[arm], W[-1], check=False) @ inv(obj.grasp(d["held"]).frame)
    if not _pose_close(T_obj, T_goal, pos_tol, rot_tol):
        rep.fail("object does not end at the goal placement")
    return rep
