"""Serial-chain kinematics for a simplified two-armed robot.

Joint positions are handled in batches: every function accepts ``q`` of shape
(6,) or (N, 6) and broadcasts accordingly.
"""
from dataclasses import dataclass

import numpy as np

from regrasp.geometry.collision import (CONTACT_EPS, Box, box_box_separation, seg_box_distance,
                                        seg_seg_distance, stack_boxes)
from regrasp.geometry.transforms import cross, homogeneous, log_rot, rpy

NOISE_FLOOR = 1e-12


class JointLimit(ValueError):
    pass


def _unit_or_zero(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v       # a zero axis models a locked joint


def _origin(spec):
    return homogeneous(rpy(*spec.get("rpy", (0.0, 0.0, 0.0))), spec.get("xyz", (0.0, 0.0, 0.0)))


@dataclass(frozen=True, eq=False)
class ArmModel:
    name: str
    base: np.ndarray                    # world pose of the chain root
    origins: np.ndarray                 # (6, 4, 4) fixed transform preceding each joint
    axes: np.ndarray                    # (6, 3) joint axes in their joint frames
    limits: np.ndarray                  # (6, 2)
    tool: np.ndarray                    # flange-to-tool-centre transform
    capsules: tuple = ()                # ((frame_a, pa), (frame_b, pb), radius); frame 7 = tool
    home: np.ndarray = None

    @property
    def dof(self):
        return len(self.axes)

    @classmethod
    def from_dict(cls, name, d):
        joints = d["joints"]
        origins = np.array([_origin(j) for j in joints])
        axes = np.array([_unit_or_zero(j["axis"]) for j in joints])
        limits = np.array([j.get("limits", (-np.pi, np.pi)) for j in joints], dtype=float)
        caps = tuple(((int(a[0]), np.asarray(a[1], dtype=float)),
                      (int(b[0]), np.asarray(b[1], dtype=float)), float(r))
                     for a, b, r in d.get("capsules", ()))
        home = np.asarray(d.get("home", np.zeros(len(joints))), dtype=float)
        return cls(name=name, base=_origin(d.get("base", {})), origins=origins, axes=axes,
                   limits=limits, tool=_origin(d.get("tool", {})), capsules=caps, home=home)

    def reach(self):
        """Upper bound on the distance from the base to the tool centre point."""
        return float(sum(np.linalg.norm(o[:3, 3]) for o in self.origins)
                     + np.linalg.norm(self.tool[:3, 3]))

    def within_limits(self, q, tol=1e-9):
        q = np.atleast_2d(q)
        return np.all((q >= self.limits[:, 0] - tol) & (q <= self.limits[:, 1] + tol), axis=-1)

    def clamp(self, q):
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        span = hi - lo
        wrapped = lo + np.mod(q - lo, 2 * np.pi)
        full = span >= 2 * np.pi - 1e-9
        return np.where(full, wrapped, np.clip(q, lo, hi))

    def random_q(self, rng, n=None):
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        shape = (self.dof,) if n is None else (n, self.dof)
        return lo + (hi - lo) * rng.random(shape)


def _check(arm, q):
    if not np.all(arm.within_limits(q)):
        raise JointLimit(f"joint configuration outside limits for arm {arm.name}")


def _axis_terms(axis):
    """Skew matrix K and K @ K of a joint axis (Rodrigues terms)."""
    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return K, K @ K


def frames(arm, q):
    """World frames (N, dof + 2, 4, 4): base, each joint frame, then the tool."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    N = len(q)
    out = np.zeros((N, arm.dof + 2, 4, 4))
    out[:, :, 3, 3] = 1.0
    R = np.broadcast_to(arm.base[:3, :3], (N, 3, 3))
    p = np.broadcast_to(arm.base[:3, 3], (N, 3))
    out[:, 0] = arm.base
    s, c = np.sin(q), np.cos(q)
    for i in range(arm.dof):
        o = arm.origins[i]
        p = p + R @ o[:3, 3]
        R = R @ o[:3, :3]
        # R @ Rodrigues(axis, q) = R + sin q (R K) + (1 - cos q) (R K K)
        K, KK = _axis_terms(arm.axes[i])
        R = R + s[:, i, None, None] * (R @ K) + (1.0 - c[:, i, None, None]) * (R @ KK)
        out[:, i + 1, :3, :3] = R
        out[:, i + 1, :3, 3] = p
    t = arm.tool
    out[:, -1, :3, :3] = R @ t[:3, :3]
    out[:, -1, :3, 3] = p + R @ t[:3, 3]
    return out


def fk(arm, q, check=True):
    """Tool frame(s) for joint configuration(s)."""
    q = np.asarray(q, dtype=float)
    if check:
        _check(arm, q)
    F = frames(arm, q)[:, -1]
    return F[0] if q.ndim == 1 else F


def _jacobian_from_frames(arm, F):
    p_tool = F[:, -1, :3, 3]
    z = np.einsum("nkij,kj->nki", F[:, 1:-1, :3, :3], arm.axes)
    p = F[:, 1:-1, :3, 3]
    lin = cross(z, p_tool[:, None, :] - p)
    return np.concatenate([np.swapaxes(lin, 1, 2), np.swapaxes(z, 1, 2)], axis=1)


def jacobian(arm, q, check=True):
    """Geometric Jacobian mapping joint rates to (linear; angular) tool velocity."""
    q = np.asarray(q, dtype=float)
    if check:
        _check(arm, q)
    J = _jacobian_from_frames(arm, frames(arm, q))
    return J[0] if q.ndim == 1 else J


def manipulability(arm, q, check=True):
    """sqrt(det(J J^T)), clamped to 0 below the numeric noise floor."""
    J = jacobian(arm, q, check)
    d = np.linalg.det(J @ np.swapaxes(J, -1, -2))
    w = np.sqrt(np.maximum(d, 0.0))
    return np.where(w < NOISE_FLOOR, 0.0, w)


def pose_error(T_target, T):
    """(N, 6) error [dp; dtheta] taking T to T_target, expressed in the world frame."""
    dp = T_target[..., :3, 3] - T[..., :3, 3]
    dR = T_target[..., :3, :3] @ np.swapaxes(T[..., :3, :3], -1, -2)
    return np.concatenate([dp, log_rot(dR)], axis=-1)


@dataclass(frozen=True)
class IKConfig:
    damping: float = 0.01
    max_iter: int = 200
    restarts: int = 10
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    seed: int = 0
    max_step: float = 0.5
    stall_iters: int = 25


def ik(arm, target, seeds=None, config=IKConfig()):
    """Damped-least-squares IK for one target; ``None`` if every attempt fails."""
    q, ok = ik_batch(arm, np.asarray(target)[None], None if seeds is None else [seeds], config)
    return q[0] if ok[0] else None


def _dls_solve(arm, targets, q0, config):
    """Run DLS from q0 for each target; returns (q, converged)."""
    q = arm.clamp(q0.copy())
    n = len(q)
    done = np.zeros(n, dtype=bool)
    active = np.arange(n)
    best = np.full(n, np.inf)
    since_best = np.zeros(n, dtype=int)
    lam2 = config.damping ** 2
    for _ in range(config.max_iter):
        if len(active) == 0:
            break
        qa = q[active]
        F = frames(arm, qa)
        err = pose_error(targets[active], F[:, -1])
        ep = np.linalg.norm(err[:, :3], axis=1)
        eo = np.linalg.norm(err[:, 3:], axis=1)
        conv = (ep < config.pos_tol) & (eo < config.rot_tol)
        done[active[conv]] = True
        metric = ep + 0.1 * eo
        improved = metric < best[active] * 0.999
        best[active] = np.where(improved, metric, best[active])
        since_best[active] = np.where(improved, 0, since_best[active] + 1)
        stalled = since_best[active] > config.stall_iters
        keep = ~conv & ~stalled
        active = active[keep]
        if len(active) == 0:
            break
        J = _jacobian_from_frames(arm, F[keep])
        e = err[keep]
        JJt = J @ np.swapaxes(J, 1, 2) + lam2 * np.eye(6)
        dq = np.einsum("nji,nj->ni", J, np.linalg.solve(JJt, e[..., None])[..., 0])
        step = np.abs(dq).max(axis=1, keepdims=True)
        dq = dq * np.minimum(1.0, config.max_step / np.maximum(step, 1e-300))
        q[active] = arm.clamp(q[active] + dq)
    return q, done


def ik_batch(arm, targets, seeds=None, config=IKConfig()):
    """Solve many IK targets at once.

    ``seeds`` is an optional per-target list of seed configurations tried
    before ``config.restarts`` random restarts (deterministic given
    ``config.seed``). Returns (q (N, 6), success (N,)).
    """
    targets = np.asarray(targets, dtype=float)
    N = len(targets)
    out = np.full((N, arm.dof), np.nan)
    ok = np.zeros(N, dtype=bool)
    if N == 0:
        return out, ok
    # cheap reach screen
    d = np.linalg.norm(targets[:, :3, 3] - arm.base[:3, 3], axis=1)
    pending = np.nonzero(d <= arm.reach() + config.pos_tol)[0]
    seed_lists = []
    for i in range(N):
        s = [] if seeds is None or seeds[i] is None else [np.asarray(x, dtype=float)
                                                          for x in seeds[i] if x is not None]
        if not s:
            s = [arm.home]
        seed_lists.append(s)
    rng = np.random.default_rng(config.seed)
    randoms = arm.random_q(rng, config.restarts) if config.restarts else np.zeros((0, arm.dof))
    rounds = max(len(s) for s in seed_lists) if N else 0
    # seeded rounds
    for r in range(rounds):
        idx = np.array([i for i in pending if r < len(seed_lists[i])], dtype=int)
        if len(idx) == 0:
            continue
        q0 = np.array([seed_lists[i][r] for i in idx])
        q, conv = _dls_solve(arm, targets[idx], q0, config)
        out[idx[conv]] = q[conv]
        ok[idx[conv]] = True
        pending = np.array([i for i in pending if not ok[i]], dtype=int)
    # random restarts, all at once, first success in restart order wins
    if len(pending) and len(randoms):
        idx = np.repeat(pending, len(randoms))
        q0 = np.tile(randoms, (len(pending), 1))
        q, conv = _dls_solve(arm, targets[idx], q0, config)
        conv = conv.reshape(len(pending), len(randoms))
        q = q.reshape(len(pending), len(randoms), arm.dof)
        for k, i in enumerate(pending):
            hit = np.nonzero(conv[k])[0]
            if len(hit):
                out[i] = q[k, hit[0]]
                ok[i] = True
    return out, ok


# ------------------------------------------------------------------ robot

@dataclass(frozen=True, eq=False)
class RobotModel:
    arms: dict                          # {"right": ArmModel, "left": ArmModel}
    torso: tuple = ()                   # static boxes attached to the robot body
    master: str = "right"
    slave: str = "left"

    @classmethod
    def from_dict(cls, d):
        arms = {name: ArmModel.from_dict(name, spec) for name, spec in d["arms"].items()}
        torso = tuple(Box(np.asarray(b["center"], dtype=float),
                          rpy(*b.get("rpy", (0.0, 0.0, 0.0))),
                          np.asarray(b["size"], dtype=float) / 2) for b in d.get("torso", ()))
        return cls(arms=arms, torso=torso, master=d.get("master", "right"),
                   slave=d.get("slave", "left"))

    def other(self, name):
        return self.slave if name == self.master else self.master

    def home(self, name):
        return self.arms[name].home


def default_robot_dict(shoulder_height=0.40, shoulder_y=0.145, upper_arm=0.25, forearm=0.235,
                       wrist_to_flange=0.03, tcp_depth=0.07):
    """Generic 6R arms with HiroNX-like proportions.

    Chain per arm: shoulder yaw (z), shoulder pitch (y), elbow pitch (-y,
    0..2.6 rad), forearm roll (x), wrist pitch (y), wrist roll (x); the tool
    z axis continues the last link.
    """
    def arm(side):
        y = -shoulder_y if side == "right" else shoulder_y
        yaw = -0.35 if side == "right" else 0.35
        return {
            "base": {"xyz": [0.0, y, shoulder_height]},
            "joints": [
                {"axis": [0, 0, 1]},
                {"axis": [0, 1, 0]},
                {"xyz": [upper_arm, 0, 0], "axis": [0, -1, 0], "limits": [0.0, 2.6]},
                {"axis": [1, 0, 0]},
                {"xyz": [forearm, 0, 0], "axis": [0, 1, 0]},
                {"axis": [1, 0, 0]},
            ],
            "tool": {"xyz": [wrist_to_flange + tcp_depth, 0, 0], "rpy": [0, np.pi / 2, 0]},
            "capsules": [
                [[2, [0, 0, 0]], [3, [0, 0, 0]], 0.04],
                [[4, [0.02, 0, 0]], [5, [0, 0, 0]], 0.035],
                [[6, [0, 0, 0]], [6, [wrist_to_flange, 0, 0]], 0.03],
            ],
            "home": [yaw, 1.0, 2.0, 0.0, np.pi / 2 + 1.0, 0.0],
        }
    return {
        "master": "right",
        "slave": "left",
        "arms": {"right": arm("right"), "left": arm("left")},
        "torso": [{"center": [-0.05, 0.0, 0.275], "size": [0.2, 0.2, 0.55]}],
    }


# ------------------------------------------------------------ collisions

@dataclass(frozen=True, eq=False)
class ArmBodies:
    """Posed collision geometry of one arm for N configurations."""
    seg_a: np.ndarray       # (N, C, 3)
    seg_b: np.ndarray       # (N, C, 3)
    radii: np.ndarray       # (C,)
    box_c: np.ndarray       # (N, B, 3)
    box_R: np.ndarray       # (N, B, 3, 3)
    box_h: np.ndarray       # (B, 3)
    box_tag: tuple = ()     # "gripper" or "held" per box


def arm_bodies(arm, q, hand_boxes=(), held_boxes=()):
    """Capsules of the arm and tool-attached boxes (gripper, held object)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    F = frames(arm, q)
    sa, sb, rr = [], [], []
    for (fa, pa), (fb, pb), r in arm.capsules:
        sa.append(F[:, fa, :3, :3] @ pa + F[:, fa, :3, 3])
        sb.append(F[:, fb, :3, :3] @ pb + F[:, fb, :3, 3])
        rr.append(r)
    tool = F[:, -1]
    boxes = list(hand_boxes) + list(held_boxes)
    tags = ("gripper",) * len(hand_boxes) + ("held",) * len(held_boxes)
    c, R, h = stack_boxes(boxes)
    bc = np.einsum("nij,bj->nbi", tool[:, :3, :3], c) + tool[:, None, :3, 3] if len(boxes) \
        else np.zeros((len(q), 0, 3))
    bR = np.einsum("nij,bjk->nbik", tool[:, :3, :3], R) if len(boxes) \
        else np.zeros((len(q), 0, 3, 3))
    return ArmBodies(np.stack(sa, 1), np.stack(sb, 1), np.array(rr), bc, bR, h, tags)


def clearance_to_boxes(bodies, boxes, skip_held=False):
    """(N,) minimum clearance between posed arm bodies and static boxes."""
    N = bodies.seg_a.shape[0]
    if not boxes:
        return np.full(N, np.inf)
    c, R, h = stack_boxes(boxes)
    d = seg_box_distance(bodies.seg_a[:, :, None], bodies.seg_b[:, :, None],
                         c[None, None], R[None, None], h[None, None]) - bodies.radii[None, :, None]
    best = d.reshape(N, -1).min(axis=1)
    sel = [k for k, t in enumerate(bodies.box_tag) if not (skip_held and t == "held")]
    if sel:
        s = box_box_separation(bodies.box_c[:, sel, None], bodies.box_R[:, sel, None],
                               bodies.box_h[None, sel, None], c[None, None], R[None, None],
                               h[None, None])
        best = np.minimum(best, s.reshape(N, -1).min(axis=1))
    return best


def clearance_between(a, b):
    """(N,) minimum clearance between two posed arms' bodies."""
    N = a.seg_a.shape[0]
    d = seg_seg_distance(a.seg_a[:, :, None], a.seg_b[:, :, None], b.seg_a[:, None],
                         b.seg_b[:, None]) - a.radii[None, :, None] - b.radii[None, None]
    best = d.reshape(N, -1).min(axis=1)
    if b.box_c.shape[1]:
        d = seg_box_distance(a.seg_a[:, :, None], a.seg_b[:, :, None], b.box_c[:, None],
                             b.box_R[:, None], b.box_h[None, None]) - a.radii[None, :, None]
        best = np.minimum(best, d.reshape(N, -1).min(axis=1))
    if a.box_c.shape[1]:
        d = seg_box_distance(b.seg_a[:, :, None], b.seg_b[:, :, None], a.box_c[:, None],
                             a.box_R[:, None], a.box_h[None, None]) - b.radii[None, :, None]
        best = np.minimum(best, d.reshape(N, -1).min(axis=1))
    if a.box_c.shape[1] and b.box_c.shape[1]:
        s = box_box_separation(a.box_c[:, :, None], a.box_R[:, :, None], a.box_h[None, :, None],
                               b.box_c[:, None], b.box_R[:, None], b.box_h[None, None])
        best = np.minimum(best, s.reshape(N, -1).min(axis=1))
    return best


def internal_clearance(bodies):
    """Clearance between non-adjacent parts of one arm.

    Capsules are chained, so only the upper arm (index 0) is checked against
    the tool-attached boxes; the forearm is checked against held objects.
    """
    N = bodies.seg_a.shape[0]
    best = np.full(N, np.inf)
    B = bodies.box_c.shape[1]
    if B == 0:
        return best
    pairs = [(0, k) for k in range(B)]
    pairs += [(1, k) for k in range(B) if bodies.box_tag[k] == "held"]
    for ci, k in pairs:
        d = seg_box_distance(bodies.seg_a[:, ci], bodies.seg_b[:, ci], bodies.box_c[:, k],
                             bodies.box_R[:, k], bodies.box_h[k][None]) - bodies.radii[ci]
        best = np.minimum(best, d)
    return best


def torso_clearance(bodies, torso):
    """Clearance to the torso, skipping the shoulder-mounted upper-arm capsule."""
    N = bodies.seg_a.shape[0]
    if not torso:
        return np.full(N, np.inf)
    c, R, h = stack_boxes(list(torso))
    d = seg_box_distance(bodies.seg_a[:, 1:, None], bodies.seg_b[:, 1:, None],
                         c[None, None], R[None, None], h[None, None]) - bodies.radii[None, 1:, None]
    best = d.reshape(N, -1).min(axis=1)
    if bodies.box_c.shape[1]:
        s = box_box_separation(bodies.box_c[:, :, None], bodies.box_R[:, :, None],
                               bodies.box_h[None, :, None], c[None, None], R[None, None],
                               h[None, None])
        best = np.minimum(best, s.reshape(N, -1).min(axis=1))
    return best


def self_collision(robot, q_left, q_right, extra=(), hand_boxes=None, eps=CONTACT_EPS):
    """Whether the two arms (with their grippers) hit each other, the torso or ``extra`` boxes."""
    hb = {"left": (), "right": ()} if hand_boxes is None else hand_boxes
    L = arm_bodies(robot.arms["left"], q_left, hb.get("left", ()))
    R = arm_bodies(robot.arms["right"], q_right, hb.get("right", ()))
    c = clearance_between(L, R)
    for b in (L, R):
        c = np.minimum(c, torso_clearance(b, robot.torso))
        c = np.minimum(c, internal_clearance(b))
        c = np.minimum(c, clearance_to_boxes(b, list(extra)))
    res = c < eps
    return bool(res[0]) if np.ndim(q_left) == 1 else res
