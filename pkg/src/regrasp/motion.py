"""Joint-space motion planning for one arm: bidirectional T-RRT plus shortcutting.

The other arm is frozen and treated as an obstacle. Collision geometry is
capsules for the links and oriented boxes for grippers, held objects, the
table and the torso.
"""
from dataclasses import dataclass

import numpy as np

from regrasp.geometry.collision import (CONTACT_EPS, box_box_separation, seg_box_distance,
                                        seg_seg_distance, stack_boxes)
from regrasp.kinematics import arm_bodies


class Failure(RuntimeError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class MotionConfig:
    step: float = 0.05              # max joint change between checked configurations
    extend: float = 0.3             # tree extension length (rad, max-norm)
    goal_bias: float = 0.1
    budget_ticks: int = 1500        # extension attempts
    d_safe: float = 0.02
    transition: bool = True         # False gives a plain bidirectional RRT
    temp_init: float = 0.1
    temp_factor: float = 2.0
    max_fails: int = 10
    smooth_iters: int = 40
    seed: int = 0
    eps: float = CONTACT_EPS


@dataclass(frozen=True, eq=False)
class PlanningScene:
    robot: object
    arm: str
    obstacles: tuple = ()           # static boxes (table, objects at rest)
    table: tuple = ()               # boxes the held object may touch within ``allow``
    hand: tuple = ()                # active gripper boxes, tool frame
    held: tuple = ()                # attached object boxes, tool frame
    other_q: np.ndarray = None
    other_hand: tuple = ()
    other_held: tuple = ()
    allow: float = 0.0              # held-vs-table penetration allowance (lift/set-down)
    eps: float = CONTACT_EPS

    def __post_init__(self):
        other = self.robot.arms[self.robot.other(self.arm)]
        oq = other.home if self.other_q is None else np.asarray(self.other_q, dtype=float)
        if not other.within_limits(oq)[0]:
            raise ValueError("frozen arm configuration outside joint limits")
        object.__setattr__(self, "other_q", oq)
        ob = arm_bodies(other, oq, self.other_hand, self.other_held)
        # fixed boxes: obstacles, torso, table, then the frozen arm's boxes
        fixed = list(self.obstacles) + list(self.robot.torso) + list(self.table)
        fc, fR, fh = stack_boxes(fixed)
        fc = np.concatenate([fc, ob.box_c[0]])
        fR = np.concatenate([fR, ob.box_R[0]])
        fh = np.concatenate([fh, ob.box_h])
        kind = (["obst"] * len(self.obstacles) + ["torso"] * len(self.robot.torso)
                + ["table"] * len(self.table) + ["other"] * ob.box_c.shape[1])
        object.__setattr__(self, "_other", ob)
        object.__setattr__(self, "_fixed", (fc, fR, fh))
        object.__setattr__(self, "_kind", np.array(kind, dtype=object))

    @property
    def active(self):
        return self.robot.arms[self.arm]

    def with_(self, **kw):
        d = {k: getattr(self, k) for k in ("robot", "arm", "obstacles", "table", "hand", "held",
                                            "other_q", "other_hand", "other_held", "allow",
                                            "eps")}
        d.update(kw)
        return PlanningScene(**d)

    def body_clearances(self, Q):
        """(N, bodies) clearance of each active body (capsules, then boxes)."""
        Q = np.atleast_2d(Q)
        N = len(Q)
        b = arm_bodies(self.active, Q, self.hand, self.held)
        o = self._other
        nc, nb = b.seg_a.shape[1], b.box_c.shape[1]
        fc, fR, fh = self._fixed
        nf = len(fc)
        kind = self._kind
        held = np.array([t == "held" for t in b.box_tag], dtype=bool)
        out = np.full((N, nc + nb), np.inf)

        # every segment against every box in one broadcast call
        no = o.seg_a.shape[1]
        sa = np.concatenate([b.seg_a, np.broadcast_to(o.seg_a, (N, no, 3))], axis=1)
        sb = np.concatenate([b.seg_b, np.broadcast_to(o.seg_b, (N, no, 3))], axis=1)
        rad = np.concatenate([b.radii, o.radii])
        bc = np.concatenate([np.broadcast_to(fc, (N, nf, 3)), b.box_c], axis=1)
        bR = np.concatenate([np.broadcast_to(fR, (N, nf, 3, 3)), b.box_R], axis=1)
        bh = np.concatenate([fh, b.box_h])
        mask = np.zeros((nc + no, nf + nb), dtype=bool)
        mask[:nc, :nf] = True
        mask[0, :nf][kind == "torso"] = False       # upper arm is mounted on the torso
        mask[nc:, nf:] = True                       # frozen arm against the moving boxes
        if nc:
            mask[0, nf:] = True                     # own upper arm against hand and load
        if nc > 1:
            mask[1, nf:] = held                     # own forearm against the load
        if mask.any():
            d = seg_box_distance(sa[:, :, None], sb[:, :, None], bc[:, None], bR[:, None],
                                 bh[None, None]) - rad[None, :, None]
            d = np.where(mask[None], d, np.inf)
            out[:, :nc] = d[:, :nc].min(axis=2)
            if nb:
                out[:, nc:] = d[:, :, nf:].min(axis=1)
        # moving boxes against fixed boxes
        if nb and nf:
            s = box_box_separation(b.box_c[:, :, None], b.box_R[:, :, None],
                                   b.box_h[None, :, None], fc[None, None], fR[None, None],
                                   fh[None, None])
            # an attached object resting on the table may touch it within ``allow``
            bonus = np.where(held[:, None] & (kind == "table")[None, :], self.allow, 0.0)
            out[:, nc:] = np.minimum(out[:, nc:], (s + bonus[None]).min(axis=2))
        # capsule pairs between the arms
        if no:
            d = seg_seg_distance(b.seg_a[:, :, None], b.seg_b[:, :, None], o.seg_a[:, None],
                                 o.seg_b[:, None]) - b.radii[None, :, None] - o.radii[None, None]
            out[:, :nc] = np.minimum(out[:, :nc], d.min(axis=2))
        return out

    def clearance(self, Q):
        return self.body_clearances(Q).min(axis=1)

    def valid(self, Q):
        Q = np.atleast_2d(Q)
        return self.active.within_limits(Q) & (self.clearance(Q) >= self.eps)

    def cost(self, Q, d_safe=0.02):
        c = self.body_clearances(Q)
        return np.maximum(0.0, d_safe - c).sum(axis=1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: np.ndarray           # (K, 6)
    arm: str = ""
    label: str = ""

    def length(self):
        return path_length(self.waypoints)

    def to_dict(self):
        return {"arm": self.arm, "label": self.label, "waypoints": self.waypoints.tolist()}


def path_length(W):
    W = np.asarray(W)
    return float(np.linalg.norm(np.diff(W, axis=0), axis=1).sum()) if len(W) > 1 else 0.0


def interpolate(a, b, step):
    """Configurations from a to b (inclusive) with max joint change <= step."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(1, int(np.ceil(np.abs(b - a).max() / step - 1e-12)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return a + t * (b - a)


def densify(W, step):
    W = np.asarray(W, dtype=float)
    if len(W) == 1:
        return W.copy()
    parts = [interpolate(W[i], W[i + 1], step)[:-1] for i in range(len(W) - 1)]
    return np.vstack(parts + [W[-1:]])


def segment_valid(scene, a, b, step):
    return bool(np.all(scene.valid(interpolate(a, b, step))))


def _segment(scene, a, b, step, d_safe):
    """(valid, cost at b) for the straight segment a -> b."""
    Q = interpolate(a, b, step)
    c = scene.body_clearances(Q)
    ok = np.all(scene.active.within_limits(Q)) and bool(np.all(c.min(axis=1) >= scene.eps))
    return ok, float(np.maximum(0.0, d_safe - c[-1]).sum())


def validate_trajectory(scene, traj, step=0.05):
    W = traj.waypoints if isinstance(traj, Trajectory) else np.asarray(traj)
    if len(W) == 0:
        return False
    return bool(np.all(scene.valid(densify(W, step))))


def smooth(traj, scene, iterations=40, step=0.05, rng=None):
    """Random shortcutting; never lengthens the path and keeps it valid."""
    rng = np.random.default_rng(0) if rng is None else rng
    W = [np.asarray(w, dtype=float) for w in traj.waypoints]
    for _ in range(iterations):
        if len(W) <= 2:
            break
        i, j = sorted(rng.choice(len(W), size=2, replace=False))
        if j - i < 2:
            continue
        old = path_length(np.array(W[i:j + 1]))
        if np.linalg.norm(W[j] - W[i]) < old - 1e-12 and segment_valid(scene, W[i], W[j], step):
            W = W[:i + 1] + W[j:]
    return Trajectory(np.array(W), traj.arm, traj.label)


class _Tree:
    def __init__(self, root, cost):
        self.Q = [np.asarray(root, dtype=float)]
        self.parent = [-1]
        self.cost = [float(cost)]

    def nearest(self, q):
        d = np.abs(np.asarray(self.Q) - q).max(axis=1)
        return int(np.argmin(d))

    def add(self, q, parent, cost):
        self.Q.append(q)
        self.parent.append(parent)
        self.cost.append(float(cost))
        return len(self.Q) - 1

    def path_to_root(self, i):
        out = []
        while i >= 0:
            out.append(self.Q[i])
            i = self.parent[i]
        return out


def plan_motion(scene, q_start, q_goal, config=MotionConfig(), label=""):
    """Bidirectional transition-based RRT; raises :class:`Failure` when it gives up.

    The budget is counted in extension ticks rather than seconds so the
    result does not depend on machine speed.
    """
    qs = np.asarray(q_start, dtype=float)
    qg = np.asarray(q_goal, dtype=float)
    ends = scene.valid(np.stack([qs, qg]))
    if not ends[0]:
        raise Failure("start configuration in collision or outside limits")
    if not ends[1]:
        raise Failure("goal configuration in collision or outside limits")
    if np.abs(qg - qs).max() < 1e-12:
        return Trajectory(qs[None].copy(), scene.arm, label)
    if segment_valid(scene, qs, qg, config.step):
        return Trajectory(densify(np.stack([qs, qg]), config.step), scene.arm, label)

    rng = np.random.default_rng(config.seed)
    arm = scene.active
    c0 = scene.cost(np.stack([qs, qg]), config.d_safe)
    trees = [_Tree(qs, c0[0]), _Tree(qg, c0[1])]
    temp = [config.temp_init, config.temp_init]
    fails = [0, 0]
    span = arm.limits[:, 1] - arm.limits[:, 0]

    def transition_ok(k, c_near, c_new, dist):
        if not config.transition or c_new <= c_near:
            return True
        if c_new >= 1.0:      # saturating cost; never climb into contact
            return False
        p = np.exp(-(c_new - c_near) / max(dist, 1e-9) / temp[k])
        if rng.random() < p:
            temp[k] /= config.temp_factor ** ((c_new - c_near) / config.d_safe)
            return True
        fails[k] += 1
        if fails[k] > config.max_fails:
            temp[k] *= config.temp_factor
            fails[k] = 0
        return False

    def steer(a, b):
        d = b - a
        m = np.abs(d).max()
        return b if m <= config.extend else a + d * (config.extend / m)

    for tick in range(config.budget_ticks):
        k = tick % 2
        A, B = trees[k], trees[1 - k]
        if rng.random() < config.goal_bias:
            q_rand = B.Q[0]
        else:
            q_rand = arm.limits[:, 0] + span * rng.random(arm.dof)
        i = A.nearest(q_rand)
        q_new = steer(A.Q[i], q_rand)
        ok, c_new = _segment(scene, A.Q[i], q_new, config.step, config.d_safe)
        if not ok:
            continue
        if not transition_ok(k, A.cost[i], c_new, np.abs(q_new - A.Q[i]).max()):
            continue
        ia = A.add(q_new, i, c_new)
        # greedy connect of the other tree towards q_new
        j = B.nearest(q_new)
        while True:
            q_next = steer(B.Q[j], q_new)
            ok, c_next = _segment(scene, B.Q[j], q_next, config.step, config.d_safe)
            if not ok:
                break
            j = B.add(q_next, j, c_next)
            if np.abs(q_next - q_new).max() < 1e-12:
                pa = A.path_to_root(ia)[::-1]
                pb = B.path_to_root(j)[1:]
                W = pa + pb
                if k == 1:
                    W = W[::-1]
                traj = Trajectory(np.array(W), scene.arm, label)
                traj = smooth(traj, scene, config.smooth_iters, config.step,
                              np.random.default_rng(config.seed + 1))
                return Trajectory(densify(traj.waypoints, config.step), scene.arm, label)
    raise Failure("budget exhausted")
