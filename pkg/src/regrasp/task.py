"""Objects, world poses and the per-object caches shared by the planners.

Everything cached here is a pure function of its key (placement, sampled yaw,
rotation index, grasp id), so caching never changes planning results.
"""
from dataclasses import dataclass

import numpy as np

from regrasp.geometry.collision import Box, aabb
from regrasp.geometry.transforms import inv, rot_z
from regrasp.grasp import plan_grasps
from regrasp.handover import (approach_maps, gripper_compatibility, optimal_position,
                              sample_rotations)
from regrasp.kinematics import RobotModel, ik_batch
from regrasp.motion import PlanningScene
from regrasp.placement import plan_placements


@dataclass(frozen=True, eq=False)
class ObjectModel:
    name: str
    mesh: object
    boxes: tuple                   # collision boxes in the object frame
    grasps: tuple
    placements: tuple

    @property
    def com(self):
        return self.mesh.com

    def grasp(self, gid):
        return self.grasps[gid]

    def boxes_in(self, T):
        """Collision boxes posed by the object transform T."""
        return tuple(b.transformed(T) for b in self.boxes)

    @classmethod
    def build(cls, name, mesh, boxes, config):
        grasps = plan_grasps(mesh, config.gripper, config.grasp)
        placements = plan_placements(mesh, grasps, config.gripper, config.placement_margin,
                                     config.grasp.angle_tol, hands=("right", "left"))
        if boxes is None:
            lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
            boxes = (aabb(lo, hi),)
        assert all(g.id == k for k, g in enumerate(grasps))
        return cls(name=name, mesh=mesh, boxes=tuple(boxes), grasps=tuple(grasps),
                   placements=tuple(placements))


@dataclass(eq=False)
class World:
    """Robot, gripper, table and the fixed handover lattice point."""
    config: object
    robot: RobotModel = None
    table: Box = None
    handover_point: np.ndarray = None
    rotations: np.ndarray = None
    buckets: np.ndarray = None

    def __post_init__(self):
        c = self.config
        if self.robot is None:
            self.robot = RobotModel.from_dict(c.robot)
        if self.table is None:
            self.table = aabb(c.scene.table_lo, c.scene.table_hi)
        if self.rotations is None:
            self.rotations, self.buckets = sample_rotations(c.handover.n_rotations)

    def ensure_handover(self, cache_dir=None, rebuild=False):
        if self.handover_point is None:
            maps = approach_maps(self.robot, self.config.robot, self.config.handover,
                                 self.config.ik, cache_dir, rebuild)
            self.handover_point, _ = optimal_position(maps, self.config.handover.threshold,
                                                      self.config.handover.count_mode)
        return self.handover_point

    def side(self, arm):
        return float(np.sign(self.robot.arms[arm].base[1, 3]))

    def placement_pose(self, placement, yaw):
        ax, ay = self.config.scene.anchor
        T = np.eye(4)
        T[:3, :3] = rot_z(yaw)
        T[:3, 3] = [ax, ay, 0.0]
        return T @ placement.transform

    def handover_pose(self, obj, k):
        R = self.rotations[k]
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = self.handover_point - R @ obj.com
        return T

    def yaw_samples(self):
        n = self.config.scene.yaw_samples
        return 2 * np.pi * np.arange(n) / n


@dataclass(frozen=True, eq=False)
class NodeConfigs:
    """Joint configurations attached to one (state, grasp, arm) triple."""
    ok: bool
    grasp: np.ndarray = None
    pre: np.ndarray = None
    lift: np.ndarray = None
    reason: str = ""


def grasp_targets(world, T_obj, grasp, lift=True):
    """World frames for grasp, pre-grasp and (table states) lift."""
    s = world.config.scene
    Tg = T_obj @ grasp.frame
    Tp = Tg.copy()
    Tp[:3, 3] -= s.pregrasp * Tg[:3, 2]
    out = [Tg, Tp]
    if lift:
        Tl = Tg.copy()
        Tl[:3, 3] += [0.0, 0.0, s.lift]
        out.append(Tl)
    return out


class ObjectContext:
    """Per-object caches: node IK, handover IK, compatibility, motions."""

    def __init__(self, world, obj):
        self.world = world
        self.obj = obj
        self._table_nodes = {}        # (placement, yaw key, arm, gid) -> NodeConfigs
        self._table_ik = {}           # same keys, IK only (not yet collision checked)
        self._handover_nodes = {}     # (k, arm, gid) -> NodeConfigs
        self.motion_cache = {}
        self._compat = None
        self._bridge = {}

    # -- scenes ---------------------------------------------------------
    def hand_boxes(self, grasp=None):
        g = self.world.config.gripper
        return tuple(g.boxes(None if grasp is None else grasp.jaw_width))

    def held_boxes(self, grasp):
        """Object boxes in the tool frame while held by ``grasp``."""
        return self.obj.boxes_in(inv(grasp.frame))

    def scene(self, arm, T_obj=None, held=None, other_q=None, other_held=None,
              other_grasp=None, allow=0.0, jaw_grasp=None):
        """Planning scene for ``arm``.

        ``T_obj`` places the object as a static obstacle, ``held`` attaches it
        to the active tool via that grasp, ``other_held`` to the frozen arm.
        """
        w = self.world
        obst = () if T_obj is None else self.obj.boxes_in(T_obj)
        jg = held if held is not None else jaw_grasp
        return PlanningScene(
            robot=w.robot, arm=arm, obstacles=obst, table=(w.table,),
            hand=self.hand_boxes(jg), held=() if held is None else self.held_boxes(held),
            other_q=other_q,
            other_hand=self.hand_boxes(other_held if other_held is not None else other_grasp),
            other_held=() if other_held is None else self.held_boxes(other_held),
            allow=allow, eps=w.config.motion.eps)

    # -- node configurations --------------------------------------------
    def _solve_nodes(self, arm, items, lift):
        """IK for grasp, pre-grasp (and lift) of many (object pose, grasp) items."""
        w = self.world
        a = w.robot.arms[arm]
        if not items:
            return []
        frames = [grasp_targets(w, T, g, lift) for T, g in items]
        Tg = np.array([f[0] for f in frames])
        qg, okg = ik_batch(a, Tg, None, w.config.ik)
        out = [None] * len(items)
        idx = np.nonzero(okg)[0]
        for i in np.nonzero(~okg)[0]:
            out[i] = NodeConfigs(False, reason="ik grasp")
        if len(idx) == 0:
            return out
        seeds = [[qg[i]] for i in idx]
        Tp = np.array([frames[i][1] for i in idx])
        qp, okp = ik_batch(a, Tp, seeds, w.config.ik)
        if lift:
            Tl = np.array([frames[i][2] for i in idx])
            ql, okl = ik_batch(a, Tl, seeds, w.config.ik)
        else:
            ql, okl = np.full_like(qp, np.nan), np.ones(len(idx), dtype=bool)
        for n, i in enumerate(idx):
            if not okp[n]:
                out[i] = NodeConfigs(False, reason="ik pregrasp")
            elif not okl[n]:
                out[i] = NodeConfigs(False, reason="ik lift")
            else:
                out[i] = NodeConfigs(True, qg[i], qp[n], ql[n] if lift else None)
        return out

    def _collide_table_node(self, arm, T_obj, g, c):
        """Collision checks of the approach and lift segments of one node."""
        from regrasp.motion import segment_valid
        if not c.ok:
            return c
        step = self.world.config.motion.step
        free = self.scene(arm, T_obj=T_obj, jaw_grasp=g)
        if not segment_valid(free, c.pre, c.grasp, step):
            return NodeConfigs(False, reason="collision approach")
        hold = self.scene(arm, held=g, allow=self.world.config.scene.set_down_allow)
        if not segment_valid(hold, c.grasp, c.lift, step):
            return NodeConfigs(False, reason="collision lift")
        return c

    def table_nodes_multi(self, arm, requests):
        """NodeConfigs for (placement, yaw, yaw_key, gid) requests, batched.

        Requests with a ``yaw_key`` (sampled yaws) are cached; task-specific
        yaws (key None) are recomputed each call.
        """
        keyed = [(p, yk, gid) for p, yaw, yk, gid in requests if yk is not None]
        self.sampled_ik(arm, keyed)
        res = {}
        loose = [(p, yaw, gid) for p, yaw, yk, gid in requests if yk is None]
        items = [(self.world.placement_pose(p, yaw), self.obj.grasp(gid)) for p, yaw, gid in loose]
        confs = self._solve_nodes(arm, items, lift=True)
        for (p, yaw, gid), (T, g), c in zip(loose, items, confs):
            res[(p.id, float(yaw), gid)] = self._collide_table_node(arm, T, g, c)
        for p, yk, gid in keyed:
            res[(p.id, yk, gid)] = self.sampled_node(arm, p, yk, gid)
        return res

    def sampled_ik(self, arm, requests):
        """Batched IK (no collision checks) for (placement, yaw key, gid) requests."""
        yaws = self.world.yaw_samples()
        todo = [(p, yk, gid) for p, yk, gid in requests
                if (p.id, yk, arm, gid) not in self._table_ik
                and (p.id, yk, arm, gid) not in self._table_nodes]
        items = [(self.world.placement_pose(p, yaws[yk]), self.obj.grasp(gid))
                 for p, yk, gid in todo]
        for (p, yk, gid), c in zip(todo, self._solve_nodes(arm, items, lift=True)):
            self._table_ik[(p.id, yk, arm, gid)] = c

    def sampled_node(self, arm, placement, yk, gid):
        """Collision-checked NodeConfigs at sampled yaw ``yk``, checked on first use."""
        key = (placement.id, yk, arm, gid)
        if key not in self._table_nodes:
            if key not in self._table_ik:
                self.sampled_ik(arm, [(placement, yk, gid)])
            T = self.world.placement_pose(placement, self.world.yaw_samples()[yk])
            self._table_nodes[key] = self._collide_table_node(arm, T, self.obj.grasp(gid),
                                                              self._table_ik.pop(key))
        return self._table_nodes[key]

    def table_ik(self, arm, placement, yaw, gids):
        """IK-only NodeConfigs at a task yaw (no collision checks), batched."""
        T = self.world.placement_pose(placement, yaw)
        confs = self._solve_nodes(arm, [(T, self.obj.grasp(g)) for g in gids], lift=True)
        return dict(zip(gids, confs))

    def check_table_nodes(self, arm, placement, yaw, confs):
        """Collision-check IK-only NodeConfigs from ``table_ik``."""
        T = self.world.placement_pose(placement, yaw)
        return {g: self._collide_table_node(arm, T, self.obj.grasp(g), c)
                for g, c in confs.items()}

    def table_nodes(self, arm, placement, yaw, gids, yaw_key=None):
        r = self.table_nodes_multi(arm, [(placement, yaw, yaw_key, g) for g in gids])
        k = yaw_key if yaw_key is not None else float(yaw)
        return {g: r[(placement.id, k, g)] for g in gids}

    def handover_nodes(self, arm, k, gids):
        """NodeConfigs at handover rotation ``k``, crossing rule included."""
        from regrasp.handover import crossing_ok
        from regrasp.motion import segment_valid
        w = self.world
        todo = [g for g in gids if (k, arm, g) not in self._handover_nodes]
        if todo:
            T = w.handover_pose(self.obj, k)
            R = w.rotations[k]
            lim = w.config.handover.crossing_limit
            side = w.side(arm)
            keep = []
            for g in todo:
                if crossing_ok(self.obj.grasp(g), R, side, lim):
                    keep.append(g)
                else:
                    self._handover_nodes[(k, arm, g)] = NodeConfigs(False, reason="crossing")
            grasps = [self.obj.grasp(g) for g in keep]
            confs = self._solve_nodes(arm, [(T, g) for g in grasps], lift=False)
            step = w.config.motion.step
            for g, c in zip(keep, confs):
                if c.ok:
                    # receiving hand approaches a free-floating object; the
                    # carrying hand holds it, both against the static world
                    free = self.scene(arm, T_obj=T, jaw_grasp=self.obj.grasp(g))
                    if not segment_valid(free, c.pre, c.grasp, step):
                        c = NodeConfigs(False, reason="collision approach")
                self._handover_nodes[(k, arm, g)] = c
        return {g: self._handover_nodes[(k, arm, g)] for g in gids}

    # -- handover pairs ---------------------------------------------------
    def compatibility(self):
        if self._compat is None:
            gr = self.world.config.gripper
            self._compat = gripper_compatibility(list(self.obj.grasps), list(self.obj.grasps), gr)
        return self._compat

    # -- scene descriptors ------------------------------------------------
    def scene_from(self, d):
        """Planning scene from a plain descriptor (see :func:`scene_desc`)."""
        g = self.obj.grasp
        return self.scene(
            d["arm"],
            T_obj=None if d["object_pose"] is None else np.array(d["object_pose"]).reshape(4, 4),
            held=None if d["held"] is None else g(d["held"]),
            jaw_grasp=None if d["jaw"] is None else g(d["jaw"]),
            other_q=np.array(d["other_q"]),
            other_held=None if d["other_held"] is None else g(d["other_held"]),
            other_grasp=None if d["other_jaw"] is None else g(d["other_jaw"]),
            allow=d["allow"])


def scene_desc(arm, other_q, object_pose=None, held=None, jaw=None, other_held=None,
               other_jaw=None, allow=0.0):
    """JSON-friendly description of a planning scene."""
    return {
        "arm": arm,
        "object_pose": None if object_pose is None
        else [float(x) for x in np.asarray(object_pose).reshape(-1)],
        "held": None if held is None else int(held),
        "jaw": None if jaw is None else int(jaw),
        "other_q": [float(x) for x in np.asarray(other_q)],
        "other_held": None if other_held is None else int(other_held),
        "other_jaw": None if other_jaw is None else int(other_jaw),
        "allow": float(allow),
    }


def desc_key(d):
    return tuple((k, tuple(np.round(v, 10)) if isinstance(v, list) else v)
                 for k, v in sorted(d.items()))
