"""Handover position and rotation planning for the two-arm case.

Three discretisation levels: lattice points on the mid-plane, approach
directions on the hemisphere facing each arm, and rotations of the hand about
each direction. IK feasibility and manipulability of every sample give the
per-arm approach maps; the optimal handover position is the lattice point
both arms approach best.
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from regrasp.geometry.collision import CONTACT_EPS, box_box_separation, stack_boxes
from regrasp.geometry.transforms import perpendicular, rot_z, rotation_angles
from regrasp.kinematics import IKConfig, ik_batch, manipulability


class EmptyMap(RuntimeError):
    pass


class CacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class HandoverConfig:
    plane_y: float = 0.0
    x_range: tuple = (0.2, 0.6)
    z_range: tuple = (0.1, 0.5)
    spacing: float = 0.05
    direction_step: float = np.pi / 4
    rotation_step: float = np.pi / 4
    threshold: float = 0.01
    count_mode: str = "pairs"          # "pairs" or "directions"
    n_rotations: int = 352
    crossing_limit: float = 0.2

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("lattice spacing must be positive")
        if self.count_mode not in ("pairs", "directions"):
            raise ValueError(f"unknown count mode {self.count_mode!r}")


@dataclass(frozen=True, eq=False)
class LatticeGrid:
    points: np.ndarray      # (G, 3)
    spacing: float
    shape: tuple = ()

    @classmethod
    def on_plane(cls, x_range, z_range, spacing, plane_y=0.0):
        xs = np.arange(x_range[0], x_range[1] + spacing * 0.5, spacing)
        zs = np.arange(z_range[0], z_range[1] + spacing * 0.5, spacing)
        X, Z = np.meshgrid(xs, zs, indexing="ij")
        pts = np.stack([X.ravel(), np.full(X.size, plane_y), Z.ravel()], axis=1)
        return cls(points=np.round(pts, 12), spacing=spacing, shape=X.shape)


def hemisphere_directions(pole, step=np.pi / 4):
    """Unit directions from the lattice point towards the arm (hand side).

    Elevation rings at multiples of ``step`` from the mid-plane up to the pole;
    each ring below the pole has ``2 pi / step`` azimuths in the x-z plane.
    """
    pole = np.asarray(pole, dtype=float)
    n_az = int(round(2 * np.pi / step))
    n_el = int(round((np.pi / 2) / step))
    out = []
    for k in range(n_el + 1):
        e = k * step
        if k == n_el:
            out.append(pole.copy())
            break
        for a in range(n_az):
            phi = a * step
            d = np.cos(e) * np.array([np.cos(phi), 0.0, np.sin(phi)]) + np.sin(e) * pole
            out.append(d / np.linalg.norm(d))
    return np.array(out)


def hand_frames(point, directions, n_roll):
    """Tool frames at ``point`` with z along -direction, rolled about z."""
    out = []
    for d in directions:
        z = -d
        x0 = perpendicular(z)
        y0 = np.cross(z, x0)
        base = np.stack([x0, y0, z], axis=1)
        for r in range(n_roll):
            T = np.eye(4)
            T[:3, :3] = base @ rot_z(2 * np.pi * r / n_roll)
            T[:3, 3] = point
            out.append(T)
    return np.array(out)


@dataclass(frozen=True, eq=False)
class ApproachMap:
    grid: LatticeGrid
    directions: np.ndarray          # (D, 3)
    manip: np.ndarray               # (G, D, R); 0 where IK fails
    arm: str = ""

    def approachability(self, threshold=0.01, mode="pairs"):
        ok = self.manip > threshold
        if mode == "pairs":
            return ok.sum(axis=(1, 2))
        if mode == "directions":
            return ok.any(axis=2).sum(axis=1)
        raise ValueError(f"unknown count mode {mode!r}")

    def total_manipulability(self, threshold=0.01):
        return np.where(self.manip > threshold, self.manip, 0.0).sum(axis=(1, 2))


def _arm_pole(robot, arm_name, plane_y):
    side = robot.arms[arm_name].base[1, 3] - plane_y
    return np.array([0.0, np.sign(side) if side != 0 else -1.0, 0.0])


def build_approach_map(robot, arm_name, config=HandoverConfig(), ik_config=IKConfig()):
    grid = LatticeGrid.on_plane(config.x_range, config.z_range, config.spacing, config.plane_y)
    dirs = hemisphere_directions(_arm_pole(robot, arm_name, config.plane_y),
                                 config.direction_step)
    n_roll = int(round(2 * np.pi / config.rotation_step))
    arm = robot.arms[arm_name]
    targets = np.concatenate([hand_frames(p, dirs, n_roll) for p in grid.points])
    q, ok = ik_batch(arm, targets, None, ik_config)
    m = np.zeros(len(targets))
    if ok.any():
        m[ok] = manipulability(arm, q[ok])
    return ApproachMap(grid=grid, directions=dirs,
                       manip=m.reshape(len(grid.points), len(dirs), n_roll), arm=arm_name)


def optimal_position(maps, threshold=0.01, mode="pairs"):
    """Lattice point maximising the smaller approachability of the two arms.

    Ties go to the larger summed manipulability, then to the lexicographically
    smallest position. Returns (point, index).
    """
    maps = list(maps)
    pts = maps[0].grid.points
    counts = np.array([m.approachability(threshold, mode) for m in maps])
    worst = counts.min(axis=0)
    if worst.max() <= 0:
        raise EmptyMap("no lattice point is approachable by both arms")
    total = np.array([m.total_manipulability(threshold) for m in maps]).sum(axis=0)
    order = sorted(range(len(pts)),
                   key=lambda i: (-int(worst[i]), -round(float(total[i]), 12), *pts[i]))
    best = order[0]
    return pts[best].copy(), best


# ------------------------------------------------------------------ cache

MAGIC = b"RGAMAP"
VERSION = 1


def config_hash(robot_dict, config):
    blob = json.dumps({"robot": robot_dict, "handover": asdict(config)}, sort_keys=True,
                      default=lambda o: np.asarray(o).tolist())
    return hashlib.sha256(blob.encode()).digest()


def save_maps(path, digest, maps):
    arr = np.stack([m.manip for m in maps]).astype("<f8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(digest)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_maps_array(path, digest):
    """Dense (arms, G, D, R) array from a cache file; CacheError on any mismatch."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CacheError("bad magic")
    off = len(MAGIC)
    (ver,) = struct.unpack_from("<I", data, off)
    off += 4
    if ver != VERSION:
        raise CacheError(f"unsupported cache version {ver}")
    stored = data[off:off + 32]
    off += 32
    if stored != digest:
        raise CacheError("config hash mismatch")
    (nd,) = struct.unpack_from("<I", data, off)
    off += 4
    shape = struct.unpack_from(f"<{nd}I", data, off)
    off += 4 * nd
    arr = np.frombuffer(data, dtype="<f8", offset=off)
    if arr.size != int(np.prod(shape)):
        raise CacheError("truncated cache")
    return arr.reshape(shape).astype(float)


def approach_maps(robot, robot_dict, config=HandoverConfig(), ik_config=IKConfig(),
                  cache_dir=None, rebuild=False):
    """Approach maps for (master, slave), read from or written to the cache."""
    names = (robot.master, robot.slave)
    digest = config_hash({"robot": robot_dict, "ik": asdict(ik_config)}, config)
    path = None if cache_dir is None else Path(cache_dir) / f"approach_{digest.hex()[:16]}.bin"
    if path is not None and path.exists() and not rebuild:
        try:
            arr = load_maps_array(path, digest)
            grid = LatticeGrid.on_plane(config.x_range, config.z_range, config.spacing,
                                        config.plane_y)
            return [ApproachMap(grid, hemisphere_directions(
                        _arm_pole(robot, n, config.plane_y), config.direction_step), a, n)
                    for n, a in zip(names, arr)]
        except CacheError:
            pass
    maps = [build_approach_map(robot, n, config, ik_config) for n in names]
    if path is not None:
        save_maps(path, digest, maps)
    return maps


# -------------------------------------------------------------- rotations

def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _section(d):
    """Rotation taking +z to d (a fixed, smooth-almost-everywhere choice)."""
    z = d / np.linalg.norm(d)
    x = perpendicular(z)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def sample_rotations(count, n_roll=8):
    """Layered Hopf sampling: Fibonacci directions times evenly spaced rolls.

    Left-multiplied so the first sample is the identity (Haar measure is
    invariant under this). Returns (rotations (count, 3, 3), bucket ids), the
    bucket being the direction layer of each sample.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n_roll = min(n_roll, count)
    n_dir = -(-count // n_roll)
    dirs = fibonacci_sphere(n_dir)
    rots, buckets = [], []
    for i, d in enumerate(dirs):
        S = _section(d)
        for r in range(n_roll):
            rots.append(S @ rot_z(2 * np.pi * (r + 0.5 * (i % 2)) / n_roll))
            buckets.append(i)
    rots = np.array(rots[:count])
    rots = np.einsum("ji,njk->nik", rots[0], rots)
    return rots, np.array(buckets[:count])


def rate_rotations(rotations, buckets, goal_rotation):
    """Order rotations round-robin over buckets by angular distance to the goal.

    Round r takes the r-th nearest rotation of every bucket, buckets in index
    order. Returns (order, ratings) with ratings indexed like ``rotations``.
    """
    rating = rotation_angles(np.asarray(goal_rotation), np.asarray(rotations))
    per = {}
    for k in np.lexsort((np.arange(len(rating)), rating)):
        per.setdefault(int(buckets[k]), []).append(int(k))
    order = []
    rounds = max(len(v) for v in per.values()) if per else 0
    for r in range(rounds):
        for b in sorted(per):
            if r < len(per[b]):
                order.append(per[b][r])
    return order, rating


# ----------------------------------------------------------- grasp pairs

@dataclass(frozen=True, eq=False)
class HandoverPose:
    id: int
    position: np.ndarray
    rotation: np.ndarray
    rating: float
    bucket: int = 0
    master_grasps: tuple = ()    # (grasp id, valid)
    slave_grasps: tuple = ()
    pairs: tuple = ()            # compatible (master id, slave id)

    @property
    def transform(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def to_dict(self):
        return {"id": self.id, "position": self.position.tolist(),
                "rotation": self.rotation.tolist(), "rating": self.rating,
                "bucket": self.bucket, "pairs": [list(p) for p in self.pairs]}


def posed_gripper_boxes(gripper, grasp):
    """Gripper boxes expressed in the object frame for one grasp."""
    return [b.transformed(grasp.frame) for b in gripper.boxes(grasp.jaw_width)]


def gripper_compatibility(master_grasps, slave_grasps, gripper_m, gripper_s=None,
                          eps=CONTACT_EPS):
    """Boolean matrix: posed master and slave grippers do not touch.

    Both grippers are rigidly attached to the object at a handover, so the
    result does not depend on the handover rotation.
    """
    gripper_s = gripper_m if gripper_s is None else gripper_s
    cm, Rm, hm = _grasp_boxes(master_grasps, gripper_m)
    cs, Rs, hs = _grasp_boxes(slave_grasps, gripper_s)
    nm, ns = len(master_grasps), len(slave_grasps)
    if nm == 0 or ns == 0:
        return np.zeros((nm, ns), dtype=bool)
    gap = box_box_separation(cm[:, None, :, None], Rm[:, None, :, None], hm[:, None, :, None],
                             cs[None, :, None], Rs[None, :, None], hs[None, :, None])
    return gap.reshape(nm, ns, -1).min(axis=-1) > eps


def _grasp_boxes(grasps, gripper):
    if not grasps:
        return np.zeros((0, 3, 3)), np.zeros((0, 3, 3, 3)), np.zeros((0, 3, 3))
    cs, Rs, hs = zip(*(stack_boxes(posed_gripper_boxes(gripper, g)) for g in grasps))
    return np.array(cs), np.array(Rs), np.array(hs)


def crossing_ok(grasp, rotation, side_sign, limit=0.2):
    """Hand-side vector must not reach ``limit`` into the other arm's half-space.

    ``side_sign`` is the sign of the arm's own lateral side (-1 for a right arm
    at negative y).
    """
    h = -(np.asarray(rotation) @ grasp.approach)
    return bool(-side_sign * h[1] < limit)


def associate_handover_grasps(pose, master_grasps, slave_grasps, gripper_m, gripper_s=None,
                              compat=None, master_side=-1.0, limit=0.2):
    """Flag per-hand grasps by the crossing rule and list compatible pairs."""
    if compat is None:
        compat = gripper_compatibility(master_grasps, slave_grasps, gripper_m, gripper_s)
    mv = [crossing_ok(g, pose.rotation, master_side, limit) for g in master_grasps]
    sv = [crossing_ok(g, pose.rotation, -master_side, limit) for g in slave_grasps]
    pairs = tuple((master_grasps[i].id, slave_grasps[j].id)
                  for i in range(len(master_grasps)) if mv[i]
                  for j in range(len(slave_grasps)) if sv[j] and compat[i, j])
    return HandoverPose(id=pose.id, position=pose.position, rotation=pose.rotation,
                        rating=pose.rating, bucket=pose.bucket,
                        master_grasps=tuple((g.id, v) for g, v in zip(master_grasps, mv)),
                        slave_grasps=tuple((g.id, v) for g, v in zip(slave_grasps, sv)),
                        pairs=pairs)
