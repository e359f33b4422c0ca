"""Antipodal parallel-jaw grasp planning in the object's local frame."""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from regrasp.geometry.collision import Box, pairwise_collision
from regrasp.geometry.mesh import cluster_facets, polygon_signed_distance, sample_cluster
from regrasp.geometry.transforms import perpendicular


class NoGraspsFound(RuntimeError):
    pass


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw hand: a box palm and two box fingers.

    The tool frame sits midway between the fingertip contact centres with +z
    the approach direction (palm behind, at -z) and +y the closing axis.
    """
    finger_width: float = 0.02
    finger_thickness: float = 0.01
    finger_length: float = 0.05
    tip_depth: float = 0.01         # finger extent past the contact centre along +z
    max_opening: float = 0.08
    palm_size: tuple = (0.04, 0.10, 0.03)
    mu: float = 0.5
    clearance: float = 0.002        # finger standoff from the contact faces when posed
    pad_halfwidth: float = 0.005    # contact patch half-width along the finger width

    def __post_init__(self):
        dims = [self.finger_width, self.finger_thickness, self.finger_length,
                self.max_opening, *self.palm_size]
        if min(dims) <= 0:
            raise ValueError("gripper dimensions must be positive")
        if not 0 < self.mu <= 2:
            raise ValueError("friction coefficient must lie in (0, 2]")

    @property
    def tcp_depth(self):
        """Distance from the palm's back face to the tool centre point."""
        return self.finger_length - self.tip_depth + self.palm_size[2]

    def boxes(self, jaw_width=None):
        """Palm and finger boxes in the tool frame, fingers set for ``jaw_width``."""
        w = self.max_opening if jaw_width is None else jaw_width
        t = self.finger_thickness
        fz = self.tip_depth - self.finger_length / 2
        fy = w / 2 + self.clearance + t / 2
        fh = np.array([self.finger_width / 2, t / 2, self.finger_length / 2])
        px, py, pz = self.palm_size
        palm_z = self.tip_depth - self.finger_length - pz / 2
        palm_y = max(py, w + 2 * (t + self.clearance))
        I = np.eye(3)
        return [Box(np.array([0.0, 0.0, palm_z]), I, np.array([px / 2, palm_y / 2, pz / 2])),
                Box(np.array([0.0, -fy, fz]), I, fh),
                Box(np.array([0.0, fy, fz]), I, fh)]

    def mesh(self, jaw_width=None):
        parts = [b.to_mesh() for b in self.boxes(jaw_width)]
        V = np.vstack([p.vertices for p in parts])
        offs = np.cumsum([0] + [len(p.vertices) for p in parts[:-1]])
        F = np.vstack([p.triangles + o for p, o in zip(parts, offs)])
        from regrasp.geometry.mesh import TriMesh
        return TriMesh.from_arrays(V, F)


@dataclass(frozen=True)
class GraspConfig:
    sample_step: float = 0.01
    angle_tol: float = 0.01
    opposition_tol: float = 0.05
    boundary_margin: float = 0.002
    torque_ratio: float = 0.3
    cone_edges: int = 8
    quality_threshold: float = 1e-3
    n_approach: int = 8


@dataclass(frozen=True, eq=False)
class Grasp:
    id: int
    c1: np.ndarray
    c2: np.ndarray
    n1: np.ndarray               # outward surface normals at the contacts
    n2: np.ndarray
    approach: np.ndarray
    frame: np.ndarray            # gripper tool frame in the object frame
    jaw_width: float
    quality: float
    clusters: tuple = ()
    approach_index: int = 0
    key: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "id": self.id,
            "contacts": [self.c1.tolist(), self.c2.tolist()],
            "normals": [self.n1.tolist(), self.n2.tolist()],
            "approach": self.approach.tolist(),
            "frame": self.frame.reshape(-1).tolist(),
            "jaw_width": self.jaw_width,
            "quality": self.quality,
            "clusters": list(self.clusters),
            "approach_index": self.approach_index,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(id=d["id"], c1=np.array(d["contacts"][0]), c2=np.array(d["contacts"][1]),
                   n1=np.array(d["normals"][0]), n2=np.array(d["normals"][1]),
                   approach=np.array(d["approach"]),
                   frame=np.array(d["frame"], dtype=float).reshape(4, 4),
                   jaw_width=d["jaw_width"], quality=d["quality"],
                   clusters=tuple(d.get("clusters", ())),
                   approach_index=d.get("approach_index", 0))


def candidate_pairs(clusters, points, gripper, opposition_tol=0.05):
    """Contact pairs on anti-parallel clusters whose segment runs along the normals.

    ``points[i]`` are the sampled contacts of ``clusters[i]``. Returns tuples
    ``(c1, c2, i, j)`` with ``i < j``.
    """
    cos_tol = np.cos(opposition_tol)
    out = []
    for i, ca in enumerate(clusters):
        for j in range(i + 1, len(clusters)):
            cb = clusters[j]
            if ca.normal @ cb.normal > -cos_tol:
                continue
            P, Q = np.asarray(points[i]), np.asarray(points[j])
            if len(P) == 0 or len(Q) == 0:
                continue
            D = Q[None, :, :] - P[:, None, :]
            dist = np.linalg.norm(D, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                along = -(D @ ca.normal) / dist
            ok = (dist > 1e-9) & (dist <= gripper.max_opening + 1e-12) & (along >= cos_tol)
            for a, b in zip(*np.nonzero(ok)):
                out.append((P[a], Q[b], i, j))
    return out


def stability_filter(c1, c2, cluster_a, cluster_b, boundary_margin, com, max_extent,
                     torque_ratio=0.3):
    """Keep pairs away from cluster edges whose grasp line passes near the COM."""
    for c, cl in ((c1, cluster_a), (c2, cluster_b)):
        d = polygon_signed_distance(cl.to_plane(c)[None], cl.polygon2d)[0]
        if d < boundary_margin:
            return False
    return torque_arm(c1, c2, com) <= torque_ratio * max_extent


def torque_arm(c1, c2, com):
    """Distance from the centre of mass to the line through the contacts."""
    d = (c2 - c1) / np.linalg.norm(c2 - c1)
    r = com - c1
    return float(np.linalg.norm(r - (r @ d) * d))


def contact_wrenches(c1, c2, n1, n2, mu, torque_scale, pad_axis=None, pad_halfwidth=0.0,
                     cone_edges=8, center=None):
    """Primitive wrenches of two friction-cone contacts.

    Each contact pushes along its inward normal; cone edges have unit normal
    component, so larger friction strictly enlarges the wrench set. With a
    ``pad_axis`` each contact is a patch represented by two points at
    ``+-pad_halfwidth`` along that axis, which is what lets two contacts
    resist torque about the grasp axis.
    """
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    rows = []
    for c, n in ((c1, n1), (c2, n2)):
        f_n = -np.asarray(n, dtype=float)
        f_n = f_n / np.linalg.norm(f_n)
        t1 = perpendicular(f_n)
        t2 = np.cross(f_n, t1)
        ang = 2 * np.pi * np.arange(cone_edges) / cone_edges
        F = f_n + mu * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)
        if pad_axis is None or pad_halfwidth <= 0:
            pts = [np.asarray(c, dtype=float)]
        else:
            ax = np.asarray(pad_axis, dtype=float)
            ax = ax - (ax @ f_n) * f_n
            ax = ax / np.linalg.norm(ax)
            pts = [c + pad_halfwidth * ax, c - pad_halfwidth * ax]
        for p in pts:
            tau = np.cross(p - center, F) / torque_scale
            rows.append(np.hstack([F, tau]))
    return np.vstack(rows)


def force_closure_quality(c1, c2, n1, n2, mu, torque_scale, pad_axis=None, pad_halfwidth=0.0,
                          cone_edges=8, center=None):
    """Radius of the largest origin-centred ball inside the wrench hull (0 if none)."""
    W = contact_wrenches(c1, c2, n1, n2, mu, torque_scale, pad_axis, pad_halfwidth,
                         cone_edges, center)
    return ball_radius(W)


def ball_radius(W):
    try:
        hull = ConvexHull(W)
    except (QhullError, ValueError):
        return 0.0
    eq = hull.equations
    d = -eq[:, -1] / np.linalg.norm(eq[:, :-1], axis=1)
    r = float(d.min())
    return r if r > 0 else 0.0


def grasp_frame(c1, c2, approach):
    y = (c2 - c1) / np.linalg.norm(c2 - c1)
    z = approach - (approach @ y) * y
    z = z / np.linalg.norm(z)
    x = np.cross(y, z)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2] = x, y, z
    T[:3, 3] = (c1 + c2) / 2
    return T


def approach_directions(c1, c2, n=8):
    """``n`` approach directions evenly spaced about the closing axis."""
    y = (c2 - c1) / np.linalg.norm(c2 - c1)
    u = perpendicular(y)
    v = np.cross(y, u)
    ang = 2 * np.pi * np.arange(n) / n
    return np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v


def gripper_collision_filter(grasps, mesh, gripper):
    """Drop grasps whose posed gripper touches the object."""
    keep = []
    gm = {}
    I = np.eye(4)
    for g in grasps:
        key = round(g.jaw_width, 12)
        if key not in gm:
            gm[key] = gripper.mesh(g.jaw_width)
        if not pairwise_collision(gm[key], g.frame, mesh, I):
            keep.append(g)
    return keep


def plan_grasps(mesh, gripper, config=GraspConfig()):
    """Cluster, sample, pair, score and collision-filter grasps.

    Output is sorted by quality (descending) and ids follow that order.
    """
    clusters = cluster_facets(mesh, config.angle_tol)
    points = [sample_cluster(c, config.sample_step) for c in clusters]
    com = mesh.com
    extent = mesh.extent
    pairs = candidate_pairs(clusters, points, gripper, config.opposition_tol)
    scored = []
    for c1, c2, i, j in pairs:
        if not stability_filter(c1, c2, clusters[i], clusters[j], config.boundary_margin,
                                com, extent, config.torque_ratio):
            continue
        n1, n2 = clusters[i].normal, clusters[j].normal
        for k, a in enumerate(approach_directions(c1, c2, config.n_approach)):
            T = grasp_frame(c1, c2, a)
            q = force_closure_quality(c1, c2, n1, n2, gripper.mu, extent, pad_axis=T[:3, 0],
                                      pad_halfwidth=gripper.pad_halfwidth,
                                      cone_edges=config.cone_edges, center=com)
            if q <= config.quality_threshold:
                continue
            key = (i, j, *np.round(c1, 9), *np.round(c2, 9), k)
            scored.append(Grasp(id=-1, c1=c1, c2=c2, n1=n1, n2=n2, approach=T[:3, 2].copy(),
                                frame=T, jaw_width=float(np.linalg.norm(c2 - c1)),
                                quality=q, clusters=(i, j), approach_index=k, key=key))
    kept = gripper_collision_filter(scored, mesh, gripper)
    kept.sort(key=lambda g: (-round(g.quality, 12), g.key))
    out = [Grasp(id=n, c1=g.c1, c2=g.c2, n1=g.n1, n2=g.n2, approach=g.approach, frame=g.frame,
                 jaw_width=g.jaw_width, quality=g.quality, clusters=g.clusters,
                 approach_index=g.approach_index, key=g.key) for n, g in enumerate(kept)]
    if not out:
        raise NoGraspsFound("no grasp survived filtering")
    return out
