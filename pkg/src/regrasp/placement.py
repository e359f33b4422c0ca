"""Stable table placements and their table-collision-free grasps."""
from dataclasses import dataclass, field, replace

import numpy as np

from regrasp.geometry.collision import CONTACT_EPS
from regrasp.geometry.hull import convex_hull
from regrasp.geometry.mesh import polygon_signed_distance
from regrasp.geometry.transforms import align


@dataclass(frozen=True, eq=False)
class Placement:
    id: int
    rotation: np.ndarray          # object frame -> table frame, yaw canonicalised to 0
    transform: np.ndarray         # full 4x4 object -> placement frame (COM over the origin)
    facet: int
    support_polygon: np.ndarray   # (k, 2) in the table plane
    rest_height: float            # height of the object frame origin above the table
    margin: float = 0.0           # distance of the COM projection inside the support polygon
    grasps: dict = field(default_factory=dict)   # hand -> tuple of (grasp id, valid)

    def valid_grasps(self, hand="right"):
        return [gid for gid, ok in self.grasps.get(hand, ()) if ok]

    def to_dict(self):
        return {
            "id": self.id,
            "facet": self.facet,
            "rotation": self.rotation.tolist(),
            "transform": self.transform.reshape(-1).tolist(),
            "support_polygon": self.support_polygon.tolist(),
            "rest_height": self.rest_height,
            "margin": self.margin,
            "valid_grasps": {h: self.valid_grasps(h) for h in self.grasps},
        }


def candidate_placements(hull):
    """One (facet index, rotation) per hull facet, facet flush on the table."""
    return [(k, align(f.normal, [0.0, 0.0, -1.0])) for k, f in enumerate(hull.facets)]


def stability_filter(candidates, hull, center_of_mass, margin=0.005):
    """Keep candidates whose COM projects at least ``margin`` inside the support."""
    out = []
    com = np.asarray(center_of_mass, dtype=float)
    for k, R in candidates:
        facet = hull.facets[k]
        poly = facet.polygon @ R.T
        c = R @ com
        poly2 = poly[:, :2] - c[:2]
        # ensure counter-clockwise in the table plane
        area = 0.5 * np.sum(poly2[:, 0] * np.roll(poly2[:, 1], -1)
                            - np.roll(poly2[:, 0], -1) * poly2[:, 1])
        if area < 0:
            poly2 = poly2[::-1]
        d = float(polygon_signed_distance(np.zeros((1, 2)), poly2)[0])
        if d < margin:
            continue
        z0 = float((hull.points @ R.T)[:, 2].min())
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = [-c[0], -c[1], -z0]
        out.append(Placement(id=len(out), rotation=R, transform=T, facet=k,
                             support_polygon=poly2, rest_height=-z0, margin=d))
    return out


def gripper_min_z(gripper, frames, jaw_widths):
    """Lowest gripper-box corner height for each posed grasp frame."""
    lows = np.empty(len(frames))
    for n, (T, w) in enumerate(zip(frames, jaw_widths)):
        zs = [b.transformed(T).corners()[:, 2].min() for b in gripper.boxes(w)]
        lows[n] = min(zs)
    return lows


def associate_grasps(placement, grasps, gripper, hands=("right",), eps=CONTACT_EPS):
    """Flag each grasp valid iff its posed gripper stays above the table plane.

    ``grasps`` is either one list shared by every hand or a dict hand -> list.
    """
    per_hand = grasps if isinstance(grasps, dict) else {h: grasps for h in hands}
    assoc = {}
    for hand, gl in per_hand.items():
        frames = [placement.transform @ g.frame for g in gl]
        low = gripper_min_z(gripper, frames, [g.jaw_width for g in gl])
        assoc[hand] = tuple((g.id, bool(z > eps)) for g, z in zip(gl, low))
    return replace(placement, grasps=assoc)


def plan_placements(mesh, grasps, gripper, margin=0.005, angle_tol=0.01, hands=("right",)):
    hull = convex_hull(mesh.vertices, angle_tol=angle_tol)
    cands = candidate_placements(hull)
    stable = stability_filter(cands, hull, mesh.com, margin)
    return [associate_grasps(p, grasps, gripper, hands) for p in stable]
