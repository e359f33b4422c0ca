"""Convex hulls with coplanar facets merged into planar polygons."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull as _QHull
from scipy.spatial import QhullError

from regrasp.geometry.transforms import perpendicular


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HullFacet:
    normal: np.ndarray     # outward unit normal
    offset: float          # plane: normal . x + offset = 0
    polygon: np.ndarray    # (k, 3) ordered counter-clockwise about the normal
    vertex_ids: tuple      # indices into the input point array

    def signed_distance(self, pts):
        return np.asarray(pts) @ self.normal + self.offset


@dataclass(frozen=True, eq=False)
class ConvexHull:
    points: np.ndarray
    vertex_ids: tuple
    facets: tuple

    @property
    def vertices(self):
        return self.points[list(self.vertex_ids)]

    def max_violation(self, pts):
        pts = np.asarray(pts, dtype=float)
        return max(float(f.signed_distance(pts).max()) for f in self.facets)


def convex_hull(points, angle_tol=0.01, dist_tol=1e-9):
    """Convex hull of 3D points; coplanar triangles are merged into facets."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) < 4:
        raise DegenerateInput("need at least 4 points")
    centred = P - P.mean(axis=0)
    scale = max(np.abs(centred).max(), 1e-300)
    if np.linalg.matrix_rank(centred / scale, tol=1e-9) < 3:
        raise DegenerateInput("points are coplanar or collinear")
    try:
        qh = _QHull(P)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from None

    eq = qh.equations
    simplices = qh.simplices
    n_s = len(simplices)
    # union coplanar neighbouring simplices
    parent = list(range(n_s))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    cos_tol = np.cos(angle_tol)
    tol = dist_tol * max(1.0, scale) * 10
    for i in range(n_s):
        for j in qh.neighbors[i]:
            if j <= i:
                continue
            if eq[i, :3] @ eq[j, :3] >= cos_tol and abs(eq[i, 3] - eq[j, 3]) <= max(tol, 1e-7 * scale):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n_s):
        groups.setdefault(find(i), []).append(i)

    facets = []
    for members in groups.values():
        areas = []
        for s in members:
            a, b, c = P[simplices[s]]
            areas.append(0.5 * np.linalg.norm(np.cross(b - a, c - a)))
        areas = np.asarray(areas)
        n = (eq[members, :3] * areas[:, None]).sum(0)
        n /= np.linalg.norm(n)
        ids = sorted({int(v) for s in members for v in simplices[s]})
        pts = P[ids]
        offset = -float(np.max(pts @ n))
        ctr = pts.mean(axis=0)
        u = perpendicular(n)
        v = np.cross(n, u)
        ang = np.arctan2((pts - ctr) @ v, (pts - ctr) @ u)
        order = np.argsort(ang)
        ids = [ids[k] for k in order]
        poly = P[ids]
        # drop points lying on polygon edges (collinear)
        keep = []
        m = len(poly)
        for k in range(m):
            a, b, c = poly[k - 1], poly[k], poly[(k + 1) % m]
            if np.linalg.norm(np.cross(b - a, c - b)) > 1e-12 * scale * scale:
                keep.append(k)
        facets.append(HullFacet(normal=n, offset=offset,
                                polygon=poly[keep], vertex_ids=tuple(ids[k] for k in keep)))
    # deterministic facet order: by normal components
    facets.sort(key=lambda f: tuple(np.round(-f.normal, 9)) + (round(f.offset, 12),))
    return ConvexHull(points=P, vertex_ids=tuple(int(i) for i in qh.vertices),
                      facets=tuple(facets))
