"""Collision and distance primitives.

Two families live here: exact triangle-mesh tests (used for grasp and
placement filtering, and as oracles) and cheap convex primitives (capsules,
oriented boxes) used by the robot-level checks inside motion planning.
"""
from dataclasses import dataclass

import numpy as np

from regrasp.geometry.transforms import cross

CONTACT_EPS = 1e-4
_RAY_DIR = np.array([0.5773502691896258, 0.5773502691896258, 0.5773502691896258]) \
    + np.array([0.0123456789, -0.0234567891, 0.0031415926])
_RAY_DIR = _RAY_DIR / np.linalg.norm(_RAY_DIR)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def seg_seg_distance(p1, q1, p2, q2):
    """Distance between segments [p1, q1] and [p2, q2] (broadcasting)."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    tiny = 1e-30
    denom = a * e - b * b
    s = np.where(denom > 1e-14 * np.maximum(a * e, tiny),
                 np.clip((b * f - c * e) / np.where(denom > 0, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / np.where(e > tiny, e, 1.0)
    s_lo = np.clip(-c / np.where(a > tiny, a, 1.0), 0.0, 1.0)
    s_hi = np.clip((b - c) / np.where(a > tiny, a, 1.0), 0.0, 1.0)
    s = np.where(t < 0.0, s_lo, np.where(t > 1.0, s_hi, s))
    t = np.clip(t, 0.0, 1.0)
    # degenerate segments
    s = np.where(a <= tiny, 0.0, s)
    t = np.where(a <= tiny, np.clip(f / np.where(e > tiny, e, 1.0), 0.0, 1.0), t)
    t = np.where(e <= tiny, 0.0, t)
    s = np.where((e <= tiny) & (a > tiny), s_lo, s)
    c1 = p1 + s[..., None] * d1
    c2 = p2 + t[..., None] * d2
    return np.linalg.norm(c1 - c2, axis=-1)


def point_seg_distance(p, a, b):
    ab = b - a
    t = np.clip(_dot(p - a, ab) / np.maximum(_dot(ab, ab), 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def point_tri_distance(p, a, b, c):
    """Distance from points to triangles (broadcasting over leading dims)."""
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=-1)
    n = n / np.maximum(nn, 1e-300)[..., None]
    h = _dot(p - a, n)
    proj = p - h[..., None] * n
    # inside test by signs of sub-triangle normals
    s0 = _dot(np.cross(b - a, proj - a), n)
    s1 = _dot(np.cross(c - b, proj - b), n)
    s2 = _dot(np.cross(a - c, proj - c), n)
    inside = (s0 >= 0) & (s1 >= 0) & (s2 >= 0)
    edge = np.minimum(np.minimum(point_seg_distance(p, a, b), point_seg_distance(p, b, c)),
                      point_seg_distance(p, c, a))
    return np.where(inside, np.abs(h), edge)


def seg_tri_intersect(p, q, a, b, c, eps=1e-12):
    """Moller-Trumbore restricted to the segment; parallel cases report False."""
    d = q - p
    e1 = b - a
    e2 = c - a
    h = np.cross(d, e2)
    det = _dot(e1, h)
    ok = np.abs(det) > eps * np.maximum(_dot(d, d) * _dot(e1, e1), 1e-300) ** 0.5 * 1e-3
    inv = 1.0 / np.where(ok, det, 1.0)
    s = p - a
    u = _dot(s, h) * inv
    qv = np.cross(s, e1)
    v = _dot(d, qv) * inv
    t = _dot(e2, qv) * inv
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def tri_tri_distance(A, B):
    """Distance between paired triangles A[i], B[i] given as (n, 3, 3) arrays."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    hit = np.zeros(len(A), dtype=bool)
    for i in range(3):
        pa, qa = A[:, i], A[:, (i + 1) % 3]
        pb, qb = B[:, i], B[:, (i + 1) % 3]
        hit |= seg_tri_intersect(pa, qa, B[:, 0], B[:, 1], B[:, 2])
        hit |= seg_tri_intersect(pb, qb, A[:, 0], A[:, 1], A[:, 2])
    d = np.full(len(A), np.inf)
    for i in range(3):
        pa, qa = A[:, i], A[:, (i + 1) % 3]
        for j in range(3):
            pb, qb = B[:, j], B[:, (j + 1) % 3]
            d = np.minimum(d, seg_seg_distance(pa, qa, pb, qb))
        d = np.minimum(d, point_tri_distance(A[:, i], B[:, 0], B[:, 1], B[:, 2]))
        d = np.minimum(d, point_tri_distance(B[:, i], A[:, 0], A[:, 1], A[:, 2]))
    return np.where(hit, 0.0, d)


def points_in_mesh(points, corners):
    """Ray-parity inside test of points against a closed triangle soup."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    e1 = b - a
    e2 = c - a
    h = np.cross(_RAY_DIR, e2)
    det = _dot(e1, h)
    ok = np.abs(det) > 1e-18
    inv = 1.0 / np.where(ok, det, 1.0)
    s = P[:, None, :] - a[None]
    u = _dot(s, h[None]) * inv
    qv = np.cross(s, e1[None])
    v = (qv @ _RAY_DIR) * inv
    t = _dot(qv, e2[None]) * inv
    hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return hits.sum(axis=1) % 2 == 1


def mesh_distance_below(cA, cB, eps):
    """True if any triangle of soup ``cA`` comes within ``eps`` of soup ``cB``."""
    loA, hiA = cA.min(axis=1) - eps, cA.max(axis=1) + eps
    loB, hiB = cB.min(axis=1), cB.max(axis=1)
    # global box cull first
    if np.any(loA.min(0) > hiB.max(0)) or np.any(loB.min(0) > hiA.max(0)):
        return False
    ov = np.all((loA[:, None] <= hiB[None]) & (loB[None] <= hiA[:, None]), axis=-1)
    ia, ib = np.nonzero(ov)
    if len(ia) == 0:
        return False
    chunk = 20000
    for k in range(0, len(ia), chunk):
        d = tri_tri_distance(cA[ia[k:k + chunk]], cB[ib[k:k + chunk]])
        if np.any(d < eps):
            return True
    return False


def pairwise_collision(meshA, poseA, meshB, poseB, eps=CONTACT_EPS):
    """Whether two posed closed meshes touch (within ``eps``) or nest."""
    cA = meshA.corners @ poseA[:3, :3].T + poseA[:3, 3]
    cB = meshB.corners @ poseB[:3, :3].T + poseB[:3, 3]
    if mesh_distance_below(cA, cB, eps):
        return True
    refA = meshA.vertices[0] @ poseA[:3, :3].T + poseA[:3, 3]
    refB = meshB.vertices[0] @ poseB[:3, :3].T + poseB[:3, 3]
    return bool(points_in_mesh(refA, cB)[0] or points_in_mesh(refB, cA)[0])


# ------------------------------------------------------- convex primitives

@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box: centre, rotation (columns are box axes), half extents."""
    center: np.ndarray
    rot: np.ndarray
    half: np.ndarray

    def transformed(self, T):
        return Box(T[:3, :3] @ self.center + T[:3, 3], T[:3, :3] @ self.rot, self.half)

    def corners(self):
        s = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                     dtype=float)
        return self.center + (s * self.half) @ self.rot.T

    def to_mesh(self):
        from regrasp.geometry.shapes import box_mesh
        m = box_mesh(2 * np.asarray(self.half))
        T = np.eye(4)
        T[:3, :3] = self.rot
        T[:3, 3] = self.center
        return m.transformed(T)


def aabb(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return Box((lo + hi) / 2, np.eye(3), (hi - lo) / 2)


def stack_boxes(boxes):
    """(centres, rotations, halves) arrays for a list of boxes."""
    if not boxes:
        return np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros((0, 3))
    return (np.array([b.center for b in boxes]), np.array([b.rot for b in boxes]),
            np.array([b.half for b in boxes]))


def box_box_separation(cA, RA, hA, cB, RB, hB):
    """Largest separating-axis gap between paired boxes (broadcasting).

    Positive means separated by at least that much; this is a lower bound on
    the true Euclidean distance and equals it for face-separated boxes.
    """
    T = cB - cA
    axes = [RA[..., :, i] for i in range(3)] + [RB[..., :, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            axes.append(cross(RA[..., :, i], RB[..., :, j]))
    best = None
    for L in axes:
        n = np.linalg.norm(L, axis=-1)
        valid = n > 1e-9
        L = L / np.where(valid, n, 1.0)[..., None]
        rA = sum(hA[..., k] * np.abs(_dot(RA[..., :, k], L)) for k in range(3))
        rB = sum(hB[..., k] * np.abs(_dot(RB[..., :, k], L)) for k in range(3))
        gap = np.abs(_dot(T, L)) - rA - rB
        gap = np.where(valid, gap, -np.inf)
        best = gap if best is None else np.maximum(best, gap)
    return best


def seg_box_distance(p, q, c, R, h, iters=30):
    """Distance from segments to oriented boxes (broadcasting).

    The distance to a convex set is convex along a segment, so a golden-section
    search over the segment parameter converges to the minimum.
    """
    Rt = np.swapaxes(R, -1, -2)
    pl = np.einsum("...ij,...j->...i", Rt, p - c)
    ql = np.einsum("...ij,...j->...i", Rt, q - c)
    d = ql - pl

    def f(t):
        x = np.maximum(np.abs(pl + t[..., None] * d) - h, 0.0)
        return np.sqrt(np.einsum("...i,...i->...", x, x))

    shape = np.broadcast_shapes(pl.shape[:-1], h.shape[:-1])
    lo = np.zeros(shape)
    hi = np.ones(shape)
    g = (5 ** 0.5 - 1) / 2
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        # one new probe per iteration: x1 moves left or x2 moves right
        xn = np.where(left, hi - g * (hi - lo), lo + g * (hi - lo))
        fn = f(xn)
        x1, x2 = np.where(left, xn, x2), np.where(left, x1, xn)
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
    best = np.minimum(np.minimum(f1, f2), np.minimum(f(np.zeros(shape)), f(np.ones(shape))))
    return best
