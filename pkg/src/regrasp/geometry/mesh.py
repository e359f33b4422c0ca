"""Triangle meshes: ingestion, mass properties and coplanar facet clustering."""
import struct
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from regrasp.geometry.transforms import perpendicular

AREA_EPS = 1e-14


class ParseError(ValueError):
    pass


class EmptyMesh(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    dropped: int = 0

    @classmethod
    def from_arrays(cls, vertices, triangles, weld_tol=0.0):
        """Build a mesh, dropping zero-area triangles.

        ``weld_tol > 0`` merges vertices closer than the tolerance (needed for
        STL, which stores every triangle's corners separately).
        """
        V = np.asarray(vertices, dtype=float).reshape(-1, 3)
        F = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(F) and (F.min() < 0 or F.max() >= len(V)):
            raise ParseError("triangle index out of range")
        if weld_tol > 0 and len(V):
            key = np.round(V / weld_tol).astype(np.int64)
            _, first, inverse = np.unique(key, axis=0, return_index=True,
                                          return_inverse=True)
            inverse = inverse.reshape(-1)
            order = np.argsort(first)
            remap = np.empty_like(order)
            remap[order] = np.arange(len(order))
            V = V[first[order]]
            F = remap[inverse[F]]
        if len(F):
            cr = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
            area2 = np.linalg.norm(cr, axis=1)
            keep = (area2 > 2 * AREA_EPS) & (F[:, 0] != F[:, 1]) \
                & (F[:, 1] != F[:, 2]) & (F[:, 0] != F[:, 2])
        else:
            cr = np.zeros((0, 3))
            area2 = np.zeros(0)
            keep = np.zeros(0, dtype=bool)
        dropped = int((~keep).sum())
        if dropped:
            warnings.warn(f"dropped {dropped} degenerate triangle(s)")
        F = F[keep]
        if len(F) == 0:
            raise EmptyMesh("mesh has no valid triangles")
        N = cr[keep] / area2[keep, None]
        return cls(_frozen(V, float), _frozen(F, np.int64), _frozen(N, float), dropped)

    @property
    def corners(self):
        """(m, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    @property
    def areas(self):
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def transformed(self, T):
        V = self.vertices @ T[:3, :3].T + T[:3, 3]
        N = self.normals @ T[:3, :3].T
        return TriMesh(_frozen(V, float), self.triangles, _frozen(N, float), self.dropped)

    def scaled(self, s):
        return TriMesh(_frozen(self.vertices * s, float), self.triangles, self.normals,
                       self.dropped)

    def volume_and_com(self):
        """Signed volume and centre of mass assuming uniform density.

        Uses the tetrahedral decomposition against the origin, which is exact
        for closed, consistently wound meshes.
        """
        c = self.corners
        v6 = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2]))
        vol = v6.sum() / 6.0
        if abs(vol) < 1e-18:
            # open or flat mesh: fall back to area-weighted centroid
            a = self.areas
            return 0.0, (c.mean(axis=1) * a[:, None]).sum(0) / a.sum()
        com = (v6[:, None] * c.sum(axis=1)).sum(0) / (4.0 * v6.sum())
        return vol, com

    @property
    def com(self):
        return self.volume_and_com()[1]

    @property
    def extent(self):
        """Largest side of the axis-aligned bounding box."""
        return float(np.ptp(self.vertices, axis=0).max())

    def edge_adjacency(self):
        """Map from undirected vertex-pair edge to the triangles using it."""
        adj = defaultdict(list)
        for t, (a, b, c) in enumerate(self.triangles.tolist()):
            for u, v in ((a, b), (b, c), (c, a)):
                adj[(u, v) if u < v else (v, u)].append(t)
        return adj


def load_mesh(path, format=None):
    """Read an OBJ, ASCII STL or binary STL file into a :class:`TriMesh`."""
    path = Path(path)
    data = path.read_bytes()
    fmt = (format or "").lower().replace("_", "-")
    if not fmt:
        suffix = path.suffix.lower()
        if suffix == ".obj":
            fmt = "obj"
        elif suffix == ".stl":
            fmt = "stl-ascii" if _looks_ascii_stl(data) else "stl-binary"
        else:
            raise ParseError(f"cannot infer mesh format from {path.name}")
    if fmt == "obj":
        return _parse_obj(data.decode("utf-8", errors="replace"))
    if fmt in ("stl-ascii", "stl"):
        return _parse_stl_ascii(data.decode("utf-8", errors="replace"))
    if fmt == "stl-binary":
        return _parse_stl_binary(data)
    raise ParseError(f"unknown mesh format {format!r}")


def _looks_ascii_stl(data):
    head = data[:512].lstrip().lower()
    if not head.startswith(b"solid"):
        return False
    if len(data) >= 84:
        n = struct.unpack("<I", data[80:84])[0]
        if 84 + 50 * n == len(data):
            return False
    return True


def _parse_obj(text):
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
        except ValueError:
            raise ParseError(f"malformed OBJ line {lineno}: {line.strip()!r}") from None
    if not faces:
        raise EmptyMesh("OBJ file has no faces")
    return TriMesh.from_arrays(verts, faces)


def _parse_stl_ascii(text):
    pts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if parts and parts[0] == "vertex":
            try:
                pts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ParseError(f"malformed STL vertex on line {lineno}") from None
            if len(pts[-1]) != 3:
                raise ParseError(f"malformed STL vertex on line {lineno}")
    if len(pts) % 3:
        raise ParseError("STL vertex count is not a multiple of 3")
    if not pts:
        raise EmptyMesh("STL file has no facets")
    return TriMesh.from_arrays(pts, np.arange(len(pts)).reshape(-1, 3), weld_tol=1e-9)


def _parse_stl_binary(data):
    if len(data) < 84:
        raise ParseError("binary STL shorter than its header")
    n = struct.unpack("<I", data[80:84])[0]
    if len(data) < 84 + 50 * n:
        raise ParseError("binary STL truncated")
    if n == 0:
        raise EmptyMesh("STL file has no facets")
    rec = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.frombuffer(data, dtype=rec, count=n, offset=84)
    pts = arr["v"].reshape(-1, 3).astype(float)
    return TriMesh.from_arrays(pts, np.arange(len(pts)).reshape(-1, 3), weld_tol=1e-7)


def write_obj(mesh, path):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def write_stl_binary(mesh, path):
    rec = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.zeros(len(mesh.triangles), dtype=rec)
    arr["normal"] = mesh.normals
    arr["v"] = mesh.corners
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(arr)))
        fh.write(arr.tobytes())


def write_stl_ascii(mesh, path):
    out = ["solid mesh"]
    for n, tri in zip(mesh.normals, mesh.corners):
        out.append(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
        out.append("    outer loop")
        out += [f"      vertex {x:.9g} {y:.9g} {z:.9g}" for x, y, z in tri]
        out.append("    endloop")
        out.append("  endfacet")
    out.append("endsolid mesh")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------- clustering

@dataclass(frozen=True, eq=False)
class FacetCluster:
    triangles: tuple
    normal: np.ndarray
    centroid: np.ndarray
    boundary: np.ndarray          # (k, 3) ordered outer loop
    x1: np.ndarray
    x2: np.ndarray
    e1: tuple                     # (min, max) along x1, relative to centroid
    e2: tuple
    area: float = 0.0
    polygon2d: np.ndarray = field(default=None, repr=False)   # boundary in (x1, x2) coords

    def to_plane(self, pts):
        d = np.asarray(pts, dtype=float) - self.centroid
        return np.stack([d @ self.x1, d @ self.x2], axis=-1)

    def from_plane(self, uv):
        uv = np.asarray(uv, dtype=float)
        return self.centroid + uv[..., :1] * self.x1 + uv[..., 1:2] * self.x2


def cluster_facets(mesh, angle_tol=0.01):
    """Group edge-adjacent triangles whose normals agree within ``angle_tol``.

    Region growing compares against the seed normal at half the tolerance so
    every member stays within ``angle_tol`` of the area-weighted mean normal.
    """
    if not 0.0 < angle_tol < np.pi / 2:
        raise ValueError("angle_tol must lie in (0, pi/2)")
    adj = mesh.edge_adjacency()
    neighbours = [[] for _ in range(len(mesh.triangles))]
    for tris in adj.values():
        for a in tris:
            for b in tris:
                if a != b:
                    neighbours[a].append(b)
    cos_tol = np.cos(angle_tol / 2.0)
    label = -np.ones(len(mesh.triangles), dtype=int)
    groups = []
    for seed in range(len(mesh.triangles)):
        if label[seed] >= 0:
            continue
        gid = len(groups)
        label[seed] = gid
        members = [seed]
        n0 = mesh.normals[seed]
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for nb in neighbours[t]:
                if label[nb] < 0 and mesh.normals[nb] @ n0 >= cos_tol:
                    label[nb] = gid
                    members.append(nb)
                    queue.append(nb)
        groups.append(sorted(members))
    return [_make_cluster(mesh, g) for g in groups]


def _boundary_loops(tri_idx, triangles):
    """Directed boundary edges of a triangle set, chained into closed loops."""
    count = defaultdict(int)
    directed = []
    for t in tri_idx:
        a, b, c = triangles[t]
        for u, v in ((a, b), (b, c), (c, a)):
            count[(min(u, v), max(u, v))] += 1
            directed.append((u, v))
    nxt = defaultdict(list)
    for u, v in directed:
        if count[(min(u, v), max(u, v))] == 1:
            nxt[u].append(v)
    loops = []
    used = set()
    for start in sorted(nxt):
        for first in nxt[start]:
            if (start, first) in used:
                continue
            loop = [start]
            u, v = start, first
            while (u, v) not in used:
                used.add((u, v))
                if v == start:
                    break
                loop.append(v)
                cands = [w for w in nxt[v] if (v, w) not in used]
                if not cands:
                    break
                u, v = v, cands[0]
            loops.append(loop)
    return loops


def _make_cluster(mesh, members):
    V = mesh.vertices
    corners = mesh.corners[members]
    cr = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    n = (mesh.normals[members] * areas[:, None]).sum(0)
    n /= np.linalg.norm(n)
    centroid = (corners.mean(axis=1) * areas[:, None]).sum(0) / areas.sum()

    loops = _boundary_loops(members, mesh.triangles)
    # outer loop = the one enclosing the largest area in the plane
    u0 = perpendicular(n)
    v0 = np.cross(n, u0)

    def area2d(loop):
        p = V[loop] - centroid
        x, y = p @ u0, p @ v0
        return 0.5 * (x * np.roll(y, -1) - np.roll(x, -1) * y).sum()

    loop = max(loops, key=lambda lp: abs(area2d(lp))) if loops else []
    boundary = V[loop] if loop else corners.reshape(-1, 3)
    x1, x2 = _principal_axes(boundary, n, u0, v0, centroid)
    rel = boundary - centroid
    w1, w2 = rel @ x1, rel @ x2
    poly2d = np.stack([w1, w2], axis=1)
    return FacetCluster(
        triangles=tuple(int(t) for t in members),
        normal=n, centroid=centroid, boundary=boundary, x1=x1, x2=x2,
        e1=(float(w1.min()), float(w1.max())), e2=(float(w2.min()), float(w2.max())),
        area=float(areas.sum()), polygon2d=poly2d)


def _principal_axes(boundary, n, u0, v0, centroid):
    """Principal axes of the boundary polyline (uniform density along edges).

    An isotropic covariance (squares, regular polygons) has no preferred axis;
    fall back to the longest boundary edge so grids line up with the outline.
    """
    P = boundary - centroid
    Q = np.roll(P, -1, axis=0)
    seg = Q - P
    L = np.linalg.norm(seg, axis=1)
    uv_a = np.stack([P @ u0, P @ v0], axis=1)
    uv_b = np.stack([Q @ u0, Q @ v0], axis=1)
    # second moment of a segment with uniform density
    mean = ((uv_a + uv_b) / 2 * L[:, None]).sum(0) / L.sum()
    A, B = uv_a - mean, uv_b - mean
    C = (L[:, None, None] * (np.einsum("ni,nj->nij", A, A) + np.einsum("ni,nj->nij", B, B)
                             + 0.5 * (np.einsum("ni,nj->nij", A, B)
                                      + np.einsum("ni,nj->nij", B, A)))).sum(0) / (3 * L.sum())
    w, vec = np.linalg.eigh(C)
    if w[1] - w[0] <= 1e-6 * max(w[1], 1e-30):
        d = seg[int(np.argmax(L))]
        d = d - (d @ n) * n
        x1 = d / np.linalg.norm(d)
    else:
        d = vec[:, 1]
        x1 = d[0] * u0 + d[1] * v0
        x1 /= np.linalg.norm(x1)
    # canonical sign: largest-magnitude component positive
    if x1[int(np.argmax(np.abs(x1)))] < 0:
        x1 = -x1
    x2 = np.cross(n, x1)
    return x1, x2


def point_in_polygon(pts, poly, tol=1e-9):
    """Inclusive point-in-polygon test for 2D points against a simple polygon."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    poly = np.asarray(poly, dtype=float)
    return polygon_signed_distance(pts, poly) >= -tol


def polygon_signed_distance(pts, poly):
    """Signed distance to the polygon boundary, positive inside."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ap = pts[:, None, :] - a[None]
    t = np.clip((ap * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-300), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    dist = np.linalg.norm(pts[:, None, :] - closest, axis=-1).min(axis=1)
    # even-odd crossing rule
    x, y = pts[:, 0:1], pts[:, 1:2]
    ya, yb = a[None, :, 1], b[None, :, 1]
    xa, xb = a[None, :, 0], b[None, :, 0]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xa + (y - ya) * (xb - xa) / (yb - ya)
    inside = (crosses & (x < xint)).sum(axis=1) % 2 == 1
    return np.where(inside, dist, -dist)


def sample_cluster(cluster, step):
    """Grid of contact points over a cluster, clipped to its boundary.

    The grid is centred on the cluster centroid with spacing ``step`` along
    both principal axes; endpoints on the bounding box are kept.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    tol = 1e-9
    k1 = np.arange(np.ceil((cluster.e1[0] - tol) / step), np.floor((cluster.e1[1] + tol) / step) + 1)
    k2 = np.arange(np.ceil((cluster.e2[0] - tol) / step), np.floor((cluster.e2[1] + tol) / step) + 1)
    if len(k1) == 0 or len(k2) == 0:
        return np.zeros((0, 3))
    W1, W2 = np.meshgrid(k1 * step, k2 * step, indexing="ij")
    uv = np.stack([W1.ravel(), W2.ravel()], axis=1)
    keep = point_in_polygon(uv, cluster.polygon2d, tol=1e-9)
    return cluster.from_plane(uv[keep])
