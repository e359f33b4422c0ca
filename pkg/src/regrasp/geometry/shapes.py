"""Procedural meshes used by tests and the benchmark objects."""
import numpy as np

from regrasp.geometry.mesh import TriMesh


def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)):
    sx, sy, sz = np.asarray(size, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    V = np.array([[-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
                  [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz]]) + c
    F = [[0, 2, 1], [0, 3, 2],      # -z
         [4, 5, 6], [4, 6, 7],      # +z
         [0, 1, 5], [0, 5, 4],      # -y
         [2, 3, 7], [2, 7, 6],      # +y
         [1, 2, 6], [1, 6, 5],      # +x
         [0, 4, 7], [0, 7, 3]]      # -x
    return TriMesh.from_arrays(V, F)


def _ear_clip(poly):
    """Triangulate a simple counter-clockwise 2D polygon."""
    idx = list(range(len(poly)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-15:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                idx.pop(k)
                break
    tris.append(tuple(idx))
    return tris


def extrude(profile, depth):
    """Prism from a CCW polygon in the (x, z) plane, extruded along +y.

    Side walls are single quads split into two triangles, so every planar
    face of the prism is one edge-connected cluster.
    """
    P = np.asarray(profile, dtype=float)
    area = 0.5 * np.sum(P[:, 0] * np.roll(P[:, 1], -1) - np.roll(P[:, 0], -1) * P[:, 1])
    if area < 0:
        P = P[::-1]
    n = len(P)
    front = np.column_stack([P[:, 0], np.zeros(n), P[:, 1]])
    back = np.column_stack([P[:, 0], np.full(n, depth), P[:, 1]])
    V = np.vstack([front, back])
    F = []
    for a, b, c in _ear_clip(P):
        # profile CCW in (x, z) viewed from -y means outward normal -y on the front cap
        F.append([a, b, c])
        F.append([n + a, n + c, n + b])
    for i in range(n):
        j = (i + 1) % n
        F.append([i, n + i, n + j])
        F.append([i, n + j, j])
    mesh = TriMesh.from_arrays(V, F)
    # the winding above assumes a particular handedness; flip if volume is negative
    vol, _ = mesh.volume_and_com()
    if vol < 0:
        mesh = TriMesh.from_arrays(V, np.asarray(F)[:, ::-1])
    return mesh


def union_boxes_profile_L(length=0.10, height=0.10, thickness=0.04):
    """Profile of an L whose two limbs have the given thickness."""
    t = thickness
    return [(0, 0), (length, 0), (length, t), (t, t), (t, height), (0, height)]


def icosphere(radius=1.0, subdivisions=2):
    """Subdivided icosahedron; 2 subdivisions give 320 triangles."""
    p = (1.0 + 5 ** 0.5) / 2.0
    V = [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
         [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
         [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]]
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in V]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        F2 = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            F2 += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = F2
    return TriMesh.from_arrays(np.array(V) * radius, F)


def tetrahedron(size=1.0):
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float) * size
    F = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    return TriMesh.from_arrays(V, F)
