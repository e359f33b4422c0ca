"""Independent reference computations used by the tests."""
import itertools

import cdd
import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from regrasp.geometry.mesh import TriMesh
from regrasp.geometry.transforms import log_rot
from regrasp.kinematics import fk


def cdd_facet_normals(W):
    """Outward unit facet normals of conv(W) by double description (cdd).

    Returns None when the hull is not full-dimensional.
    """
    W = np.asarray(W, dtype=float)
    rows = np.hstack([np.ones((len(W), 1)), W]).tolist()
    poly = cdd.polyhedron_from_matrix(cdd.matrix_from_array(rows,
                                                            rep_type=cdd.RepType.GENERATOR))
    H = cdd.copy_inequalities(poly)
    if len(H.lin_set):
        return None
    a = -np.array(H.array, dtype=float)[:, 1:]
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def cdd_ball_radius(W, runs=3, agree=2, seed=0, tries=40):
    """Inscribed origin-centred ball radius of conv(W).

    Origin membership is decided by an LP. The radius is the smallest
    support value max_i n.w_i over cdd facet normals n. Floating-point cdd
    can silently drop facets on degenerate inputs, so randomly rotated copies
    (the radius is rotation invariant) are solved until at least ``runs``
    succeed and the smallest value is reproduced by ``agree`` of them.
    """
    from scipy.stats import special_ortho_group
    W = np.asarray(W, dtype=float)
    d = W.shape[1]
    if not lp_in_hull(W, np.zeros(d)):
        return 0.0
    rs = np.random.default_rng(seed)
    vals = []
    for k in range(tries):
        Q = np.eye(d) if k == 0 else special_ortho_group.rvs(d, random_state=rs)
        try:
            N = cdd_facet_normals(W @ Q.T)
        except RuntimeError:
            continue
        if N is None:
            return 0.0
        vals.append(float((W @ (N @ Q).T).max(axis=0).min()))
        best = min(vals)
        if len(vals) >= runs and sum(v - best <= 1e-9 for v in vals) >= agree:
            return max(0.0, best)
    raise RuntimeError("cdd runs did not agree on the radius")


def lp_in_hull(W, x):
    """Whether x is a convex combination of the rows of W (feasibility LP)."""
    W = np.asarray(W, dtype=float)
    n = len(W)
    A_eq = np.vstack([W.T, np.ones((1, n))])
    b_eq = np.append(x, 1.0)
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


def random_antipodal(rng):
    """Random two-contact configuration with roughly opposed normals."""
    n1 = rng.normal(size=3)
    n1 /= np.linalg.norm(n1)
    n2 = -n1 + rng.normal(scale=0.05, size=3)
    n2 /= np.linalg.norm(n2)
    w = rng.uniform(0.01, 0.08)
    c1 = rng.normal(scale=0.01, size=3)
    c2 = c1 - w * n1 + rng.normal(scale=0.003, size=3)
    mu = rng.uniform(0.2, 1.0)
    ax = np.cross(n1, rng.normal(size=3))
    ax /= np.linalg.norm(ax)
    com = (c1 + c2) / 2 + rng.normal(scale=0.01, size=3)
    return c1, c2, n1, n2, mu, ax, com


def brute_force_planes(P, tol=1e-9):
    """Distinct supporting planes through point triples (hull facet oracle)."""
    planes = set()
    for a, b, c in itertools.combinations(range(len(P)), 3):
        n = np.cross(P[b] - P[a], P[c] - P[a])
        if np.linalg.norm(n) < 1e-12:
            continue
        n = n / np.linalg.norm(n)
        d = (P - P[a]) @ n
        if d.max() <= tol:
            pass
        elif d.min() >= -tol:
            n = -n
        else:
            continue
        planes.add(tuple(np.round(np.append(n, -n @ P[a]), 6)))
    return planes


def random_hull_mesh(points):
    """Outward-oriented triangulated hull of ``points`` (qhull)."""
    P = np.asarray(points)
    qh = ConvexHull(P)
    F = qh.simplices.copy()
    # orient outwards
    c = P[qh.vertices].mean(axis=0)
    for k, f in enumerate(F):
        n = np.cross(P[f[1]] - P[f[0]], P[f[2]] - P[f[0]])
        if n @ (P[f[0]] - c) < 0:
            F[k] = f[::-1]
    return TriMesh.from_arrays(P, F)


def fd_jacobian(arm, q, h=1e-6):
    """Central-difference Jacobian: position columns and rotation-vector columns."""
    J = np.zeros((6, arm.dof))
    for i in range(arm.dof):
        dq = np.zeros(arm.dof)
        dq[i] = h
        Tp, Tm = fk(arm, q + dq, check=False), fk(arm, q - dq, check=False)
        J[:3, i] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        J[3:, i] = log_rot(Tp[:3, :3] @ Tm[:3, :3].T) / (2 * h)
    return J
