"""Small rigid-transform helpers on 4x4 homogeneous matrices."""
import numpy as np


def homogeneous(rot=None, pos=None):
    T = np.eye(4)
    if rot is not None:
        T[:3, :3] = rot
    if pos is not None:
        T[:3, 3] = pos
    return T


def inv(T):
    R = T[..., :3, :3]
    p = T[..., :3, 3]
    out = np.zeros_like(T)
    Rt = np.swapaxes(R, -1, -2)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, p)
    out[..., 3, 3] = 1.0
    return out


def apply(T, pts):
    """Transform an (..., 3) array of points."""
    pts = np.asarray(pts, dtype=float)
    return pts @ T[:3, :3].T + T[:3, 3]


def rot_axis(axis, angle):
    """Rodrigues rotation about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = skew(a)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_x(a):
    return rot_axis([1.0, 0.0, 0.0], a)


def rot_y(a):
    return rot_axis([0.0, 1.0, 0.0], a)


def rot_z(a):
    return rot_axis([0.0, 0.0, 1.0], a)


def rpy(roll, pitch, yaw):
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def cross(a, b):
    """Broadcasting cross product over the last axis (cheaper than np.cross)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def align(src, dst):
    """Minimal rotation taking unit vector ``src`` onto ``dst``.

    Antiparallel inputs rotate by pi about an axis perpendicular to ``src``
    chosen from the least-aligned coordinate axis, so the result is
    deterministic.
    """
    s = np.asarray(src, dtype=float) / np.linalg.norm(src)
    d = np.asarray(dst, dtype=float) / np.linalg.norm(dst)
    c = float(np.dot(s, d))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return rot_axis(perpendicular(s), np.pi)
    axis = np.cross(s, d)
    return rot_axis(axis, np.arctan2(np.linalg.norm(axis), c))


def perpendicular(v):
    """A deterministic unit vector perpendicular to ``v``."""
    v = np.asarray(v, dtype=float)
    ref = np.eye(3)[int(np.argmin(np.abs(v)))]
    p = np.cross(v, ref)
    return p / np.linalg.norm(p)


def rotation_angle(Ra, Rb):
    """Geodesic distance on SO(3) between two rotation matrices, in [0, pi]."""
    R = np.asarray(Ra).T @ np.asarray(Rb)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(c))


def rotation_angles(Ra, Rbs):
    """Vectorised :func:`rotation_angle` of one rotation against a stack."""
    tr = np.einsum("ij,nij->n", np.asarray(Ra), np.asarray(Rbs))
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def log_rot(R):
    """Rotation vector of a stack of rotation matrices (..., 3, 3)."""
    R = np.asarray(R, dtype=float)
    vee = np.stack([R[..., 2, 1] - R[..., 1, 2],
                    R[..., 0, 2] - R[..., 2, 0],
                    R[..., 1, 0] - R[..., 0, 1]], axis=-1) * 0.5
    s = np.linalg.norm(vee, axis=-1)
    c = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arctan2(s, c)
    out = np.empty(R.shape[:-2] + (3,))
    small = s < 1e-8
    near_pi = small & (c < 0)
    ok = ~small
    scale = np.where(ok, theta / np.where(ok, s, 1.0), 1.0)
    out[...] = vee * scale[..., None]
    if np.any(near_pi):
        # theta ~ pi: axis from the diagonal of (R + I) / 2
        Rp = R[near_pi]
        B = (Rp + np.eye(3)) / 2.0
        idx = np.argmax(np.diagonal(B, axis1=-2, axis2=-1), axis=-1)
        cols = B[np.arange(len(Rp)), :, idx]
        cols /= np.linalg.norm(cols, axis=-1, keepdims=True)
        out[near_pi] = cols * np.pi
    return out


def is_rigid(T, tol=1e-9):
    R = np.asarray(T)[:3, :3]
    return (np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol)
