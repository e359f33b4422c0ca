from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrasp.bench.objects import lblock, ttube
from regrasp.geometry.hull import convex_hull
from regrasp.geometry.mesh import point_in_polygon
from regrasp.geometry.shapes import box_mesh, tetrahedron
from regrasp.grasp import Grasp, GraspConfig, GripperModel, grasp_frame, plan_grasps
from regrasp.placement import (associate_grasps, candidate_placements, plan_placements,
                               stability_filter)


def _placements(mesh, margin=0.005):
    hull = convex_hull(mesh.vertices)
    return stability_filter(candidate_placements(hull), hull, mesh.com, margin)


@pytest.mark.parametrize("mesh,n", [(box_mesh((0.05, 0.05, 0.05)), 6),
                                    (tetrahedron(0.1), 4),
                                    (lblock()[0], 7)])
def test_candidate_counts(mesh, n):
    assert len(candidate_placements(convex_hull(mesh.vertices))) == n


def test_cube_all_stable():
    ps = _placements(box_mesh((0.05, 0.05, 0.05)))
    assert len(ps) == 6
    for p in ps:
        assert p.margin == pytest.approx(0.025)
        assert p.rest_height == pytest.approx(0.025)


def test_lblock_removes_unstable_faces():
    mesh, _ = lblock()
    hull = convex_hull(mesh.vertices)
    cands = candidate_placements(hull)
    kept = {p.facet for p in stability_filter(cands, hull, mesh.com, 0.005)}
    for k, R in cands:
        f = hull.facets[k]
        poly = (f.polygon @ R.T)[:, :2]
        c = (R @ mesh.com)[:2]
        # oracle: distance from the COM projection to every support polygon edge
        a, b = poly, np.roll(poly, -1, axis=0)
        t = np.clip(np.einsum("ij,ij->i", c - a, b - a) / np.einsum("ij,ij->i", b - a, b - a),
                    0, 1)
        d = np.linalg.norm(a + t[:, None] * (b - a) - c, axis=1).min()
        inside = point_in_polygon(c[None], poly if _ccw(poly) else poly[::-1])[0]
        assert (k in kept) == bool(inside and d >= 0.005)
    assert len(kept) < len(cands)


def _ccw(p):
    return np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]) > 0


def test_margin_monotone():
    for mesh in (lblock()[0], ttube()[0], tetrahedron(0.1)):
        assert len(_placements(mesh, 0.0)) >= len(_placements(mesh, 0.005))


def test_placement_rests_on_table():
    mesh, _ = ttube()
    for p in _placements(mesh):
        V = mesh.vertices @ p.transform[:3, :3].T + p.transform[:3, 3]
        assert V[:, 2].min() == pytest.approx(0.0, abs=1e-12)
        com = p.transform[:3, :3] @ mesh.com + p.transform[:3, 3]
        assert np.allclose(com[:2], 0.0, atol=1e-12)
        assert np.allclose(p.transform[:3, :3] @ p.transform[:3, :3].T, np.eye(3))


def _grasp(c1, c2, approach):
    T = grasp_frame(c1, c2, approach)
    return Grasp(id=0, c1=c1, c2=c2, n1=np.zeros(3), n2=np.zeros(3), approach=T[:3, 2],
                 frame=T, jaw_width=float(np.linalg.norm(c2 - c1)), quality=1.0)


def test_associate_top_and_bottom():
    g = GripperModel()
    mesh = box_mesh((0.05, 0.05, 0.05))
    p = _placements(mesh)[0]
    down = p.rotation.T @ np.array([0, 0, -1.0])
    side = np.cross(down, [1, 0, 0]) if abs(down[0]) < 0.9 else np.cross(down, [0, 1, 0])
    side /= np.linalg.norm(side)
    top = _grasp(-0.025 * side, 0.025 * side, down)
    # contacts on the bottom face, closing along the gravity axis
    perp = np.cross(down, side)
    bottom = _grasp(0.025 * down - 0.01 * perp, 0.025 * down + 0.01 * perp, side)
    q = associate_grasps(p, [top, _with_id(bottom, 1)], g)
    assert q.grasps["right"] == ((0, True), (1, False))


def _with_id(g, i):
    return replace(g, id=i)


def test_plan_placements_flags_both_hands():
    mesh, _ = lblock()
    g = GripperModel()
    grasps = plan_grasps(mesh, g, GraspConfig())
    ps = plan_placements(mesh, grasps, g, hands=("right", "left"))
    assert [p.id for p in ps] == list(range(len(ps)))
    for p in ps:
        assert set(p.grasps) == {"right", "left"}
        assert len(p.grasps["right"]) == len(grasps)
        assert 0 < len(p.valid_grasps()) < len(grasps)
        d = p.to_dict()
        assert d["valid_grasps"]["right"] == p.valid_grasps("right")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.2), st.floats(0.02, 0.2), st.floats(0.02, 0.2))
def test_box_has_six_stable_placements(a, b, c):
    ps = _placements(box_mesh((a, b, c)), 0.005)
    assert len(ps) == 6
