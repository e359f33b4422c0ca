"""Procedural benchmark objects: L-block, box-shape part and T-tube.

Each object comes with an exact box decomposition used for collision
checks; meshes loaded from files fall back to their bounding box.
"""
import os

import numpy as np

from regrasp.geometry.collision import aabb
from regrasp.geometry.mesh import load_mesh
from regrasp.geometry.shapes import box_mesh, extrude, union_boxes_profile_L


def lblock(length=0.10, height=0.10, thickness=0.04, depth=0.04):
    t = thickness
    mesh = extrude(union_boxes_profile_L(length, height, t), depth)
    boxes = (aabb((0, 0, 0), (length, depth, t)), aabb((0, 0, t), (t, depth, height)))
    return mesh, boxes


def ttube(bar=0.12, stem=0.03, stem_height=0.06, bar_height=0.03, depth=0.03):
    """Solid T profile: a stem topped by a wider bar."""
    s, b = stem / 2, bar / 2
    top = stem_height + bar_height
    prof = [(-s, 0), (s, 0), (s, stem_height), (b, stem_height), (b, top), (-b, top),
            (-b, stem_height), (-s, stem_height)]
    mesh = extrude(prof, depth)
    boxes = (aabb((-s, 0, 0), (s, depth, stem_height)),
             aabb((-b, 0, stem_height), (b, depth, top)))
    return mesh, boxes


def boxpart(size=(0.06, 0.045, 0.03)):
    h = np.asarray(size) / 2
    return box_mesh(size), (aabb(-h, h),)


OBJECTS = {"lblock": lblock, "box": boxpart, "ttube": ttube}


def load_object(ident):
    """(name, mesh, boxes) for a builtin id or a mesh file path."""
    if ident in OBJECTS:
        mesh, boxes = OBJECTS[ident]()
        return ident, mesh, boxes
    if not os.path.exists(ident):
        raise ValueError(f"unknown object {ident!r} (builtin: {sorted(OBJECTS)})")
    mesh = load_mesh(ident)
    name = os.path.splitext(os.path.basename(ident))[0]
    return name, mesh, None
