"""3D boxes, bird's-eye-view polygons, and rotated-box IoU.

Camera coordinates follow the KITTI devkit: x right, y down, z forward.
A box is anchored at the center of its bottom face, so its vertical
extent is [y - h, y].  BEV work happens in the (x, z) ground plane with
convex quadrilaterals in counter-clockwise order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .kitti_io import ObjectLabel

# On-edge tolerance for clipping; intersection areas below AREA_EPS count
# as empty.
CLIP_EPS = 1e-9
AREA_EPS = 1e-12


@dataclass(frozen=True)
class Box3D:
    """Upright 3D box: bottom-center position, size, and yaw about y."""

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    yaw: float

    def __post_init__(self):
        if self.h <= 0 or self.w <= 0 or self.l <= 0:
            raise ValueError(f"box dimensions must be > 0, got h={self.h} w={self.w} l={self.l}")
        if not -math.pi <= self.yaw <= math.pi:
            raise ValueError(f"yaw must lie in [-pi, pi], got {self.yaw}")

    @classmethod
    def from_label(cls, label: ObjectLabel) -> "Box3D":
        h, w, l = label.dimensions
        x, y, z = label.location
        return cls(x=x, y=y, z=z, h=h, w=w, l=l, yaw=label.rotation_y)

    def volume(self) -> float:
        return self.h * self.w * self.l


def bev_polygon(box: Box3D) -> np.ndarray:
    """Ground-plane footprint: 4 (x, z) vertices, counter-clockwise.

    Length runs along the box's local x axis, width along local z; the
    rectangle is rotated by yaw about the vertical axis through (x, z).
    """
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    half_l, half_w = box.l / 2.0, box.w / 2.0
    local = np.array(
        [(half_l, half_w), (-half_l, half_w), (-half_l, -half_w), (half_l, -half_w)]
    )
    # Rotation by yaw about y in a y-down frame maps (x, z) via
    # [[cos, sin], [-sin, cos]]; orientation (CCW) is preserved.
    rot = np.array([(c, s), (-s, c)])
    return local @ rot.T + np.array([box.x, box.z])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a CCW polygon (absolute value)."""
    if len(poly) < 3:
        return 0.0
    x, z = poly[:, 0], poly[:, 1]
    return abs(float(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))) / 2.0


def polygon_intersection_area(p: np.ndarray, q: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    clipped = _kernels.convex_clip(p, q, CLIP_EPS)
    area = polygon_area(clipped)
    return area if area > AREA_EPS else 0.0


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the two ground-plane footprints."""
    pa, pb = bev_polygon(a), bev_polygon(b)
    inter = polygon_intersection_area(pa, pb)
    union = polygon_area(pa) + polygon_area(pb) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection times vertical overlap."""
    pa, pb = bev_polygon(a), bev_polygon(b)
    inter_bev = polygon_intersection_area(pa, pb)
    # y points down: the box spans [y - h, y].
    y_overlap = min(a.y, b.y) - max(a.y - a.h, b.y - b.h)
    inter_vol = inter_bev * max(y_overlap, 0.0)
    union = a.volume() + b.volume() - inter_vol
    if union <= 0:
        return 0.0
    return min(max(inter_vol / union, 0.0), 1.0)
