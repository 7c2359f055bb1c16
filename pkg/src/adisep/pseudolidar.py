"""Back-projection of depth maps to 3D point clouds, plus PLY export.

Each valid pixel (u, v) with depth z becomes the unique camera-frame
point that the P2 matrix projects back onto (u, v).  With the rectified
form P2 = [[fx, 0, cx, tx], [0, fy, cy, ty], [0, 0, 1, tz]] that inverse
is closed-form; the translation column is honored exactly so reprojection
recovers the pixel to machine precision.  A finely separated stack
back-projects to the same cloud with per-point interval tags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adis import DepthMap, SubDepthStack
from .kitti_io import CameraCalib

_RECTIFIED_TOL = 1e-9


@dataclass
class PointCloud:
    """Camera-frame points, optionally tagged with an interval index."""

    points: np.ndarray  # (N, 3) float64
    intervals: np.ndarray | None = None  # (N,) int64

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains NaN or Inf")
        if self.points.shape[0] and np.any(self.points[:, 2] <= 0):
            raise ValueError("all points must have z > 0")
        if self.intervals is not None:
            self.intervals = np.ascontiguousarray(self.intervals, dtype=np.int64)
            if self.intervals.shape != (self.points.shape[0],):
                raise ValueError("intervals must have one entry per point")

    def __len__(self) -> int:
        return self.points.shape[0]


def _check_rectified(calib: CameraCalib) -> None:
    p = calib.p2
    scale = max(abs(calib.fx), 1.0)
    off = (abs(p[0, 1]), abs(p[1, 0]), abs(p[2, 0]), abs(p[2, 1]), abs(p[2, 2] - 1.0))
    if max(off) > _RECTIFIED_TOL * scale:
        raise ValueError("P2 is not a rectified pinhole projection matrix")


def backproject(dep: DepthMap, calib: CameraCalib) -> PointCloud:
    """Lift every valid pixel to 3D.

    Inverts u = (fx x + cx z + tx) / (z + tz), v = (fy y + cy z + ty) /
    (z + tz) for x and y given the stored z.  Points come out in row-major
    pixel order.
    """
    _check_rectified(calib)
    p = calib.p2
    rows, cols = np.nonzero(dep.valid)
    z = dep.depth[rows, cols]
    s = z + p[2, 3]
    x = (cols * s - calib.cx * z - p[0, 3]) / calib.fx
    y = (rows * s - calib.cy * z - p[1, 3]) / calib.fy
    return PointCloud(np.stack([x, y, z], axis=1))


def backproject_stack(stack: SubDepthStack, calib: CameraCalib) -> PointCloud:
    """Back-project each layer and tag points with their interval index.

    The combined cloud equals ``backproject(reconstruct(stack))`` as a
    multiset because the layers are disjoint.
    """
    clouds = []
    tags = []
    for i in range(stack.n_d):
        layer = stack.layers[i]
        dep = DepthMap(layer, layer > 0)
        if dep.valid_count() == 0:
            continue
        pc = backproject(dep, calib)
        clouds.append(pc.points)
        tags.append(np.full(len(pc), i, dtype=np.int64))
    if not clouds:
        return PointCloud(np.empty((0, 3)), np.empty(0, dtype=np.int64))
    return PointCloud(np.concatenate(clouds), np.concatenate(tags))


def project_points(points: np.ndarray, calib: CameraCalib) -> np.ndarray:
    """Project camera-frame points through P2; returns (N, 2) pixel coords."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    hom = np.concatenate([points, np.ones((points.shape[0], 1))], axis=1)
    uvw = hom @ calib.p2.T
    return uvw[:, :2] / uvw[:, 2:3]


def write_ply(pc: PointCloud) -> bytes:
    """ASCII PLY with float x/y/z and, when tagged, an int interval column.

    Coordinates are written with shortest round-trip formatting, so read
    and write are exact inverses.
    """
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pc)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if pc.intervals is not None:
        lines.append("property int interval")
    lines.append("end_header")
    for i in range(len(pc)):
        x, y, z = (float(v) for v in pc.points[i])
        row = f"{x!r} {y!r} {z!r}"
        if pc.intervals is not None:
            row += f" {int(pc.intervals[i])}"
        lines.append(row)
    return ("\n".join(lines) + "\n").encode("ascii")


def read_ply(data: bytes) -> PointCloud:
    """Parse the ASCII PLY subset produced by ``write_ply``."""
    text = data.decode("ascii").splitlines()
    if not text or text[0] != "ply":
        raise ValueError("not a PLY file")
    count = 0
    has_interval = False
    body_at = None
    for i, line in enumerate(text[1:], start=1):
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line == "property int interval":
            has_interval = True
        elif line == "end_header":
            body_at = i + 1
            break
    if body_at is None:
        raise ValueError("PLY header not terminated")
    rows = [text[body_at + k].split() for k in range(count)]
    points = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows]).reshape(-1, 3)
    intervals = np.array([int(r[3]) for r in rows], dtype=np.int64) if has_interval else None
    return PointCloud(points, intervals)
