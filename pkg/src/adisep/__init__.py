"""Adaptive distance-interval separation toolkit.

Splits dense depth maps into disjoint distance layers with learned
bounds, weights them by a per-pixel confidence map, fuses appearance and
localization features, and ships the KITTI-style I/O, 3D geometry, and
AP@40 evaluation stack needed to exercise all of it.

The hot kernels live in a compiled extension with a numpy fallback; see
``adisep.kernel_backend()`` for which one is active.
"""

from ._kernels import BACKEND as _BACKEND
from .adis import (
    BoundHead,
    DepthMap,
    IntervalPartition,
    SubDepthStack,
    compute_bounds,
    reconstruct,
    separate,
    soft_separate,
    soft_separate_bounds_grad,
)
from .errors import EvaluationError, FormatError, ParseError, ShapeError
from .geometry import Box3D, bev_polygon, iou_3d, iou_bev, polygon_intersection_area
from .kitti_io import (
    CameraCalib,
    ObjectLabel,
    parse_calib,
    parse_label_file,
    read_depth_png,
    write_depth_png,
    write_result_file,
    write_subdepth_pngs,
)
from .pseudolidar import PointCloud, backproject, backproject_stack, read_ply, write_ply
from .tensor import FeatureMap
from .uncertainty import (
    UncertaintyMap,
    apply_uncertainty,
    compute_uncertainty,
    fuse_features,
    uncertainty_feature,
    write_uncertainty_png,
)

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Name of the active kernel backend: "compiled" or "pure"."""
    return _BACKEND


__all__ = [
    "BoundHead",
    "Box3D",
    "CameraCalib",
    "DepthMap",
    "EvaluationError",
    "FeatureMap",
    "FormatError",
    "IntervalPartition",
    "ObjectLabel",
    "ParseError",
    "PointCloud",
    "ShapeError",
    "SubDepthStack",
    "UncertaintyMap",
    "apply_uncertainty",
    "backproject",
    "backproject_stack",
    "bev_polygon",
    "compute_bounds",
    "compute_uncertainty",
    "fuse_features",
    "iou_3d",
    "iou_bev",
    "kernel_backend",
    "parse_calib",
    "parse_label_file",
    "polygon_intersection_area",
    "read_depth_png",
    "read_ply",
    "reconstruct",
    "separate",
    "soft_separate",
    "soft_separate_bounds_grad",
    "uncertainty_feature",
    "write_depth_png",
    "write_ply",
    "write_result_file",
    "write_subdepth_pngs",
    "write_uncertainty_png",
]
