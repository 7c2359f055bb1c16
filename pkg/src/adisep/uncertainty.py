"""Per-pixel uncertainty weighting and the decoupled feature fusion.

The uncertainty map assigns each depth pixel a confidence weight in (0,1):
the fused image/depth feature is squeezed to one channel, upsampled to the
depth resolution, and passed through ``1 - sigmoid`` (equivalently,
sigmoid of the negated logits, which is the numerically accurate form).
High logits therefore mean "suppress this region".

The fusion step routes features to two heads: appearance gets image plus
depth, localization gets depth plus the uncertainty-weighted sub-depth
feature plus the uncertainty feature.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .adis import SubDepthStack
from .errors import ShapeError
from .tensor import (
    FeatureMap,
    add,
    bilinear_upsample,
    bilinear_upsample_backward,
    conv2d,
    conv2d_backward,
    elementwise_mul,
)

# Clamp keeps the map inside the representable open interval even for
# logits far beyond the double-precision saturation point.
_U_FLOOR = np.finfo(np.float64).tiny
_U_CEIL = float(np.nextafter(1.0, 0.0))


class UncertaintyMap:
    """H x W confidence weights, strictly inside (0, 1)."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ShapeError(f"uncertainty map must be 2-d and non-empty, got {values.shape}")
        if not np.all((values > 0.0) & (values < 1.0)):
            raise ValueError("uncertainty values must lie strictly in (0, 1)")
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __repr__(self) -> str:
        return f"UncertaintyMap(shape={self.shape})"


def _negated_sigmoid(x: np.ndarray) -> np.ndarray:
    # 1 - sigmoid(x) computed as sigmoid(-x): exact in the small tail where
    # the subtraction would cancel.
    out = np.empty_like(x)
    neg = x <= 0
    out[neg] = 1.0 / (1.0 + np.exp(x[neg]))
    ex = np.exp(-x[~neg])
    out[~neg] = ex / (1.0 + ex)
    return out


def compute_uncertainty(fused: FeatureMap, reduce_weight, reduce_bias,
                        target: tuple[int, int]) -> UncertaintyMap:
    """Squeeze, upsample, and invert-sigmoid a fused feature into weights.

    ``target`` must be at least the feature's spatial size.  Zero reduce
    parameters give a uniform map of 0.5.
    """
    logits = conv2d(fused, reduce_weight, reduce_bias)
    up = bilinear_upsample(logits, target)
    u = _negated_sigmoid(up.data[0])
    return UncertaintyMap(np.clip(u, _U_FLOOR, _U_CEIL))


def compute_uncertainty_backward(grad_u: np.ndarray, fused: FeatureMap, reduce_weight,
                                 reduce_bias, target: tuple[int, int]):
    """Gradients of ``compute_uncertainty`` w.r.t. (fused, weight, bias).

    Recomputes the forward chain; the epsilon clamp applied at the extreme
    tails is treated as the identity.
    """
    logits = conv2d(fused, reduce_weight, reduce_bias)
    up = bilinear_upsample(logits, target)
    u = _negated_sigmoid(up.data[0])
    grad_u = np.asarray(grad_u, dtype=np.float64)
    if grad_u.shape != u.shape:
        raise ShapeError(f"grad shape {grad_u.shape} != map shape {u.shape}")
    # dU/dlogit = -u (1 - u)
    grad_up = (-grad_u * u * (1.0 - u))[None]
    grad_logits = bilinear_upsample_backward(grad_up, (logits.height, logits.width))
    return conv2d_backward(grad_logits, fused, reduce_weight)


def apply_uncertainty(stack: SubDepthStack, u: UncertaintyMap, kernel, bias,
                      stride: int = 1, padding: int = 0) -> FeatureMap:
    """Weight a sub-depth stack by confidence and convolve to a feature.

    The single-channel map is duplicated across the stack's layers before
    the product; the composition is exactly elementwise_mul followed by
    conv2d on the duplicated map.
    """
    if u.shape != stack.shape:
        raise ShapeError(f"uncertainty shape {u.shape} != stack layer shape {stack.shape}")
    stack_fm = FeatureMap(stack.layers)
    u_fm = FeatureMap(np.broadcast_to(u.values, stack.layers.shape).copy())
    weighted = elementwise_mul(stack_fm, u_fm)
    return conv2d(weighted, kernel, bias, stride=stride, padding=padding)


def uncertainty_feature(u: UncertaintyMap, kernel, bias) -> FeatureMap:
    """Lift the scalar map into a feature: duplicate to the kernel's input
    channel count, then a 1x1 convolution."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[2:] != (1, 1):
        raise ShapeError(f"expected a 1x1 kernel, got shape {kernel.shape}")
    tiled = FeatureMap(np.broadcast_to(u.values, (kernel.shape[1],) + u.shape).copy())
    return conv2d(tiled, kernel, bias)


def write_uncertainty_png(u: UncertaintyMap) -> bytes:
    """8-bit grayscale export for visual inspection: pixel = round(255 * U).

    The stored convention is U itself (weight near 1 = trusted region),
    so bright pixels mean confident depth.
    """
    pixels = np.round(255.0 * u.values).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def fuse_features(f_img: FeatureMap, f_dep: FeatureMap, f_subdepth: FeatureMap,
                  f_unc: FeatureMap) -> tuple[FeatureMap, FeatureMap]:
    """Build the two head inputs from already-aligned features.

    Appearance is image + depth; localization is depth + weighted sub-depth
    + uncertainty.  All four inputs must share one (C, H, W) shape.
    """
    appearance = add(f_img, f_dep)
    localization = add(add(f_dep, f_subdepth), f_unc)
    return appearance, localization
