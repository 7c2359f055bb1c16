"""Desk-scale stand-in encoders for the CLI pipeline.

The real system would put a deep backbone here; the toolkit only needs
*some* deterministic feature extractor so every operation can run end to
end.  Each encoder is two seeded 3x3 convolutions with stride 2 and a
sigmoid in between, taking the normalized depth map as its single input
channel (the image branch reuses the depth map as a stand-in, since the
CLI works from depth files alone).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adis import BoundHead, DepthMap
from .config import Config
from .tensor import FeatureMap, add, conv2d, sigmoid

DEMO_MID_CHANNELS = 4
DEMO_OUT_CHANNELS = 8


@dataclass
class DemoEncoder:
    """Two-layer seeded conv stack; downsamples spatial dims by 4."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def seeded(cls, rng: np.random.Generator, in_channels: int = 1,
               mid: int = DEMO_MID_CHANNELS, out: int = DEMO_OUT_CHANNELS) -> "DemoEncoder":
        return cls(
            w1=rng.normal(0.0, 1.0 / np.sqrt(9 * in_channels), size=(mid, in_channels, 3, 3)),
            b1=rng.normal(0.0, 0.1, size=mid),
            w2=rng.normal(0.0, 1.0 / np.sqrt(9 * mid), size=(out, mid, 3, 3)),
            b2=rng.normal(0.0, 0.1, size=out),
        )

    def encode(self, inp: FeatureMap) -> FeatureMap:
        hidden = sigmoid(conv2d(inp, self.w1, self.b1, stride=2, padding=1))
        return conv2d(hidden, self.w2, self.b2, stride=2, padding=1)


@dataclass
class DemoPipeline:
    """Everything the CLI needs to turn one depth map into features."""

    image_encoder: DemoEncoder
    depth_encoder: DemoEncoder
    bound_head: BoundHead
    unc_weight: np.ndarray  # 1x1 reduce conv for the uncertainty map
    unc_bias: np.ndarray
    d_max: float


def feature_shape_for(pad_width: int, pad_height: int) -> tuple[int, int, int]:
    """Encoder output shape for a padded input (two stride-2 convs)."""
    h = (pad_height + 1) // 2
    h = (h + 1) // 2
    w = (pad_width + 1) // 2
    w = (w + 1) // 2
    return (DEMO_OUT_CHANNELS, h, w)


def build_pipeline(cfg: Config, zero_weights: bool = False) -> DemoPipeline:
    """Construct the seeded demo pipeline for the configured padded size.

    ``zero_weights`` zeroes the uncertainty reduce conv, pinning the map
    at 0.5 everywhere (the sanity-check configuration).
    """
    rng = np.random.default_rng(cfg.seed)
    image_encoder = DemoEncoder.seeded(rng)
    depth_encoder = DemoEncoder.seeded(rng)
    feat_shape = feature_shape_for(cfg.pad_width, cfg.pad_height)
    bound_head = BoundHead.randomized(feat_shape, cfg.n_d, rng)
    if zero_weights:
        unc_weight = np.zeros((1, DEMO_OUT_CHANNELS, 1, 1))
        unc_bias = np.zeros(1)
    else:
        unc_weight = rng.normal(0.0, 1.0 / np.sqrt(DEMO_OUT_CHANNELS), size=(1, DEMO_OUT_CHANNELS, 1, 1))
        unc_bias = rng.normal(0.0, 0.1, size=1)
    return DemoPipeline(
        image_encoder=image_encoder,
        depth_encoder=depth_encoder,
        bound_head=bound_head,
        unc_weight=unc_weight,
        unc_bias=unc_bias,
        d_max=cfg.d_max,
    )


def pad_depth(dep: DepthMap, pad_width: int, pad_height: int) -> DepthMap:
    """Zero-pad (invalid) on the right and bottom to the target size."""
    h, w = dep.shape
    if pad_height < h or pad_width < w:
        raise ValueError(
            f"padding target {(pad_width, pad_height)} smaller than input {(w, h)}"
        )
    depth = np.zeros((pad_height, pad_width))
    valid = np.zeros((pad_height, pad_width), dtype=bool)
    depth[:h, :w] = dep.depth
    valid[:h, :w] = dep.valid
    return DepthMap(depth, valid)


def fused_feature(pipe: DemoPipeline, padded: DepthMap) -> FeatureMap:
    """Image and depth branch features, fused by elementwise sum."""
    normalized = FeatureMap((padded.depth / pipe.d_max)[None])
    f_img = pipe.image_encoder.encode(normalized)
    f_dep = pipe.depth_encoder.encode(normalized)
    return add(f_img, f_dep)
