"""Adaptive distance-interval separation of depth maps.

A depth map is split into ``n_d`` disjoint layers, one per distance
interval.  Interval widths come from a small learned head (1x1 channel
reduction, flatten, one fully connected layer, softmax) scaled by the
maximum range, so the partition adapts to the input feature.  Hard
separation copies each valid pixel into exactly one layer; a sigmoid-based
soft variant provides finite gradients with respect to the bounds, which
the hard assignment lacks almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeError
from .tensor import FeatureMap, conv2d, fully_connected, softmax

BOUND_SUM_TOL = 1e-9
DEFAULT_TAU = 0.5


class DepthMap:
    """Dense per-pixel metric depth with a validity mask.

    A stored 0 means "no measurement": invalid pixels carry depth 0 and
    mask False, valid pixels carry finite depth > 0.
    """

    __slots__ = ("depth", "valid")

    def __init__(self, depth, valid=None):
        depth = np.ascontiguousarray(depth, dtype=np.float64)
        if depth.ndim != 2 or min(depth.shape) < 1:
            raise ShapeError(f"depth map must be 2-d and non-empty, got shape {depth.shape}")
        if not np.all(np.isfinite(depth)):
            raise ValueError("depth map contains NaN or Inf")
        if np.any(depth < 0):
            raise ValueError("depth values must be >= 0")
        if valid is None:
            valid = depth > 0
        else:
            valid = np.ascontiguousarray(valid, dtype=bool)
            if valid.shape != depth.shape:
                raise ShapeError(f"mask shape {valid.shape} != depth shape {depth.shape}")
            if np.any(valid & (depth <= 0)):
                raise ValueError("valid pixels must have depth > 0")
            depth = np.where(valid, depth, 0.0)
        self.depth = depth
        self.valid = valid

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def valid_count(self) -> int:
        return int(self.valid.sum())

    def __repr__(self) -> str:
        return f"DepthMap(shape={self.shape}, valid={self.valid_count()})"


class IntervalPartition:
    """Monotone distance bounds ``0 = b_0 < b_1 < ... < b_n = d_max``.

    The bounds array is the single source of truth; widths are derived.
    Interval i is half-open ``[b_i, b_{i+1})`` except the last, which is
    closed at ``d_max`` (and absorbs anything beyond it on separation).
    """

    __slots__ = ("bounds", "d_max")

    def __init__(self, bounds, d_max: float | None = None):
        bounds = np.ascontiguousarray(bounds, dtype=np.float64)
        if bounds.ndim != 1 or bounds.shape[0] < 2:
            raise ValueError("bounds must be a 1-d array with at least two entries")
        if not np.all(np.isfinite(bounds)):
            raise ValueError("bounds contain NaN or Inf")
        if bounds[0] != 0.0:
            raise ValueError(f"first bound must be 0, got {bounds[0]}")
        if np.any(np.diff(bounds) <= 0):
            raise ValueError("bounds must be strictly increasing")
        if d_max is None:
            d_max = float(bounds[-1])
        d_max = float(d_max)
        if d_max <= 0:
            raise ValueError(f"d_max must be > 0, got {d_max}")
        if abs(bounds[-1] - d_max) > BOUND_SUM_TOL * max(1.0, d_max):
            raise ValueError(f"last bound {bounds[-1]} does not reach d_max {d_max}")
        self.bounds = bounds
        self.d_max = d_max

    @classmethod
    def from_widths(cls, widths, d_max: float | None = None) -> "IntervalPartition":
        widths = np.asarray(widths, dtype=np.float64)
        if widths.ndim != 1 or widths.shape[0] < 1:
            raise ValueError("widths must be a non-empty 1-d array")
        bounds = np.concatenate(([0.0], np.cumsum(widths)))
        return cls(bounds, d_max)

    @classmethod
    def uniform(cls, n_d: int, d_max: float) -> "IntervalPartition":
        if n_d < 1:
            raise ValueError(f"n_d must be >= 1, got {n_d}")
        return cls(np.linspace(0.0, d_max, n_d + 1), d_max)

    @property
    def n_d(self) -> int:
        return self.bounds.shape[0] - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bounds)

    def layer_of(self, values) -> np.ndarray:
        """Interval index for each value, with >= d_max clamped to the last."""
        idx = np.searchsorted(self.bounds, np.asarray(values, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.n_d - 1)

    def __repr__(self) -> str:
        return f"IntervalPartition(n_d={self.n_d}, d_max={self.d_max})"


class SubDepthStack:
    """``n_d`` depth layers produced by hard separation.

    Per pixel at most one layer is nonzero, and every nonzero value lies in
    its layer's interval (the last layer also holds clamped far values).
    ``validate()`` checks those invariants; the constructor only checks
    shape and finiteness so building a stack stays O(n).
    """

    __slots__ = ("layers", "partition")

    def __init__(self, layers, partition: IntervalPartition):
        layers = np.ascontiguousarray(layers, dtype=np.float64)
        if layers.ndim != 3:
            raise ShapeError(f"stack must be 3-d (n_d, H, W), got shape {layers.shape}")
        if layers.shape[0] != partition.n_d:
            raise ShapeError(
                f"stack has {layers.shape[0]} layers, partition has {partition.n_d} intervals"
            )
        if not np.all(np.isfinite(layers)):
            raise ValueError("stack contains NaN or Inf")
        if np.any(layers < 0):
            raise ValueError("stack values must be >= 0")
        self.layers = layers
        self.partition = partition

    @property
    def n_d(self) -> int:
        return self.layers.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.layers.shape[1:]

    def occupancy(self) -> np.ndarray:
        """Nonzero pixel count per layer."""
        return np.count_nonzero(self.layers, axis=(1, 2))

    def validate(self) -> None:
        """Assert disjointness and interval membership of every nonzero pixel."""
        nonzero = self.layers != 0.0
        per_pixel = nonzero.sum(axis=0)
        if per_pixel.max(initial=0) > 1:
            raise ValueError("a pixel is nonzero in more than one layer")
        b = self.partition.bounds
        for i in range(self.n_d):
            vals = self.layers[i][nonzero[i]]
            if vals.size == 0:
                continue
            if vals.min() < b[i]:
                raise ValueError(f"layer {i} holds a value below its lower bound")
            if i < self.n_d - 1 and vals.max() >= b[i + 1]:
                raise ValueError(f"layer {i} holds a value at or above its upper bound")

    def __repr__(self) -> str:
        return f"SubDepthStack(n_d={self.n_d}, shape={self.shape})"


@dataclass
class BoundHead:
    """Parameters of the interval-bound head.

    A 1x1 convolution squeezes the fused feature to one channel, the map is
    flattened, and a single fully connected layer emits one logit per
    interval.  Softmax of the logits, scaled by the range, gives the widths.
    """

    reduce_weight: np.ndarray  # (1, C, 1, 1)
    reduce_bias: np.ndarray  # (1,)
    fc_weight: np.ndarray  # (n_d, H * W)
    fc_bias: np.ndarray  # (n_d,)
    in_shape: tuple[int, int, int] = field(default=(0, 0, 0))  # (C, H, W)

    def __post_init__(self):
        c, h, w = self.in_shape
        if self.reduce_weight.shape != (1, c, 1, 1):
            raise ShapeError(f"reduce_weight shape {self.reduce_weight.shape} != (1, {c}, 1, 1)")
        if self.fc_weight.shape[1] != h * w:
            raise ShapeError(
                f"fc_weight expects {self.fc_weight.shape[1]} inputs, feature gives {h * w}"
            )
        if self.fc_bias.shape != (self.fc_weight.shape[0],):
            raise ShapeError("fc_bias length does not match fc_weight rows")

    @property
    def n_d(self) -> int:
        return self.fc_weight.shape[0]

    @classmethod
    def randomized(cls, in_shape: tuple[int, int, int], n_d: int,
                   rng: np.random.Generator) -> "BoundHead":
        c, h, w = in_shape
        return cls(
            reduce_weight=rng.normal(0.0, 1.0 / np.sqrt(c), size=(1, c, 1, 1)),
            reduce_bias=rng.normal(0.0, 0.1, size=(1,)),
            fc_weight=rng.normal(0.0, 1.0 / np.sqrt(h * w), size=(n_d, h * w)),
            fc_bias=rng.normal(0.0, 0.1, size=(n_d,)),
            in_shape=(c, h, w),
        )

    @classmethod
    def uniform_logits(cls, in_shape: tuple[int, int, int], n_d: int) -> "BoundHead":
        """All-zero head: every interval gets width d_max / n_d."""
        c, h, w = in_shape
        return cls(
            reduce_weight=np.zeros((1, c, 1, 1)),
            reduce_bias=np.zeros(1),
            fc_weight=np.zeros((n_d, h * w)),
            fc_bias=np.zeros(n_d),
            in_shape=(c, h, w),
        )


def compute_bounds(fused: FeatureMap, head: BoundHead, d_max: float) -> IntervalPartition:
    """Run the bound head on a fused feature and return the partition.

    Widths are ``softmax(logits) * d_max``, so they are positive and the
    cumulative bounds end at d_max up to accumulated rounding.
    """
    if d_max <= 0:
        raise ValueError(f"d_max must be > 0, got {d_max}")
    if fused.shape != head.in_shape:
        raise ShapeError(f"feature shape {fused.shape} != head input shape {head.in_shape}")
    squeezed = conv2d(fused, head.reduce_weight, head.reduce_bias)
    logits = fully_connected(squeezed.data.ravel(), head.fc_weight, head.fc_bias)
    widths = softmax(logits) * d_max
    return IntervalPartition.from_widths(widths, d_max)


def separate(dep: DepthMap, part: IntervalPartition) -> SubDepthStack:
    """Split a depth map into one layer per interval.

    A valid pixel lands in the unique layer whose half-open interval
    contains it; values at or past d_max keep their value but land in the
    last layer.  Invalid pixels are zero everywhere.
    """
    layers = _kernels.separate_hard(dep.depth, dep.valid.astype(np.uint8), part.bounds)
    return SubDepthStack(layers, part)


def soft_separate(dep: DepthMap, part: IntervalPartition, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Differentiable surrogate of ``separate``.

    Layer i holds ``(sigmoid((v - b_i)/tau) - sigmoid((v - b_{i+1})/tau)) * v``
    per valid pixel.  As tau -> 0 this converges to the hard assignment away
    from the bounds.  Returns a raw (n_d, H, W) array: the soft stack breaks
    the one-layer-per-pixel invariant of ``SubDepthStack`` by design.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return _kernels.separate_soft(dep.depth, dep.valid.astype(np.uint8), part.bounds, tau)


def soft_separate_bounds_grad(grad_out: np.ndarray, dep: DepthMap, part: IntervalPartition,
                              tau: float = DEFAULT_TAU) -> np.ndarray:
    """Gradient of ``soft_separate`` w.r.t. the bounds vector (n_d + 1,)."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float64)
    if grad_out.shape != (part.n_d,) + dep.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(part.n_d,) + dep.shape}")
    return _kernels.separate_soft_bounds_grad(
        grad_out, dep.depth, dep.valid.astype(np.uint8), part.bounds, tau
    )


def reconstruct(stack: SubDepthStack) -> DepthMap:
    """Collapse a stack back to a single map by summing layers.

    Inverse of ``separate`` up to its clamping of far values: the result
    equals the source depth on valid in-range pixels exactly.
    """
    total = stack.layers.sum(axis=0)
    return DepthMap(total, total > 0)
