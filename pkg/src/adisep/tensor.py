"""Dense C x H x W tensors and the differentiable kernels built on them.

Every operation is a pure function: it validates shapes, computes a new
``FeatureMap`` (or ndarray), and has an explicit ``*_backward`` companion
returning gradients for each argument.  There is no tape or graph; call
sites chain backwards by hand and accumulate into ``FeatureMap.grad`` so
a tensor feeding several consumers receives summed contributions.

Everything is float64.  The library is correctness-first: analytic
backwards are meant to survive central finite-difference checks at 1e-5
relative error, which single precision cannot support.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ShapeError


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


class FeatureMap:
    """A (channels, height, width) block of float64 values.

    Values are immutable by convention once constructed; the optional
    ``grad`` buffer is the one mutable part and accumulates via
    ``accumulate_grad``.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = _as_float_array(data, "feature map")
        if arr.ndim != 3:
            raise ShapeError(f"feature map must be 3-d (C, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"feature map dimensions must be >= 1, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def accumulate_grad(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {grad.shape} != value shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"FeatureMap(shape={self.data.shape})"


def _check_conv_args(inp: FeatureMap, kernel: np.ndarray, bias: np.ndarray,
                     stride: int, padding: int):
    kernel = _as_float_array(kernel, "kernel")
    bias = _as_float_array(bias, "bias")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be 4-d (C_out, C_in, kH, kW), got {kernel.shape}")
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({kernel.shape[0]},)")
    if kernel.shape[1] != inp.channels:
        raise ShapeError(
            f"kernel expects {kernel.shape[1]} input channels, feature map has {inp.channels}"
        )
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    h_out = (inp.height + 2 * padding - kernel.shape[2]) // stride + 1
    w_out = (inp.width + 2 * padding - kernel.shape[3]) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"convolution of { (inp.height, inp.width) } with kernel "
            f"{kernel.shape[2:]} (stride={stride}, padding={padding}) has empty output"
        )
    return kernel, bias


def conv2d(inp: FeatureMap, kernel, bias, stride: int = 1, padding: int = 0) -> FeatureMap:
    """2-d cross-correlation with zero padding, the usual CNN convention."""
    kernel, bias = _check_conv_args(inp, kernel, bias, stride, padding)
    out = _kernels.conv2d_forward(inp.data, kernel, bias, stride, padding)
    return FeatureMap(out)


def conv2d_backward(grad_out, inp: FeatureMap, kernel, stride: int = 1, padding: int = 0):
    """Gradients of ``conv2d`` w.r.t. (input, kernel, bias)."""
    kernel = _as_float_array(kernel, "kernel")
    grad_out = _as_float_array(grad_out, "grad_out")
    if grad_out.ndim != 3 or grad_out.shape[0] != kernel.shape[0]:
        raise ShapeError(f"grad_out shape {grad_out.shape} incompatible with kernel {kernel.shape}")
    return _kernels.conv2d_backward(grad_out, inp.data, kernel, stride, padding)


def fully_connected(inp, weights, bias) -> np.ndarray:
    """Affine map ``weights @ inp + bias`` on a flat vector."""
    inp = _as_float_array(inp, "input")
    weights = _as_float_array(weights, "weights")
    bias = _as_float_array(bias, "bias")
    if inp.ndim != 1 or weights.ndim != 2:
        raise ShapeError("fully_connected expects a 1-d input and 2-d weights")
    if weights.shape[1] != inp.shape[0]:
        raise ShapeError(f"weights expect input of length {weights.shape[1]}, got {inp.shape[0]}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    return weights @ inp + bias


def fully_connected_backward(grad_out, inp, weights):
    """Gradients of ``fully_connected`` w.r.t. (input, weights, bias)."""
    grad_out = _as_float_array(grad_out, "grad_out")
    inp = _as_float_array(inp, "input")
    weights = _as_float_array(weights, "weights")
    grad_inp = weights.T @ grad_out
    grad_w = np.outer(grad_out, inp)
    return grad_inp, grad_w, grad_out.copy()


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(inp: FeatureMap) -> FeatureMap:
    """Elementwise logistic function, overflow-safe on both tails."""
    return FeatureMap(_stable_sigmoid(inp.data))


def sigmoid_backward(grad_out, out: FeatureMap) -> np.ndarray:
    """Gradient of ``sigmoid`` given its forward output."""
    grad_out = _as_float_array(grad_out, "grad_out")
    if grad_out.shape != out.data.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != output shape {out.data.shape}")
    y = out.data
    return grad_out * y * (1.0 - y)


def softmax(inp) -> np.ndarray:
    """Softmax over a 1-d vector, computed with max subtraction."""
    inp = _as_float_array(inp, "input")
    if inp.ndim != 1 or inp.shape[0] < 1:
        raise ShapeError("softmax expects a non-empty 1-d vector")
    shifted = inp - inp.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_backward(grad_out, out) -> np.ndarray:
    """Gradient of ``softmax`` given its forward output."""
    grad_out = _as_float_array(grad_out, "grad_out")
    out = _as_float_array(out, "output")
    return out * (grad_out - np.dot(grad_out, out))


def bilinear_upsample(inp: FeatureMap, target: tuple[int, int]) -> FeatureMap:
    """Resize to ``target`` (H, W) by bilinear interpolation.

    Uses the align-corners-false convention: source coordinates are
    ``(dst + 0.5) * in/out - 0.5``, clamped at the borders.  Constant maps
    stay constant and outputs never leave the input min/max range.
    """
    out_h, out_w = int(target[0]), int(target[1])
    if out_h < inp.height or out_w < inp.width:
        raise ShapeError(
            f"target {(out_h, out_w)} is smaller than source {(inp.height, inp.width)}"
        )
    if (out_h, out_w) == (inp.height, inp.width):
        return FeatureMap(inp.data.copy())
    return FeatureMap(_kernels.bilinear_forward(inp.data, out_h, out_w))


def bilinear_upsample_backward(grad_out, source_size: tuple[int, int]) -> np.ndarray:
    """Gradient of ``bilinear_upsample`` w.r.t. its input."""
    grad_out = _as_float_array(grad_out, "grad_out")
    in_h, in_w = int(source_size[0]), int(source_size[1])
    if grad_out.shape[1:] == (in_h, in_w):
        return grad_out.copy()
    return _kernels.bilinear_backward(grad_out, in_h, in_w)


def _check_same_shape(a: FeatureMap, b: FeatureMap, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op} requires equal shapes, got {a.shape} and {b.shape}")


def add(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    _check_same_shape(a, b, "add")
    return FeatureMap(a.data + b.data)


def add_backward(grad_out):
    """Gradient of ``add``: the upstream gradient flows to both operands."""
    grad_out = _as_float_array(grad_out, "grad_out")
    return grad_out, grad_out.copy()


def elementwise_mul(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    _check_same_shape(a, b, "elementwise_mul")
    return FeatureMap(a.data * b.data)


def elementwise_mul_backward(grad_out, a: FeatureMap, b: FeatureMap):
    grad_out = _as_float_array(grad_out, "grad_out")
    return grad_out * b.data, grad_out * a.data
