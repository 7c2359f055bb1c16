"""Numpy fallback implementations of the hot kernels.

Mirrors ``adisep._kernels._core`` (the Cython extension) function for
function.  Accumulation orders match the compiled loops so both backends
agree to the last bit on identical inputs.

All array arguments are C-contiguous float64; shape validation happens in
the calling modules, not here.
"""

import numpy as np

BACKEND_NAME = "pure"


def _sigmoid(x):
    # Stable on both tails: never exponentiates a positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv2d_forward(inp, kernel, bias, stride, padding):
    c_in, h, w = inp.shape
    c_out, _, kh, kw = kernel.shape
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    padded = np.pad(inp, ((0, 0), (padding, padding), (padding, padding)))
    out = np.empty((c_out, h_out, w_out))
    out[:] = bias[:, None, None]
    for ci in range(c_in):
        for i in range(kh):
            for j in range(kw):
                window = padded[ci, i : i + stride * h_out : stride, j : j + stride * w_out : stride]
                out += kernel[:, ci, i, j][:, None, None] * window[None]
    return out


def conv2d_backward(grad_out, inp, kernel, stride, padding):
    c_in, h, w = inp.shape
    c_out, _, kh, kw = kernel.shape
    _, h_out, w_out = grad_out.shape
    padded = np.pad(inp, ((0, 0), (padding, padding), (padding, padding)))
    grad_padded = np.zeros_like(padded)
    grad_kernel = np.zeros_like(kernel)
    for ci in range(c_in):
        for i in range(kh):
            for j in range(kw):
                window = padded[ci, i : i + stride * h_out : stride, j : j + stride * w_out : stride]
                grad_kernel[:, ci, i, j] = np.tensordot(grad_out, window, axes=([1, 2], [0, 1]))
                grad_padded[ci, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += np.tensordot(
                    kernel[:, ci, i, j], grad_out, axes=(0, 0)
                )
    if padding:
        grad_inp = grad_padded[:, padding : padding + h, padding : padding + w].copy()
    else:
        grad_inp = grad_padded
    grad_bias = grad_out.sum(axis=(1, 2))
    return grad_inp, grad_kernel, grad_bias


def _bilinear_coords(n_in, n_out):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_forward(inp, out_h, out_w):
    _, h, w = inp.shape
    y0, y1, dy = _bilinear_coords(h, out_h)
    x0, x1, dx = _bilinear_coords(w, out_w)
    v00 = inp[:, y0[:, None], x0[None, :]]
    v01 = inp[:, y0[:, None], x1[None, :]]
    v10 = inp[:, y1[:, None], x0[None, :]]
    v11 = inp[:, y1[:, None], x1[None, :]]
    dy = dy[None, :, None]
    dx = dx[None, None, :]
    top = (1.0 - dx) * v00 + dx * v01
    bot = (1.0 - dx) * v10 + dx * v11
    return (1.0 - dy) * top + dy * bot


def bilinear_backward(grad_out, in_h, in_w):
    c, out_h, out_w = grad_out.shape
    y0, y1, dy = _bilinear_coords(in_h, out_h)
    x0, x1, dx = _bilinear_coords(in_w, out_w)
    dy = dy[:, None]
    dx = dx[None, :]
    grad_inp = np.zeros((c, in_h, in_w))
    yy0 = np.broadcast_to(y0[:, None], (out_h, out_w))
    yy1 = np.broadcast_to(y1[:, None], (out_h, out_w))
    xx0 = np.broadcast_to(x0[None, :], (out_h, out_w))
    xx1 = np.broadcast_to(x1[None, :], (out_h, out_w))
    for ch in range(c):
        g = grad_out[ch]
        np.add.at(grad_inp[ch], (yy0, xx0), (1.0 - dy) * (1.0 - dx) * g)
        np.add.at(grad_inp[ch], (yy0, xx1), (1.0 - dy) * dx * g)
        np.add.at(grad_inp[ch], (yy1, xx0), dy * (1.0 - dx) * g)
        np.add.at(grad_inp[ch], (yy1, xx1), dy * dx * g)
    return grad_inp


def separate_hard(depth, valid, bounds):
    n_d = bounds.shape[0] - 1
    h, w = depth.shape
    # Half-open intervals [b_i, b_{i+1}); values past the last bound clamp
    # into the final layer.
    idx = np.searchsorted(bounds, depth, side="right") - 1
    idx = np.clip(idx, 0, n_d - 1)
    stack = np.zeros((n_d, h, w))
    mask = valid.astype(bool)
    layer_sel = idx[mask]
    rows, cols = np.nonzero(mask)
    stack[layer_sel, rows, cols] = depth[mask]
    return stack


def separate_soft(depth, valid, bounds, tau):
    n_d = bounds.shape[0] - 1
    h, w = depth.shape
    stack = np.zeros((n_d, h, w))
    mask = valid.astype(bool)
    v = depth[mask]
    lo = _sigmoid((v[None, :] - bounds[:-1, None]) / tau)
    hi = _sigmoid((v[None, :] - bounds[1:, None]) / tau)
    weights = lo - hi
    stack[:, mask] = weights * v[None, :]
    return stack


def separate_soft_bounds_grad(grad_out, depth, valid, bounds, tau):
    n_b = bounds.shape[0]
    mask = valid.astype(bool)
    v = depth[mask]
    g = grad_out[:, mask]
    grad_bounds = np.zeros(n_b)
    s = _sigmoid((v[None, :] - bounds[:, None]) / tau)
    ds = s * (1.0 - s) / tau
    # layer i weight = sigmoid((v-b_i)/tau) - sigmoid((v-b_{i+1})/tau)
    gv = g * v[None, :]
    grad_bounds[:-1] += (-gv * ds[:-1]).sum(axis=1)
    grad_bounds[1:] += (gv * ds[1:]).sum(axis=1)
    return grad_bounds


def convex_clip(subject, clip_poly, eps=1e-9):
    """Sutherland-Hodgman clip of convex CCW ``subject`` by convex CCW
    ``clip_poly``.  Vertices within ``eps`` of a clip edge count as inside."""
    output = [(subject[i, 0], subject[i, 1]) for i in range(subject.shape[0])]
    m = clip_poly.shape[0]
    for e in range(m):
        if not output:
            break
        ax, ay = clip_poly[e, 0], clip_poly[e, 1]
        bx, by = clip_poly[(e + 1) % m, 0], clip_poly[(e + 1) % m, 1]
        ex, ey = bx - ax, by - ay
        polygon = output
        output = []
        sx, sy = polygon[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= -eps
        for px, py in polygon:
            p_in = ex * (py - ay) - ey * (px - ax) >= -eps
            if p_in != s_in:
                dx, dy = px - sx, py - sy
                den = ex * dy - ey * dx
                if den != 0.0:
                    t = (ex * (ay - sy) - ey * (ax - sx)) / den
                    output.append((sx + t * dx, sy + t * dy))
            if p_in:
                output.append((px, py))
            sx, sy, s_in = px, py, p_in
    return np.array(output, dtype=np.float64).reshape(-1, 2)
