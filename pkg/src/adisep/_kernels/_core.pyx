# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: convolution, bilinear resampling, depth-interval
separation, and convex polygon clipping.

Keep in lockstep with ``adisep._kernels.pure``: same signatures, same
accumulation order per output element, so results match the fallback
bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def conv2d_forward(double[:, :, ::1] inp, double[:, :, :, ::1] kernel,
                   double[::1] bias, Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t c_in = inp.shape[0], h = inp.shape[1], w = inp.shape[2]
    cdef Py_ssize_t c_out = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    cdef Py_ssize_t h_out = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t w_out = (w + 2 * padding - kw) // stride + 1
    out_arr = np.empty((c_out, h_out, w_out), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t co, ci, oy, ox, i, j, iy, ix
    cdef double acc
    with nogil:
        for co in range(c_out):
            for oy in range(h_out):
                for ox in range(w_out):
                    acc = bias[co]
                    for ci in range(c_in):
                        for i in range(kh):
                            iy = oy * stride + i - padding
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride + j - padding
                                if ix < 0 or ix >= w:
                                    continue
                                acc += kernel[co, ci, i, j] * inp[ci, iy, ix]
                    out[co, oy, ox] = acc
    return out_arr


def conv2d_backward(double[:, :, ::1] grad_out, double[:, :, ::1] inp,
                    double[:, :, :, ::1] kernel, Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t c_in = inp.shape[0], h = inp.shape[1], w = inp.shape[2]
    cdef Py_ssize_t c_out = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    cdef Py_ssize_t h_out = grad_out.shape[1], w_out = grad_out.shape[2]
    gi_arr = np.zeros((c_in, h, w), dtype=np.float64)
    gk_arr = np.zeros((c_out, c_in, kh, kw), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, :, ::1] gi = gi_arr
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t co, ci, oy, ox, i, j, iy, ix
    cdef double g, acc, kc
    with nogil:
        for co in range(c_out):
            for oy in range(h_out):
                for ox in range(w_out):
                    gb[co] += grad_out[co, oy, ox]
        # (ci, i, j) outermost keeps grad_out and input reads row-wise and
        # lets the kernel gradient accumulate in a register.
        for ci in range(c_in):
            for i in range(kh):
                for j in range(kw):
                    for co in range(c_out):
                        kc = kernel[co, ci, i, j]
                        acc = 0.0
                        for oy in range(h_out):
                            iy = oy * stride + i - padding
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(w_out):
                                ix = ox * stride + j - padding
                                if ix < 0 or ix >= w:
                                    continue
                                g = grad_out[co, oy, ox]
                                acc += g * inp[ci, iy, ix]
                                gi[ci, iy, ix] += g * kc
                        gk[co, ci, i, j] = acc
    return gi_arr, gk_arr, gb_arr


cdef inline void _axis_coords(Py_ssize_t n_in, Py_ssize_t n_out,
                              Py_ssize_t[::1] lo, Py_ssize_t[::1] hi,
                              double[::1] frac) nogil:
    cdef Py_ssize_t k
    cdef double scale = (<double> n_in) / (<double> n_out)
    cdef double src
    for k in range(n_out):
        src = ((<double> k) + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > n_in - 1.0:
            src = n_in - 1.0
        lo[k] = <Py_ssize_t> floor(src)
        hi[k] = lo[k] + 1
        if hi[k] > n_in - 1:
            hi[k] = n_in - 1
        frac[k] = src - <double> lo[k]


def bilinear_forward(double[:, :, ::1] inp, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t c = inp.shape[0], h = inp.shape[1], w = inp.shape[2]
    out_arr = np.empty((c, out_h, out_w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    y0_arr = np.empty(out_h, dtype=np.intp)
    y1_arr = np.empty(out_h, dtype=np.intp)
    dy_arr = np.empty(out_h, dtype=np.float64)
    x0_arr = np.empty(out_w, dtype=np.intp)
    x1_arr = np.empty(out_w, dtype=np.intp)
    dx_arr = np.empty(out_w, dtype=np.float64)
    cdef Py_ssize_t[::1] y0 = y0_arr, y1 = y1_arr, x0 = x0_arr, x1 = x1_arr
    cdef double[::1] dy = dy_arr, dx = dx_arr
    cdef Py_ssize_t ch, oy, ox
    cdef double fy, fx, top, bot
    with nogil:
        _axis_coords(h, out_h, y0, y1, dy)
        _axis_coords(w, out_w, x0, x1, dx)
        for ch in range(c):
            for oy in range(out_h):
                fy = dy[oy]
                for ox in range(out_w):
                    fx = dx[ox]
                    top = (1.0 - fx) * inp[ch, y0[oy], x0[ox]] + fx * inp[ch, y0[oy], x1[ox]]
                    bot = (1.0 - fx) * inp[ch, y1[oy], x0[ox]] + fx * inp[ch, y1[oy], x1[ox]]
                    out[ch, oy, ox] = (1.0 - fy) * top + fy * bot
    return out_arr


def bilinear_backward(double[:, :, ::1] grad_out, Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t c = grad_out.shape[0], out_h = grad_out.shape[1], out_w = grad_out.shape[2]
    gi_arr = np.zeros((c, in_h, in_w), dtype=np.float64)
    cdef double[:, :, ::1] gi = gi_arr
    y0_arr = np.empty(out_h, dtype=np.intp)
    y1_arr = np.empty(out_h, dtype=np.intp)
    dy_arr = np.empty(out_h, dtype=np.float64)
    x0_arr = np.empty(out_w, dtype=np.intp)
    x1_arr = np.empty(out_w, dtype=np.intp)
    dx_arr = np.empty(out_w, dtype=np.float64)
    cdef Py_ssize_t[::1] y0 = y0_arr, y1 = y1_arr, x0 = x0_arr, x1 = x1_arr
    cdef double[::1] dy = dy_arr, dx = dx_arr
    cdef Py_ssize_t ch, oy, ox
    cdef double fy, fx, g
    with nogil:
        _axis_coords(in_h, out_h, y0, y1, dy)
        _axis_coords(in_w, out_w, x0, x1, dx)
        for ch in range(c):
            for oy in range(out_h):
                fy = dy[oy]
                for ox in range(out_w):
                    fx = dx[ox]
                    g = grad_out[ch, oy, ox]
                    gi[ch, y0[oy], x0[ox]] += (1.0 - fy) * (1.0 - fx) * g
                    gi[ch, y0[oy], x1[ox]] += (1.0 - fy) * fx * g
                    gi[ch, y1[oy], x0[ox]] += fy * (1.0 - fx) * g
                    gi[ch, y1[oy], x1[ox]] += fy * fx * g
    return gi_arr


def separate_hard(double[:, ::1] depth, cnp.uint8_t[:, ::1] valid, double[::1] bounds):
    cdef Py_ssize_t n_d = bounds.shape[0] - 1
    cdef Py_ssize_t h = depth.shape[0], w = depth.shape[1]
    stack_arr = np.zeros((n_d, h, w), dtype=np.float64)
    cdef double[:, :, ::1] stack = stack_arr
    cdef Py_ssize_t r, c, i
    cdef double v
    with nogil:
        for r in range(h):
            for c in range(w):
                if not valid[r, c]:
                    continue
                v = depth[r, c]
                i = n_d - 1
                while i > 0 and v < bounds[i]:
                    i -= 1
                stack[i, r, c] = v
    return stack_arr


def separate_soft(double[:, ::1] depth, cnp.uint8_t[:, ::1] valid,
                  double[::1] bounds, double tau):
    cdef Py_ssize_t n_d = bounds.shape[0] - 1
    cdef Py_ssize_t h = depth.shape[0], w = depth.shape[1]
    stack_arr = np.zeros((n_d, h, w), dtype=np.float64)
    cdef double[:, :, ::1] stack = stack_arr
    cdef Py_ssize_t r, c, i
    cdef double v, lo, hi
    with nogil:
        for r in range(h):
            for c in range(w):
                if not valid[r, c]:
                    continue
                v = depth[r, c]
                lo = _sigmoid((v - bounds[0]) / tau)
                for i in range(n_d):
                    hi = _sigmoid((v - bounds[i + 1]) / tau)
                    stack[i, r, c] = (lo - hi) * v
                    lo = hi
    return stack_arr


def separate_soft_bounds_grad(double[:, :, ::1] grad_out, double[:, ::1] depth,
                              cnp.uint8_t[:, ::1] valid, double[::1] bounds, double tau):
    cdef Py_ssize_t n_b = bounds.shape[0]
    cdef Py_ssize_t h = depth.shape[0], w = depth.shape[1]
    gb_arr = np.zeros(n_b, dtype=np.float64)
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t r, c, i
    cdef double v, s, ds, gv
    with nogil:
        for i in range(n_b):
            for r in range(h):
                for c in range(w):
                    if not valid[r, c]:
                        continue
                    v = depth[r, c]
                    s = _sigmoid((v - bounds[i]) / tau)
                    ds = s * (1.0 - s) / tau
                    if i < n_b - 1:
                        gb[i] += -grad_out[i, r, c] * v * ds
                    if i > 0:
                        gb[i] += grad_out[i - 1, r, c] * v * ds
    return gb_arr


def convex_clip(double[:, ::1] subject, double[:, ::1] clip_poly, double eps=1e-9):
    cdef Py_ssize_t n = subject.shape[0], m = clip_poly.shape[0]
    cdef Py_ssize_t cap = n + m + 8
    buf_a = np.empty((cap, 2), dtype=np.float64)
    buf_b = np.empty((cap, 2), dtype=np.float64)
    cdef double[:, ::1] cur = buf_a
    cdef double[:, ::1] nxt = buf_b
    cdef double[:, ::1] tmp
    cdef Py_ssize_t cur_n = n, nxt_n, e, k
    cdef double ax, ay, bx, by, ex, ey, sx, sy, px, py, dx, dy, den, t
    cdef bint s_in, p_in
    for k in range(n):
        cur[k, 0] = subject[k, 0]
        cur[k, 1] = subject[k, 1]
    for e in range(m):
        if cur_n == 0:
            break
        ax = clip_poly[e, 0]
        ay = clip_poly[e, 1]
        bx = clip_poly[(e + 1) % m, 0]
        by = clip_poly[(e + 1) % m, 1]
        ex = bx - ax
        ey = by - ay
        nxt_n = 0
        sx = cur[cur_n - 1, 0]
        sy = cur[cur_n - 1, 1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= -eps
        for k in range(cur_n):
            px = cur[k, 0]
            py = cur[k, 1]
            p_in = ex * (py - ay) - ey * (px - ax) >= -eps
            if p_in != s_in:
                dx = px - sx
                dy = py - sy
                den = ex * dy - ey * dx
                if den != 0.0:
                    t = (ex * (ay - sy) - ey * (ax - sx)) / den
                    nxt[nxt_n, 0] = sx + t * dx
                    nxt[nxt_n, 1] = sy + t * dy
                    nxt_n += 1
            if p_in:
                nxt[nxt_n, 0] = px
                nxt[nxt_n, 1] = py
                nxt_n += 1
            sx = px
            sy = py
            s_in = p_in
        tmp = cur
        cur = nxt
        nxt = tmp
        cur_n = nxt_n
    return np.asarray(cur[:cur_n]).copy()
