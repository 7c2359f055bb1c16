"""Central finite-difference verification of every analytic backward.

Each check builds a small random instance, projects the operation's output
onto a fixed random direction to get a scalar loss, and compares the
analytic gradient against central differences with step 1e-5.  The
reported error is the worst elementwise |analytic - numeric| /
max(|analytic|, |numeric|, 1).

Elementary kernels must come in below 1e-5; composed paths (uncertainty
chain, soft separation, feature fusion) get 1e-4 headroom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import adis, tensor, uncertainty

FD_STEP = 1e-5
TOL_ELEMENTARY = 1e-5
TOL_COMPOSITE = 1e-4


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                       eps: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    for i in range(x.size):
        probe = x.copy().ravel()
        probe[i] += eps
        hi = f(probe.reshape(x.shape))
        probe[i] -= 2 * eps
        lo = f(probe.reshape(x.shape))
        flat[i] = (hi - lo) / (2 * eps)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err < self.tol


def _loss_proj(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.normal(size=shape)


def _check_conv2d(rng: np.random.Generator) -> list[CheckResult]:
    results = []
    for stride, padding, tag in ((1, 1, "s1p1"), (2, 0, "s2p0")):
        inp = tensor.FeatureMap(rng.normal(size=(2, 5, 6)))
        kernel = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3)
        out = tensor.conv2d(inp, kernel, bias, stride, padding)
        proj = _loss_proj(rng, out.shape)
        gi, gk, gb = tensor.conv2d_backward(proj, inp, kernel, stride, padding)

        def loss_inp(x):
            return float(np.sum(tensor.conv2d(tensor.FeatureMap(x), kernel, bias, stride, padding).data * proj))

        def loss_ker(k):
            return float(np.sum(tensor.conv2d(inp, k, bias, stride, padding).data * proj))

        def loss_bias(b):
            return float(np.sum(tensor.conv2d(inp, kernel, b, stride, padding).data * proj))

        results.append(CheckResult(f"conv2d[{tag}]/input", max_rel_error(gi, numerical_gradient(loss_inp, inp.data)), TOL_ELEMENTARY))
        results.append(CheckResult(f"conv2d[{tag}]/kernel", max_rel_error(gk, numerical_gradient(loss_ker, kernel)), TOL_ELEMENTARY))
        results.append(CheckResult(f"conv2d[{tag}]/bias", max_rel_error(gb, numerical_gradient(loss_bias, bias)), TOL_ELEMENTARY))
    return results


def _check_fully_connected(rng: np.random.Generator) -> list[CheckResult]:
    x = rng.normal(size=6)
    w = rng.normal(size=(4, 6))
    b = rng.normal(size=4)
    proj = _loss_proj(rng, (4,))
    gx, gw, gb = tensor.fully_connected_backward(proj, x, w)
    return [
        CheckResult("fully_connected/input",
                    max_rel_error(gx, numerical_gradient(lambda v: float(np.dot(tensor.fully_connected(v, w, b), proj)), x)),
                    TOL_ELEMENTARY),
        CheckResult("fully_connected/weights",
                    max_rel_error(gw, numerical_gradient(lambda v: float(np.dot(tensor.fully_connected(x, v, b), proj)), w)),
                    TOL_ELEMENTARY),
        CheckResult("fully_connected/bias",
                    max_rel_error(gb, numerical_gradient(lambda v: float(np.dot(tensor.fully_connected(x, w, v), proj)), b)),
                    TOL_ELEMENTARY),
    ]


def _check_sigmoid(rng: np.random.Generator) -> list[CheckResult]:
    x = rng.normal(size=(2, 4, 5))
    proj = _loss_proj(rng, x.shape)
    out = tensor.sigmoid(tensor.FeatureMap(x))
    g = tensor.sigmoid_backward(proj, out)
    num = numerical_gradient(lambda v: float(np.sum(tensor.sigmoid(tensor.FeatureMap(v)).data * proj)), x)
    return [CheckResult("sigmoid/input", max_rel_error(g, num), TOL_ELEMENTARY)]


def _check_softmax(rng: np.random.Generator) -> list[CheckResult]:
    x = rng.normal(size=7)
    proj = _loss_proj(rng, (7,))
    out = tensor.softmax(x)
    g = tensor.softmax_backward(proj, out)
    num = numerical_gradient(lambda v: float(np.dot(tensor.softmax(v), proj)), x)
    return [CheckResult("softmax/input", max_rel_error(g, num), TOL_ELEMENTARY)]


def _check_bilinear(rng: np.random.Generator) -> list[CheckResult]:
    x = rng.normal(size=(2, 3, 4))
    target = (5, 7)
    proj = _loss_proj(rng, (2,) + target)
    g = tensor.bilinear_upsample_backward(proj, (3, 4))
    num = numerical_gradient(
        lambda v: float(np.sum(tensor.bilinear_upsample(tensor.FeatureMap(v), target).data * proj)), x
    )
    return [CheckResult("bilinear_upsample/input", max_rel_error(g, num), TOL_ELEMENTARY)]


def _check_add_mul(rng: np.random.Generator) -> list[CheckResult]:
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(2, 3, 4))
    proj = _loss_proj(rng, a.shape)
    ga, gb = tensor.add_backward(proj)
    num_a = numerical_gradient(
        lambda v: float(np.sum(tensor.add(tensor.FeatureMap(v), tensor.FeatureMap(b)).data * proj)), a
    )
    results = [CheckResult("add/a", max_rel_error(ga, num_a), TOL_ELEMENTARY)]
    ma, mb = tensor.elementwise_mul_backward(proj, tensor.FeatureMap(a), tensor.FeatureMap(b))
    num_ma = numerical_gradient(
        lambda v: float(np.sum(tensor.elementwise_mul(tensor.FeatureMap(v), tensor.FeatureMap(b)).data * proj)), a
    )
    num_mb = numerical_gradient(
        lambda v: float(np.sum(tensor.elementwise_mul(tensor.FeatureMap(a), tensor.FeatureMap(v)).data * proj)), b
    )
    results.append(CheckResult("elementwise_mul/a", max_rel_error(ma, num_ma), TOL_ELEMENTARY))
    results.append(CheckResult("elementwise_mul/b", max_rel_error(mb, num_mb), TOL_ELEMENTARY))
    return results


def _check_uncertainty_chain(rng: np.random.Generator) -> list[CheckResult]:
    fused = tensor.FeatureMap(rng.normal(size=(3, 4, 6)))
    weight = rng.normal(size=(1, 3, 1, 1))
    bias = rng.normal(size=1)
    target = (8, 12)
    proj = _loss_proj(rng, target)
    gf, gw, gb = uncertainty.compute_uncertainty_backward(proj, fused, weight, bias, target)

    def loss_fused(v):
        u = uncertainty.compute_uncertainty(tensor.FeatureMap(v), weight, bias, target)
        return float(np.sum(u.values * proj))

    def loss_weight(v):
        u = uncertainty.compute_uncertainty(fused, v, bias, target)
        return float(np.sum(u.values * proj))

    return [
        CheckResult("uncertainty_chain/fused", max_rel_error(gf, numerical_gradient(loss_fused, fused.data)), TOL_COMPOSITE),
        CheckResult("uncertainty_chain/reduce_weight", max_rel_error(gw, numerical_gradient(loss_weight, weight)), TOL_COMPOSITE),
    ]


def _check_soft_separate(rng: np.random.Generator) -> list[CheckResult]:
    depth = rng.uniform(0.5, 19.5, size=(6, 8))
    depth[rng.random(size=depth.shape) < 0.2] = 0.0
    dep = adis.DepthMap(depth)
    widths = rng.uniform(0.5, 1.5, size=4)
    widths *= 20.0 / widths.sum()
    part = adis.IntervalPartition.from_widths(widths, 20.0)
    tau = 0.5
    proj = _loss_proj(rng, (4, 6, 8))
    g = adis.soft_separate_bounds_grad(proj, dep, part, tau)

    # Perturb interior and final bounds; b_0 stays pinned at 0, so the
    # comparison skips index 0.
    num = numerical_gradient(lambda b: float(np.sum(adis.soft_separate(
        dep, adis.IntervalPartition(np.concatenate(([0.0], b)), d_max=float(b[-1])), tau) * proj)),
        part.bounds[1:].copy())
    return [CheckResult("soft_separate/bounds", max_rel_error(g[1:], num), TOL_COMPOSITE)]


def _check_fuse_chain(rng: np.random.Generator) -> list[CheckResult]:
    shape = (2, 3, 4)
    f_img = tensor.FeatureMap(rng.normal(size=shape))
    f_dep = tensor.FeatureMap(rng.normal(size=shape))
    f_sd = tensor.FeatureMap(rng.normal(size=shape))
    f_unc = tensor.FeatureMap(rng.normal(size=shape))
    proj_a = _loss_proj(rng, shape)
    proj_l = _loss_proj(rng, shape)

    # Analytic: depth feature feeds both outputs and must see the summed
    # gradient, routed through accumulate_grad.
    ga_i, ga_d = tensor.add_backward(proj_a)
    gl_dd, gl_u = tensor.add_backward(proj_l)
    gl_d, gl_sd = tensor.add_backward(gl_dd)
    f_dep.zero_grad()
    f_dep.accumulate_grad(ga_d)
    f_dep.accumulate_grad(gl_d)

    def loss_dep(v):
        i_a, i_l = uncertainty.fuse_features(f_img, tensor.FeatureMap(v), f_sd, f_unc)
        return float(np.sum(i_a.data * proj_a) + np.sum(i_l.data * proj_l))

    num = numerical_gradient(loss_dep, f_dep.data)
    return [CheckResult("fuse_chain/depth_feature", max_rel_error(f_dep.grad, num), TOL_COMPOSITE)]


_SUITES = (
    _check_conv2d,
    _check_fully_connected,
    _check_sigmoid,
    _check_softmax,
    _check_bilinear,
    _check_add_mul,
    _check_uncertainty_chain,
    _check_soft_separate,
    _check_fuse_chain,
)


def run_gradient_suite(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    """Run every check with one seed.

    ``corrupt=True`` is the negative control: it perturbs the first
    reported error so the harness demonstrably detects a broken backward.
    """
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for suite in _SUITES:
        results.extend(suite(rng))
    if corrupt and results:
        first = results[0]
        results[0] = CheckResult(first.name + " [corrupted]", first.max_err + 1.0, first.tol)
    return results
