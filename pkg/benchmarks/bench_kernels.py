"""Benchmark the compiled kernels against the numpy fallback.

Run from the repository root after building the extension:

    python3 benchmarks/bench_kernels.py

Sizes mirror the demo pipeline (KITTI-padded inputs downsampled twice)
and the evaluation workload (many small polygon clips).
"""

import time

import numpy as np

try:
    from adisep._kernels import _core
except ImportError:
    _core = None
from adisep._kernels import pure


def best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def make_cases():
    rng = np.random.default_rng(0)
    cases = []

    conv_inp = rng.normal(size=(4, 128, 440))
    conv_k = rng.normal(size=(8, 4, 3, 3))
    conv_b = rng.normal(size=8)
    cases.append(("conv2d forward 4x128x440 -> 8ch",
                  lambda impl: impl.conv2d_forward(conv_inp, conv_k, conv_b, 1, 1)))

    grad = rng.normal(size=(8, 128, 440))
    cases.append(("conv2d backward same size",
                  lambda impl: impl.conv2d_backward(grad, conv_inp, conv_k, 1, 1)))

    up_inp = rng.normal(size=(1, 128, 440))
    cases.append(("bilinear upsample to 512x1760",
                  lambda impl: impl.bilinear_forward(up_inp, 512, 1760)))

    depth = rng.uniform(0, 85, size=(512, 1760))
    depth[rng.random(depth.shape) < 0.2] = 0.0
    valid = (depth > 0).astype(np.uint8)
    bounds = np.linspace(0.0, 80.0, 9)
    cases.append(("hard separation 512x1760, n_d=8",
                  lambda impl: impl.separate_hard(depth, valid, bounds)))
    cases.append(("soft separation 512x1760, n_d=8",
                  lambda impl: impl.separate_soft(depth, valid, bounds, 0.5)))

    def rect():
        cx, cz, ang = rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3)
        hl, hw = rng.uniform(0.3, 2, size=2)
        local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
        c, s = np.cos(ang), np.sin(ang)
        return local @ np.array([(c, s), (-s, c)]).T + np.array([cx, cz])

    pairs = [(rect(), rect()) for _ in range(5000)]

    def clip_all(impl):
        for p, q in pairs:
            impl.convex_clip(p, q)

    cases.append(("convex clip x 5000 box pairs", clip_all))
    return cases


def main():
    if _core is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return
    print(f"{'kernel':<36} {'compiled':>10} {'pure':>10} {'speedup':>8}")
    print("-" * 68)
    for name, fn in make_cases():
        t_core = best_of(lambda: fn(_core))
        t_pure = best_of(lambda: fn(pure))
        print(f"{name:<36} {t_core * 1e3:>8.2f}ms {t_pure * 1e3:>8.2f}ms {t_pure / t_core:>7.1f}x")


if __name__ == "__main__":
    main()
