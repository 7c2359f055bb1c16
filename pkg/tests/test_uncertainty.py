"""Uncertainty map generation, stack weighting, and feature fusion."""

import io

import numpy as np
import pytest
from PIL import Image

import oracles
from adisep.adis import DepthMap, IntervalPartition, separate
from adisep.errors import ShapeError
from adisep.tensor import FeatureMap, conv2d, elementwise_mul
from adisep.uncertainty import (
    UncertaintyMap,
    apply_uncertainty,
    compute_uncertainty,
    compute_uncertainty_backward,
    fuse_features,
    uncertainty_feature,
    write_uncertainty_png,
)


def random_stack(rng, n_d=4, shape=(8, 10)):
    depth = rng.uniform(0.1, 39.9, size=shape)
    part = IntervalPartition.uniform(n_d, 40.0)
    return separate(DepthMap(depth), part)


class TestUncertaintyMap:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            UncertaintyMap(np.array([[0.5, 1.0]]))
        with pytest.raises(ValueError):
            UncertaintyMap(np.array([[0.0, 0.5]]))

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeError):
            UncertaintyMap(np.full((2, 2, 2), 0.5))


class TestComputeUncertainty:
    def test_zero_weights_give_half(self):
        fused = FeatureMap(np.random.default_rng(0).normal(size=(3, 4, 5)))
        u = compute_uncertainty(fused, np.zeros((1, 3, 1, 1)), np.zeros(1), (8, 10))
        assert np.all(u.values == 0.5)
        assert u.shape == (8, 10)

    def test_high_logits_suppress(self):
        fused = FeatureMap(np.zeros((2, 3, 3)))
        u = compute_uncertainty(fused, np.zeros((1, 2, 1, 1)), np.full(1, 40.0), (3, 3))
        assert np.all(u.values < 1e-12)
        assert np.all(u.values > 0.0)

    def test_stays_in_open_interval_for_extreme_logits(self):
        fused = FeatureMap(np.zeros((1, 2, 2)))
        for bias in (-900.0, 900.0):
            u = compute_uncertainty(fused, np.zeros((1, 1, 1, 1)), np.full(1, bias), (2, 2))
            assert np.all(u.values > 0.0) and np.all(u.values < 1.0)

    def test_monotone_decreasing_in_logits(self):
        rng = np.random.default_rng(1)
        fused = FeatureMap(rng.normal(size=(2, 4, 4)))
        w = rng.normal(size=(1, 2, 1, 1))
        u0 = compute_uncertainty(fused, w, np.zeros(1), (4, 4))
        u1 = compute_uncertainty(fused, w, np.full(1, 0.3), (4, 4))
        assert np.all(u1.values < u0.values)

    def test_target_smaller_than_feature(self):
        fused = FeatureMap(np.zeros((1, 4, 4)))
        with pytest.raises(ShapeError):
            compute_uncertainty(fused, np.zeros((1, 1, 1, 1)), np.zeros(1), (3, 4))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        fused = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(1, 2, 1, 1))
        b = rng.normal(size=1)
        target = (6, 8)
        proj = rng.normal(size=target)
        gf, gw, gb = compute_uncertainty_backward(proj, FeatureMap(fused), w, b, target)

        def loss(v):
            u = compute_uncertainty(FeatureMap(v), w, b, target)
            return float((u.values * proj).sum())

        num = oracles.central_diff(loss, fused)
        denom = np.maximum(np.maximum(np.abs(gf), np.abs(num)), 1.0)
        assert (np.abs(gf - num) / denom).max() < 1e-4


class TestApplyUncertainty:
    def test_near_one_keeps_stack(self):
        rng = np.random.default_rng(3)
        stack = random_stack(rng)
        u = UncertaintyMap(np.full(stack.shape, float(np.nextafter(1.0, 0.0))))
        kernel = np.eye(stack.n_d).reshape(stack.n_d, stack.n_d, 1, 1)
        out = apply_uncertainty(stack, u, kernel, np.zeros(stack.n_d))
        np.testing.assert_allclose(out.data, stack.layers, rtol=1e-12)

    def test_near_zero_leaves_bias(self):
        rng = np.random.default_rng(4)
        stack = random_stack(rng)
        u = UncertaintyMap(np.full(stack.shape, 1e-300))
        bias = np.array([2.5, -1.0])
        out = apply_uncertainty(stack, u, rng.normal(size=(2, stack.n_d, 1, 1)), bias)
        np.testing.assert_allclose(out.data[0], bias[0], atol=1e-290)
        np.testing.assert_allclose(out.data[1], bias[1], atol=1e-290)

    def test_matches_mul_then_conv_composition(self):
        rng = np.random.default_rng(5)
        stack = random_stack(rng, n_d=3, shape=(6, 7))
        u = UncertaintyMap(rng.uniform(0.05, 0.95, size=(6, 7)))
        kernel = rng.normal(size=(4, 3, 3, 3))
        bias = rng.normal(size=4)
        out = apply_uncertainty(stack, u, kernel, bias, padding=1)
        dup = FeatureMap(np.broadcast_to(u.values, stack.layers.shape).copy())
        ref = conv2d(elementwise_mul(FeatureMap(stack.layers), dup), kernel, bias, padding=1)
        assert np.array_equal(out.data, ref.data)

    def test_linear_in_stack(self):
        rng = np.random.default_rng(6)
        stack = random_stack(rng, n_d=2, shape=(5, 5))
        u = UncertaintyMap(rng.uniform(0.1, 0.9, size=(5, 5)))
        kernel = rng.normal(size=(3, 2, 1, 1))
        bias = rng.normal(size=3)
        out1 = apply_uncertainty(stack, u, kernel, bias)
        from adisep.adis import SubDepthStack

        scaled = SubDepthStack(stack.layers * 0.5, stack.partition)
        out2 = apply_uncertainty(scaled, u, kernel, bias)
        np.testing.assert_allclose(out2.data - bias[:, None, None],
                                   0.5 * (out1.data - bias[:, None, None]),
                                   rtol=1e-12, atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(7)
        stack = random_stack(rng)
        u = UncertaintyMap(np.full((3, 3), 0.5))
        with pytest.raises(ShapeError):
            apply_uncertainty(stack, u, np.zeros((1, stack.n_d, 1, 1)), np.zeros(1))


class TestFuseFeatures:
    def test_zero_depth_feature(self):
        rng = np.random.default_rng(8)
        f_img = FeatureMap(rng.normal(size=(2, 3, 4)))
        zeros = FeatureMap(np.zeros((2, 3, 4)))
        i_a, i_l = fuse_features(f_img, zeros, zeros, zeros)
        assert np.array_equal(i_a.data, f_img.data)
        assert np.all(i_l.data == 0)

    def test_zero_subdepth_and_uncertainty(self):
        rng = np.random.default_rng(9)
        f_dep = FeatureMap(rng.normal(size=(2, 3, 4)))
        zeros = FeatureMap(np.zeros((2, 3, 4)))
        _, i_l = fuse_features(zeros, f_dep, zeros, zeros)
        assert np.array_equal(i_l.data, f_dep.data)

    def test_matches_scalar_loops(self):
        rng = np.random.default_rng(10)
        maps = [rng.normal(size=(2, 3, 4)) for _ in range(4)]
        i_a, i_l = fuse_features(*(FeatureMap(m) for m in maps))
        exp_a = np.zeros((2, 3, 4))
        exp_l = np.zeros((2, 3, 4))
        for c in range(2):
            for y in range(3):
                for x in range(4):
                    exp_a[c, y, x] = maps[0][c, y, x] + maps[1][c, y, x]
                    exp_l[c, y, x] = maps[1][c, y, x] + maps[2][c, y, x] + maps[3][c, y, x]
        assert np.array_equal(i_a.data, exp_a)
        assert np.array_equal(i_l.data, exp_l)

    def test_shape_mismatch(self):
        a = FeatureMap(np.zeros((1, 2, 2)))
        b = FeatureMap(np.zeros((1, 2, 3)))
        with pytest.raises(ShapeError):
            fuse_features(a, b, a, a)

    def test_depth_feature_gets_summed_gradient(self):
        rng = np.random.default_rng(11)
        shape = (2, 3, 3)
        f_dep = FeatureMap(rng.normal(size=shape))
        others = [FeatureMap(rng.normal(size=shape)) for _ in range(3)]
        proj_a = rng.normal(size=shape)
        proj_l = rng.normal(size=shape)
        f_dep.accumulate_grad(proj_a)  # appearance path
        f_dep.accumulate_grad(proj_l)  # localization path
        num = oracles.central_diff(
            lambda v: float(
                (fuse_features(others[0], FeatureMap(v), others[1], others[2])[0].data * proj_a).sum()
                + (fuse_features(others[0], FeatureMap(v), others[1], others[2])[1].data * proj_l).sum()
            ),
            f_dep.data,
        )
        denom = np.maximum(np.maximum(np.abs(f_dep.grad), np.abs(num)), 1.0)
        assert (np.abs(f_dep.grad - num) / denom).max() < 1e-4


class TestUncertaintyFeature:
    def test_output_shape(self):
        rng = np.random.default_rng(12)
        u = UncertaintyMap(rng.uniform(0.1, 0.9, size=(5, 6)))
        kernel = rng.normal(size=(3, 3, 1, 1))
        out = uncertainty_feature(u, kernel, rng.normal(size=3))
        assert out.shape == (3, 5, 6)

    def test_rejects_non_1x1_kernel(self):
        u = UncertaintyMap(np.full((2, 2), 0.5))
        with pytest.raises(ShapeError):
            uncertainty_feature(u, np.zeros((1, 1, 3, 3)), np.zeros(1))


class TestUncertaintyPng:
    def test_pixels_are_rounded_values(self):
        rng = np.random.default_rng(13)
        u = UncertaintyMap(rng.uniform(0.01, 0.99, size=(7, 9)))
        data = write_uncertainty_png(u)
        img = np.array(Image.open(io.BytesIO(data)))
        assert img.dtype == np.uint8
        np.testing.assert_array_equal(img, np.round(255.0 * u.values).astype(np.uint8))
        assert np.abs(img / 255.0 - u.values).max() <= 0.5 / 255.0 + 1e-12
