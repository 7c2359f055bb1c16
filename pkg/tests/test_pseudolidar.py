"""Back-projection geometry and PLY round trips."""

from pathlib import Path

import numpy as np
import pytest

from adisep.adis import DepthMap, IntervalPartition, reconstruct, separate
from adisep.kitti_io import CameraCalib, parse_calib
from adisep.pseudolidar import (
    PointCloud,
    backproject,
    backproject_stack,
    read_ply,
    write_ply,
)

DATA = Path(__file__).parent / "data"

SIMPLE = CameraCalib(np.array([
    [700.0, 0.0, 320.0, 0.0],
    [0.0, 700.0, 240.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
]))


def project_ref(points, p2):
    """Straight homogeneous projection, independent of the package."""
    uvw = np.concatenate([points, np.ones((len(points), 1))], axis=1) @ p2.T
    return uvw[:, :2] / uvw[:, 2:3]


def random_depth(rng, shape=(24, 32)):
    depth = rng.uniform(2.0, 70.0, size=shape)
    depth[rng.random(shape) < 0.4] = 0.0
    return DepthMap(depth)


class TestBackproject:
    def test_principal_point_ray(self):
        depth = np.zeros((480, 640))
        depth[240, 320] = 10.0
        pc = backproject(DepthMap(depth), SIMPLE)
        np.testing.assert_allclose(pc.points, [[0.0, 0.0, 10.0]], atol=1e-12)

    def test_similar_triangles(self):
        depth = np.zeros((480, 640))
        depth[100, 500] = 10.0
        near = backproject(DepthMap(depth), SIMPLE).points[0]
        depth[100, 500] = 20.0
        far = backproject(DepthMap(depth), SIMPLE).points[0]
        np.testing.assert_allclose(far[:2], 2 * near[:2], rtol=1e-12)
        assert far[2] == 20.0

    def test_reprojection_recovers_pixels(self):
        rng = np.random.default_rng(0)
        calib = parse_calib((DATA / "calib.txt").read_text())
        for _ in range(10):
            dep = random_depth(rng)
            pc = backproject(dep, calib)
            uv = project_ref(pc.points, calib.p2)
            rows, cols = np.nonzero(dep.valid)
            residual = np.abs(uv - np.stack([cols, rows], axis=1)).max(initial=0.0)
            assert residual < 1e-6

    def test_point_count_matches_valid_pixels(self):
        rng = np.random.default_rng(1)
        dep = random_depth(rng)
        assert len(backproject(dep, SIMPLE)) == dep.valid_count()

    def test_rejects_unrectified_p2(self):
        p2 = SIMPLE.p2.copy()
        p2[2, 0] = 0.1
        with pytest.raises(ValueError, match="rectified"):
            backproject(DepthMap(np.full((2, 2), 5.0)), CameraCalib(p2))


class TestBackprojectStack:
    def test_single_interval_equals_plain_backprojection(self):
        rng = np.random.default_rng(2)
        dep = random_depth(rng)
        stack = separate(dep, IntervalPartition.uniform(1, 80.0))
        tagged = backproject_stack(stack, SIMPLE)
        plain = backproject(dep, SIMPLE)
        np.testing.assert_array_equal(np.sort(tagged.points, axis=0),
                                      np.sort(plain.points, axis=0))
        assert np.all(tagged.intervals == 0)

    def test_tags_lie_in_their_intervals(self):
        rng = np.random.default_rng(3)
        dep = random_depth(rng)
        part = IntervalPartition.uniform(6, 80.0)
        tagged = backproject_stack(separate(dep, part), SIMPLE)
        for i in range(6):
            z = tagged.points[tagged.intervals == i, 2]
            if z.size == 0:
                continue
            assert z.min() >= part.bounds[i]
            if i < 5:
                assert z.max() < part.bounds[i + 1]

    def test_multiset_equality_with_reconstruct(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            dep = random_depth(rng, shape=(16, 20))
            part = IntervalPartition.uniform(int(rng.integers(1, 9)), 80.0)
            stack = separate(dep, part)
            a = backproject_stack(stack, SIMPLE).points
            b = backproject(reconstruct(stack), SIMPLE).points
            key = lambda pts: pts[np.lexsort(pts.T)]
            np.testing.assert_array_equal(key(a), key(b))


class TestPly:
    def test_empty_cloud(self):
        data = write_ply(PointCloud(np.empty((0, 3))))
        text = data.decode("ascii")
        assert "element vertex 0" in text
        assert text.strip().endswith("end_header")
        back = read_ply(data)
        assert len(back) == 0

    def test_single_point(self):
        pc = PointCloud(np.array([[1.5, -2.25, 3.75]]))
        text = write_ply(pc).decode("ascii")
        assert "element vertex 1" in text
        assert text.strip().splitlines()[-1] == "1.5 -2.25 3.75"

    def test_round_trip_exact(self):
        rng = np.random.default_rng(5)
        pts = np.stack([
            rng.normal(size=50), rng.normal(size=50), rng.uniform(1, 80, size=50)
        ], axis=1)
        pc = PointCloud(pts, intervals=rng.integers(0, 8, size=50))
        back = read_ply(write_ply(pc))
        assert np.array_equal(back.points, pc.points)
        assert np.array_equal(back.intervals, pc.intervals)

    def test_rejects_nonpositive_z(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, 0.0, -1.0]]))
