"""Regenerate the committed test fixtures under tests/data/.

Deterministic by construction; run from the repository root:

    python3 tools/make_fixtures.py
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from adisep import DepthMap, ObjectLabel, write_depth_png
from adisep.kitti_io import write_label_file, write_result_file

import oracles

DATA = ROOT / "tests" / "data"

CALIB_TEXT = """\
P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P1: 7.215377e+02 0.000000e+00 6.095593e+02 -3.875744e+02 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
P3: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03
R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 -1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01
"""


def make_scene() -> None:
    """A 96x160 depth scene: sky band, depth ramp, four box-like objects."""
    h, w = 96, 160
    depth = np.zeros((h, w))
    rows = np.arange(h, dtype=np.float64)
    ramp = np.clip(75.0 - (rows - 24) * 0.7, 20.0, 75.0)
    depth[24:, :] = ramp[24:, None]
    # foreground objects at distinct distances, nearest last so it wins
    depth[40:60, 110:140] = 33.0
    depth[30:44, 70:90] = 55.5
    depth[45:70, 60:95] = 18.4
    depth[50:80, 10:40] = 7.3
    # one object past the 80 m default range, to exercise clamping
    depth[26:34, 140:156] = 93.0
    rng = np.random.default_rng(7)
    holes = rng.random((h, w)) < 0.02
    depth[holes] = 0.0
    depth[:24, :] = 0.0  # sky: no measurement
    png = write_depth_png(DepthMap(depth, depth > 0))
    (DATA / "synthetic_scene.png").write_bytes(png)
    print(f"synthetic_scene.png: {w}x{h}, {int((depth > 0).sum())} valid px")


def _car(x, z, ry=-1.2, h=1.5, w=1.7, l=4.0, bbox_h=60.0, occ=0, trunc=0.0):
    left = 300.0 + 8.0 * x
    top = 180.0
    return ObjectLabel(
        type="Car", truncation=trunc, occlusion=occ, alpha=-1.0,
        bbox=(left, top, left + 1.8 * bbox_h, top + bbox_h),
        dimensions=(h, w, l), location=(x, 1.6, z), rotation_y=ry,
    )


def make_eval_fixture() -> None:
    """Four frames of Car ground truth with mixed-quality detections."""
    rng = np.random.default_rng(13)
    labels_dir = DATA / "eval_fixture" / "labels"
    results_dir = DATA / "eval_fixture" / "results"
    labels_dir.mkdir(parents=True, exist_ok=True)
    results_dir.mkdir(parents=True, exist_ok=True)

    frames = []
    for fi in range(4):
        gts = []
        for k in range(3 + fi % 2):
            x = -6.0 + 4.0 * k + fi
            z = 12.0 + 9.0 * k + 2.0 * fi
            bbox_h = 70.0 - 12.0 * k  # push later cars toward moderate/hard
            occ = 0 if k < 2 else 1
            trunc = 0.0 if k < 3 else 0.2
            gts.append(_car(x, z, bbox_h=bbox_h, occ=occ, trunc=trunc))
        van = _car(5.0 + fi, 30.0, bbox_h=55.0)
        van.type = "Van"
        gts.append(van)
        gts.append(ObjectLabel(
            type="DontCare", truncation=-1.0, occlusion=-1, alpha=-10.0,
            bbox=(600.0, 160.0, 640.0, 180.0), dimensions=(-1.0, -1.0, -1.0),
            location=(-1000.0, -1000.0, -1000.0), rotation_y=-10.0,
        ))

        dets = []
        for gi, gt in enumerate(gts):
            if gt.type != "Car":
                continue
            # good detection with a small pose perturbation
            d = _car(gt.location[0] + rng.normal(0, 0.15),
                     gt.location[2] + rng.normal(0, 0.25),
                     bbox_h=gt.bbox_height, occ=gt.occlusion, trunc=gt.truncation)
            d.score = round(float(rng.uniform(0.55, 0.99)), 6)
            dets.append(d)
            if (fi + gi) % 2 == 0:
                # far-off false positive
                f = _car(gt.location[0] + 14.0, gt.location[2] + 20.0)
                f.score = round(float(rng.uniform(0.05, 0.5)), 6)
                dets.append(f)
        # one detection that lands on the Van (should be ignored, not FP)
        near_van = _car(van.location[0], van.location[2], h=van.dimensions[0],
                        w=van.dimensions[1], l=van.dimensions[2])
        near_van.score = 0.77
        dets.append(near_van)

        stem = f"{fi:06d}"
        (labels_dir / f"{stem}.txt").write_text(write_label_file(gts), encoding="utf-8")
        (results_dir / f"{stem}.txt").write_text(write_result_file(dets), encoding="utf-8")
        # round-trip through the serialized form so the oracle sees exactly
        # what the evaluator will read back
        from adisep import parse_label_file
        frames.append((parse_label_file(write_label_file(gts)),
                       parse_label_file(write_result_file(dets))))

    from adisep.geometry import Box3D, iou_3d, iou_bev

    def to_box(label):
        h, w, l = label.dimensions
        if min(h, w, l) <= 0:
            h = w = l = 1e-6
        ry = min(max(label.rotation_y, -np.pi), np.pi)
        return Box3D(*label.location, h=h, w=w, l=l, yaw=ry)

    expected = {}
    for metric, fn in (("3d", iou_3d), ("bev", iou_bev)):
        expected[metric] = {}
        for diff in ("easy", "moderate", "hard"):
            ap = oracles.ap_ref(
                frames, "Car", diff,
                lambda a, b: fn(to_box(a), to_box(b)),
                threshold=0.7,
            )
            expected[metric][diff] = ap
    (DATA / "eval_fixture" / "expected_ap.json").write_text(
        json.dumps(expected, indent=2) + "\n", encoding="utf-8"
    )
    print("eval fixture APs:", json.dumps(expected))


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "calib.txt").write_text(CALIB_TEXT, encoding="utf-8")
    make_scene()
    make_eval_fixture()


if __name__ == "__main__":
    main()
