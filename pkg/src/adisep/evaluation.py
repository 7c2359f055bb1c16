"""Average precision at 40 recall positions over 3D or BEV IoU.

The protocol mirrors the public KITTI object-detection benchmark: ground
truth is bucketed into easy/moderate/hard by 2D box height, occlusion,
and truncation; detections match greedily in descending score against the
highest-IoU unmatched ground truth; precision is interpolated at 40
evenly spaced recall positions by taking the maximum precision at any
recall to the right.

Ground truth that fails the difficulty filter, or belongs to a configured
neighbor class (Van next to Car, for example), is "ignored": it is not a
target, and detections that land on it count neither as true nor as false
positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError
from .geometry import Box3D, iou_3d, iou_bev
from .kitti_io import DONT_CARE, ObjectLabel

N_RECALL_POSITIONS = 40
RECALL_POSITIONS = np.arange(1, N_RECALL_POSITIONS + 1) / N_RECALL_POSITIONS

EVAL_CLASSES = ("Car", "Pedestrian", "Cyclist")

# The benchmark fixes 0.7 for Car; the thresholds for the small classes
# are an assumption (0.5, the commonly used value) and are flagged as such
# in the CLI report.
DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
ASSUMED_THRESHOLD_CLASSES = ("Pedestrian", "Cyclist")

DEFAULT_IGNORE_CLASSES = {
    "Car": ("Van", DONT_CARE),
    "Pedestrian": ("Person_sitting", DONT_CARE),
    "Cyclist": (DONT_CARE,),
}

IOU_FUNCTIONS: dict[str, Callable[[Box3D, Box3D], float]] = {"3d": iou_3d, "bev": iou_bev}


@dataclass(frozen=True)
class DifficultyFilter:
    """Validity thresholds for one difficulty bucket (devkit constants)."""

    name: str
    min_height: float  # 2D box height in pixels
    max_occlusion: int
    max_truncation: float


EASY = DifficultyFilter("easy", 40.0, 0, 0.15)
MODERATE = DifficultyFilter("moderate", 25.0, 1, 0.30)
HARD = DifficultyFilter("hard", 25.0, 2, 0.50)
DIFFICULTIES = {f.name: f for f in (EASY, MODERATE, HARD)}


@dataclass
class PRCurve:
    """Interpolated precision at the 40 fixed recall positions."""

    recalls: np.ndarray = field(default_factory=lambda: RECALL_POSITIONS.copy())
    precisions: np.ndarray = field(default_factory=lambda: np.zeros(N_RECALL_POSITIONS))


@dataclass
class MatchResult:
    """Greedy matching outcome for one set of detections."""

    tp: int
    fp: int
    fn: int
    order: list[int]  # detection indices, descending score (ties: input order)
    outcomes: list[str]  # per ordered detection: "tp", "fp", or "ignored"


def assign_difficulty(gt: ObjectLabel, filt: DifficultyFilter) -> bool:
    """True if the label is a valid target under the filter, False if it
    must be ignored.  DontCare regions are ignored at every difficulty."""
    if gt.type == DONT_CARE:
        return False
    return (
        gt.bbox_height >= filt.min_height
        and gt.occlusion <= filt.max_occlusion
        and gt.truncation <= filt.max_truncation
    )


def prepare_frame_gt(gt_labels: Sequence[ObjectLabel], class_name: str,
                     filt: DifficultyFilter,
                     ignore_classes: Sequence[str] | None = None):
    """Split one frame's labels into (boxes, ignored flags) for a class.

    Same-class labels are valid or ignored per the difficulty filter;
    neighbor/ignore classes are always ignored; every other class is
    dropped entirely.
    """
    if ignore_classes is None:
        ignore_classes = DEFAULT_IGNORE_CLASSES.get(class_name, (DONT_CARE,))
    boxes: list[Box3D] = []
    ignored: list[bool] = []
    for gt in gt_labels:
        if gt.type == class_name:
            is_valid = assign_difficulty(gt, filt)
        elif gt.type in ignore_classes:
            is_valid = False
        else:
            continue
        boxes.append(_safe_box(gt))
        ignored.append(not is_valid)
    return boxes, ignored


def _safe_box(label: ObjectLabel) -> Box3D:
    # DontCare rows carry sentinel dimensions (-1); give them a degenerate
    # but constructible box so they can still absorb matches by IoU 0.
    h, w, l = label.dimensions
    if h <= 0 or w <= 0 or l <= 0:
        h, w, l = 1e-6, 1e-6, 1e-6
    yaw = min(max(label.rotation_y, -np.pi), np.pi)
    x, y, z = label.location
    return Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=yaw)


def match_detections(det_boxes: Sequence[Box3D], scores: Sequence[float],
                     gt_boxes: Sequence[Box3D], gt_ignored: Sequence[bool],
                     iou_fn: Callable[[Box3D, Box3D], float],
                     threshold: float) -> MatchResult:
    """Greedy one-to-one matching in descending score order.

    Each detection takes the highest-IoU still-unmatched ground truth with
    IoU >= threshold (first index wins exact ties).  Matches to ignored
    ground truth yield no tally; leftover detections are false positives
    and leftover valid ground truth are false negatives.
    """
    if len(det_boxes) != len(scores):
        raise ValueError("det_boxes and scores must have equal length")
    if len(gt_boxes) != len(gt_ignored):
        raise ValueError("gt_boxes and gt_ignored must have equal length")
    order = sorted(range(len(det_boxes)), key=lambda i: (-float(scores[i]), i))
    taken = [False] * len(gt_boxes)
    outcomes: list[str] = []
    tp = fp = 0
    for di in order:
        best_iou = 0.0
        best_gt = -1
        for gi, gt_box in enumerate(gt_boxes):
            if taken[gi]:
                continue
            iou = iou_fn(det_boxes[di], gt_box)
            if iou >= threshold and iou > best_iou:
                best_iou = iou
                best_gt = gi
        if best_gt < 0:
            outcomes.append("fp")
            fp += 1
        elif gt_ignored[best_gt]:
            taken[best_gt] = True
            outcomes.append("ignored")
        else:
            taken[best_gt] = True
            outcomes.append("tp")
            tp += 1
    fn = sum(1 for gi, ign in enumerate(gt_ignored) if not ign and not taken[gi])
    return MatchResult(tp=tp, fp=fp, fn=fn, order=order, outcomes=outcomes)


def _interpolate_at_recalls(recalls: np.ndarray, precisions: np.ndarray) -> np.ndarray:
    """Right-max interpolation: at each fixed recall position take the
    maximum precision among curve points with recall >= that position."""
    out = np.zeros(N_RECALL_POSITIONS)
    for k, r in enumerate(RECALL_POSITIONS):
        mask = recalls >= r
        if np.any(mask):
            out[k] = precisions[mask].max()
    return out


def average_precision(frames: Sequence[tuple[Sequence[ObjectLabel], Sequence[ObjectLabel]]],
                      class_name: str,
                      difficulty: DifficultyFilter | str,
                      iou_fn: Callable[[Box3D, Box3D], float] | str,
                      threshold: float,
                      ignore_classes: Sequence[str] | None = None) -> tuple[float, PRCurve]:
    """AP (in percent) over a dataset of (ground truth, detections) frames.

    Sweeps every distinct detection score as a cutoff, computes the
    aggregate precision/recall at each, and averages the right-max
    interpolated precision over the 40 recall positions.  Raises
    EvaluationError when the class has zero valid ground truth at this
    difficulty, where AP is undefined.
    """
    if isinstance(difficulty, str):
        difficulty = DIFFICULTIES[difficulty]
    if isinstance(iou_fn, str):
        iou_fn = IOU_FUNCTIONS[iou_fn]

    total_valid = 0
    scored: list[tuple[float, str]] = []  # (score, outcome) pooled over frames
    for gt_labels, det_labels in frames:
        gt_boxes, gt_ignored = prepare_frame_gt(gt_labels, class_name, difficulty, ignore_classes)
        total_valid += sum(1 for ign in gt_ignored if not ign)
        dets = [d for d in det_labels if d.type == class_name]
        for d in dets:
            if d.score is None:
                raise ValueError("detections must carry scores")
        boxes = [_safe_box(d) for d in dets]
        scores = [float(d.score) for d in dets]
        result = match_detections(boxes, scores, gt_boxes, gt_ignored, iou_fn, threshold)
        for di, outcome in zip(result.order, result.outcomes):
            scored.append((scores[di], outcome))

    if total_valid == 0:
        raise EvaluationError(
            f"no valid {class_name} ground truth at difficulty '{difficulty.name}'; AP undefined"
        )

    scored.sort(key=lambda t: -t[0])
    curve_r: list[float] = []
    curve_p: list[float] = []
    tp = fp = 0
    for i, (score, outcome) in enumerate(scored):
        if outcome == "tp":
            tp += 1
        elif outcome == "fp":
            fp += 1
        # Emit one point per distinct cutoff: after the last entry of a run
        # of equal scores, since a cutoff admits all ties.
        if i + 1 < len(scored) and scored[i + 1][0] == score:
            continue
        curve_r.append(tp / total_valid)
        curve_p.append(tp / (tp + fp) if (tp + fp) > 0 else 0.0)

    interp = _interpolate_at_recalls(np.array(curve_r), np.array(curve_p))
    curve = PRCurve(precisions=interp)
    return float(interp.mean() * 100.0), curve


def evaluate_frames(frames, classes: Sequence[str],
                    iou_thresholds: dict[str, float] | None = None,
                    ignore_classes: dict[str, Sequence[str]] | None = None,
                    metrics: Sequence[str] = ("3d", "bev"),
                    difficulties: Sequence[str] = ("easy", "moderate", "hard")) -> dict:
    """Evaluate every (class, metric, difficulty) cell.

    Returns a nested dict ``{class: {metric: {difficulty: cell}}}`` where a
    cell is ``{"ap": float, "precisions": [...]}`` or ``{"error": str}``
    when AP is undefined for that slice.
    """
    iou_thresholds = dict(DEFAULT_IOU_THRESHOLDS, **(iou_thresholds or {}))
    results: dict = {}
    for class_name in classes:
        threshold = iou_thresholds.get(class_name, 0.5)
        per_class_ignore = (ignore_classes or {}).get(class_name)
        results[class_name] = {"iou_threshold": threshold}
        for metric in metrics:
            cells = {}
            for diff in difficulties:
                try:
                    ap, curve = average_precision(
                        frames, class_name, diff, metric, threshold, per_class_ignore
                    )
                    cells[diff] = {"ap": ap, "precisions": curve.precisions.tolist()}
                except EvaluationError as exc:
                    cells[diff] = {"error": str(exc)}
            results[class_name][metric] = cells
    return results
