"""Readers and writers for the on-disk formats the pipeline touches.

Four formats: object label files (15 whitespace-separated fields, 16 with
a trailing score in result files), camera calibration files (the P2
projection matrix of the left color camera), 16-bit depth PNGs (stored
value = depth * 256, 0 = no measurement), and the per-layer sub-depth PNG
export.  Parsers fail loudly with the offending line number; nothing is
silently defaulted.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .adis import DepthMap, SubDepthStack
from .errors import FormatError, ParseError

DONT_CARE = "DontCare"
DEPTH_SCALE = 256.0


@dataclass
class ObjectLabel:
    """One row of a KITTI label or result file."""

    type: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple[float, float, float, float]  # left, top, right, bottom (px)
    dimensions: tuple[float, float, float]  # h, w, l (m)
    location: tuple[float, float, float]  # x, y, z camera coords (m)
    rotation_y: float
    score: float | None = None

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


def parse_label_file(text: str) -> list[ObjectLabel]:
    """Parse a label/result file; one ObjectLabel per non-empty line.

    Raises ParseError naming the 1-based line number on a wrong field
    count or a non-numeric field.  DontCare rows are kept as-is, sentinel
    values included.
    """
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (15, 16):
            raise ParseError(
                f"line {lineno}: expected 15 or 16 fields, got {len(fields)}"
            )
        try:
            values = [float(tok) for tok in fields[1:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric field ({exc})") from None
        labels.append(
            ObjectLabel(
                type=fields[0],
                truncation=values[0],
                occlusion=int(values[1]),
                alpha=values[2],
                bbox=(values[3], values[4], values[5], values[6]),
                dimensions=(values[7], values[8], values[9]),
                location=(values[10], values[11], values[12]),
                rotation_y=values[13],
                score=values[14] if len(fields) == 16 else None,
            )
        )
    return labels


def format_label(label: ObjectLabel, with_score: bool) -> str:
    geo = (
        f"{label.truncation:.2f} {label.occlusion:d} {label.alpha:.2f} "
        f"{label.bbox[0]:.2f} {label.bbox[1]:.2f} {label.bbox[2]:.2f} {label.bbox[3]:.2f} "
        f"{label.dimensions[0]:.2f} {label.dimensions[1]:.2f} {label.dimensions[2]:.2f} "
        f"{label.location[0]:.2f} {label.location[1]:.2f} {label.location[2]:.2f} "
        f"{label.rotation_y:.2f}"
    )
    if with_score:
        return f"{label.type} {geo} {label.score:.6f}"
    return f"{label.type} {geo}"


def write_result_file(labels: list[ObjectLabel]) -> str:
    """Serialize scored detections; inverse of parse_label_file up to the
    2-decimal geometry / 6-decimal score formatting."""
    lines = []
    for i, label in enumerate(labels):
        if label.score is None:
            raise ValueError(f"label {i} ({label.type}) has no score; results require one")
        lines.append(format_label(label, with_score=True))
    return "".join(line + "\n" for line in lines)


def write_label_file(labels: list[ObjectLabel]) -> str:
    """Serialize ground-truth labels (no score column)."""
    return "".join(format_label(label, with_score=False) + "\n" for label in labels)


@dataclass
class CameraCalib:
    """Projection matrix of the rectified left color camera."""

    p2: np.ndarray  # (3, 4)

    def __post_init__(self):
        self.p2 = np.ascontiguousarray(self.p2, dtype=np.float64)
        if self.p2.shape != (3, 4):
            raise ValueError(f"P2 must be 3x4, got {self.p2.shape}")
        if self.p2[0, 0] <= 0 or self.p2[1, 1] <= 0:
            raise ValueError("focal lengths P2[0,0] and P2[1,1] must be > 0")

    @property
    def fx(self) -> float:
        return float(self.p2[0, 0])

    @property
    def fy(self) -> float:
        return float(self.p2[1, 1])

    @property
    def cx(self) -> float:
        return float(self.p2[0, 2])

    @property
    def cy(self) -> float:
        return float(self.p2[1, 2])


def parse_calib(text: str) -> CameraCalib:
    """Extract P2 from a calibration file, ignoring every other line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith("P2:"):
            continue
        tokens = line[len("P2:"):].split()
        if len(tokens) != 12:
            raise ParseError(f"line {lineno}: P2 needs 12 values, got {len(tokens)}")
        try:
            values = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric P2 entry ({exc})") from None
        return CameraCalib(np.array(values).reshape(3, 4))
    raise ParseError("no P2 line found in calibration text")


def _png_header(data: bytes) -> tuple[int, int]:
    """(bit depth, color type) from the IHDR chunk."""
    signature = b"\x89PNG\r\n\x1a\n"
    if len(data) < 26 or not data.startswith(signature):
        raise FormatError("not a PNG file")
    length, chunk = struct.unpack(">I4s", data[8:16])
    if chunk != b"IHDR" or length < 13:
        raise FormatError("PNG missing IHDR chunk")
    return data[24], data[25]


def read_depth_png(data: bytes) -> DepthMap:
    """Decode a 16-bit single-channel depth PNG.

    Stored value / 256 is the depth in meters; stored 0 marks a pixel with
    no measurement.  Anything other than 16-bit grayscale is rejected.
    """
    bit_depth, color_type = _png_header(data)
    if bit_depth != 16:
        raise FormatError(f"depth PNG must be 16-bit, got bit depth {bit_depth}")
    if color_type != 0:
        raise FormatError(f"depth PNG must be single-channel grayscale, got color type {color_type}")
    with Image.open(io.BytesIO(data)) as img:
        raw = np.array(img, dtype=np.uint16)
    depth = raw.astype(np.float64) / DEPTH_SCALE
    return DepthMap(depth, raw > 0)


def write_depth_png(dep: DepthMap) -> bytes:
    """Encode a depth map as a 16-bit grayscale PNG (inverse of read, at
    1/256 m quantization; depths beyond 255.99 m saturate)."""
    raw = np.round(dep.depth * DEPTH_SCALE)
    raw = np.clip(raw, 0, np.iinfo(np.uint16).max).astype(np.uint16)
    raw[~dep.valid] = 0
    buf = io.BytesIO()
    Image.fromarray(raw).save(buf, format="PNG")
    return buf.getvalue()


def write_subdepth_pngs(stack: SubDepthStack, directory) -> list[Path]:
    """Write one depth PNG per layer as ``sd_00.png``, ``sd_01.png``, ..."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(stack.n_d):
        layer = stack.layers[i]
        png = write_depth_png(DepthMap(layer, layer > 0))
        path = directory / f"sd_{i:02d}.png"
        path.write_bytes(png)
        paths.append(path)
    return paths
