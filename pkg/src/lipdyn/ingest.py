"""Landmark interchange parsing and lip region-of-interest extraction.

The interchange format (``.lmk.jsonl``) carries one JSON object per line:

    {"frame": 0, "t_ms": 0.0, "pts": [[x, y], ... 68 pairs ...], "img": "f0.png"}

``pts`` follows the standard 68-point facial annotation; indices 48-67
are the mouth. All coordinates are source-image pixels with y growing
downward. The lip ROI is the mouth bounding box expanded by a margin
fraction and resampled to a fixed 250x110 raster.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

from .errors import DegenerateBox, IoFailure, MalformedRecord

NUM_LANDMARKS = 68
MOUTH_START = 48
MOUTH_END = 68  # exclusive
NUM_MOUTH_LANDMARKS = MOUTH_END - MOUTH_START
ROI_WIDTH = 250
ROI_HEIGHT = 110


@dataclass(frozen=True)
class LandmarkFrame:
    """One video frame's 68 facial landmarks."""

    frame_index: int
    timestamp_ms: float
    points: np.ndarray  # (68, 2) float64
    image_ref: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise ValueError(f"expected {NUM_LANDMARKS} points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise ValueError("landmark coordinates must be finite and nonnegative")
        if self.frame_index < 0 or self.timestamp_ms < 0:
            raise ValueError("frame_index and timestamp_ms must be nonnegative")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class MouthLandmarks:
    """The 20 mouth landmarks (source indices 48-67)."""

    points: np.ndarray  # (20, 2) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_MOUTH_LANDMARKS, 2):
            raise ValueError(f"expected {NUM_MOUTH_LANDMARKS} mouth points, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def outer(self) -> np.ndarray:
        """Outer lip loop, source landmarks 48-59."""
        return self.points[0:12]

    @property
    def inner(self) -> np.ndarray:
        """Inner lip loop, source landmarks 60-67."""
        return self.points[12:20]


@dataclass(frozen=True)
class RoiTransform:
    """Affine map from source-image coordinates to ROI coordinates."""

    offset_x: float
    offset_y: float
    scale_x: float
    scale_y: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        out = np.empty_like(pts)
        out[..., 0] = (pts[..., 0] - self.offset_x) * self.scale_x
        out[..., 1] = (pts[..., 1] - self.offset_y) * self.scale_y
        return out

    def matrix(self) -> np.ndarray:
        """2x3 matrix for cv2.warpAffine."""
        return np.array(
            [[self.scale_x, 0.0, -self.offset_x * self.scale_x],
             [0.0, self.scale_y, -self.offset_y * self.scale_y]],
            dtype=np.float64,
        )


@dataclass
class LipRoi:
    """Cropped, resized lip region with its binary mask."""

    gray: np.ndarray          # (110, 250) uint8
    mask: np.ndarray          # (110, 250) uint8 in {0, 1}
    color: np.ndarray         # (110, 250, 3) uint8
    transform: RoiTransform
    mouth: np.ndarray = field(default=None)  # (20, 2) mouth landmarks in ROI coords

    def __post_init__(self):
        if self.gray.shape != (ROI_HEIGHT, ROI_WIDTH):
            raise ValueError(f"gray raster must be {ROI_HEIGHT}x{ROI_WIDTH}")
        if self.mask.shape != (ROI_HEIGHT, ROI_WIDTH):
            raise ValueError(f"mask raster must be {ROI_HEIGHT}x{ROI_WIDTH}")
        if self.color.shape != (ROI_HEIGHT, ROI_WIDTH, 3):
            raise ValueError(f"color raster must be {ROI_HEIGHT}x{ROI_WIDTH}x3")
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")


def parse_landmark_records(lines: Iterable[str]) -> list[LandmarkFrame]:
    """Parse interchange records from an iterable of text lines.

    Returns frames sorted by frame_index. Raises MalformedRecord with the
    offending 1-based line number on any grammar violation.
    """
    frames: list[LandmarkFrame] = []
    seen: set[int] = set()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(obj, dict):
            raise MalformedRecord("record is not an object", lineno)
        for key in ("frame", "t_ms", "pts"):
            if key not in obj:
                raise MalformedRecord(f"missing key {key!r}", lineno)
        frame = obj["frame"]
        if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
            raise MalformedRecord("frame must be a nonnegative integer", lineno)
        if frame in seen:
            raise MalformedRecord(f"duplicate frame_index {frame}", lineno)
        t_ms = obj["t_ms"]
        if not isinstance(t_ms, (int, float)) or isinstance(t_ms, bool) or not math.isfinite(t_ms) or t_ms < 0:
            raise MalformedRecord("t_ms must be a nonnegative real", lineno)
        pts = obj["pts"]
        if not isinstance(pts, list) or len(pts) != NUM_LANDMARKS:
            n = len(pts) if isinstance(pts, list) else "non-list"
            raise MalformedRecord(f"pts must hold {NUM_LANDMARKS} pairs, got {n}", lineno)
        coords = np.empty((NUM_LANDMARKS, 2), dtype=np.float64)
        for i, pair in enumerate(pts):
            if not isinstance(pair, list) or len(pair) != 2:
                raise MalformedRecord(f"pts[{i}] is not an [x, y] pair", lineno)
            x, y = pair
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
                raise MalformedRecord(f"pts[{i}] has a non-numeric coordinate", lineno)
            if not (math.isfinite(x) and math.isfinite(y)) or x < 0 or y < 0:
                raise MalformedRecord(f"pts[{i}] coordinate not finite and nonnegative", lineno)
            coords[i] = (x, y)
        img = obj.get("img")
        if img is not None and not isinstance(img, str):
            raise MalformedRecord("img must be a string when present", lineno)
        seen.add(frame)
        frames.append(LandmarkFrame(frame_index=frame, timestamp_ms=float(t_ms), points=coords, image_ref=img))
    frames.sort(key=lambda f: f.frame_index)
    return frames


def parse_landmark_file(path: str | Path) -> list[LandmarkFrame]:
    """Parse a ``.lmk.jsonl`` file into sorted, validated frames."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_landmark_records(text.splitlines())


def serialize_record(frame: LandmarkFrame) -> str:
    """One interchange line for a frame (no trailing newline)."""
    obj: dict = {
        "frame": frame.frame_index,
        "t_ms": frame.timestamp_ms,
        "pts": [[float(x), float(y)] for x, y in frame.points],
    }
    if frame.image_ref is not None:
        obj["img"] = frame.image_ref
    return json.dumps(obj, separators=(",", ":"))


def write_landmark_file(path: str | Path, frames: Sequence[LandmarkFrame]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for frame in frames:
                fh.write(serialize_record(frame))
                fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def extract_mouth(frame: LandmarkFrame) -> MouthLandmarks:
    """Select the 20 mouth landmarks (indices 48-67) from a frame."""
    return MouthLandmarks(points=frame.points[MOUTH_START:MOUTH_END].copy())


def mouth_crop_rect(mouth: MouthLandmarks, margin: float) -> tuple[float, float, float, float]:
    """Crop rectangle (x0, y0, x1, y1): mouth bbox expanded by ``margin`` per side.

    Raises DegenerateBox when the bounding box has zero area.
    """
    pts = mouth.points
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    w, h = x1 - x0, y1 - y0
    if w <= 0 or h <= 0:
        raise DegenerateBox("mouth bounding box has zero area")
    return (x0 - margin * w, y0 - margin * h, x1 + margin * w, y1 + margin * h)


def crop_normalize(image: np.ndarray, mouth: MouthLandmarks, contour, margin: float = 0.15) -> LipRoi:
    """Crop the expanded mouth box to a 250x110 ROI with contour-interior mask.

    ``image`` is a HxW grayscale or HxWx3 color raster. Gray and color
    are resampled bilinearly; the mask is rasterized from the fitted
    contour directly in ROI coordinates so it stays strictly binary.
    """
    from .lip_geometry import rasterize_mask  # local import avoids a module cycle

    cx0, cy0, cx1, cy1 = mouth_crop_rect(mouth, margin)
    transform = RoiTransform(
        offset_x=cx0,
        offset_y=cy0,
        scale_x=ROI_WIDTH / (cx1 - cx0),
        scale_y=ROI_HEIGHT / (cy1 - cy0),
    )

    img = np.asarray(image)
    if img.ndim == 2:
        color = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
        gray_src = img
    elif img.ndim == 3 and img.shape[2] == 3:
        color = img
        gray_src = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    else:
        raise ValueError("image must be HxW or HxWx3")

    m = transform.matrix()
    warp_args = dict(flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
    gray = cv2.warpAffine(gray_src, m, (ROI_WIDTH, ROI_HEIGHT), **warp_args)
    color_roi = cv2.warpAffine(color, m, (ROI_WIDTH, ROI_HEIGHT), **warp_args)

    roi_contour = contour.transformed(transform)
    mask = rasterize_mask(roi_contour, (ROI_WIDTH, ROI_HEIGHT))

    return LipRoi(
        gray=gray,
        mask=mask,
        color=color_roi,
        transform=transform,
        mouth=transform.apply(mouth.points),
    )
