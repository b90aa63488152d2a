"""Pluggable 68-point landmark detector backends.

A backend exposes ``name``, ``version`` and ``detect(frame)`` where
``frame`` is a BGR or grayscale raster; ``detect`` returns a float64
(68, 2) array in pixel coordinates (y down) or None when no face is
found. Point order follows the standard 68-point annotation, so
indices 48-67 are the mouth (48-59 outer loop, 60-67 inner loop).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Protocol

import cv2
import numpy as np

from .errors import DetectorUnavailable

NUM_POINTS = 68

# ring placements in degrees; x = cx + a*cos, y = cy - b*sin keeps the
# upper lip above the center in image coordinates
_OUTER_DEG = (180, 150, 120, 90, 60, 30, 0, 330, 300, 270, 240, 210)
_INNER_DEG = (180, 135, 90, 45, 0, 315, 270, 225)
_EYE_DEG = (180, 120, 60, 0, 300, 240)


class Detector(Protocol):
    name: str
    version: str

    def detect(self, frame: np.ndarray) -> np.ndarray | None: ...


def _to_gray(frame: np.ndarray) -> np.ndarray:
    img = np.asarray(frame)
    if img.ndim == 3:
        return cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    return img


class TemplateFitDetector:
    """Landmarks fitted to the dominant intensity blob.

    Built for footage where the mouth is the main feature against a
    near-uniform background (screen recordings, cropped clips, rendered
    test material). The largest region deviating from the background
    intensity is taken as the mouth; the standard 68-point layout is
    scaled around it. Purely arithmetic, so reruns are reproducible
    down to the byte.
    """

    name = "template-fit"
    version = "0.1.0"

    def __init__(self, intensity_margin: float = 20.0, min_area: int = 300):
        self.intensity_margin = intensity_margin
        self.min_area = min_area

    def detect(self, frame: np.ndarray) -> np.ndarray | None:
        gray = _to_gray(frame).astype(np.float64)
        background = float(np.median(gray))
        fg = (np.abs(gray - background) > self.intensity_margin).astype(np.uint8)
        fg = cv2.morphologyEx(fg, cv2.MORPH_CLOSE, np.ones((3, 3), np.uint8))
        count, labels, stats, _ = cv2.connectedComponentsWithStats(fg, connectivity=8)
        if count < 2:
            return None
        idx = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
        x, y, w, h, area = stats[idx]
        if area < self.min_area or w < 12 or h < 6:
            return None
        height, width = gray.shape
        pts = self._layout(x + w / 2.0, y + h / 2.0, w, h)
        return np.clip(pts, 0.0, (width - 1.0, height - 1.0))

    @staticmethod
    def _layout(cx: float, cy: float, w: float, h: float) -> np.ndarray:
        pts = np.zeros((NUM_POINTS, 2))
        fw = 1.4 * w  # face half-width inferred from the mouth blob
        for k in range(17):  # jaw arc, left ear over the chin to right ear
            a = math.pi * (1.0 - k / 16.0)
            pts[k] = (cx + fw * math.cos(a), cy - 0.5 * fw + 1.15 * fw * abs(math.sin(a)))
        for k in range(17, 27):  # brows
            pts[k] = (cx - 0.75 * fw + (k - 17) * fw / 6.0, cy - 0.95 * fw)
        for k in range(27, 31):  # nose bridge
            pts[k] = (cx, cy - 0.75 * fw + (k - 27) * 0.15 * fw)
        for k in range(31, 36):  # nostril row
            pts[k] = (cx - 0.16 * fw + (k - 31) * 0.08 * fw, cy - 0.28 * fw)
        for k in range(36, 48):  # two eye rings
            eye_cx = cx - 0.45 * fw if k < 42 else cx + 0.45 * fw
            a = math.radians(_EYE_DEG[k % 6])
            pts[k] = (eye_cx + 0.12 * fw * math.cos(a), cy - 0.65 * fw - 0.05 * fw * math.sin(a))
        mw, mh = 0.46 * w, 0.40 * h
        for k, deg in enumerate(_OUTER_DEG):
            a = math.radians(deg)
            pts[48 + k] = (cx + mw * math.cos(a), cy - mh * math.sin(a))
        for k, deg in enumerate(_INNER_DEG):
            a = math.radians(deg)
            pts[60 + k] = (cx + 0.55 * mw * math.cos(a), cy - 0.45 * mh * math.sin(a))
        return pts


class DlibRegressionTreesDetector:
    """Pretrained ensemble-of-regression-trees backend.

    Needs the ``dlib`` package plus a downloaded 68-point shape
    predictor file; both are deliberately optional installs.
    """

    name = "dlib-ert"

    def __init__(self, model_path: str | Path | None):
        try:
            import dlib
        except ImportError as exc:
            raise DetectorUnavailable(
                "dlib is not installed; install it and download a 68-point "
                "shape predictor to use this backend") from exc
        if model_path is None or not Path(model_path).is_file():
            raise DetectorUnavailable(f"shape predictor model not found: {model_path}")
        self._faces = dlib.get_frontal_face_detector()
        self._shape = dlib.shape_predictor(str(model_path))
        self.version = f"dlib {dlib.__version__} / {Path(model_path).name}"

    def detect(self, frame: np.ndarray) -> np.ndarray | None:
        gray = _to_gray(frame)
        boxes = self._faces(gray, 1)
        if not boxes:
            return None
        box = max(boxes, key=lambda b: b.area())
        shape = self._shape(gray, box)
        return np.array([[p.x, p.y] for p in shape.parts()], dtype=np.float64)


def make_detector(kind: str, model: str | None = None) -> Detector:
    if kind == "template":
        return TemplateFitDetector()
    if kind == "dlib":
        return DlibRegressionTreesDetector(model)
    raise ValueError(f"unknown detector {kind!r}")
