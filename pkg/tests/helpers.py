"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np

from lipdyn.ingest import LandmarkFrame, MouthLandmarks, NUM_LANDMARKS
from lipdyn.lip_geometry import CurveSegment, LipContour


def ellipse_mouth(cx=125.0, cy=55.0, rx=80.0, ry=30.0, inner_scale=0.5) -> MouthLandmarks:
    """Mouth landmarks on two concentric axis-aligned ellipses.

    Outer points run left corner -> across the top -> right corner ->
    across the bottom, matching the standard mouth landmark order.
    """
    pts = np.empty((20, 2), dtype=np.float64)
    for k in range(12):
        theta = np.deg2rad(180.0 - 30.0 * k)
        pts[k] = (cx + rx * np.cos(theta), cy - ry * np.sin(theta))
    for k in range(8):
        theta = np.deg2rad(180.0 - 45.0 * k)
        pts[12 + k] = (cx + inner_scale * rx * np.cos(theta),
                       cy - inner_scale * ry * np.sin(theta))
    return MouthLandmarks(points=pts)


def rect_mouth_points(x0, y0, x1, y1, shrink=0.25) -> np.ndarray:
    """20 mouth points whose fitted contour is an exact rectangle outline.

    Every 3-landmark segment run lies on one rectangle edge, so the
    quadratic fit degenerates to a straight line along that edge.
    """
    xm, ym = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    outer = [
        (x0, y0), (xm / 2 + x0 / 2, y0), (xm, y0), (xm / 2 + x1 / 2, y0), (x1, y0),
        (x1, ym),
        (x1, y1), (xm / 2 + x1 / 2, y1), (xm, y1), (xm / 2 + x0 / 2, y1), (x0, y1),
        (x0, ym),
    ]
    dx, dy = shrink * (x1 - x0), shrink * (y1 - y0)
    a0, b0, a1, b1 = x0 + dx, y0 + dy, x1 - dx, y1 - dy
    am, bm = (a0 + a1) / 2.0, (b0 + b1) / 2.0
    inner = [(a0, b0), (am, b0), (a1, b0), (a1, bm), (a1, b1), (am, b1), (a0, b1), (a0, bm)]
    return np.array(outer + inner, dtype=np.float64)


def rect_contour(x0, y0, x1, y1) -> LipContour:
    """LipContour whose outer loop is exactly the rectangle outline."""
    from lipdyn.lip_geometry import fit_contour

    return fit_contour(MouthLandmarks(points=rect_mouth_points(x0, y0, x1, y1)))


def full_face_frame(mouth_points: np.ndarray, frame_index=0, t_ms=0.0) -> LandmarkFrame:
    """68-point frame embedding the given 20 mouth points at indices 48-67."""
    pts = np.zeros((NUM_LANDMARKS, 2), dtype=np.float64)
    pts[:48] = np.linspace([10.0, 10.0], [40.0, 40.0], 48)
    pts[48:68] = mouth_points
    return LandmarkFrame(frame_index=frame_index, timestamp_ms=t_ms, points=pts)


def segment_endpoints(contour: LipContour) -> np.ndarray:
    segs: list[CurveSegment] = list(contour.outer) + list(contour.inner)
    return np.array([[*seg.start, *seg.end] for seg in segs])


def roi_like(mask: np.ndarray, mouth=None, gray=None, color_value=128):
    """LipRoi around a prebuilt mask, with uniform color unless given."""
    from lipdyn.ingest import LipRoi

    color = np.full((*mask.shape, 3), color_value, dtype=np.uint8)
    if gray is None:
        gray = color[:, :, 0].copy()
    if mouth is None:
        mouth = rect_mouth_points(10, 40, 240, 70)
    return LipRoi(
        gray=gray,
        mask=mask.astype(np.uint8),
        color=color,
        transform=None,
        mouth=np.asarray(mouth, dtype=np.float64),
    )


def point_in_polygon_oracle(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Brute-force boundary-inclusive point-in-polygon raster via OpenCV."""
    import cv2

    contour = poly.astype(np.float32).reshape(-1, 1, 2)
    mask = np.zeros((height, width), dtype=np.uint8)
    for y in range(height):
        for x in range(width):
            if cv2.pointPolygonTest(contour, (float(x), float(y)), False) >= 0:
                mask[y, x] = 1
    return mask
