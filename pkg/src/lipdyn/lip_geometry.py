"""Lip contour fitting, mask rasterization, and static shape features.

The contour is a closed chain of quadratic curve segments, each fit
through a run of three consecutive mouth landmarks so that neighboring
segments share an endpoint landmark exactly. The outer loop covers the
12 outer-lip landmarks, the inner loop the 8 inner-lip landmarks. The
lip mask is the rasterized interior of the outer loop; static features
(area, perimeter, thickness, curvature, symmetry, color) are measured
on that mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, EmptyMask
from .ingest import MouthLandmarks, LipRoi, RoiTransform

# Landmark runs per segment, mouth-local indices (0-11 outer, 12-19 inner).
# Three points per quadratic segment; consecutive runs share an endpoint,
# which closes each loop and gives exact C0 continuity.
OUTER_RUNS = ((0, 1, 2), (2, 3, 4), (4, 5, 6), (6, 7, 8), (8, 9, 10), (10, 11, 0))
INNER_RUNS = ((12, 13, 14), (14, 15, 16), (16, 17, 18), (18, 19, 12))

LEFT_CORNER = 0    # mouth-local index of source landmark 48
RIGHT_CORNER = 6   # mouth-local index of source landmark 54

_BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class CurveSegment:
    """One quadratic contour piece x(t), y(t) for t in [0, 1]."""

    coeffs_x: np.ndarray  # (3,) ascending powers
    coeffs_y: np.ndarray  # (3,) ascending powers
    landmarks: tuple[int, int, int]  # mouth-local run indices

    def point(self, t):
        t = np.asarray(t, dtype=np.float64)
        cx, cy = self.coeffs_x, self.coeffs_y
        x = cx[0] + t * (cx[1] + t * cx[2])
        y = cy[0] + t * (cy[1] + t * cy[2])
        return np.stack([x, y], axis=-1)

    @property
    def start(self) -> np.ndarray:
        return self.point(0.0)

    @property
    def end(self) -> np.ndarray:
        return self.point(1.0)


@dataclass(frozen=True)
class LipContour:
    """Closed outer and inner lip loops as quadratic segment chains."""

    outer: tuple[CurveSegment, ...]
    inner: tuple[CurveSegment, ...]

    def __post_init__(self):
        for loop in (self.outer, self.inner):
            for a, b in zip(loop, loop[1:] + loop[:1]):
                if not np.allclose(a.end, b.start, atol=1e-6):
                    raise ValueError("contour loop is not closed within 1e-6 px")

    def sample_loop(self, loop: str, samples_per_segment: int = 8) -> np.ndarray:
        """Closed polyline approximation of a loop, (N, 2), first vertex not repeated."""
        segments = self.outer if loop == "outer" else self.inner
        ts = np.linspace(0.0, 1.0, samples_per_segment + 1)[:-1]
        return np.concatenate([seg.point(ts) for seg in segments], axis=0)

    def transformed(self, transform: RoiTransform) -> "LipContour":
        """Contour with the axis-aligned affine map applied exactly to coefficients."""
        def conv(seg: CurveSegment) -> CurveSegment:
            cx = seg.coeffs_x * transform.scale_x
            cx[0] = (seg.coeffs_x[0] - transform.offset_x) * transform.scale_x
            cy = seg.coeffs_y * transform.scale_y
            cy[0] = (seg.coeffs_y[0] - transform.offset_y) * transform.scale_y
            return CurveSegment(coeffs_x=cx, coeffs_y=cy, landmarks=seg.landmarks)

        return LipContour(
            outer=tuple(conv(s) for s in self.outer),
            inner=tuple(conv(s) for s in self.inner),
        )


@dataclass(frozen=True)
class StaticShapeFeatures:
    """Static shape measurements over one masked lip raster."""

    area_px: int
    perimeter_px: float
    upper_thickness: np.ndarray   # per-column set-pixel counts above the corner midline
    lower_thickness: np.ndarray
    upper_thickness_mean: float
    lower_thickness_mean: float
    curvature_mean: float         # 1/px, mean |turn angle| per unit boundary length
    symmetry: float               # IoU of mask and its horizontal mirror, in [0, 1]
    color_mean: np.ndarray        # per-channel mean over masked pixels
    color_std: np.ndarray

    def summary(self) -> np.ndarray:
        """The 8-value static block: area, perimeter, thickness means,
        curvature, symmetry, overall color mean and spread."""
        return np.array(
            [
                float(self.area_px),
                self.perimeter_px,
                self.upper_thickness_mean,
                self.lower_thickness_mean,
                self.curvature_mean,
                self.symmetry,
                float(np.mean(self.color_mean)),
                float(np.mean(self.color_std)),
            ],
            dtype=np.float64,
        )


def _fit_segment(points: np.ndarray, run: tuple[int, int, int]) -> CurveSegment:
    """Quadratic through three points, chord-length parameterized on [0, 1]."""
    p = points[list(run)]
    d1 = float(np.hypot(*(p[1] - p[0])))
    d2 = float(np.hypot(*(p[2] - p[1])))
    total = d1 + d2
    if total <= 0 or d1 <= 0 or d2 <= 0:
        raise DegenerateGeometry(f"coincident landmarks in run {run}")
    t = np.array([0.0, d1 / total, 1.0])
    vander = np.vander(t, 3, increasing=True)
    try:
        cx = np.linalg.solve(vander, p[:, 0])
        cy = np.linalg.solve(vander, p[:, 1])
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometry(f"singular fit for run {run}") from exc
    return CurveSegment(coeffs_x=cx, coeffs_y=cy, landmarks=run)


def _polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def fit_contour(mouth: MouthLandmarks) -> LipContour:
    """Fit the closed two-loop quadratic contour through the 20 mouth landmarks.

    Raises DegenerateGeometry when the outer landmarks enclose no area or a
    segment run has coincident points.
    """
    pts = mouth.points
    if abs(_polygon_area(pts[0:12])) < 1e-9:
        raise DegenerateGeometry("outer landmarks are collinear, loop encloses no area")
    return LipContour(
        outer=tuple(_fit_segment(pts, run) for run in OUTER_RUNS),
        inner=tuple(_fit_segment(pts, run) for run in INNER_RUNS),
    )


def rasterize_mask(contour: LipContour, size: tuple[int, int] = (250, 110),
                   samples_per_segment: int = 8) -> np.ndarray:
    """Binary raster of the outer-loop interior, boundary-inclusive.

    A pixel is set iff its center (integer coordinates) lies inside or on
    the sampled outer polygon. The inner loop is not subtracted; the mask
    is the full mouth silhouette. Returns a (height, width) uint8 raster.
    """
    width, height = size
    poly = contour.sample_loop("outer", samples_per_segment)
    return _rasterize_polygon(poly, width, height)


def _rasterize_polygon(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=np.uint8)
    x0 = max(int(math.floor(poly[:, 0].min())), 0)
    x1 = min(int(math.ceil(poly[:, 0].max())), width - 1)
    y0 = max(int(math.floor(poly[:, 1].min())), 0)
    y1 = min(int(math.ceil(poly[:, 1].max())), height - 1)
    if x0 > x1 or y0 > y1:
        return mask

    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    crossings = np.zeros((ys.size, xs.size), dtype=np.int64)
    on_edge = np.zeros((ys.size, xs.size), dtype=bool)
    a = poly
    b = np.roll(poly, -1, axis=0)
    for (ax, ay), (bx, by) in zip(a, b):
        dy = by - ay
        if dy != 0.0:
            # half-open vertical span handles shared vertices exactly once;
            # only rows inside [min, max) can cross, so slice to them
            lo, hi = min(ay, by), max(ay, by)
            r0 = max(int(math.ceil(lo)), y0) - y0
            r1 = min(int(math.ceil(hi)) - 1, y1) - y0
            if r0 <= r1:
                Y = ys[r0:r1 + 1, None]
                spans = (ay > Y) != (by > Y)
                x_at = ax + (Y - ay) * (bx - ax) / dy
                crossings[r0:r1 + 1] += (spans & (xs[None, :] < x_at)).astype(np.int64)
        # squared distance from pixel center to the segment, for boundary
        # inclusion; pixels further than a row/column from the edge's box
        # cannot satisfy the epsilon test
        ex0 = max(int(math.floor(min(ax, bx))) - 1, x0) - x0
        ex1 = min(int(math.ceil(max(ax, bx))) + 1, x1) - x0
        ey0 = max(int(math.floor(min(ay, by))) - 1, y0) - y0
        ey1 = min(int(math.ceil(max(ay, by))) + 1, y1) - y0
        if ex0 > ex1 or ey0 > ey1:
            continue
        X = xs[None, ex0:ex1 + 1]
        Y = ys[ey0:ey1 + 1, None]
        ex, ey = bx - ax, by - ay
        seg_len2 = ex * ex + ey * ey
        if seg_len2 == 0.0:
            d2 = (X - ax) ** 2 + (Y - ay) ** 2
        else:
            t = np.clip(((X - ax) * ex + (Y - ay) * ey) / seg_len2, 0.0, 1.0)
            d2 = (X - (ax + t * ex)) ** 2 + (Y - (ay + t * ey)) ** 2
        on_edge[ey0:ey1 + 1, ex0:ex1 + 1] |= d2 <= _BOUNDARY_EPS

    mask[y0:y1 + 1, x0:x1 + 1] = ((crossings % 2 == 1) | on_edge).astype(np.uint8)
    return mask


# Moore neighborhood in clockwise order, (dx, dy) with y growing downward.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """8-connected border trace of the first mask component, (N, 2) pixel centers.

    Follows the component containing the first set pixel in scan order.
    A single isolated pixel traces to a single vertex.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise EmptyMask("cannot trace an empty mask")
    first = np.lexsort((xs, ys))[0]
    start = (int(xs[first]), int(ys[first]))

    h, w = mask.shape

    def is_set(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and mask[y, x] != 0

    # Moore tracing, scan restarted just past the previous pixel's direction.
    # Stops when the first (pixel, move-direction) state repeats, i.e. the
    # trace is about to retread the ring.
    boundary = [start]
    backtrack = 0  # start pixel was reached scanning from the west
    cur = start
    first_state: tuple | None = None
    budget = 4 * len(xs) + 8
    while budget > 0:
        budget -= 1
        found = None
        for k in range(1, 9):
            idx = (backtrack + k) % 8
            dx, dy = _MOORE[idx]
            nx, ny = cur[0] + dx, cur[1] + dy
            if is_set(nx, ny):
                found = (nx, ny, idx)
                break
        if found is None:
            break  # isolated pixel
        nx, ny, idx = found
        state = (cur, idx)
        if first_state is None:
            first_state = state
        elif state == first_state:
            break
        cur = (nx, ny)
        backtrack = (idx + 4) % 8
        boundary.append(cur)
    if len(boundary) > 1 and boundary[-1] == start:
        boundary.pop()
    return np.array(boundary, dtype=np.float64)


def boundary_perimeter(boundary: np.ndarray) -> float:
    """Closed-ring length: unit steps for axial moves, sqrt(2) for diagonal."""
    if len(boundary) < 2:
        return 0.0
    steps = np.roll(boundary, -1, axis=0) - boundary
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def boundary_curvature(boundary: np.ndarray) -> float:
    """Mean absolute turning angle per unit length along the closed ring."""
    n = len(boundary)
    if n < 3:
        return 0.0
    prev = boundary - np.roll(boundary, 1, axis=0)
    nxt = np.roll(boundary, -1, axis=0) - boundary
    ang_in = np.arctan2(prev[:, 1], prev[:, 0])
    ang_out = np.arctan2(nxt[:, 1], nxt[:, 0])
    turn = np.abs(np.angle(np.exp(1j * (ang_out - ang_in))))
    step = 0.5 * (np.hypot(*prev.T) + np.hypot(*nxt.T))
    valid = step > 0
    if not valid.any():
        return 0.0
    return float(np.mean(turn[valid] / step[valid]))


def corner_midline(mouth_roi: np.ndarray, columns: np.ndarray) -> np.ndarray:
    """Midline y per column: the line through the two mouth-corner landmarks."""
    lx, ly = mouth_roi[LEFT_CORNER]
    rx, ry = mouth_roi[RIGHT_CORNER]
    if rx == lx:
        return np.full(columns.shape, 0.5 * (ly + ry), dtype=np.float64)
    slope = (ry - ly) / (rx - lx)
    return ly + slope * (columns - lx)


def static_features(roi: LipRoi) -> StaticShapeFeatures:
    """Measure the static shape block on a lip ROI.

    Raises EmptyMask when no pixel is set; all features other than area
    are undefined in that case.
    """
    mask = roi.mask
    area = int(mask.sum())
    if area == 0:
        raise EmptyMask("lip mask has no set pixels")
    if roi.mouth is None:
        raise ValueError("static features need the ROI-space mouth landmarks")

    h, w = mask.shape
    cols = np.arange(w, dtype=np.float64)
    midline = corner_midline(np.asarray(roi.mouth, dtype=np.float64), cols)
    rows = np.arange(h, dtype=np.float64)[:, None]
    above = (rows < midline[None, :]) & (mask != 0)
    upper = above.sum(axis=0).astype(np.float64)
    lower = mask.sum(axis=0).astype(np.float64) - upper

    boundary = trace_boundary(mask)
    perimeter = boundary_perimeter(boundary)
    curvature = boundary_curvature(boundary)

    mirrored = mask[:, ::-1]
    inter = int(np.count_nonzero((mask != 0) & (mirrored != 0)))
    union = int(np.count_nonzero((mask != 0) | (mirrored != 0)))
    symmetry = inter / union if union else 0.0

    sel = mask != 0
    pixels = roi.color[sel].astype(np.float64)
    color_mean = pixels.mean(axis=0)
    color_std = pixels.std(axis=0)

    nz = mask.any(axis=0)
    return StaticShapeFeatures(
        area_px=area,
        perimeter_px=perimeter,
        upper_thickness=upper,
        lower_thickness=lower,
        upper_thickness_mean=float(upper[nz].mean()) if nz.any() else 0.0,
        lower_thickness_mean=float(lower[nz].mean()) if nz.any() else 0.0,
        curvature_mean=curvature,
        symmetry=symmetry,
        color_mean=color_mean,
        color_std=color_std,
    )
