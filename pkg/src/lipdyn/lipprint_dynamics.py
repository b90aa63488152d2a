"""Shape-independent lip-print motion features.

Enhances lip texture, detects line segments on the groove edges, links
and filters them, then matches lines across consecutive frames within
each of the six regions to produce per-pair motion vectors and their
summary statistics. Window-level aggregation adds trajectory length and
curvature over the sequence of per-pair average motion vectors.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from functools import cached_property

import cv2
import numpy as np

from .config import LipprintConfig, MatchingConfig
from .errors import EmptyMask
from .ingest import LipRoi
from .texture_features import REGION_LABELS, SixRegions

HOUGH_SEED = 12345


@dataclass(frozen=True)
class LineSegment:
    """A detected lip-print line with derived geometry."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    region_label: str = ""

    @cached_property
    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])

    @cached_property
    def angle(self) -> float:
        """Degrees from the positive x-axis, normalized to [0, 180)."""
        a = math.degrees(math.atan2(self.p2[1] - self.p1[1], self.p2[0] - self.p1[0]))
        return a % 180.0

    @cached_property
    def center(self) -> tuple[float, float]:
        return ((self.p1[0] + self.p2[0]) / 2.0, (self.p1[1] + self.p2[1]) / 2.0)


@dataclass(frozen=True)
class MotionVectorSet:
    """Matched line displacements for one frame pair."""

    vectors: np.ndarray          # (k, 2) displacements, k <= 8
    regions: tuple[str, ...]     # source region per vector
    avg_vector: np.ndarray       # (2,)
    avg_magnitude: float
    avg_direction_deg: float     # direction of the average vector, [0, 360)

    @property
    def has_matches(self) -> bool:
        return len(self.vectors) > 0

    @property
    def moved(self) -> bool:
        """True when any matched displacement is nonzero."""
        return bool(len(self.vectors) and np.hypot(*self.vectors.T).max() > 0)


def _empty_motion() -> MotionVectorSet:
    return MotionVectorSet(
        vectors=np.zeros((0, 2), dtype=np.float64),
        regions=(),
        avg_vector=np.zeros(2, dtype=np.float64),
        avg_magnitude=0.0,
        avg_direction_deg=0.0,
    )


def preprocess_lipprint(roi: LipRoi, config: LipprintConfig | None = None) -> np.ndarray:
    """Binary groove-edge raster: CLAHE, Canny, bilateral smoothing, mask gate."""
    cfg = config or LipprintConfig()
    if not roi.mask.any():
        raise EmptyMask("cannot extract lip-print edges without lip pixels")
    clahe = cv2.createCLAHE(clipLimit=cfg.clahe_clip,
                            tileGridSize=(cfg.clahe_tiles, cfg.clahe_tiles))
    enhanced = clahe.apply(roi.gray)
    edges = cv2.Canny(enhanced, cfg.canny_low, cfg.canny_high,
                      apertureSize=cfg.canny_aperture)
    smoothed = cv2.bilateralFilter(edges, cfg.bilateral_d,
                                   cfg.bilateral_sigma_color, cfg.bilateral_sigma_space)
    binary = (smoothed >= 128).astype(np.uint8)
    binary[roi.mask == 0] = 0
    return binary


def _label_for_center(center: tuple[float, float], tiling: SixRegions | None) -> str:
    if tiling is None:
        return ""
    x, y = center
    for region in tiling.regions:
        if region.x0 <= x < region.x1 and region.y0 <= y < region.y1:
            return region.label
    return ""


def detect_lines(edges: np.ndarray, tiling: SixRegions | None = None,
                 config: LipprintConfig | None = None) -> list[LineSegment]:
    """Probabilistic Hough segments on a binary raster, labeled by region.

    The Hough sampler is reseeded per call so identical rasters give
    identical segment lists.
    """
    cfg = config or LipprintConfig()
    raster = (np.asarray(edges) != 0).astype(np.uint8) * 255
    cv2.setRNGSeed(HOUGH_SEED)
    found = cv2.HoughLinesP(
        raster,
        rho=cfg.hough_rho,
        theta=math.radians(cfg.hough_theta_deg),
        threshold=cfg.hough_votes,
        minLineLength=cfg.hough_min_length,
        maxLineGap=cfg.hough_max_gap,
    )
    if found is None:
        return []
    segments = []
    for x1, y1, x2, y2 in found.reshape(-1, 4):
        seg = LineSegment(p1=(float(x1), float(y1)), p2=(float(x2), float(y2)))
        segments.append(replace(seg, region_label=_label_for_center(seg.center, tiling)))
    return segments


def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _endpoint_gap(a: LineSegment, b: LineSegment) -> float:
    pts_a = (a.p1, a.p2)
    pts_b = (b.p1, b.p2)
    return min(math.hypot(p[0] - q[0], p[1] - q[1]) for p in pts_a for q in pts_b)


def link_segments(lines: list[LineSegment], max_gap: float = 2.0,
                  max_angle: float = 10.0) -> list[LineSegment]:
    """Merge near-collinear segments whose nearest endpoints are < max_gap apart.

    Merging repeats until no pair qualifies, always taking the smallest
    endpoint gap first (gaps within 1e-12 tie toward the earlier pair).
    The merged segment spans the two mutually farthest endpoints, so
    total extent never shrinks and the segment count never grows.
    """
    items = list(lines)
    alive = [True] * len(items)

    def qualifies(a: LineSegment, b: LineSegment):
        if _angle_gap(a.angle, b.angle) > max_angle:
            return None
        gap = _endpoint_gap(a, b)
        return gap if gap < max_gap else None

    # heap keyed by gap quantized to the tie tolerance, then pair indices;
    # stale entries (dead constituents) are discarded lazily on pop
    heap: list[tuple[int, int, int]] = []
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            gap = qualifies(items[i], items[j])
            if gap is not None:
                heap.append((int(gap / 1e-12), i, j))
    heapq.heapify(heap)

    while heap:
        _, i, j = heapq.heappop(heap)
        if not (alive[i] and alive[j]):
            continue
        a, b = items[i], items[j]
        pts = [a.p1, a.p2, b.p1, b.p2]
        far = max(((p, q) for p in pts for q in pts),
                  key=lambda pq: math.hypot(pq[0][0] - pq[1][0], pq[0][1] - pq[1][1]))
        label = a.region_label if a.length >= b.length else b.region_label
        joined = LineSegment(p1=far[0], p2=far[1], region_label=label)
        alive[i] = alive[j] = False
        items.append(joined)
        alive.append(True)
        m = len(items) - 1
        for k in range(m):
            if alive[k]:
                gap = qualifies(items[k], joined)
                if gap is not None:
                    heapq.heappush(heap, (int(gap / 1e-12), k, m))
    return [seg for seg, ok in zip(items, alive) if ok]


def filter_lines(lines: list[LineSegment], min_length: float = 10.0,
                 angle_low: float = 40.0, angle_high: float = 140.0) -> list[LineSegment]:
    """Keep segments longer than min_length with angle in [angle_low, angle_high]."""
    return [s for s in lines
            if s.length > min_length and angle_low <= s.angle <= angle_high]


def match_motion(prev: list[LineSegment], curr: list[LineSegment],
                 config: MatchingConfig | None = None) -> MotionVectorSet:
    """Match lines across a frame pair per region and emit motion vectors.

    Candidates are scored by weighted center distance, length change, and
    angle change; greedy one-to-one matching proceeds in ascending cost
    with a hard center-distance gate. Each region contributes the
    displacement of its matched pair with the longest current-frame
    line; remaining matched pairs pad the set to at most 8 vectors in
    descending current-line length.
    """
    cfg = config or MatchingConfig()
    by_region_prev: dict[str, list[int]] = {}
    by_region_curr: dict[str, list[int]] = {}
    for idx, seg in enumerate(prev):
        by_region_prev.setdefault(seg.region_label, []).append(idx)
    for idx, seg in enumerate(curr):
        by_region_curr.setdefault(seg.region_label, []).append(idx)

    matches: list[tuple[str, int, int]] = []  # (region, prev idx, curr idx)
    for region in sorted(set(by_region_prev) & set(by_region_curr)):
        candidates = []
        for pi in by_region_prev[region]:
            for ci in by_region_curr[region]:
                a, b = prev[pi], curr[ci]
                center_dist = math.hypot(b.center[0] - a.center[0],
                                         b.center[1] - a.center[1])
                if center_dist > cfg.max_center_distance:
                    continue
                cost = (cfg.w_center * center_dist
                        + cfg.w_length * abs(b.length - a.length)
                        + cfg.w_angle * _angle_gap(a.angle, b.angle))
                candidates.append((cost, pi, ci))
        candidates.sort(key=lambda t: (t[0], t[1], t[2]))
        used_p: set[int] = set()
        used_c: set[int] = set()
        for cost, pi, ci in candidates:
            if pi in used_p or ci in used_c:
                continue
            used_p.add(pi)
            used_c.add(ci)
            matches.append((region, pi, ci))

    if not matches:
        return _empty_motion()

    region_rank = {label: k for k, label in enumerate(REGION_LABELS)}
    primaries: list[tuple[str, int, int]] = []
    spares: list[tuple[str, int, int]] = []
    for region in sorted({m[0] for m in matches}, key=lambda r: region_rank.get(r, 99)):
        regional = [m for m in matches if m[0] == region]
        regional.sort(key=lambda m: -curr[m[2]].length)
        primaries.append(regional[0])
        spares.extend(regional[1:])
    spares.sort(key=lambda m: (-curr[m[2]].length, region_rank.get(m[0], 99)))

    chosen = (primaries + spares)[:cfg.max_vectors]
    vectors = np.array(
        [[curr[ci].center[0] - prev[pi].center[0],
          curr[ci].center[1] - prev[pi].center[1]] for _, pi, ci in chosen],
        dtype=np.float64,
    )
    regions = tuple(m[0] for m in chosen)
    avg = vectors.mean(axis=0)
    magnitudes = np.hypot(vectors[:, 0], vectors[:, 1])
    direction = math.degrees(math.atan2(avg[1], avg[0])) % 360.0 if np.hypot(*avg) > 0 else 0.0
    return MotionVectorSet(
        vectors=vectors,
        regions=regions,
        avg_vector=avg,
        avg_magnitude=float(magnitudes.mean()),
        avg_direction_deg=direction,
    )


def window_motion_block(pair_sets: list[MotionVectorSet], max_vectors: int = 8
                        ) -> tuple[np.ndarray, int]:
    """Aggregate per-pair motion into the fixed 21-value window block.

    Layout: 16 values (8 slot-averaged (dx, dy) vectors, zero-padded),
    then 5 scalars: magnitude of the window-average motion vector, mean
    per-pair magnitude, direction of the window-average vector, trajectory
    length (summed per-pair magnitudes), and trajectory curvature (mean
    absolute turn per unit step between consecutive pair averages).
    The presence flag is 1 only when some matched displacement moved.
    """
    slots = np.zeros((max_vectors, 2), dtype=np.float64)
    counts = np.zeros(max_vectors, dtype=np.int64)
    matched_sets = [s for s in pair_sets if s.has_matches]
    for pset in matched_sets:
        k = min(len(pset.vectors), max_vectors)
        slots[:k] += pset.vectors[:k]
        counts[:k] += 1
    nz = counts > 0
    slots[nz] /= counts[nz, None]

    present = int(any(s.moved for s in pair_sets))
    if not matched_sets:
        return np.zeros(2 * max_vectors + 5, dtype=np.float64), 0

    avg_vectors = np.array([s.avg_vector for s in matched_sets])
    window_avg = avg_vectors.mean(axis=0)
    window_mag = float(np.hypot(*window_avg))
    mean_pair_mag = float(np.mean([s.avg_magnitude for s in matched_sets]))
    direction = math.degrees(math.atan2(window_avg[1], window_avg[0])) % 360.0 \
        if window_mag > 0 else 0.0
    traj_length = float(np.sum([s.avg_magnitude for s in matched_sets]))

    turns = []
    for a, b in zip(avg_vectors, avg_vectors[1:]):
        na, nb = np.hypot(*a), np.hypot(*b)
        if na == 0 or nb == 0:
            continue
        turn = abs(math.atan2(b[1], b[0]) - math.atan2(a[1], a[0]))
        turn = min(turn, 2 * math.pi - turn)
        step = 0.5 * (na + nb)
        turns.append(turn / step)
    curvature = float(np.mean(turns)) if turns else 0.0

    stats = np.array([window_mag, mean_pair_mag, direction, traj_length, curvature])
    return np.concatenate([slots.ravel(), stats]), present
