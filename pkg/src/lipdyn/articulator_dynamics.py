"""Articulator dynamics: trajectory correlation and mouth-openness features.

Per window, the 20 mouth landmarks' x and y trajectories form two
20 x n matrices; pairwise Pearson correlation over rows yields two
symmetric 20 x 20 matrices whose upper triangles (190 + 190 values)
plus the 3-bin openness-level histogram give the 383-value block.
Mouth openness is the inner-lip vertical gap, self-normalized to the
window maximum and split into small/medium/large levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import UnknownPhoneme, WindowTooShort
from .ingest import MouthLandmarks

LEVELS = ("small", "medium", "large")

BLOCK_DIM = 2 * 190 + len(LEVELS)  # two correlation triangles + histogram

# inner-lip vertical pairs (mouth-local indices): upper 61/62/63 over lower 67/66/65
_INNER_PAIRS = ((13, 19), (14, 18), (15, 17))


@dataclass(frozen=True)
class TrajectoryMatrix:
    """Landmark trajectories: row = landmark, column = frame."""

    x: np.ndarray  # (20, n)
    y: np.ndarray  # (20, n)

    @property
    def n_frames(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class CorrelationFeatures:
    rx: np.ndarray  # (20, 20) exactly symmetric
    ry: np.ndarray


@dataclass(frozen=True)
class OpennessSeries:
    height: np.ndarray          # per-frame inner-lip gap, px
    level: tuple[str, ...]      # per-frame label
    level_histogram: np.ndarray  # 3 proportions summing to 1


def _as_point_stack(frames: Sequence[MouthLandmarks] | np.ndarray) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        pts = np.asarray(frames, dtype=np.float64)
        if pts.ndim != 3 or pts.shape[1:] != (20, 2):
            raise ValueError("expected an (n, 20, 2) landmark stack")
        return pts
    return np.stack([f.points for f in frames]).astype(np.float64)


def build_trajectories(frames: Sequence[MouthLandmarks] | np.ndarray) -> TrajectoryMatrix:
    """Stack per-frame mouth landmarks into 20 x n coordinate matrices."""
    pts = _as_point_stack(frames)
    if pts.shape[0] < 2:
        raise WindowTooShort(f"trajectory needs >= 2 frames, got {pts.shape[0]}")
    return TrajectoryMatrix(x=pts[:, :, 0].T.copy(), y=pts[:, :, 1].T.copy())


def _pearson_rows(rows: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlation of matrix rows.

    Constant rows get zero correlation against everything, themselves
    included. The result is exactly symmetric by construction.
    """
    centered = rows - rows.mean(axis=1, keepdims=True)
    # a bit-constant row must count as zero variance even though the mean
    # rounds and leaves ~1e-16 residuals in the centered values
    constant = np.ptp(rows, axis=1) == 0
    centered[constant] = 0.0
    sumsq = (centered * centered).sum(axis=1)
    cross = centered @ centered.T
    denom = np.sqrt(np.outer(sumsq, sumsq))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, cross / denom, 0.0)
    # mirror the upper triangle so R == R.T holds bit-exactly
    upper = np.triu(r)
    return upper + np.triu(r, 1).T


def correlation_matrix(traj: TrajectoryMatrix) -> CorrelationFeatures:
    if traj.n_frames < 2:
        raise WindowTooShort("correlation needs >= 2 frames")
    return CorrelationFeatures(rx=_pearson_rows(traj.x), ry=_pearson_rows(traj.y))


def upper_triangle(matrix: np.ndarray) -> np.ndarray:
    """Strict upper triangle, row-major: 190 values for a 20 x 20 matrix."""
    n = matrix.shape[0]
    iu = np.triu_indices(n, k=1)
    return np.asarray(matrix, dtype=np.float64)[iu]


def inner_lip_height(points: np.ndarray) -> float:
    """Largest vertical gap between paired inner-lip landmarks, floored at 0."""
    gaps = [points[lo, 1] - points[up, 1] for up, lo in _INNER_PAIRS]
    return max(0.0, float(max(gaps)))


def openness(frames: Sequence[MouthLandmarks] | np.ndarray,
             thresholds: tuple[float, float] = (0.33, 0.66)) -> OpennessSeries:
    """Per-frame openness levels, self-normalized to the window maximum."""
    t1, t2 = thresholds
    if not (0.0 < t1 < t2 < 1.0):
        raise ValueError("thresholds must satisfy 0 < t1 < t2 < 1")
    pts = _as_point_stack(frames)
    if pts.shape[0] == 0:
        raise WindowTooShort("openness needs at least one frame")
    heights = np.array([inner_lip_height(p) for p in pts])
    peak = heights.max()
    norm = heights / peak if peak > 0 else np.zeros_like(heights)
    levels = tuple(
        LEVELS[0] if v < t1 else LEVELS[1] if v < t2 else LEVELS[2] for v in norm
    )
    hist = np.array([levels.count(name) for name in LEVELS], dtype=np.float64)
    hist /= hist.sum()
    return OpennessSeries(height=heights, level=levels, level_histogram=hist)


def articulator_block(frames: Sequence[MouthLandmarks] | np.ndarray,
                      thresholds: tuple[float, float] = (0.33, 0.66)) -> np.ndarray:
    """The 383-value window block: two correlation triangles + histogram."""
    traj = build_trajectories(frames)
    corr = correlation_matrix(traj)
    series = openness(frames, thresholds)
    return np.concatenate([
        upper_triangle(corr.rx),
        upper_triangle(corr.ry),
        series.level_histogram,
    ])


def _load_phoneme_table() -> dict[str, str]:
    text = resources.files("lipdyn").joinpath("data/phoneme_categories.txt").read_text("utf-8")
    table: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        symbol, category = line.split("\t")
        table[symbol] = category
    return table


_PHONEME_TABLE: dict[str, str] | None = None


def phoneme_category(phoneme: str) -> str:
    """Mouth-opening category for a vowel phoneme symbol.

    Accepts the symbol with or without surrounding slashes; "ae" is an
    alias for the ligature.
    """
    global _PHONEME_TABLE
    if _PHONEME_TABLE is None:
        _PHONEME_TABLE = _load_phoneme_table()
    symbol = phoneme.strip().strip("/").strip()
    if symbol == "ae":
        symbol = "æ"
    try:
        return _PHONEME_TABLE[symbol]
    except KeyError:
        raise UnknownPhoneme(f"no category for phoneme {phoneme!r}") from None


def phoneme_table() -> dict[str, str]:
    """The full phoneme -> category map (copy)."""
    global _PHONEME_TABLE
    if _PHONEME_TABLE is None:
        _PHONEME_TABLE = _load_phoneme_table()
    return dict(_PHONEME_TABLE)
