"""Six-region texture features from oriented second-derivative responses.

Each lip ROI is tiled into six rectangles (upper/lower at the corner
midline, three vertical bands). The grayscale ROI is filtered with the
second directional derivative of a Gaussian at 8 orientations via the
three-kernel steerable basis; each response yields a co-occurrence
matrix per region and five statistics (ASM, contrast, correlation,
inverse difference moment, entropy). A persisted PCA projects the
8-orientation axis down to 2 components, giving 6 x 5 x 2 = 60 values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, NotNormalized, TooFewPixels
from .ingest import LipRoi
from .lip_geometry import corner_midline

REGION_LABELS = ("UL", "UM", "UR", "LL", "LM", "LR")
ORIENTATIONS_DEG = tuple(22.5 * k for k in range(8))
STAT_NAMES = ("asm", "contrast", "correlation", "idm", "entropy")


@dataclass(frozen=True)
class Region:
    """One tiling rectangle in ROI coordinates, end-exclusive bounds."""

    label: str
    x0: int
    x1: int
    y0: int
    y1: int

    def slice(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)


@dataclass(frozen=True)
class SixRegions:
    regions: tuple[Region, ...]
    valid: np.ndarray  # full-ROI boolean raster of in-mask pixels

    def region_mask(self, region: Region) -> np.ndarray:
        """Boolean raster of the region's in-mask pixels, full ROI frame."""
        out = np.zeros_like(self.valid)
        ys, xs = region.slice()
        out[ys, xs] = self.valid[ys, xs]
        return out


def split_regions(roi: LipRoi) -> SixRegions:
    """Tile the mask bounding box into the six labeled rectangles.

    Vertical bands split the width into three, leftmost taking the
    remainder; the upper/lower boundary is the corner midline sampled at
    the box center. Raises EmptyMask when no pixel is set.
    """
    mask = roi.mask != 0
    if not mask.any():
        raise EmptyMask("cannot tile an empty mask")
    cols = np.flatnonzero(mask.any(axis=0))
    rows = np.flatnonzero(mask.any(axis=1))
    x0, x1 = int(cols[0]), int(cols[-1]) + 1
    y0, y1 = int(rows[0]), int(rows[-1]) + 1

    width = x1 - x0
    base = width // 3
    widths = (base + width % 3, base, base)
    xs = (x0, x0 + widths[0], x0 + widths[0] + widths[1], x1)

    if roi.mouth is not None:
        center_x = np.array([(x0 + x1 - 1) / 2.0])
        midline_y = float(corner_midline(np.asarray(roi.mouth, dtype=np.float64), center_x)[0])
        ys = int(round(midline_y))
    else:
        ys = (y0 + y1) // 2
    ys = min(max(ys, y0), y1)

    regions = []
    for row, (ry0, ry1) in zip("UL", ((y0, ys), (ys, y1))):
        for band in range(3):
            regions.append(Region(label=row + "LMR"[band],
                                  x0=xs[band], x1=xs[band + 1], y0=ry0, y1=ry1))
    return SixRegions(regions=tuple(regions), valid=mask)


@lru_cache(maxsize=8)
def _basis_1d(sigma: float, radius: int):
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    g /= g.sum()
    f1 = (t / (sigma * sigma)) * g
    f2 = ((t * t) / sigma**4 - 1.0 / (sigma * sigma)) * g
    return g, f1, f2


def steerable_kernel(orientation_deg: float, sigma: float = 2.0) -> np.ndarray:
    """Sampled second directional derivative of a Gaussian, zero-mean."""
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    x, y = np.meshgrid(t, t)
    g1 = np.exp(-(t * t) / (2.0 * sigma * sigma))
    g1 /= g1.sum()
    gauss = np.outer(g1, g1)
    theta = np.deg2rad(orientation_deg)
    u = x * np.cos(theta) + y * np.sin(theta)
    kernel = ((u * u) / sigma**4 - 1.0 / (sigma * sigma)) * gauss
    return kernel - kernel.mean()


def _steerable_bank(gray: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean-corrected basis responses shared by every orientation."""
    img = np.asarray(gray, dtype=np.float64)
    img = img - img.mean()

    radius = int(np.ceil(3.0 * sigma))
    g, f1, f2 = _basis_1d(float(sigma), radius)

    def sep(row_k, col_k):
        tmp = ndimage.correlate1d(img, col_k, axis=1, mode="reflect")
        return ndimage.correlate1d(tmp, row_k, axis=0, mode="reflect")

    b_xx = sep(g, f2)
    b_xy = sep(f1, f1)
    b_yy = sep(f2, g)
    box = sep(np.ones(2 * radius + 1), np.ones(2 * radius + 1))

    m_xx = np.outer(g, f2).mean()
    m_xy = np.outer(f1, f1).mean()
    return b_xx - m_xx * box, b_xy - m_xy * box, b_yy - m_xx * box


def _steer(bank, orientation_deg: float) -> np.ndarray:
    b_xx, b_xy, b_yy = bank
    theta = np.deg2rad(orientation_deg)
    c, s = np.cos(theta), np.sin(theta)
    return (c * c) * b_xx + (2.0 * c * s) * b_xy + (s * s) * b_yy


def steerable_response(gray: np.ndarray, orientation_deg: float, sigma: float = 2.0) -> np.ndarray:
    """Filter with the oriented second Gaussian derivative, reflect borders.

    Computed separably from the three basis kernels with the steering
    weights cos^2, 2 cos sin, sin^2. Basis kernels are mean-corrected so
    a constant image maps to an exactly zero response; the correction is
    a flat offset per kernel, which commutes with steering.
    """
    return _steer(_steerable_bank(gray, sigma), orientation_deg)


def glcm(response: np.ndarray, region_mask: np.ndarray, levels: int = 16,
         distance: int = 1) -> np.ndarray:
    """Normalized symmetric co-occurrence matrix at a horizontal offset.

    The response is linearly quantized to ``levels`` bins over the
    region's own min-max; pairs are counted where both pixels are in the
    region. Raises TooFewPixels when fewer than 2 pairs exist.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if distance < 1:
        raise ValueError("distance must be >= 1")
    resp = np.asarray(response, dtype=np.float64)
    valid = np.asarray(region_mask, dtype=bool)

    vals = resp[valid]
    if vals.size == 0:
        raise TooFewPixels("region has no valid pixels")
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        q = np.clip(((resp - lo) / (hi - lo) * levels).astype(np.int64), 0, levels - 1)
    else:
        q = np.zeros(resp.shape, dtype=np.int64)

    left = valid[:, :-distance] & valid[:, distance:]
    i = q[:, :-distance][left]
    j = q[:, distance:][left]
    if i.size < 2:
        raise TooFewPixels(f"only {i.size} co-occurrence pairs in region")

    one_way = np.bincount(i * levels + j, minlength=levels * levels)
    counts = one_way.reshape(levels, levels).astype(np.float64)
    counts = counts + counts.T
    return counts / counts.sum()


def glcm_stats(P: np.ndarray) -> np.ndarray:
    """The five co-occurrence statistics (ASM, contrast, correlation,
    inverse difference moment, entropy in bits)."""
    P = np.asarray(P, dtype=np.float64)
    total = P.sum()
    if abs(total - 1.0) > 1e-6:
        raise NotNormalized(f"co-occurrence matrix sums to {total!r}")
    n = P.shape[0]
    idx = np.arange(n, dtype=np.float64)
    i = idx[:, None]
    j = idx[None, :]

    asm = float((P * P).sum())
    contrast = float(((i - j) ** 2 * P).sum())
    idm = float((P / (1.0 + (i - j) ** 2)).sum())

    pi = P.sum(axis=1)
    pj = P.sum(axis=0)
    mu_i = float((idx * pi).sum())
    mu_j = float((idx * pj).sum())
    var_i = float(((idx - mu_i) ** 2 * pi).sum())
    var_j = float(((idx - mu_j) ** 2 * pj).sum())
    denom = np.sqrt(var_i * var_j)
    if denom > 0:
        corr = float((((i - mu_i) * (j - mu_j)) * P).sum() / denom)
    else:
        corr = 0.0

    nz = P > 0
    entropy = float(-(P[nz] * np.log2(P[nz])).sum())
    return np.array([asm, contrast, corr, idm, entropy], dtype=np.float64)


def texture_matrix(roi: LipRoi, sigma: float = 2.0, levels: int = 16,
                   distance: int = 1) -> np.ndarray:
    """Per-frame raw texture tensor, shape (6 regions, 5 stats, 8 orientations)."""
    tiling = split_regions(roi)
    out = np.zeros((6, 5, 8), dtype=np.float64)
    bank = _steerable_bank(roi.gray.astype(np.float64), sigma)
    for o, orient in enumerate(ORIENTATIONS_DEG):
        resp = _steer(bank, orient)
        for r, region in enumerate(tiling.regions):
            # pairs never straddle the rectangle edge, so the bbox slice
            # sees the same pair set as the full raster
            ys, xs = region.slice()
            P = glcm(resp[ys, xs], tiling.valid[ys, xs], levels=levels, distance=distance)
            out[r, :, o] = glcm_stats(P)
    return out


@dataclass(frozen=True)
class PcaBasis:
    """Frozen 8 -> 2 projection: training mean plus two orthonormal axes."""

    mean: np.ndarray        # (8,)
    components: np.ndarray  # (2, 8) rows orthonormal, leading variance first
    variances: np.ndarray   # (2,) explained variances

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return self.components @ (v - self.mean)


def pca_fit(training: np.ndarray) -> PcaBasis:
    """Top-2 principal axes of the training rows via covariance eigenvectors.

    Rank-0 covariance (all rows identical) degrades to a zero projection
    with a warning rather than an error.
    """
    X = np.asarray(training, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("PCA fit needs at least 3 training vectors")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    comps = evecs[:, order].T.copy()
    variances = np.maximum(evals[order], 0.0)
    if variances[0] <= 1e-18:
        warnings.warn("degenerate training data: zero-variance PCA basis", stacklevel=2)
        comps = np.zeros_like(comps)
        variances = np.zeros_like(variances)
    else:
        # deterministic sign: largest-magnitude coefficient positive
        for k in range(comps.shape[0]):
            pivot = np.argmax(np.abs(comps[k]))
            if comps[k, pivot] < 0:
                comps[k] = -comps[k]
    return PcaBasis(mean=mean, components=comps, variances=variances)
