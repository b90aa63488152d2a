"""Clip-level extraction: frames and landmarks to raw window feature rows.

Each frame is cropped to the normalized lip region, then contributes a
static shape summary, a 6x5x8 texture statistic tensor, and a set of
lip-print line segments. Sliding windows of 25 frames (stride 12) fold
the per-frame values into one 656-value raw row: 8 static, 240 texture,
21 lip-print motion, 383 articulator, and 4 block presence flags.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .errors import (
    DataError,
    DimensionMismatch,
    IoFailure,
    VersionMismatch,
    WindowTooShort,
)
from .ingest import LandmarkFrame, LipRoi, crop_normalize, extract_mouth
from .lip_geometry import fit_contour, static_features
from .lipprint_dynamics import (
    LineSegment,
    detect_lines,
    filter_lines,
    link_segments,
    match_motion,
    preprocess_lipprint,
    window_motion_block,
)
from .articulator_dynamics import BLOCK_DIM, articulator_block
from .texture_features import split_regions, texture_matrix
from .verifier import FEATURE_SCHEMA, RAW_DIM, schema_hash

WINDOW_LENGTH = 25
WINDOW_STRIDE = 12


@dataclass
class FrameFeatures:
    """Per-frame values later folded into window rows."""

    static: np.ndarray          # (8,)
    texture: np.ndarray         # (6, 5, 8)
    lines: list[LineSegment]
    mouth: np.ndarray           # (20, 2) in ROI coordinates


def process_frame(image: np.ndarray, frame: LandmarkFrame,
                  config: Config | None = None) -> FrameFeatures:
    """Run the full per-frame chain on one image and its landmark record."""
    cfg = config or Config()
    mouth = extract_mouth(frame)
    contour = fit_contour(mouth)
    roi = crop_normalize(image, mouth, contour, margin=cfg.roi.margin)
    return frame_features(roi, cfg)


def frame_features(roi: LipRoi, config: Config | None = None) -> FrameFeatures:
    cfg = config or Config()
    shape = static_features(roi)
    texture = texture_matrix(roi, sigma=cfg.texture.sigma,
                             levels=cfg.texture.glcm_levels,
                             distance=cfg.texture.glcm_distance)
    edges = preprocess_lipprint(roi, cfg.lipprint)
    tiling = split_regions(roi)
    lines = detect_lines(edges, tiling, cfg.lipprint)
    lines = link_segments(lines, cfg.lipprint.link_gap, cfg.lipprint.link_angle)
    lines = filter_lines(lines, cfg.lipprint.min_length,
                         cfg.lipprint.angle_low, cfg.lipprint.angle_high)
    return FrameFeatures(static=shape.summary(), texture=texture,
                         lines=lines, mouth=roi.mouth)


def window_spans(n_frames: int, length: int = WINDOW_LENGTH,
                 stride: int = WINDOW_STRIDE) -> list[tuple[int, int]]:
    """Start/stop spans of every full-length window; the tail is dropped."""
    if length < 2:
        raise ValueError("window length must be at least 2")
    return [(s, s + length) for s in range(0, n_frames - length + 1, stride)]


def window_row(frames: list[FrameFeatures], config: Config | None = None) -> np.ndarray:
    """Fold one window of per-frame features into a raw 656-value row."""
    cfg = config or Config()
    if len(frames) < 2:
        raise WindowTooShort(f"windows need at least 2 frames, got {len(frames)}")

    static = np.mean([f.static for f in frames], axis=0)
    texture = np.mean([f.texture for f in frames], axis=0)

    pair_sets = [
        match_motion(frames[i].lines, frames[i + 1].lines, cfg.matching)
        for i in range(len(frames) - 1)
    ]
    lipprint, lipprint_flag = window_motion_block(pair_sets, cfg.matching.max_vectors)

    mouths = np.stack([f.mouth for f in frames])
    if float(np.ptp(mouths, axis=0).max()) > 0.0:
        articulator = articulator_block(
            mouths, (cfg.articulator.openness_low, cfg.articulator.openness_high))
        articulator_flag = 1.0
    else:
        # frozen landmarks (a replayed photograph) carry no articulation
        # signal; mark the block absent instead of emitting degenerate
        # correlations plus a one-bin openness histogram
        articulator = np.zeros(BLOCK_DIM)
        articulator_flag = 0.0

    flags = np.array([1.0, 1.0, float(lipprint_flag), articulator_flag])
    row = np.concatenate([static, texture.ravel(), lipprint, articulator, flags])
    if row.shape[0] != RAW_DIM:
        raise DimensionMismatch(f"raw row has {row.shape[0]} values, expected {RAW_DIM}")
    return row


@dataclass
class FeatureSet:
    """Raw window rows with their subject labels and window origins."""

    rows: np.ndarray                 # (n, 656) float64
    subjects: list[str]              # distinct subject ids
    subject_index: np.ndarray        # (n,) index into subjects
    window_start: np.ndarray         # (n,) first frame index of each window

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.subject_index = np.asarray(self.subject_index, dtype=np.int64)
        self.window_start = np.asarray(self.window_start, dtype=np.int64)
        if self.rows.shape[0] != self.subject_index.shape[0]:
            raise DimensionMismatch("row count and subject index length differ")
        if self.rows.shape[0] != self.window_start.shape[0]:
            raise DimensionMismatch("row count and window start length differ")
        if self.rows.size and self.rows.shape[1] != RAW_DIM:
            raise DimensionMismatch(
                f"rows must have {RAW_DIM} values, got {self.rows.shape[1]}")

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    def labels(self) -> list[str]:
        return [self.subjects[i] for i in self.subject_index]

    @classmethod
    def merge(cls, parts: list["FeatureSet"]) -> "FeatureSet":
        parts = [p for p in parts if p.count]
        if not parts:
            raise DataError("no feature rows to merge")
        subjects: list[str] = []
        rows, index, starts = [], [], []
        for part in parts:
            remap = []
            for name in part.subjects:
                if name not in subjects:
                    subjects.append(name)
                remap.append(subjects.index(name))
            rows.append(part.rows)
            index.append(np.array([remap[i] for i in part.subject_index], dtype=np.int64))
            starts.append(part.window_start)
        return cls(rows=np.vstack(rows), subjects=subjects,
                   subject_index=np.concatenate(index),
                   window_start=np.concatenate(starts))

    def save(self, path) -> None:
        header = {
            "kind": "raw-feature-windows",
            "format": 1,
            "schema": FEATURE_SCHEMA,
            "schema_hash": schema_hash(),
            "dim": int(self.rows.shape[1]) if self.rows.size else RAW_DIM,
            "count": int(self.count),
            "subjects": self.subjects,
            "subject_index": [int(i) for i in self.subject_index],
            "window_start": [int(i) for i in self.window_start],
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        body = np.ascontiguousarray(self.rows, dtype="<f8").tobytes()
        try:
            with open(path, "wb") as fh:
                fh.write(b"LDYNFTR1" + len(head).to_bytes(4, "little") + head + body)
        except OSError as exc:
            raise IoFailure(f"cannot write features to {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "FeatureSet":
        try:
            blob = open(path, "rb").read()
        except OSError as exc:
            raise IoFailure(f"cannot read features from {path}: {exc}") from exc
        if len(blob) < 12 or blob[:8] != b"LDYNFTR1":
            raise IoFailure(f"{path} is not a feature windows file")
        hlen = int.from_bytes(blob[8:12], "little")
        try:
            header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IoFailure(f"{path} has a corrupt feature header") from exc
        if header.get("schema_hash") != schema_hash():
            raise VersionMismatch(
                f"feature file schema {header.get('schema')!r} does not match "
                f"{FEATURE_SCHEMA!r}")
        dim, count = header["dim"], header["count"]
        expected = count * dim * 8
        body = blob[12 + hlen:]
        if len(body) != expected:
            raise IoFailure(f"{path} body holds {len(body)} bytes, expected {expected}")
        rows = np.frombuffer(body, dtype="<f8").reshape(count, dim).copy()
        return cls(rows=rows, subjects=header["subjects"],
                   subject_index=np.array(header["subject_index"], dtype=np.int64),
                   window_start=np.array(header["window_start"], dtype=np.int64))


def extract_clip(images: list[np.ndarray], records: list[LandmarkFrame],
                 subject: str, config: Config | None = None) -> FeatureSet:
    """Extract all window rows from one clip's frames and landmark records."""
    cfg = config or Config()
    if len(images) != len(records):
        raise DimensionMismatch(
            f"{len(images)} images but {len(records)} landmark records")
    length, stride = cfg.window.length, cfg.window.stride
    if len(records) < length:
        raise WindowTooShort(
            f"clip has {len(records)} frames; a window needs {length}")
    per_frame = [process_frame(img, rec, cfg) for img, rec in zip(images, records)]
    spans = window_spans(len(per_frame), length, stride)
    rows = np.stack([window_row(per_frame[a:b], cfg) for a, b in spans])
    return FeatureSet(rows=rows, subjects=[subject],
                      subject_index=np.zeros(len(spans), dtype=np.int64),
                      window_start=np.array([a for a, _ in spans], dtype=np.int64))
