"""Deterministic synthetic talking-mouth clips for testing and evaluation.

Subjects share similar static lip geometry; identity is carried by the
dynamics. Each subject gets a per-landmark sinusoid phase vector (the
inter-landmark correlation structure is then a stable signature), a
groove field riding on the moving lip surface (feeding line motion
vectors), and a smooth texture field. Everything derives from integer
seeds, so regenerating a clip is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .errors import IoFailure, MalformedRecord
from .ingest import (
    LandmarkFrame,
    parse_landmark_file,
    write_landmark_file,
)

FRAME_WIDTH = 320
FRAME_HEIGHT = 240
MOUTH_CX = 160.0
MOUTH_CY = 120.0

# horizontal placement of the 12 outer and 8 inner points as fractions
# of the half-width, left corner first, clockwise in image coordinates
_OUTER_X = (-1.0, -0.6, -0.3, 0.0, 0.3, 0.6, 1.0, 0.6, 0.3, 0.0, -0.3, -0.6)
_INNER_X = (-0.88, -0.5, 0.0, 0.5, 0.88, 0.5, 0.0, -0.5)


@dataclass(frozen=True)
class StaticTraits:
    """Appearance parameters; kept in a narrow range across subjects."""

    half_width: float
    upper_height: float   # outer top arc rise above the corners, px
    lower_height: float   # outer bottom arc drop, px
    upper_thick: float    # upper lip band thickness, px
    lower_thick: float
    lip_shade: float      # base lip intensity
    texture_field: np.ndarray  # (240, 320) float, smooth, zero-mean


@dataclass(frozen=True)
class Groove:
    """One lip-print furrow tied to the deforming lip surface."""

    band: str        # "upper" or "lower"
    u: float         # horizontal fraction across the mouth, 0..1
    v: float         # depth fraction inside the band, 0..1
    angle_deg: float
    length: float


@dataclass(frozen=True)
class DynamicTraits:
    """Motion parameters; these carry the identity.

    The phase vectors fix the inter-landmark correlation structure; the
    phase concentration and the opening waveform exponent additionally
    shift the value distributions the embedding pools over.
    """

    frequency: float            # cycles per frame
    outer_amp: np.ndarray       # (12,) per-landmark amplitude, px
    outer_phase: np.ndarray     # (12,) radians
    x_amp: np.ndarray           # (20,) horizontal oscillation per landmark, px
    x_phase: np.ndarray         # (20,) radians
    open_amp: float             # inner gap amplitude, px
    open_phase: float
    open_shape: float           # waveform exponent; skews time spent open
    corner_amp: float           # horizontal corner wiggle, px
    corner_phase: float
    grooves: tuple[Groove, ...]


@dataclass(frozen=True)
class SubjectParams:
    static: StaticTraits
    dynamics: DynamicTraits


def subject_params(seed: int, subject_idx: int) -> SubjectParams:
    """Draw one subject's parameters deterministically from the seeds."""
    rng = np.random.default_rng([seed, subject_idx, 101])
    field = rng.normal(0.0, 1.0, (6, 8))
    field = cv2.resize(field, (FRAME_WIDTH, FRAME_HEIGHT), interpolation=cv2.INTER_CUBIC)
    field *= 9.0 / max(1e-9, np.abs(field).max())
    static = StaticTraits(
        half_width=float(rng.uniform(48.0, 54.0)),
        upper_height=float(rng.uniform(13.0, 15.0)),
        lower_height=float(rng.uniform(15.0, 17.0)),
        upper_thick=float(rng.uniform(7.0, 9.0)),
        lower_thick=float(rng.uniform(9.0, 11.0)),
        lip_shade=float(rng.uniform(88.0, 94.0)),
        texture_field=field,
    )
    grooves = []
    angle_mid = float(rng.uniform(72.0, 108.0))
    angle_spread = float(rng.uniform(5.0, 22.0))
    length_base = float(rng.uniform(13.0, 20.0))
    for band, count in (("upper", int(rng.integers(3, 9))),
                        ("lower", int(rng.integers(4, 10)))):
        for _ in range(count):
            grooves.append(Groove(
                band=band,
                u=float(rng.uniform(0.12, 0.88)),
                v=float(rng.uniform(0.25, 0.75)),
                angle_deg=angle_mid + float(rng.uniform(-angle_spread, angle_spread)),
                length=length_base + float(rng.uniform(0.0, 4.0)),
            ))
    # identity lives in the motion, not the face: every landmark locks to
    # one of a few per-subject phase anchors (base, base + split, and the
    # same pair a half cycle out), with concentration setting how tightly
    # landmarks pack around their anchor.  The anchor angles, membership
    # draws and packing width shape the per-window correlation histogram,
    # which is the part of the signature that survives average pooling.
    # The two split angles tile a coarse grid over the subject index (in
    # cos space, where correlation modes live) so any two subjects differ
    # markedly in at least one of them; iid draws collide too often.
    concentration = float(rng.uniform(0.08, 0.9))
    base_phase = float(rng.uniform(0.0, 2.0 * math.pi))
    cell = (0.6 - -0.95) / 4.0
    cos_y = -0.95 + (subject_idx % 4 + 0.2 + 0.6 * float(rng.random())) * cell
    cos_x = -0.95 + (subject_idx // 4 % 4 + 0.2 + 0.6 * float(rng.random())) * cell
    y_split = math.acos(cos_y)
    x_split = math.acos(cos_x)
    group_y = (rng.random(12) < rng.uniform(0.25, 0.75)).astype(float)
    group_x = (rng.random(20) < rng.uniform(0.25, 0.75)).astype(float)
    flip_y = (rng.random(12) < rng.uniform(0.0, 0.4)).astype(float)
    flip_x = (rng.random(20) < rng.uniform(0.0, 0.4)).astype(float)
    dynamics = DynamicTraits(
        # periods that divide the window length: correlation estimates then
        # cannot depend on where a window starts, only on the phase anchors.
        frequency=float(rng.choice([0.08, 0.12, 0.16])),
        outer_amp=rng.uniform(2.5, 4.5, 12),
        outer_phase=base_phase + y_split * group_y + math.pi * flip_y
        + concentration * rng.uniform(-1.0, 1.0, 12),
        x_amp=rng.uniform(1.2, 2.2, 20),
        x_phase=base_phase + x_split * group_x + math.pi * flip_x
        + concentration * rng.uniform(-1.0, 1.0, 20),
        open_amp=float(rng.uniform(9.0, 14.0)),
        open_phase=float(rng.uniform(0.0, 2.0 * math.pi)),
        open_shape=float(rng.uniform(0.35, 2.6)),
        corner_amp=float(rng.uniform(1.0, 2.5)),
        corner_phase=float(rng.uniform(0.0, 2.0 * math.pi)),
        grooves=tuple(grooves),
    )
    return SubjectParams(static=static, dynamics=dynamics)


def mimic_params(victim: SubjectParams, impostor: SubjectParams) -> SubjectParams:
    """An impostor copying the victim's appearance but not their motion."""
    return replace(impostor, static=victim.static)


def _mouth_points(params: SubjectParams, t: float, jitter: np.ndarray) -> np.ndarray:
    """The 20 mouth landmarks (image coordinates, y down) at frame t."""
    st, dy = params.static, params.dynamics
    w = st.half_width
    omega = 2.0 * math.pi * dy.frequency
    # 0..1 opening drive shared by the jaw; per-landmark phases shift it
    s = np.array([0.5 * (1.0 + math.sin(omega * t + p)) for p in dy.outer_phase])
    drive = 0.5 * (1.0 + math.sin(omega * t + dy.open_phase))
    gap = dy.open_amp * drive ** dy.open_shape
    dx_corner = dy.corner_amp * math.sin(omega * t + dy.corner_phase)

    outer = np.zeros((12, 2))
    for k, fx in enumerate(_OUTER_X):
        x = MOUTH_CX + fx * w
        if k in (0, 6):
            x += math.copysign(dx_corner, fx)
            y = MOUTH_CY + 0.6 * dy.outer_amp[k] * math.sin(omega * t + dy.outer_phase[k])
        elif 1 <= k <= 5:
            arc = st.upper_height * (1.0 - 0.55 * abs(fx))
            y = MOUTH_CY - arc - dy.outer_amp[k] * s[k]
        else:
            arc = st.lower_height * (1.0 - 0.55 * abs(fx))
            y = MOUTH_CY + arc + (dy.outer_amp[k] + 0.35 * gap) * s[k]
        outer[k] = (x, y)

    inner = np.zeros((8, 2))
    # baseline + oscillation, never a hard clamp: a clamped closed phase
    # dwells at a constant height that can straddle an openness bin edge,
    # where peak-normalization noise flips many frames of the histogram
    half_gap = 1.1 + 0.5 * gap
    for k, fx in enumerate(_INNER_X):
        x = MOUTH_CX + fx * (w - 5.0)
        if k == 0 or k == 4:
            y = MOUTH_CY + 0.15 * half_gap * (1 if k == 4 else -1)
        elif k in (1, 2, 3):
            taper = 1.0 - 0.45 * abs(fx)
            y = MOUTH_CY - half_gap * taper
        else:
            taper = 1.0 - 0.45 * abs(fx)
            y = MOUTH_CY + half_gap * taper
        inner[k] = (x, y)

    pts = np.vstack([outer, inner])
    pts[:, 0] += dy.x_amp * np.sin(omega * t + dy.x_phase)
    pts += jitter
    return np.clip(pts, 1.0, (FRAME_WIDTH - 2, FRAME_HEIGHT - 2))


def _face_scaffold() -> np.ndarray:
    """Fixed coarse positions for the 48 non-mouth landmarks."""
    pts = np.zeros((48, 2))
    for k in range(17):  # jaw arc
        a = math.pi * (1.0 - k / 16.0)
        pts[k] = (MOUTH_CX + 95.0 * math.cos(a), 95.0 + 110.0 * abs(math.sin(a)))
    for k in range(17, 27):  # brows
        pts[k] = (70.0 + (k - 17) * 20.0, 55.0)
    for k in range(27, 36):  # nose
        pts[k] = (MOUTH_CX - 8.0 + (k - 27) * 2.0, 70.0 + (k - 27) * 4.0)
    for k in range(36, 48):  # eyes
        side = 100.0 if k < 42 else 200.0
        pts[k] = (side + (k % 6) * 6.0, 75.0)
    return pts


def _band_edges(outer: np.ndarray, inner: np.ndarray, band: str):
    """Interpolators for a lip band's outer and inner edge heights."""
    if band == "upper":
        ox = outer[0:7, 0]
        oy = outer[0:7, 1]
        ix = np.concatenate([[outer[0, 0]], inner[0:5, 0], [outer[6, 0]]])
        iy = np.concatenate([[outer[0, 1]], inner[0:5, 1], [outer[6, 1]]])
    else:
        ox = np.concatenate([[outer[0, 0]], outer[11:5:-1, 0]])
        oy = np.concatenate([[outer[0, 1]], outer[11:5:-1, 1]])
        ix = np.concatenate([[outer[0, 0]], [inner[0, 0]], inner[7:4:-1, 0], [outer[6, 0]]])
        iy = np.concatenate([[outer[0, 1]], [inner[0, 1]], inner[7:4:-1, 1], [outer[6, 1]]])
    order = np.argsort(ox)
    iorder = np.argsort(ix)
    return (ox[order], oy[order]), (ix[iorder], iy[iorder])


def _groove_endpoints(groove: Groove, outer: np.ndarray, inner: np.ndarray
                      ) -> tuple[tuple[float, float], tuple[float, float]]:
    (ox, oy), (ix, iy) = _band_edges(outer, inner, groove.band)
    x = outer[0, 0] + groove.u * (outer[6, 0] - outer[0, 0])
    edge_out = float(np.interp(x, ox, oy))
    edge_in = float(np.interp(x, ix, iy))
    cy = edge_out + groove.v * (edge_in - edge_out)
    half = groove.length / 2.0
    rad = math.radians(groove.angle_deg)
    dx, dyv = half * math.cos(rad), half * math.sin(rad)
    return (x - dx, cy - dyv), (x + dx, cy + dyv)


def render_frame(params: SubjectParams, mouth: np.ndarray) -> np.ndarray:
    """Draw one 240x320 BGR frame from the current mouth landmarks."""
    st = params.static
    canvas = np.full((FRAME_HEIGHT, FRAME_WIDTH), 136.0)
    outer, inner = mouth[:12], mouth[12:]

    lip = np.zeros((FRAME_HEIGHT, FRAME_WIDTH), dtype=np.uint8)
    cv2.fillPoly(lip, [np.round(outer).astype(np.int32)], 1)
    canvas[lip == 1] = st.lip_shade + st.texture_field[lip == 1]

    cavity = np.zeros_like(lip)
    cv2.fillPoly(cavity, [np.round(inner).astype(np.int32)], 1)
    canvas[cavity == 1] = 38.0

    gray = np.clip(canvas, 0, 255).astype(np.uint8)
    for groove in params.dynamics.grooves:
        p1, p2 = _groove_endpoints(groove, outer, inner)
        cv2.line(gray, (int(round(p1[0])), int(round(p1[1]))),
                 (int(round(p2[0])), int(round(p2[1]))), 52, 1, cv2.LINE_8)

    gray = cv2.GaussianBlur(gray, (3, 3), 0)
    b = np.clip(gray.astype(np.int16) - 18, 0, 255).astype(np.uint8)
    g = np.clip(gray.astype(np.int16) - 8, 0, 255).astype(np.uint8)
    r = np.clip(gray.astype(np.int16) + 12, 0, 255).astype(np.uint8)
    return np.dstack([b, g, r])


def render_clip(params: SubjectParams, n_frames: int, seed: int,
                subject_idx: int, clip_idx: int = 0, static_photo: bool = False
                ) -> tuple[list[np.ndarray], list[LandmarkFrame]]:
    """Render a clip: images plus matching landmark records.

    With ``static_photo`` the first frame is repeated verbatim, modeling
    a printed photograph held in front of the camera.
    """
    jrng = np.random.default_rng([seed, subject_idx, clip_idx, 7])
    scaffold = _face_scaffold()
    images, records = [], []
    for t in range(n_frames):
        if static_photo and t > 0:
            images.append(images[0].copy())
            first = records[0]
            records.append(LandmarkFrame(frame_index=t, timestamp_ms=t * 1000.0 / 30.0,
                                         points=first.points.copy(),
                                         image_ref=f"frame_{t:04d}.png"))
            continue
        jitter = jrng.normal(0.0, 0.08, (20, 2))
        mouth = _mouth_points(params, float(t), jitter)
        points = np.vstack([scaffold, mouth])
        images.append(render_frame(params, mouth))
        records.append(LandmarkFrame(frame_index=t, timestamp_ms=t * 1000.0 / 30.0,
                                     points=points, image_ref=f"frame_{t:04d}.png"))
    return images, records


def write_clip(out_dir, images: list[np.ndarray],
               records: list[LandmarkFrame]) -> Path:
    """Write PNG frames plus the landmark sidecar; returns the sidecar path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for rec, img in zip(records, images):
            if not cv2.imwrite(str(out / rec.image_ref), img):
                raise IoFailure(f"PNG encode failed for {rec.image_ref}")
    except OSError as exc:
        raise IoFailure(f"cannot write clip under {out}: {exc}") from exc
    sidecar = out / "landmarks.lmk.jsonl"
    write_landmark_file(sidecar, records)
    return sidecar


def read_clip(clip_dir) -> tuple[list[np.ndarray], list[LandmarkFrame]]:
    """Load a clip directory written by ``write_clip``."""
    clip = Path(clip_dir)
    sidecar = clip / "landmarks.lmk.jsonl"
    if not sidecar.exists():
        candidates = sorted(clip.glob("*.lmk.jsonl"))
        if not candidates:
            raise IoFailure(f"no .lmk.jsonl landmark file under {clip}")
        sidecar = candidates[0]
    records = parse_landmark_file(sidecar)
    images = []
    for rec in records:
        if rec.image_ref is None:
            raise MalformedRecord("record lacks an image reference", rec.frame_index)
        img = cv2.imread(str(clip / rec.image_ref), cv2.IMREAD_COLOR)
        if img is None:
            raise IoFailure(f"cannot read frame image {clip / rec.image_ref}")
        images.append(img)
    return images, records
