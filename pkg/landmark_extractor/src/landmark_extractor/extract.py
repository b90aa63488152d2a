"""Frame ingestion, detection loop and interchange output.

The output grammar matches the verifier's landmark interchange format:
one compact JSON object per line with keys ``frame``, ``t_ms``, ``pts``
(68 [x, y] pairs) and, for frame-directory input, ``img`` naming the
source file. Frames where detection fails are left out of the landmark
file but always appear in the manifest.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np

from .detectors import Detector
from .errors import BadInput, NoFaceInAnyFrame

FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
NOMINAL_FPS = 30.0  # assumed timing when the input carries none


@dataclass
class ExtractionManifest:
    """What was processed and how each frame fared."""

    source: str
    frame_count: int
    fps: float | None
    detector_name: str
    detector_version: str
    status: list[dict]  # one {"frame": int, "found": bool, "img": str|None} per frame

    @property
    def detected(self) -> int:
        return sum(1 for s in self.status if s["found"])

    def to_json(self) -> str:
        body = {
            "source": self.source,
            "frames": self.frame_count,
            "fps": self.fps,
            "detector": {"name": self.detector_name, "version": self.detector_version},
            "status": self.status,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _serialize(frame_index: int, t_ms: float, pts: np.ndarray, img: str | None) -> str:
    obj: dict = {
        "frame": frame_index,
        "t_ms": t_ms,
        "pts": [[float(x), float(y)] for x, y in pts],
    }
    if img is not None:
        obj["img"] = img
    return json.dumps(obj, separators=(",", ":"))


def _dir_frames(path: Path) -> Iterator[tuple[np.ndarray, str]]:
    names = sorted(p.name for p in path.iterdir()
                   if p.suffix.lower() in FRAME_SUFFIXES)
    if not names:
        raise BadInput(f"no frame images under {path}")
    for name in names:
        image = cv2.imread(str(path / name), cv2.IMREAD_COLOR)
        if image is None:
            raise BadInput(f"cannot decode frame image {path / name}")
        yield image, name


def _video_frames(path: Path) -> tuple[Iterator[np.ndarray], float | None]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise BadInput(f"cannot open video {path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    fps = float(fps) if fps and fps > 0 else None

    def frames():
        try:
            while True:
                ok, image = cap.read()
                if not ok:
                    break
                yield image
        finally:
            cap.release()

    return frames(), fps


def extract(input_path: str | Path, output_path: str | Path,
            detector: Detector, manifest_path: str | Path | None = None,
            workers: int = 1) -> ExtractionManifest:
    """Run detection over a video file or frame directory.

    Writes one interchange record per detected frame, in frame order,
    plus an optional manifest. Raises NoFaceInAnyFrame when nothing is
    detected at all. Detection may run on several frames concurrently;
    the output order never depends on ``workers``.
    """
    src = Path(input_path)
    if src.is_dir():
        pairs = list(_dir_frames(src))
        images = [img for img, _ in pairs]
        refs: list[str | None] = [name for _, name in pairs]
        fps = None
    elif src.is_file():
        stream, fps = _video_frames(src)
        images = list(stream)
        refs = [None] * len(images)
        if not images:
            raise BadInput(f"video {src} holds no frames")
    else:
        raise BadInput(f"input {src} does not exist")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            found = list(pool.map(detector.detect, images))
    else:
        found = [detector.detect(img) for img in images]

    step_ms = 1000.0 / (fps if fps else NOMINAL_FPS)
    lines, status = [], []
    for idx, (pts, ref) in enumerate(zip(found, refs)):
        status.append({"frame": idx, "found": pts is not None, "img": ref})
        if pts is not None:
            lines.append(_serialize(idx, idx * step_ms, pts, ref))
    if not lines:
        raise NoFaceInAnyFrame(f"no face detected in any of {len(images)} frames")

    out = Path(output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")

    manifest = ExtractionManifest(
        source=str(src),
        frame_count=len(images),
        fps=fps,
        detector_name=detector.name,
        detector_version=detector.version,
        status=status,
    )
    if manifest_path is not None:
        manifest.save(manifest_path)
    return manifest
