"""Command line front end: landmark-extract INPUT OUTPUT [options]."""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractorError
from .extract import extract
from .detectors import make_detector


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; data errors already use 2 here,
    # so route usage problems to exit 1 instead
    def error(self, message):
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="landmark-extract",
                     description="Convert a video or frame directory into "
                                 "a 68-point landmark interchange file.")
    parser.add_argument("input", help="video file or directory of frame images")
    parser.add_argument("output", help="landmark file to write (.lmk.jsonl)")
    parser.add_argument("--manifest", help="also write a JSON extraction manifest")
    parser.add_argument("--detector", default="template",
                        choices=("template", "dlib"))
    parser.add_argument("--model", help="model file for pretrained backends")
    parser.add_argument("--workers", type=int, default=1,
                        help="frames processed concurrently")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        detector = make_detector(args.detector, args.model)
        manifest = extract(args.input, args.output, detector,
                           manifest_path=args.manifest, workers=args.workers)
    except ExtractorError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    missing = manifest.frame_count - manifest.detected
    print(f"wrote {manifest.detected} records to {args.output} "
          f"({manifest.frame_count} frames, {missing} without a face)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
