"""Command-line client for the verification service.

Every subcommand is a thin call onto the HTTP service; by default an
in-process application instance serves the request, `--server` points
the same client at a running instance instead. Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure. Errors print exactly
one `error: <kind>: <detail>` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import Config
from .errors import LipdynError

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """Argparse with the usage exit code pinned to 1."""

    def error(self, message):
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def build_parser() -> _Parser:
    parser = _Parser(prog="lipdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--server", metavar="URL",
                        help="send requests to a running service instead of in-process")
    parser.add_argument("--config", metavar="FILE",
                        help="config file applied to this invocation")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective config as JSON and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("extract", help="landmark file + frames dir -> feature windows file")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--subject", default="subject")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="feature windows file -> model file")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("enroll", help="model + subject features -> template")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="model + template + features -> decision stream")
    p.add_argument("--model", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--smoothing", type=int)

    p = sub.add_parser("evaluate", help="synthetic corpus -> evaluation report")
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--windows", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--points", help="write tau/precision/recall points here")

    p = sub.add_parser("attack", help="attack scenario -> success-rate report")
    p.add_argument("--scenario", required=True,
                   choices=("mimic", "static_photo", "deepfake"))
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--windows", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)

    p = sub.add_parser("synth", help="seeded synthetic clip generation")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--frames", type=int, default=49)
    p.add_argument("--seed", type=int, default=0)

    return parser


class _ServiceClient:
    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                # the bundled test client still rides httpx; its
                # deprecation notice would pollute the diagnostic stream
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except Exception as exc:  # connection-level failure
            print(f"error: ServiceUnreachable: {exc}", file=sys.stderr)
            raise SystemExit(DATA_EXIT)
        body = response.json()
        if response.status_code >= 400:
            if "exit_code" in body:
                print(f"error: {body['error']}: {body['detail']}", file=sys.stderr)
                raise SystemExit(int(body["exit_code"]))
            # request-body validation failure (unknown fields, bad types)
            detail = body.get("detail", body)
            if isinstance(detail, list) and detail:
                loc = ".".join(str(x) for x in detail[0].get("loc", []))
                msg = detail[0].get("msg", "invalid request")
                print(f"error: usage: {loc}: {msg}", file=sys.stderr)
            else:
                print(f"error: usage: {detail}", file=sys.stderr)
            raise SystemExit(USAGE_EXIT)
        return body


def _print_fields(body: dict, skip: tuple[str, ...] = ()) -> None:
    for key, value in body.items():
        if key in skip:
            continue
        if isinstance(value, list):
            for item in value:
                print(f"{key} = {item}")
        elif isinstance(value, dict):
            for name in sorted(value):
                print(f"{key}_{name} = {value[name]!r}")
        elif isinstance(value, float):
            print(f"{key} = {value!r}")
        else:
            print(f"{key} = {value}")


def _config_payload(path: str | None) -> dict | None:
    if path is None:
        return None
    return Config.load(path).model_dump(mode="json")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        overrides = _config_payload(args.config)
    except LipdynError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: BadConfig: {exc}", file=sys.stderr)
        return DATA_EXIT

    if args.dump_config:
        effective = Config.model_validate(overrides) if overrides else Config()
        sys.stdout.write(effective.dump_json())
        return 0

    if args.command is None:
        parser.error("a subcommand is required")

    client = _ServiceClient(args.server)

    if args.command == "extract":
        body = client.post("/extract", {
            "landmarks": args.landmarks, "frames": args.frames,
            "subject": args.subject, "out": args.out, "config": overrides})
        _print_fields(body)
    elif args.command == "train":
        body = client.post("/train", {
            "features": args.features, "out": args.out,
            "seed": args.seed, "config": overrides})
        _print_fields(body)
    elif args.command == "enroll":
        body = client.post("/enroll", {
            "model": args.model, "features": args.features,
            "subject": args.subject, "out": args.out, "config": overrides})
        _print_fields(body)
    elif args.command == "verify":
        body = client.post("/verify", {
            "model": args.model, "template": args.template,
            "features": args.features, "smoothing": args.smoothing,
            "config": overrides})
        for decision in body["decisions"]:
            word = "accept" if decision["accepted"] else "reject"
            print(f"{word} {decision['score']!r}")
        print(f"accept_rate = {body['accept_rate']!r}")
    elif args.command == "evaluate":
        body = client.post("/evaluate", {
            "subjects": args.subjects, "windows": args.windows,
            "seed": args.seed, "config": overrides})
        if args.report:
            Path(args.report).write_text(body["report"], encoding="utf-8")
        else:
            sys.stdout.write(body["report"])
        if args.points:
            Path(args.points).write_text(body["points"], encoding="utf-8")
    elif args.command == "attack":
        body = client.post("/attack", {
            "scenario": args.scenario, "subjects": args.subjects,
            "windows": args.windows, "seed": args.seed,
            "alpha": args.alpha, "config": overrides})
        _print_fields(body)
    elif args.command == "synth":
        body = client.post("/synth", {
            "out_dir": args.out_dir, "subjects": args.subjects,
            "frames": args.frames, "seed": args.seed})
        _print_fields(body)
    return 0


if __name__ == "__main__":
    sys.exit(main())
