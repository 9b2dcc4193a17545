"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 validation or processing failure, 2 usage error.
Every failure line on stderr starts with "mared-error:" so scripts can grep
for it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import codec, ingestion, service
from .distill import ScoringWeights, distill
from .errors import MaredError, RejectedInputError
from .ingestion import LoggerConfig
from .model import KeyframedDocument, Verb, validate_document, validate_keyframed
from .playback import PlaybackConfig, ResumePolicy

PREFIX = "mared-error:"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.exit(2, f"{PREFIX} {message}\n")


def _threshold_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threshold {text!r} is not a number")
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold {text!r} not in [0, 1]")
    return value


def _speed_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"speed {text!r} is not a number")
    if not value > 0 or math.isinf(value):
        raise argparse.ArgumentTypeError(f"speed {text!r} must be positive and finite")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="mared", description=__doc__)
    parser.add_argument("--config", help="config file path (also via MARED_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="raw capture lines to a structured document")
    p_ingest.add_argument("rawcap", help="input .rawcap file")
    p_ingest.add_argument("-o", "--output", help="output .mared path (default: stdout)")

    p_distill = sub.add_parser("distill", help="score events and select keyframes")
    p_distill.add_argument("mared", help="input .mared file")
    p_distill.add_argument("--threshold", type=_threshold_arg, required=True)
    p_distill.add_argument("--weights", help="scoring weights file (JSON)")
    p_distill.add_argument("-o", "--output", help="output .kmared path (default: stdout)")

    p_play = sub.add_parser("play", help="headless scripted playback run")
    p_play.add_argument("kmared", help="input .kmared file")
    p_play.add_argument("--trace", help="scripted input trace (.trace)")
    p_play.add_argument("--speed", type=_speed_arg, default=None, help="base playback rate")
    p_play.add_argument("--report", help="write the session log here")
    p_play.add_argument("--export", help="write the as-experienced document here")

    p_serve = sub.add_parser("serve", help="expose a live session over a socket")
    p_serve.add_argument("kmared", help="input .kmared file")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--lockstep", action="store_true", help="advance time only on tick messages")
    p_serve.add_argument("--stdio", action="store_true", help="speak the protocol on stdin/stdout")

    p_validate = sub.add_parser("validate", help="check a file against its format")
    p_validate.add_argument("file", help=".mared, .kmared, .rawcap or .trace file")

    return parser


def _fail(message: str, code: int = 1) -> int:
    print(f"{PREFIX} {message}", file=sys.stderr)
    return code


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get("MARED_CONFIG")
    if path is None:
        return {}
    raw = json.loads(_read(path))
    if not isinstance(raw, dict):
        raise RejectedInputError("config file must hold a JSON object")
    return raw


def _logger_config(cfg: dict) -> LoggerConfig:
    section = cfg.get("logger", {})
    config = LoggerConfig(
        gap_seconds=float(section.get("gapSeconds", LoggerConfig.gap_seconds)),
        min_displacement=float(section.get("minDisplacement", LoggerConfig.min_displacement)),
        min_rotation_deg=float(section.get("minRotationDeg", LoggerConfig.min_rotation_deg)),
        strict_actions=bool(section.get("strictActions", LoggerConfig.strict_actions)),
        capture_epoch=str(section.get("captureEpoch", LoggerConfig.capture_epoch)),
    )
    config.check()
    return config


def _weights_from(obj: dict) -> ScoringWeights:
    defaults = ScoringWeights()
    table = dict(defaults.verb_table)
    for name, value in obj.get("verbTable", {}).items():
        table[Verb(name)] = float(value)
    weights = ScoringWeights(
        interaction=tuple(float(x) for x in obj.get("interaction", defaults.interaction)),
        state_change=tuple(float(x) for x in obj.get("stateChange", defaults.state_change)),
        verb_table=table,
    )
    weights.check()
    return weights


def _playback_config(cfg: dict, speed: float | None) -> PlaybackConfig:
    section = cfg.get("playback", {})
    config = PlaybackConfig(
        base_rate=float(speed if speed is not None else section.get("baseRate", 1.0)),
        post_branch_slowdown=float(section.get("postBranchSlowdown", 0.8)),
        resume_policy=ResumePolicy(section.get("resumePolicy", "nextKeyframe")),
        branch_grace=float(section.get("branchGrace", 2.0)),
        allow_scale=bool(section.get("allowScale", False)),
    )
    config.check()
    return config


def _cmd_ingest(args, cfg: dict) -> int:
    raw = codec.decode_capture(_read(args.rawcap))
    doc = ingestion.ingest(raw, _logger_config(cfg))
    _write_output(codec.encode(doc), args.output)
    return 0


def _cmd_distill(args, cfg: dict) -> int:
    doc = codec.decode_document(_read(args.mared))
    weights_obj = cfg.get("weights", {})
    if args.weights is not None:
        weights_obj = json.loads(_read(args.weights))
    try:
        weights = _weights_from(weights_obj)
    except (RejectedInputError, ValueError, TypeError) as exc:
        return _fail(f"bad weights: {exc}", 2)
    kdoc = distill(doc, args.threshold, weights)
    _write_output(codec.encode_keyframed(kdoc), args.output)
    return 0


def _cmd_play(args, cfg: dict) -> int:
    kdoc = codec.decode_keyframed(_read(args.kmared))
    trace = codec.decode_trace(_read(args.trace)) if args.trace else ()
    config = _playback_config(cfg, args.speed)
    log, exported = service.replay_trace(kdoc, trace, config)
    if args.report is not None:
        _write_output(codec.encode_session_log(log), args.report)
    if args.export is not None:
        _write_output(codec.encode(exported), args.export)
    ended = log[-1] if log else None
    print(
        f"played {len(kdoc.document.segments)} segment(s), "
        f"{len(log)} session event(s), ended at wall {ended.wall_time if ended else 0.0}"
    )
    return 0


def _cmd_serve(args, cfg: dict) -> int:
    kdoc = codec.decode_keyframed(_read(args.kmared))
    config = service.ServiceConfig(
        playback=_playback_config(cfg, None),
        lockstep=bool(args.lockstep),
    )
    if args.stdio:
        hub = service.SessionHub(kdoc, config)

        def write(text: str) -> None:
            # Flush per message: a live peer on a pipe must see each frame now,
            # not whenever the block buffer happens to fill.
            sys.stdout.write(text)
            sys.stdout.flush()

        service.run_stdio(hub, sys.stdin, write)
        return 0
    service.serve(kdoc, config, port=args.port)
    return 0


def _cmd_validate(args, cfg: dict) -> int:
    path = args.file
    text = _read(path)
    if path.endswith(codec.CAPTURE_SUFFIX):
        codec.decode_capture(text)
        print(f"{path}: ok (raw capture)")
        return 0
    if path.endswith(codec.TRACE_SUFFIX):
        codec.decode_trace(text)
        print(f"{path}: ok (trace)")
        return 0
    result = codec.decode(text, strict=False)
    violations = (
        validate_keyframed(result)
        if isinstance(result, KeyframedDocument)
        else validate_document(result)
    )
    if violations:
        for v in violations:
            print(f"{PREFIX} {v}", file=sys.stderr)
        return 1
    kind = "keyframed document" if isinstance(result, KeyframedDocument) else "document"
    print(f"{path}: ok ({kind})")
    return 0


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "ingest": _cmd_ingest,
        "distill": _cmd_distill,
        "play": _cmd_play,
        "serve": _cmd_serve,
        "validate": _cmd_validate,
    }
    try:
        cfg = _load_config(args.config)
    except (OSError, json.JSONDecodeError, RejectedInputError) as exc:
        return _fail(f"cannot load config: {exc}", 2)
    try:
        return handlers[args.command](args, cfg)
    except OSError as exc:
        return _fail(str(exc), 2)
    except MaredError as exc:
        return _fail(str(exc), 1)


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(main())
