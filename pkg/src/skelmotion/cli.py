"""Command-line entry point: retarget, gestures, synth, validate, serve.

Exit codes: 0 success, 1 usage, 2 input/IO error, 3 validation findings.
Options may also come from a JSON config file (``--config`` or the
RETARGET_CONFIG environment variable) whose keys mirror the long flag names;
flags on the command line win over the file, the file wins over defaults.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, TextIO

import numpy as np

from .errors import InvalidSpec, MocapError, ParseError, ValidationError
from .gestures import DetectorConfig, detect
from .io_formats import (
    parse_capture_line,
    parse_rig,
    read_capture_stream,
    write_bvh,
    write_capture_stream,
    write_gesture_report,
    write_pose_line,
    write_rig,
    write_truth,
)
from .retarget import BONE_JOINTS, RetargetConfig, SmoothingConfig, run_stream
from .skeleton import BONE_EPS, kinect20_topology
from .synth import MotionSpec, generate, rest_rig

logger = logging.getLogger("skelmotion")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3
CONFIG_ENV = "RETARGET_CONFIG"

GESTURE_ALIASES = {
    "sprint": "Sprinting",
    "jump": "Jumping",
    "wave": "OneHandWave",
    "one-hand-wave": "OneHandWave",
    "two-hands-wave": "TwoHandsWave",
    "wave2": "TwoHandsWave",
    "throw": "Throwing",
    "heading": "Heading",
    "kick": "Kicking",
}

DEFAULT_DURATION = {"trace": 40.0, "gesture": 3.0, "standing": 2.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ── shared option handling ───────────────────────────────────────────

# option name -> (default, validator or None); values are None on the parser so
# that unset flags can fall back to the config file.
_RETARGET_OPTS: dict[str, tuple[Any, Callable[[Any], bool] | None, str]] = {
    "fps": (30.0, lambda v: v > 0 and math.isfinite(v), "must be positive"),
    "smoothing": (0.0, lambda v: 0.0 <= v <= 1.0, "must be within [0, 1]"),
    "rest_frame": (0, lambda v: v >= 0, "must be >= 0"),
    "offset_scale": (1.0, lambda v: v > 0 and math.isfinite(v), "must be positive"),
    "mirror_x": (False, None, ""),
    "skip_bad_frames": (False, None, ""),
}
_DETECTOR_FIELDS = {f.name: f for f in fields(DetectorConfig)}


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config file {path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _resolve(args: argparse.Namespace, config: dict, name: str, default: Any) -> Any:
    v = getattr(args, name, None)
    if v is not None:
        return v
    return config.get(name, default)


def _effective(args: argparse.Namespace, config: dict, spec: dict) -> dict:
    out = {}
    for name, (default, check, why) in spec.items():
        v = _resolve(args, config, name, default)
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise UsageError(f"{name} must be true or false")
        elif isinstance(default, (int, float)):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise UsageError(f"{name} must be a number")
            if isinstance(default, int) and not isinstance(default, bool) and v != int(v):
                raise UsageError(f"{name} must be an integer")
            v = type(default)(v)
            if check is not None and not check(v):
                raise UsageError(f"{name} {why}")
        out[name] = v
    return out


def _add_retarget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rig", help="rig definition (JSON)")
    p.add_argument("--smoothing", type=float, help="EMA alpha in [0, 1]; 0 disables (default 0)")
    p.add_argument("--rest-frame", type=int, help="frame used as the correspondence pose (default 0)")
    p.add_argument("--mirror-x", action="store_true", default=None, help="negate x on input")
    p.add_argument("--skip-bad-frames", action="store_true", default=None,
                   help="drop frames with degenerate bones instead of failing")


def _retarget_config(opts: dict) -> RetargetConfig:
    return RetargetConfig(SmoothingConfig(opts["smoothing"]), opts["rest_frame"], opts["skip_bad_frames"])


def _open_input(path: str) -> TextIO:
    if path == "-":
        return sys.stdin
    return open(path, encoding="utf-8")


def _write_output(path: str, text: str) -> None:
    """Write all of ``text`` or nothing: temp file in the target directory, then rename."""
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    if target.exists() and not target.is_file():
        # devices and pipes cannot be swapped by rename; write through them
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _load_rig(path: str | None):
    if not path:
        raise UsageError("--rig is required")
    return parse_rig(Path(path).read_text(encoding="utf-8"))


def _verbose_dump(args: argparse.Namespace, opts: dict) -> None:
    if getattr(args, "verbose", False):
        print(f"effective config: {json.dumps(opts, sort_keys=True)}", file=sys.stderr)


# ── commands ─────────────────────────────────────────────────────────


def cmd_retarget(args: argparse.Namespace, config: dict) -> int:
    opts = _effective(args, config, _RETARGET_OPTS)
    opts["rig"] = _resolve(args, config, "rig", None)
    opts["poses_out"] = _resolve(args, config, "poses_out", None)
    opts["output"] = _resolve(args, config, "output", "-")
    _verbose_dump(args, opts)
    rig = _load_rig(opts["rig"])
    cfg = _retarget_config(opts)

    poses = []
    lines = []
    with _open_input(args.input) as fh:
        frames = read_capture_stream(fh, opts["mirror_x"], opts["skip_bad_frames"])
        for pose, positions in run_stream(frames, rig, cfg):
            poses.append(pose)
            if opts["poses_out"]:
                lines.append(write_pose_line(pose, positions) + "\n")
    bvh = write_bvh(rig, poses, fps=opts["fps"], offset_scale=opts["offset_scale"])
    if opts["poses_out"]:
        _write_output(opts["poses_out"], "".join(lines))
    _write_output(opts["output"], bvh)
    logger.info("retargeted %d frames", len(poses))
    return EXIT_OK


def _detector_config(args: argparse.Namespace, config: dict) -> DetectorConfig:
    values = {}
    for name, f in _DETECTOR_FIELDS.items():
        v = _resolve(args, config, name, None)
        if v is None:
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise UsageError(f"{name} must be a number")
        values[name] = int(v) if f.type in (int, "int") else float(v)
    try:
        return DetectorConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_gestures(args: argparse.Namespace, config: dict) -> int:
    det = _detector_config(args, config)
    mirror = _resolve(args, config, "mirror_x", False)
    output = _resolve(args, config, "output", "-")
    _verbose_dump(args, {"detector": det.__dict__, "mirror_x": mirror, "output": output})
    with _open_input(args.input) as fh:
        frames = list(read_capture_stream(fh, bool(mirror)))
    events = detect(frames, det)
    _write_output(output, write_gesture_report(events))
    return EXIT_OK


def _synth_spec(args: argparse.Namespace) -> MotionSpec:
    if args.trace:
        kind = "trace"
    elif args.gesture:
        kind = "gesture"
    else:
        kind = "standing"
    gesture = None
    if args.gesture:
        gesture = GESTURE_ALIASES.get(args.gesture.lower(), args.gesture)
    side = args.side
    if gesture == "TwoHandsWave" or kind != "gesture":
        side = "Right"
    duration = args.duration if args.duration is not None else DEFAULT_DURATION[kind]
    spec = MotionSpec(
        kind, duration, args.fps, args.seed, gesture=gesture, side=side, rise_m=args.rise,
        amplitude_deg=args.amplitude, noise_sigma=args.noise,
    )
    try:
        spec.validate()
    except InvalidSpec as exc:
        raise UsageError(exc.message) from exc
    return spec


def _truth_path(args: argparse.Namespace) -> str | None:
    if args.truth:
        return args.truth
    if args.output == "-":
        return None
    out = Path(args.output)
    return str(out.with_name(out.name.split(".")[0] + ".truth.json"))


def cmd_synth(args: argparse.Namespace, config: dict) -> int:
    spec = _synth_spec(args)
    frames, truth = generate(spec)
    stream = write_capture_stream(frames)
    doc = write_truth(spec.kind, spec.to_dict(), truth.events, truth.rotations, BONE_JOINTS)
    _write_output(args.output, stream)
    truth_path = _truth_path(args)
    if truth_path:
        _write_output(truth_path, doc)
    if args.rig_out:
        _write_output(args.rig_out, write_rig(rest_rig()))
    logger.info("wrote %d frames", len(frames))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, config: dict) -> int:
    mirror = bool(_resolve(args, config, "mirror_x", False))
    topo = kinect20_topology()
    findings: list[str] = []
    times: list[float] = []
    lengths: list[np.ndarray] = []
    prev_t = None
    with _open_input(args.input) as fh:
        for i, raw in enumerate(fh):
            line = raw[:-1] if raw.endswith("\n") else raw
            try:
                frame = parse_capture_line(line, mirror)
            except ParseError as exc:
                exc.line, exc.frame_index = i + 1, i
                raise
            except ValidationError as exc:
                findings.append(f"line {i + 1}, frame {i}: {exc.message}")
                continue
            if prev_t is not None and frame.t <= prev_t:
                findings.append(f"line {i + 1}, frame {i}: timestamp {frame.t!r} does not increase past {prev_t!r}")
            prev_t = frame.t
            times.append(frame.t)
            vec = frame.positions[topo.child_index] - frame.positions[topo.parent_index]
            lengths.append(np.linalg.norm(vec, axis=1))
    n = len(times)
    out = sys.stdout
    if n == 0 and not findings:
        findings.append("no frames")
    print(f"frames: {n}", file=out)
    if n:
        print(f"duration_s: {times[-1] - times[0]:.6f}", file=out)
        arr = np.array(lengths)
        print("bone lengths (mean m, variance m^2):", file=out)
        for (p, c), mean, var in zip(topo.bones, arr.mean(axis=0), arr.var(axis=0)):
            print(f"  {p}->{c}: {mean:.6f} {var:.3e}", file=out)
            if mean <= BONE_EPS:
                findings.append(f"bone {p}->{c} has zero mean length")
    print(f"findings: {len(findings)}", file=out)
    for f in findings:
        print(f"  {f}", file=out)
    return EXIT_INVALID if findings else EXIT_OK


def cmd_serve(args: argparse.Namespace, config: dict) -> int:
    from .server import serve_forever

    opts = _effective(args, config, {k: v for k, v in _RETARGET_OPTS.items() if k not in ("fps", "offset_scale")})
    opts["rig"] = _resolve(args, config, "rig", None)
    opts["host"] = _resolve(args, config, "host", "127.0.0.1")
    opts["port"] = _resolve(args, config, "port", 8765)
    if isinstance(opts["port"], bool) or not isinstance(opts["port"], int) or not 0 <= opts["port"] <= 65535:
        raise UsageError("port must be an integer in [0, 65535]")
    _verbose_dump(args, opts)
    rig = _load_rig(opts["rig"])
    try:
        asyncio.run(serve_forever(rig, _retarget_config(opts), opts["host"], opts["port"], opts["mirror_x"]))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# ── parser ───────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress and print the effective config")
    parser = _Parser(prog="skelmotion", description="Skeleton motion retargeting toolkit.", parents=[common])
    parser.set_defaults(config=None, verbose=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("retarget", parents=[common], help="capture stream -> BVH on a rig")
    p.add_argument("input", nargs="?", default="-", help="capture NDJSON path or - for stdin")
    _add_retarget_flags(p)
    p.add_argument("-o", "--output", help="BVH path or - (default)")
    p.add_argument("--poses-out", help="also write pose lines here")
    p.add_argument("--fps", type=float, help="BVH frame rate (default 30)")
    p.add_argument("--offset-scale", type=float, help="scale applied to BVH offsets and root motion (default 1)")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("gestures", parents=[common], help="detect sports gestures in a capture stream")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("-o", "--output", help="report path or - (default)")
    p.add_argument("--mirror-x", action="store_true", default=None)
    for name, f in _DETECTOR_FIELDS.items():
        p.add_argument("--" + name.replace("_", "-"), type=int if f.type in (int, "int") else float,
                       help=f"default {f.default}")
    p.set_defaults(func=cmd_gestures)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic capture clip with ground truth")
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--gesture", help="one of: " + ", ".join(GESTURE_ALIASES))
    kind.add_argument("--trace", action="store_true", help="random smooth rotation trace")
    kind.add_argument("--standing", action="store_true", help="motionless null clip (default)")
    p.add_argument("--side", choices=("Left", "Right"), default="Right")
    p.add_argument("--duration", type=float, help="seconds (default 40 trace, 3 gesture, 2 standing)")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian position noise sigma in meters")
    p.add_argument("--rise", type=float, default=0.30, help="jump hip rise in meters")
    p.add_argument("--amplitude", type=float, default=40.0, help="trace rotation amplitude in degrees")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--truth", help="ground-truth sidecar path (default <stem>.truth.json next to output)")
    p.add_argument("--rig-out", help="also write the rest-pose rig here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", parents=[common], help="check a capture stream and summarize it")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--mirror-x", action="store_true", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", parents=[common], help="retarget capture lines over TCP")
    _add_retarget_flags(p)
    p.add_argument("--host", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, help="TCP port (default 8765)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"skelmotion: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError, UnicodeDecodeError) as exc:
        print(f"skelmotion: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MocapError as exc:
        print(f"skelmotion: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"skelmotion: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
