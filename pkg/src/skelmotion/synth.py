"""Synthetic capture clips with known ground truth.

Every clip is produced by forward kinematics from explicit per-bone world
rotations applied to a fixed 1.75 m rest skeleton, so a retargeter that
recovers rotations from the resulting positions is checked against values it
never saw. Gesture clips are kinematic caricatures (eased limb swings,
parabolic hip arcs) labeled with the event they were built to contain.

Rotations are keyed by the joint a bone ends at: ``"WristLeft"`` is the
forearm (ElbowLeft -> WristLeft).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidSpec
from .gestures import GESTURE_CLASSES, GestureEvent
from .io_formats import RigDefinition
from .skeleton import JOINT_INDEX, JOINTS, KINECT_PARENTS, Frame

# Rest pose, meters: standing, arms hanging, facing the camera (-z). Left is +x.
REST_POSITIONS: dict[str, tuple[float, float, float]] = {
    "HipCenter": (0.0, 0.96, 0.0),
    "Spine": (0.0, 1.16, 0.0),
    "ShoulderCenter": (0.0, 1.44, 0.0),
    "Head": (0.0, 1.62, 0.0),
    "ShoulderLeft": (0.18, 1.40, 0.0),
    "ElbowLeft": (0.20, 1.12, 0.0),
    "WristLeft": (0.21, 0.87, 0.0),
    "HandLeft": (0.21, 0.79, 0.0),
    "ShoulderRight": (-0.18, 1.40, 0.0),
    "ElbowRight": (-0.20, 1.12, 0.0),
    "WristRight": (-0.21, 0.87, 0.0),
    "HandRight": (-0.21, 0.79, 0.0),
    "HipLeft": (0.09, 0.90, 0.0),
    "KneeLeft": (0.09, 0.47, 0.0),
    "AnkleLeft": (0.09, 0.08, 0.0),
    "FootLeft": (0.09, 0.03, -0.12),
    "HipRight": (-0.09, 0.90, 0.0),
    "KneeRight": (-0.09, 0.47, 0.0),
    "AnkleRight": (-0.09, 0.08, 0.0),
    "FootRight": (-0.09, 0.03, -0.12),
}
REST = np.array([REST_POSITIONS[j] for j in JOINTS])
BONE_JOINTS = JOINTS[1:]
GRAVITY = 9.81

KINDS = ("trace", "gesture", "standing")


@dataclass(frozen=True)
class MotionSpec:
    """What to generate.

    ``trace`` clips rotate bones either by explicit linear ramps
    (``rotations``: joint -> (axis, degrees) reached at the last frame) or, when
    none are given, along seeded random smooth paths of up to ``amplitude_deg``.
    """

    kind: str
    duration_s: float = 3.0
    fps: float = 30.0
    seed: int = 0
    gesture: str | None = None
    side: str = "Right"
    rise_m: float = 0.30
    rotations: Mapping[str, tuple[tuple[float, float, float], float]] = field(default_factory=dict)
    amplitude_deg: float = 40.0
    noise_sigma: float = 0.0

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise InvalidSpec("duration must be positive")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InvalidSpec("fps must be positive")
        if self.n_frames < 1:
            raise InvalidSpec("clip has no frames")
        if not 0.0 <= self.noise_sigma <= 0.05:
            raise InvalidSpec("noise sigma must be within [0, 0.05] m")
        if self.kind == "gesture":
            if self.gesture not in GESTURE_CLASSES:
                raise InvalidSpec(f"unknown gesture {self.gesture!r}")
            if self.side not in ("Left", "Right"):
                raise InvalidSpec("side must be Left or Right")
            if not 0.05 <= self.rise_m <= 1.0:
                raise InvalidSpec("jump rise must be within [0.05, 1.0] m")
            if self.duration_s < _GESTURE_MIN_DURATION.get(self.gesture, 0.0):
                raise InvalidSpec(f"{self.gesture} needs at least {_GESTURE_MIN_DURATION[self.gesture]} s")
        if self.kind == "trace":
            if not 0.0 < self.amplitude_deg <= 90.0:
                raise InvalidSpec("amplitude must be within (0, 90] degrees")
            for joint, (axis, _deg) in self.rotations.items():
                if joint not in JOINT_INDEX or joint == "HipCenter":
                    raise InvalidSpec(f"{joint!r} does not end a bone")
                if np.linalg.norm(axis) <= 1e-9:
                    raise InvalidSpec(f"zero rotation axis for {joint}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "duration_s": self.duration_s, "fps": self.fps, "seed": self.seed,
             "noise_sigma": self.noise_sigma}
        if self.kind == "gesture":
            d.update(gesture=self.gesture, side=self.side)
            if self.gesture == "Jumping":
                d["rise_m"] = self.rise_m
        if self.kind == "trace":
            d["amplitude_deg"] = self.amplitude_deg
            d["rotations"] = {j: [list(map(float, a)), float(deg)] for j, (a, deg) in self.rotations.items()}
        return d


@dataclass
class GroundTruth:
    spec: MotionSpec
    events: list[GestureEvent]
    rotations: np.ndarray | None = None  # (n, 19, 3, 3) world rotation per bone, BONE_JOINTS order
    root: np.ndarray | None = None       # (n, 3)

    def rotation(self, frame: int, joint: str) -> np.ndarray:
        return self.rotations[frame, JOINT_INDEX[joint] - 1]


def rest_frame(t: float = 0.0) -> Frame:
    return Frame(t, REST.copy())


def rest_rig(name: str = "synth-rest") -> RigDefinition:
    return RigDefinition.from_frame(rest_frame(), name)


def pose_positions(root: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Frames-batched FK over the capture hierarchy.

    ``root`` is ``(n, 3)``, ``rotations`` ``(n, 19, 3, 3)`` in BONE_JOINTS order.
    """
    n = root.shape[0]
    out = np.empty((n, len(JOINTS), 3))
    out[:, 0] = root
    for k, child in enumerate(BONE_JOINTS):
        c = JOINT_INDEX[child]
        p = JOINT_INDEX[KINECT_PARENTS[child]]
        offset = REST[c] - REST[p]
        out[:, c] = out[:, p] + np.einsum("nij,j->ni", rotations[:, k], offset)
    return out


def _about(axis, degrees: np.ndarray) -> np.ndarray:
    """``(n, 3, 3)`` rotations about a fixed world axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(np.radians(degrees)[:, None] * axis).as_matrix()


def _ease(t: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """0 before t0, 1 after t1, half-cosine in between."""
    u = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * u)


def _keyframes(t: np.ndarray, keys: list[tuple[float, float]]) -> np.ndarray:
    """Piecewise eased interpolation through ``(time, value)`` keys, held flat outside."""
    out = np.full_like(t, keys[0][1])
    for (t0, v0), (t1, v1) in zip(keys, keys[1:]):
        out = np.where(t >= t0, v0 + (v1 - v0) * _ease(t, t0, t1), out)
    return out


X_AXIS = (1.0, 0.0, 0.0)
Z_AXIS = (0.0, 0.0, 1.0)
_GESTURE_MIN_DURATION = {
    "Sprinting": 2.0, "Jumping": 2.0, "OneHandWave": 3.0, "TwoHandsWave": 3.0,
    "Throwing": 3.0, "Heading": 2.0, "Kicking": 3.0,
}


class _Clip:
    def __init__(self, t: np.ndarray):
        self.t = t
        n = len(t)
        self.root = np.tile(REST[0], (n, 1))
        self.rot = np.tile(np.eye(3), (n, len(BONE_JOINTS), 1, 1))
        self.events: list[GestureEvent] = []

    def set(self, joints, rot: np.ndarray) -> None:
        for j in joints:
            self.rot[:, JOINT_INDEX[j] - 1] = rot


def _wave_arm(clip: _Clip, side: str) -> None:
    # Raise the upper arm sideways, swing the forearm up, wave it about the depth axis.
    sign = 1.0 if side == "Left" else -1.0
    t = clip.t
    upper = _keyframes(t, [(0.5, 0.0), (1.0, 80.0), (2.5, 80.0), (3.0, 0.0)])
    fore = _keyframes(t, [(0.5, 0.0), (1.0, 180.0), (2.5, 180.0), (3.0, 0.0)])
    waving = _ease(t, 1.0, 1.2) * (1.0 - _ease(t, 2.3, 2.5))
    fore = fore + 25.0 * np.sin(2 * np.pi * 2.0 * (t - 1.0)) * waving
    clip.set(["Elbow" + side], _about(Z_AXIS, sign * upper))
    clip.set(["Wrist" + side, "Hand" + side], _about(Z_AXIS, sign * fore))


def _build_gesture(spec: MotionSpec, t: np.ndarray) -> _Clip:
    clip = _Clip(t)
    g, side = spec.gesture, spec.side
    if g == "Sprinting":
        speed = 3.0
        clip.root[:, 2] = REST[0, 2] - speed * (t - t[0])
        phase = np.sin(2 * np.pi * 1.5 * t)
        for leg, lift in (("Left", np.maximum(phase, 0.0)), ("Right", np.maximum(-phase, 0.0))):
            thigh = 50.0 * lift
            clip.set(["Knee" + leg], _about(X_AXIS, thigh))
            clip.set(["Ankle" + leg, "Foot" + leg], _about(X_AXIS, -0.6 * thigh))
        clip.events.append(GestureEvent("Sprinting", float(t[0]), float(t[-1]), "Both"))
    elif g == "Jumping":
        airtime = 2.0 * math.sqrt(2.0 * spec.rise_m / GRAVITY)
        t0 = 1.0
        u = np.clip(t - t0, 0.0, airtime)
        clip.root[:, 1] += GRAVITY * u * (airtime - u) / 2.0
        clip.events.append(GestureEvent("Jumping", t0, t0 + airtime, "Both",
                                        metrics={"jump_height_m": spec.rise_m}))
    elif g == "OneHandWave":
        _wave_arm(clip, side)
        clip.events.append(GestureEvent("OneHandWave", 1.0, 2.5, side))
    elif g == "TwoHandsWave":
        _wave_arm(clip, "Left")
        _wave_arm(clip, "Right")
        clip.events.append(GestureEvent("TwoHandsWave", 1.0, 2.5, "Both"))
    elif g == "Throwing":
        # Overhand: wind back and up, whip over the top, follow through down in front.
        arm = _keyframes(t, [(0.5, 0.0), (1.3, -120.0), (1.6, -120.0), (1.85, -290.0), (2.6, -360.0)])
        bend = _keyframes(t, [(0.5, 0.0), (1.3, -30.0), (1.6, -30.0), (1.85, 0.0)])
        clip.set(["Elbow" + side], _about(X_AXIS, arm))
        clip.set(["Wrist" + side, "Hand" + side], _about(X_AXIS, arm + bend))
        clip.events.append(GestureEvent("Throwing", 1.6, 1.85, side))
    elif g == "Heading":
        nod = _keyframes(t, [(0.8, 0.0), (1.1, -40.0), (1.5, 0.0)])
        clip.set(["Head"], _about(X_AXIS, nod))
        clip.events.append(GestureEvent("Heading", 0.8, 1.5, "NA"))
    elif g == "Kicking":
        thigh = _keyframes(t, [(0.5, 0.0), (1.3, -20.0), (1.5, -20.0), (1.75, 50.0), (2.6, 0.0)])
        shank = _keyframes(t, [(0.5, 0.0), (1.3, -80.0), (1.5, -80.0), (1.75, 50.0), (2.6, 0.0)])
        clip.set(["Knee" + side], _about(X_AXIS, thigh))
        clip.set(["Ankle" + side, "Foot" + side], _about(X_AXIS, shank))
        clip.events.append(GestureEvent("Kicking", 1.5, 1.75, side))
    return clip


def _build_trace(spec: MotionSpec, t: np.ndarray) -> _Clip:
    clip = _Clip(t)
    n = len(t)
    if spec.rotations:
        frac = np.linspace(0.0, 1.0, n) if n > 1 else np.ones(1)
        for joint, (axis, degrees) in spec.rotations.items():
            clip.rot[:, JOINT_INDEX[joint] - 1] = _about(axis, degrees * frac)
        return clip

    rng = np.random.default_rng(spec.seed)
    amp = math.radians(spec.amplitude_deg) / math.sqrt(3.0)
    tt = t - t[0]
    for k in range(len(BONE_JOINTS)):
        freq = rng.uniform(0.05, 0.5, size=3)
        phase = rng.uniform(0.0, 2 * np.pi, size=3)
        a = rng.uniform(0.3, 1.0, size=3) * amp
        # sin(wt + phase) - sin(phase) starts every path at the rest pose
        rotvec = a * (np.sin(2 * np.pi * freq * tt[:, None] + phase) - np.sin(phase)) / 2.0
        clip.rot[:, k] = Rotation.from_rotvec(rotvec).as_matrix()
    sway = rng.uniform(0.02, 0.1, size=3)
    freq = rng.uniform(0.05, 0.3, size=3)
    clip.root = REST[0] + sway * np.sin(2 * np.pi * freq * tt[:, None])
    return clip


def generate(spec: MotionSpec) -> tuple[list[Frame], GroundTruth]:
    spec.validate()
    t = np.arange(spec.n_frames) / spec.fps
    if spec.kind == "trace":
        clip = _build_trace(spec, t)
    elif spec.kind == "gesture":
        clip = _build_gesture(spec, t)
    else:
        clip = _Clip(t)
    pos = pose_positions(clip.root, clip.rot)
    if spec.noise_sigma > 0:
        pos = pos + np.random.default_rng(spec.seed).normal(0.0, spec.noise_sigma, pos.shape)
    frames = [Frame(float(ti), p) for ti, p in zip(t, pos)]
    truth = GroundTruth(spec, clip.events)
    if spec.kind == "trace":
        truth.rotations = clip.rot
        truth.root = clip.root
    return frames, truth


CORPUS_SPECS: tuple[MotionSpec, ...] = (
    MotionSpec("gesture", 3.0, 30.0, seed=101, gesture="Sprinting"),
    MotionSpec("gesture", 3.0, 30.0, seed=102, gesture="Jumping", rise_m=0.30),
    MotionSpec("gesture", 3.0, 30.0, seed=103, gesture="OneHandWave", side="Right"),
    MotionSpec("gesture", 3.0, 30.0, seed=104, gesture="TwoHandsWave"),
    MotionSpec("gesture", 3.0, 30.0, seed=105, gesture="Throwing", side="Right"),
    MotionSpec("gesture", 3.0, 30.0, seed=106, gesture="Heading"),
    MotionSpec("gesture", 3.0, 30.0, seed=107, gesture="Kicking", side="Right"),
    MotionSpec("standing", 2.0, 30.0, seed=100),
)


def corpus() -> list[tuple[MotionSpec, list[Frame], GroundTruth]]:
    """One labeled clip per gesture class plus a standing null clip."""
    return [(spec, *generate(spec)) for spec in CORPUS_SPECS]
