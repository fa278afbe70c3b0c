"""Rotation-based motion transfer from capture frames onto a target rig.

Positions alone cannot drive a differently-sized character, so each frame is
turned into per-bone rotations instead: the shortest-arc rotation from a
bone's previous direction to its current one is composed onto that bone's
running world rotation, and the rig's rest bone is rotated by the result.
Frame ``rest_frame`` (default 0) is the correspondence pose where every
running rotation is the identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DegenerateBone, InvalidRestFrame, MocapError, NonMonotonicTime, RigError, ZeroHipHeight
from .io_formats import RigDefinition
from ._kernels import fk_kernel, retarget_kernel
from .rotation import PARALLEL_EPS
from .skeleton import BONE_EPS, JOINT_INDEX, JOINTS, Frame, SkeletonTopology, bone_array, kinect20_topology

logger = logging.getLogger(__name__)

HIP = JOINT_INDEX["HipCenter"]
BONE_JOINTS = JOINTS[1:]
SCALE_MIN, SCALE_MAX = 0.1, 10.0


@dataclass(frozen=True)
class SmoothingConfig:
    """Exponential moving average on joint positions; ``alpha=0`` disables it."""

    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"smoothing alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class RetargetConfig:
    smoothing: SmoothingConfig = SmoothingConfig()
    rest_frame: int = 0
    skip_bad_frames: bool = False

    def __post_init__(self):
        if self.rest_frame < 0:
            raise ValueError("rest_frame must be >= 0")


@dataclass
class RigPose:
    """World rotation per non-root joint (of the bone ending there) plus root position."""

    t: float
    root_translation: np.ndarray
    rotations: dict[str, np.ndarray]


class _RigPlan:
    """Index arrays for forward kinematics on one rig, in the rig's topological order."""

    def __init__(self, rig: RigDefinition):
        topo = rig.topology
        if set(topo.joints) - set(JOINTS):
            raise RigError("rig joints must use capture joint names")
        self.joints = topo.joints
        self.children = [c for _, c in topo.bones]
        order = {j: i for i, j in enumerate(topo.joints)}
        self.parent_pos = np.array([order[p] for p, _ in topo.bones], dtype=np.intp)
        self.rot_idx = np.array([JOINT_INDEX[c] - 1 for c in self.children], dtype=np.intp)
        self.offsets = np.array([rig.offsets[c] for c in self.children], dtype=float).reshape(-1, 3)

    def positions(self, root: np.ndarray, rotations: np.ndarray) -> np.ndarray:
        """``rotations`` is ``(19, 3, 3)`` in BONE_JOINTS order."""
        out = np.empty((len(self.joints), 3))
        fk_kernel(root, rotations, self.rot_idx, self.parent_pos, self.offsets, out)
        return out


def forward_kinematics(rig: RigDefinition, pose: RigPose) -> dict[str, np.ndarray]:
    """Root at ``pose.root_translation``; each child = parent + A_child @ rest_offset_child."""
    plan = _RigPlan(rig)
    rot = np.tile(np.eye(3), (len(BONE_JOINTS), 1, 1))
    for c in plan.children:
        rot[JOINT_INDEX[c] - 1] = pose.rotations[c]
    pos = plan.positions(np.asarray(pose.root_translation, dtype=float), rot)
    return dict(zip(plan.joints, pos))


@dataclass
class RetargetState:
    """Running per-bone rotations for one stream.

    ``accumulated`` and ``prev_units`` are indexed like BONE_JOINTS: row k belongs
    to the bone ending at ``BONE_JOINTS[k]``.
    """

    topo: SkeletonTopology
    rig: RigDefinition
    prev_bone_vectors: np.ndarray
    prev_units: np.ndarray
    accumulated: np.ndarray
    root_scale: float
    smoothing: SmoothingConfig
    source_hip: np.ndarray
    plan: _RigPlan = field(repr=False)
    frame_index: int = 0
    prev_t: float | None = None
    smoothed: np.ndarray | None = None

    def rotation(self, joint: str) -> np.ndarray:
        return self.accumulated[JOINT_INDEX[joint] - 1]


def init_state(
    first_frame: Frame, rig: RigDefinition, smoothing: SmoothingConfig = SmoothingConfig()
) -> RetargetState:
    """Take ``first_frame`` as the correspondence pose; every running rotation starts at identity."""
    topo = kinect20_topology()
    if set(rig.topology.joints) != set(JOINTS):
        raise RigError("rig does not cover the capture joints")
    vecs = bone_array(first_frame.positions, topo)
    hip = first_frame.positions[HIP].copy()
    if hip[1] <= 1e-6:
        raise ZeroHipHeight(float(hip[1]))
    scale = min(max(rig.hip_height / hip[1], SCALE_MIN), SCALE_MAX)
    return RetargetState(
        topo=topo,
        rig=rig,
        prev_bone_vectors=vecs,
        prev_units=vecs / np.linalg.norm(vecs, axis=1)[:, None],
        accumulated=np.tile(np.eye(3), (len(BONE_JOINTS), 1, 1)),
        root_scale=float(scale),
        smoothing=smoothing,
        source_hip=hip,
        plan=_RigPlan(rig),
    )


def smooth_positions(prev_smoothed: Frame, raw: Frame, alpha: float) -> Frame:
    """Per joint ``alpha * prev + (1 - alpha) * raw``."""
    if alpha == 0.0:
        return raw
    return Frame(raw.t, alpha * prev_smoothed.positions + (1.0 - alpha) * raw.positions)


def _step(state: RetargetState, frame: Frame) -> tuple[RigPose, np.ndarray]:
    if state.prev_t is not None and frame.t <= state.prev_t:
        raise NonMonotonicTime(frame.t, state.prev_t)
    pos = frame.positions
    alpha = state.smoothing.alpha
    if alpha > 0.0 and state.smoothed is not None:
        pos = alpha * state.smoothed + (1.0 - alpha) * pos

    units = np.empty_like(state.prev_units)
    acc = np.empty_like(state.accumulated)
    topo = state.topo
    bad = retarget_kernel(
        pos, topo.parent_index, topo.child_index, state.prev_units, state.accumulated,
        units, acc, BONE_EPS * BONE_EPS, PARALLEL_EPS,
    )
    if bad >= 0:
        raise DegenerateBone(topo.bones[bad])
    root = (pos[HIP] - state.source_hip) * state.root_scale + state.rig.offsets[state.rig.root]

    state.accumulated = acc
    state.prev_units = units
    state.prev_bone_vectors = pos[topo.child_index] - pos[topo.parent_index]
    state.prev_t = frame.t
    state.smoothed = pos
    state.frame_index += 1

    pose = RigPose(frame.t, root, dict(zip(BONE_JOINTS, acc)))
    return pose, state.plan.positions(root, acc)


def retarget_step(state: RetargetState, frame: Frame) -> RigPose:
    """Advance one frame and return the rig pose; the state is untouched on error."""
    return _step(state, frame)[0]


class Retargeter:
    """Incremental driver: buffers up to the rest frame, then emits one output per frame.

    Outputs are ``(RigPose, positions)`` with positions a joint-name mapping.
    """

    def __init__(self, rig: RigDefinition, config: RetargetConfig = RetargetConfig()):
        self.rig = rig
        self.config = config
        self.state: RetargetState | None = None
        self._pending: list[Frame] = []
        self._seen = 0

    def reset(self) -> None:
        self.state = None
        self._pending = []
        self._seen = 0

    def push(self, frame: Frame) -> list[tuple[RigPose, dict[str, np.ndarray]]]:
        index = self._seen
        self._seen += 1
        try:
            if self.state is None:
                if self._pending and frame.t <= self._pending[-1].t:
                    raise NonMonotonicTime(frame.t, self._pending[-1].t)
                self._pending.append(frame)
                if len(self._pending) <= self.config.rest_frame:
                    return []
                self.state = init_state(self._pending[-1], self.rig, self.config.smoothing)
                pending, self._pending = self._pending, []
                out = []
                for k, f in enumerate(pending):
                    index = k
                    out.extend(self._advance(f, k))
                return out
            return self._advance(frame, index)
        except MocapError as exc:
            if exc.frame_index is None:
                exc.frame_index = index
            raise

    def _advance(self, frame: Frame, index: int):
        try:
            pose, pos = _step(self.state, frame)
        except DegenerateBone as exc:
            if not self.config.skip_bad_frames:
                raise
            logger.warning("dropping frame %d: %s", index, exc.message)
            return []
        return [(pose, dict(zip(self.state.plan.joints, pos)))]

    def finish(self) -> None:
        if self.state is None and self._seen:
            raise InvalidRestFrame(
                f"stream has {self._seen} frames, rest frame {self.config.rest_frame} never arrived"
            )


def run_stream(
    frames: Iterable[Frame], rig: RigDefinition, config: RetargetConfig = RetargetConfig()
) -> Iterator[tuple[RigPose, dict[str, np.ndarray]]]:
    """Lazily retarget a frame sequence; memory does not grow with stream length."""
    driver = Retargeter(rig, config)
    seen = False
    for frame in frames:
        seen = True
        yield from driver.push(frame)
    if not seen:
        raise MocapError("empty frame stream")
    driver.finish()
