"""The 20-joint capture skeleton: joint vocabulary, hierarchy, frames.

Coordinates are meters in a right-handed world frame: +y up, +x to the
camera's right, +z pointing from the camera toward the performer. A frame
stores positions as a ``(20, 3)`` array in :data:`JOINTS` order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DegenerateBone,
    MissingJoint,
    MocapError,
    NonFinite,
    UnknownJoint,
    ValidationError,
)

JOINTS: tuple[str, ...] = (
    "HipCenter",
    "Spine",
    "ShoulderCenter",
    "Head",
    "ShoulderLeft",
    "ElbowLeft",
    "WristLeft",
    "HandLeft",
    "ShoulderRight",
    "ElbowRight",
    "WristRight",
    "HandRight",
    "HipLeft",
    "KneeLeft",
    "AnkleLeft",
    "FootLeft",
    "HipRight",
    "KneeRight",
    "AnkleRight",
    "FootRight",
)
JOINT_INDEX: dict[str, int] = {name: i for i, name in enumerate(JOINTS)}

KINECT_PARENTS: dict[str, str] = {
    "Spine": "HipCenter",
    "ShoulderCenter": "Spine",
    "Head": "ShoulderCenter",
    "ShoulderLeft": "ShoulderCenter",
    "ElbowLeft": "ShoulderLeft",
    "WristLeft": "ElbowLeft",
    "HandLeft": "WristLeft",
    "ShoulderRight": "ShoulderCenter",
    "ElbowRight": "ShoulderRight",
    "WristRight": "ElbowRight",
    "HandRight": "WristRight",
    "HipLeft": "HipCenter",
    "KneeLeft": "HipLeft",
    "AnkleLeft": "KneeLeft",
    "FootLeft": "AnkleLeft",
    "HipRight": "HipCenter",
    "KneeRight": "HipRight",
    "AnkleRight": "KneeRight",
    "FootRight": "AnkleRight",
}

BONE_EPS = 1e-6


@dataclass(frozen=True)
class SkeletonTopology:
    """A rooted joint tree.

    ``joints`` is a topological order (every parent precedes its children)
    and ``bones`` lists ``(parent, child)`` pairs in the same order, so bone
    ``i`` ends at ``joints[i + 1]``.
    """

    root: str
    parent: Mapping[str, str]
    joints: tuple[str, ...]
    bones: tuple[tuple[str, str], ...]
    parent_index: np.ndarray = field(repr=False, compare=False)
    child_index: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_parents(
        cls, root: str, parent: Mapping[str, str], order: Sequence[str] | None = None
    ) -> "SkeletonTopology":
        """Build and validate a tree; ``order`` fixes sibling order (default: insertion order)."""
        names = list(order) if order is not None else [root, *parent]
        if root in parent:
            raise CycleDetected([root, parent[root]])
        children: dict[str, list[str]] = {n: [] for n in names}
        for child, par in parent.items():
            if par not in children:
                raise MocapError(f"parent {par!r} of {child!r} is not a joint")
            children[par].append(child)
        for n in names:
            children[n].sort(key=names.index)

        ordered: list[str] = []
        stack = [root]
        while stack:
            j = stack.pop()
            ordered.append(j)
            stack.extend(reversed(children[j]))
        if len(ordered) != len(names):
            unreached = [n for n in names if n not in set(ordered)]
            raise CycleDetected(_find_cycle(unreached[0], parent))

        index = {n: i for i, n in enumerate(ordered)}
        bones = tuple((parent[c], c) for c in ordered[1:])
        return cls(
            root=root,
            parent=dict(parent),
            joints=tuple(ordered),
            bones=bones,
            parent_index=np.array([index[p] for p, _ in bones], dtype=np.intp),
            child_index=np.array([index[c] for _, c in bones], dtype=np.intp),
        )

    def children(self, joint: str) -> list[str]:
        return [c for p, c in self.bones if p == joint]

    def chain(self, leaf: str) -> list[str]:
        """Joints from the root down to ``leaf``, inclusive."""
        path = [leaf]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path[::-1]


def _find_cycle(start: str, parent: Mapping[str, str]) -> list[str]:
    seen: list[str] = []
    j = start
    while j in parent and j not in seen:
        seen.append(j)
        j = parent[j]
    if j in seen:
        return seen[seen.index(j):] + [j]
    return seen + [j]


@lru_cache(maxsize=1)
def kinect20_topology() -> SkeletonTopology:
    """The fixed 20-joint, 19-bone capture hierarchy rooted at HipCenter."""
    topo = SkeletonTopology.from_parents("HipCenter", KINECT_PARENTS, order=JOINTS)
    assert topo.joints == JOINTS
    return topo


@dataclass
class Frame:
    """One capture sample: a timestamp and a ``(20, 3)`` position array in JOINTS order."""

    t: float
    positions: np.ndarray

    @classmethod
    def from_joints(cls, t: float, joints: Mapping[str, Iterable[float]]) -> "Frame":
        for name in joints:
            if name not in JOINT_INDEX:
                raise UnknownJoint(name)
        for name in JOINTS:
            if name not in joints:
                raise MissingJoint(name)
        pos = np.array([list(joints[name]) for name in JOINTS], dtype=float)
        if pos.shape != (len(JOINTS), 3):
            raise ValidationError("joint positions must be 3-vectors")
        return cls(float(t), pos)

    def joint(self, name: str) -> np.ndarray:
        return self.positions[JOINT_INDEX[name]]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(JOINTS, self.positions))

    def translated(self, offset) -> "Frame":
        return Frame(self.t, self.positions + np.asarray(offset, dtype=float))

    def scaled(self, factor: float) -> "Frame":
        return Frame(self.t, self.positions * factor)


@dataclass
class ValidationReport:
    findings: list[ValidationError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def __bool__(self) -> bool:
        return self.ok

    def raise_first(self) -> None:
        if self.findings:
            raise self.findings[0]


def check_positions(pos: np.ndarray, topo: SkeletonTopology | None = None) -> ValidationReport:
    """Finiteness and bone-length checks on a ``(n, 3)`` array in ``topo.joints`` order."""
    topo = topo or kinect20_topology()
    report = ValidationReport()
    vecs = pos[topo.child_index] - pos[topo.parent_index]
    sq = np.add.reduce(vecs * vecs, axis=1)
    # NaN fails the comparison, inf overflows to inf or NaN, so one test covers the common case
    if sq.size and sq.min() > BONE_EPS * BONE_EPS and sq.max() < np.inf:
        return report
    finite = np.isfinite(pos).all(axis=1)
    if not finite.all():
        report.findings.extend(NonFinite(topo.joints[i]) for i in np.flatnonzero(~finite))
        return report
    vecs = pos[topo.child_index] - pos[topo.parent_index]
    short = np.einsum("ij,ij->i", vecs, vecs) <= BONE_EPS * BONE_EPS
    if short.any():
        report.findings.extend(DegenerateBone(topo.bones[i]) for i in np.flatnonzero(short))
    return report


def validate_frame(
    frame: Frame | Mapping[str, Iterable[float]], topo: SkeletonTopology | None = None
) -> ValidationReport:
    """Check presence, finiteness and bone lengths; ``frame`` may also be a joint->xyz mapping."""
    topo = topo or kinect20_topology()
    if isinstance(frame, Frame):
        if topo.joints == JOINTS:
            return check_positions(frame.positions, topo)
        frame = frame.as_dict()

    report = ValidationReport()
    rows = []
    for name in frame:
        if name not in JOINT_INDEX:
            report.findings.append(UnknownJoint(name))
    for name in topo.joints:
        if name not in frame:
            report.findings.append(MissingJoint(name))
            continue
        xyz = np.asarray(list(frame[name]), dtype=float)
        rows.append(xyz if xyz.shape == (3,) else np.full(3, np.nan))
    if report.findings:
        return report
    return check_positions(np.array(rows), topo)


def bone_array(positions: np.ndarray, topo: SkeletonTopology | None = None) -> np.ndarray:
    """``(19, 3)`` child-minus-parent vectors in ``topo.bones`` order; raises DegenerateBone."""
    topo = topo or kinect20_topology()
    vecs = positions[topo.child_index] - positions[topo.parent_index]
    short = np.einsum("ij,ij->i", vecs, vecs) <= BONE_EPS * BONE_EPS
    if short.any():
        raise DegenerateBone(topo.bones[int(np.argmax(short))])
    return vecs


def bone_vectors(frame: Frame, topo: SkeletonTopology | None = None) -> dict[tuple[str, str], np.ndarray]:
    topo = topo or kinect20_topology()
    vecs = bone_array(frame.positions, topo)
    return dict(zip(topo.bones, vecs))
