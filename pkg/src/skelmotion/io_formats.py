"""Text formats: capture streams, rig documents, BVH, pose lines and reports.

Capture stream
    UTF-8, one JSON object per line, ``{"t": seconds, "joints": {name: [x, y, z]}}``
    with all 20 joints, nothing else. Blank lines are errors.
Rig document
    ``{"name": str, "joints": [{"name", "parent"?, "offset": [x, y, z]}], "map"?: {rig: capture}}``.
    The root's offset is its rest-pose world position.
BVH
    Write-only. Rotations are Z-X-Y Euler channels in degrees, offsets in meters
    times ``offset_scale``, six decimals, LF endings.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from pydantic_core import from_json

from .errors import (
    CycleDetected,
    DegenerateBone,
    DegenerateOffset,
    DuplicateJoint,
    EmptyMotion,
    MissingJoint,
    MissingJointRotation,
    MocapError,
    NonMonotonicTime,
    ParseError,
    RigError,
    UnmappedJoint,
    ValidationError,
)
from .rotation import rotation_to_euler_many
from .skeleton import (
    BONE_EPS,
    JOINT_INDEX,
    JOINTS,
    Frame,
    SkeletonTopology,
    check_positions,
    kinect20_topology,
    validate_frame,
)

logger = logging.getLogger(__name__)

# ── capture stream ───────────────────────────────────────────────────


_NUMBER_TYPES = (float, int)
_JOINT_SET = frozenset(JOINTS)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_capture_line(line: str, mirror_x: bool = False) -> Frame:
    """Parse and fully validate one capture record."""
    if not line.strip():
        raise ParseError("blank line")
    try:
        obj = from_json(line)
    except ValueError:
        # the stdlib decoder is the reference: it gives the error position and
        # accepts the few documents the fast one rejects (lone surrogate escapes)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.pos) from None
    if not isinstance(obj, dict):
        raise ParseError("record must be an object")
    extra = set(obj) - {"t", "joints"}
    if extra:
        raise ParseError(f"unexpected field {sorted(extra)[0]!r}")
    if "t" not in obj or "joints" not in obj:
        raise ParseError("record needs 't' and 'joints'")
    t = obj["t"]
    if not _is_number(t):
        raise ParseError("'t' must be a number")
    if not math.isfinite(t) or t < 0:
        raise ValidationError(f"timestamp {t!r} must be finite and non-negative")
    joints = obj["joints"]
    if not isinstance(joints, dict):
        raise ParseError("'joints' must be an object")
    pos = None
    if joints.keys() == _JOINT_SET and "true" not in line and "false" not in line:
        # Without booleans in the text, a numeric (20, 3) array means every value was a number.
        try:
            pos = np.array([joints[j] for j in JOINTS])
        except ValueError:
            pass
        if pos is not None and (pos.shape != (len(JOINTS), 3) or pos.dtype.kind not in "fi"):
            pos = None
    if pos is None:
        for name, xyz in joints.items():
            if type(xyz) is not list or len(xyz) != 3 or any(type(v) not in _NUMBER_TYPES for v in xyz):
                raise ParseError(f"joint {name!r} must be an array of 3 numbers")
        if joints.keys() != _JOINT_SET:
            validate_frame(joints).raise_first()
        pos = np.array([joints[j] for j in JOINTS], dtype=float)
    elif pos.dtype.kind == "i":
        pos = pos.astype(float)
    check_positions(pos).raise_first()
    if mirror_x:
        pos[:, 0] *= -1.0
    return Frame(float(t), pos)


def write_capture_line(frame: Frame) -> str:
    """Shortest round-trip float repr; ``t`` first, joints in canonical order. No newline."""
    rows = frame.positions.tolist()
    body = {"t": float(frame.t), "joints": dict(zip(JOINTS, rows))}
    return json.dumps(body, separators=(",", ":"), allow_nan=True)


def read_capture_stream(
    lines: Iterable[str], mirror_x: bool = False, skip_degenerate: bool = False
) -> Iterator[Frame]:
    """Yield validated frames; errors carry the 1-based ``line`` and 0-based ``frame_index``.

    With ``skip_degenerate`` a frame whose only fault is a zero-length bone is
    dropped with a warning instead of raising.
    """
    prev_t = None
    for i, line in enumerate(lines):
        if line.endswith("\n"):
            line = line[:-1]
        try:
            try:
                frame = parse_capture_line(line, mirror_x=mirror_x)
            except DegenerateBone as exc:
                if not skip_degenerate:
                    raise
                logger.warning("dropping frame %d (line %d): %s", i, i + 1, exc.message)
                continue
            if prev_t is not None and frame.t <= prev_t:
                raise NonMonotonicTime(frame.t, prev_t)
        except MocapError as exc:
            exc.line = i + 1
            exc.frame_index = i
            raise
        prev_t = frame.t
        yield frame


def write_capture_stream(frames: Iterable[Frame]) -> str:
    return "".join(write_capture_line(f) + "\n" for f in frames)


# ── rig ──────────────────────────────────────────────────────────────


@dataclass
class RigDefinition:
    """Target character: a joint tree with rest offsets, under capture joint names.

    ``offsets[root]`` is the rest-pose root position; every other offset is the
    rest bone vector from its parent. ``rig_names`` remembers the rig's own
    vocabulary for export.
    """

    name: str
    topology: SkeletonTopology
    offsets: dict[str, np.ndarray]
    rig_names: dict[str, str] = field(default_factory=dict)

    @property
    def root(self) -> str:
        return self.topology.root

    @property
    def hip_height(self) -> float:
        return float(self.offsets[self.root][1])

    def export_name(self, joint: str) -> str:
        return self.rig_names.get(joint, joint)

    def rest_positions(self) -> dict[str, np.ndarray]:
        pos = {self.root: self.offsets[self.root].copy()}
        for parent, child in self.topology.bones:
            pos[child] = pos[parent] + self.offsets[child]
        return pos

    def scaled(self, factor: float, name: str | None = None) -> "RigDefinition":
        return RigDefinition(
            name or self.name,
            self.topology,
            {j: o * factor for j, o in self.offsets.items()},
            dict(self.rig_names),
        )

    @classmethod
    def from_frame(cls, frame: Frame, name: str = "capture") -> "RigDefinition":
        """A rig whose rest pose is exactly ``frame`` on the capture hierarchy."""
        topo = kinect20_topology()
        offsets = {topo.root: frame.joint(topo.root).copy()}
        for parent, child in topo.bones:
            offsets[child] = frame.joint(child) - frame.joint(parent)
        return cls(name, topo, offsets)


def _vec3(v, what: str) -> np.ndarray:
    if not (isinstance(v, list) and len(v) == 3 and all(_is_number(x) for x in v)):
        raise ParseError(f"{what} must be an array of 3 numbers")
    arr = np.array(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} is not finite")
    return arr


def parse_rig(text: str, require_capture_joints: bool = True) -> RigDefinition:
    """Parse a rig document, apply its name map and validate the tree.

    With ``require_capture_joints`` the mapped joint set must be exactly the
    20 capture joints, rooted at HipCenter.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.pos) from None
    if not isinstance(obj, dict):
        raise ParseError("rig must be an object")
    extra = set(obj) - {"name", "joints", "map"}
    if extra:
        raise ParseError(f"unexpected rig field {sorted(extra)[0]!r}")
    name = obj.get("name", "rig")
    if not isinstance(name, str):
        raise ParseError("rig 'name' must be a string")
    joints = obj.get("joints")
    if not isinstance(joints, list) or not joints:
        raise ParseError("rig 'joints' must be a non-empty array")
    mapping = obj.get("map", {})
    if not isinstance(mapping, dict) or not all(isinstance(v, str) for v in mapping.values()):
        raise ParseError("rig 'map' must map names to names")

    def canonical(rig_name: str) -> str:
        mapped = mapping.get(rig_name, rig_name)
        if require_capture_joints and mapped not in JOINT_INDEX:
            raise UnmappedJoint(rig_name)
        return mapped

    seen_rig: set[str] = set()
    order: list[str] = []
    parent: dict[str, str] = {}
    offsets: dict[str, np.ndarray] = {}
    rig_names: dict[str, str] = {}
    roots: list[str] = []
    raw_parent: dict[str, str] = {}
    for entry in joints:
        if not isinstance(entry, dict):
            raise ParseError("rig joint entries must be objects")
        bad = set(entry) - {"name", "parent", "offset"}
        if bad:
            raise ParseError(f"unexpected rig joint field {sorted(bad)[0]!r}")
        jname = entry.get("name")
        if not isinstance(jname, str) or not jname:
            raise ParseError("rig joint needs a 'name'")
        if jname in seen_rig:
            raise DuplicateJoint(jname)
        seen_rig.add(jname)
        cname = canonical(jname)
        if cname in offsets:
            raise DuplicateJoint(jname)
        offsets[cname] = _vec3(entry.get("offset"), f"offset of {jname!r}")
        order.append(cname)
        if cname != jname:
            rig_names[cname] = jname
        par = entry.get("parent")
        if par is None:
            roots.append(cname)
        elif not isinstance(par, str):
            raise ParseError(f"parent of {jname!r} must be a string")
        else:
            raw_parent[cname] = par

    rig_to_canonical = {rig_names.get(c, c): c for c in order}
    for cname, par in raw_parent.items():
        if par not in rig_to_canonical:
            raise RigError(f"parent {par!r} of {rig_names.get(cname, cname)!r} is not a rig joint")
        parent[cname] = rig_to_canonical[par]

    if not roots:
        raise CycleDetected(_cycle_from(order[0], parent, rig_names))
    if len(roots) > 1:
        raise RigError("rig has several roots: " + ", ".join(rig_names.get(r, r) for r in roots))
    root = roots[0]
    # Walk every joint upward first so a cycle is reported even when the root is fine.
    for j in order:
        _cycle_check(j, parent, rig_names)
    topo = SkeletonTopology.from_parents(root, parent, order=order)

    if require_capture_joints:
        for j in JOINTS:
            if j not in offsets:
                raise MissingJoint(j)
        if root != "HipCenter":
            raise RigError(f"rig root must map to HipCenter, got {rig_names.get(root, root)!r}")
    for j in order:
        if j != root and np.linalg.norm(offsets[j]) <= BONE_EPS:
            raise DegenerateOffset(rig_names.get(j, j))
    return RigDefinition(name, topo, offsets, rig_names)


def _cycle_from(start: str, parent: Mapping[str, str], names: Mapping[str, str]) -> list[str]:
    seen: list[str] = []
    j = start
    while j in parent and j not in seen:
        seen.append(j)
        j = parent[j]
    cyc = seen[seen.index(j):] + [j] if j in seen else seen
    return [names.get(x, x) for x in cyc]


def _cycle_check(start: str, parent: Mapping[str, str], names: Mapping[str, str]) -> None:
    seen = set()
    j = start
    while j in parent:
        if j in seen:
            raise CycleDetected(_cycle_from(j, parent, names))
        seen.add(j)
        j = parent[j]


def write_rig(rig: RigDefinition) -> str:
    joints = []
    for j in rig.topology.joints:
        entry: dict = {"name": rig.export_name(j)}
        if j != rig.root:
            entry["parent"] = rig.export_name(rig.topology.parent[j])
        entry["offset"] = rig.offsets[j].tolist()
        joints.append(entry)
    doc: dict = {"name": rig.name, "joints": joints}
    if rig.rig_names:
        doc["map"] = {v: k for k, v in rig.rig_names.items()}
    return json.dumps(doc, indent=2) + "\n"


# ── pose lines ───────────────────────────────────────────────────────


@lru_cache(maxsize=32)
def _pose_template(joints: tuple[str, ...], rotated: tuple[str, ...]) -> str:
    def key(name: str) -> str:
        return json.dumps(name).replace("%", "%%")

    pos = ",".join(f"{key(j)}:[%r,%r,%r]" for j in joints)
    rot = ",".join(f"{key(j)}:[{','.join(['%r'] * 9)}]" for j in rotated)
    return '{"t":%r,"joints":{' + pos + '},"rotations":{' + rot + "}}"


def write_pose_line(pose, positions: Mapping[str, np.ndarray]) -> str:
    """One retargeted sample: FK positions plus row-major world rotations. No newline.

    Same bytes as compact ``json.dumps`` of ``{"t", "joints", "rotations"}``;
    floats use the shortest round-trip repr.
    """
    template = _pose_template(tuple(positions), tuple(pose.rotations))
    values = np.concatenate([
        np.asarray(list(positions.values()), dtype=float).ravel(),
        np.asarray(list(pose.rotations.values()), dtype=float).ravel(),
    ])
    return template % (float(pose.t), *values.tolist())


# ── BVH ──────────────────────────────────────────────────────────────


@dataclass
class _BvhNode:
    name: str
    parent: int  # index into the node list, -1 for the root
    offset: np.ndarray
    drive: str | None  # rig joint whose bone rotation this node carries; None = inherit
    children: list[int] = field(default_factory=list)
    leaf: bool = False


def _bvh_nodes(rig: RigDefinition) -> list[_BvhNode]:
    """Mirror the rig tree; branch joints get a zero-offset carrier per extra child.

    Each rig bone has its own world rotation, while a BVH joint rotates all its
    children together. A joint's first child is driven by the joint itself; every
    further child hangs from a carrier joint that holds that child's rotation.
    """
    topo = rig.topology
    nodes: list[_BvhNode] = []

    def visit(joint: str, parent_idx: int, offset: np.ndarray) -> None:
        kids = topo.children(joint)
        idx = len(nodes)
        nodes.append(_BvhNode(rig.export_name(joint), parent_idx, offset, kids[0] if kids else None))
        if parent_idx >= 0:
            nodes[parent_idx].children.append(idx)
        if not kids:
            nodes[idx].leaf = True
            return
        visit(kids[0], idx, rig.offsets[kids[0]])
        for kid in kids[1:]:
            cidx = len(nodes)
            cname = f"{rig.export_name(joint)}_to_{rig.export_name(kid)}"
            nodes.append(_BvhNode(cname, idx, np.zeros(3), kid))
            nodes[idx].children.append(cidx)
            visit(kid, cidx, rig.offsets[kid])

    visit(topo.root, -1, rig.offsets[topo.root])
    return nodes


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_bvh(rig: RigDefinition, motion: Sequence, fps: float = 30.0, offset_scale: float = 1.0) -> str:
    """Serialize poses as BVH.

    Root world position is ``OFFSET + position channels``; the OFFSET is the
    rig's rest root position.
    """
    if not motion:
        raise EmptyMotion()
    if not fps > 0:
        raise ValueError("fps must be positive")
    nodes = _bvh_nodes(rig)
    required = [j for j in rig.topology.joints if j != rig.root]
    need = set(required)
    for pose in motion:
        if not pose.rotations.keys() >= need:
            missing = next(j for j in required if j not in pose.rotations)
            raise MissingJointRotation(rig.export_name(missing))

    out: list[str] = ["HIERARCHY"]

    def emit(idx: int, depth: int) -> None:
        node = nodes[idx]
        tab = "\t" * depth
        off = " ".join(_fmt(v * offset_scale) for v in node.offset)
        if idx == 0:
            out.append(f"ROOT {node.name}")
        else:
            out.append(f"{tab}JOINT {node.name}")
        out.append(f"{tab}{{")
        out.append(f"{tab}\tOFFSET {off}")
        if idx == 0:
            out.append(f"{tab}\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation")
        else:
            out.append(f"{tab}\tCHANNELS 3 Zrotation Xrotation Yrotation")
        for c in node.children:
            emit(c, depth + 1)
        if node.leaf:
            out.append(f"{tab}\tEnd Site")
            out.append(f"{tab}\t{{")
            out.append(f"{tab}\t\tOFFSET {_fmt(0.0)} {_fmt(0.0)} {_fmt(0.0)}")
            out.append(f"{tab}\t}}")
        out.append(f"{tab}}}")

    emit(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {len(motion)}")
    out.append(f"Frame Time: {1.0 / fps:.6f}")

    n = len(motion)
    drives = list(dict.fromkeys(node.drive for node in nodes if node.drive is not None))
    driven = np.array([[pose.rotations[d] for d in drives] for pose in motion]).reshape(n, len(drives), 3, 3)
    column = {d: i for i, d in enumerate(drives)}
    world = np.empty((n, len(nodes), 3, 3))
    for k, node in enumerate(nodes):
        if node.drive is not None:
            world[:, k] = driven[:, column[node.drive]]
        elif node.parent >= 0:
            world[:, k] = world[:, node.parent]
        else:
            world[:, k] = np.eye(3)
    parents = np.array([max(node.parent, 0) for node in nodes])
    local = np.matmul(world[:, parents].swapaxes(-1, -2), world)
    local[:, 0] = world[:, 0]
    table = np.empty((n, 3 + 3 * len(nodes)))
    table[:, :3] = (np.array([pose.root_translation for pose in motion]) - rig.offsets[rig.root]) * offset_scale
    table[:, 3:] = rotation_to_euler_many(local.reshape(-1, 3, 3)).reshape(n, -1)
    line = " ".join(["%.6f"] * table.shape[1])
    for row in table.tolist():
        # a leading space lets every field be matched as " <value>"
        out.append((" " + line % tuple(row)).replace(" -0.000000", " 0.000000")[1:])
    return "\n".join(out) + "\n"


# ── reports ──────────────────────────────────────────────────────────


def _event_dict(ev) -> dict:
    return {
        "class": ev.cls,
        "start_t": float(ev.start_t),
        "end_t": float(ev.end_t),
        "side": ev.side,
        "joints": list(ev.joints),
        "metrics": {k: float(ev.metrics[k]) for k in sorted(ev.metrics)},
    }


def write_gesture_report(events: Iterable) -> str:
    return json.dumps({"events": [_event_dict(e) for e in events]}, indent=2) + "\n"


def write_truth(kind: str, params: Mapping, events: Iterable, rotations=None, joints: Sequence[str] = ()) -> str:
    """Synth ground-truth sidecar: the gesture report schema plus optional rotation traces.

    ``rotations`` is an ``(n_frames, n_joints, 3, 3)`` array aligned with ``joints``.
    """
    doc: dict = {"kind": kind, "params": dict(params), "events": [_event_dict(e) for e in events]}
    if rotations is not None:
        rot = np.asarray(rotations)
        doc["rotations"] = {
            j: rot[:, k].reshape(len(rot), 9).tolist() for k, j in enumerate(joints)
        }
    return json.dumps(doc, separators=(",", ":")) + "\n"
