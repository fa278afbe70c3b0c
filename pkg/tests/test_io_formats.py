import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from golden_cases import GOLDEN, golden_motion, two_joint_rig
from oracles import bvh_world_positions, read_bvh
from skelmotion.errors import (
    CycleDetected,
    DegenerateOffset,
    DuplicateJoint,
    EmptyMotion,
    MissingJoint,
    MissingJointRotation,
    NonFinite,
    NonMonotonicTime,
    ParseError,
    RigError,
    UnknownJoint,
    UnmappedJoint,
    ValidationError,
)
from skelmotion.gestures import GestureEvent
from skelmotion.io_formats import (
    parse_capture_line,
    parse_rig,
    read_capture_stream,
    write_bvh,
    write_capture_line,
    write_capture_stream,
    write_gesture_report,
    write_pose_line,
    write_rig,
    write_truth,
)
from skelmotion.retarget import RigPose, run_stream
from skelmotion.skeleton import JOINTS, Frame
from skelmotion.synth import REST, MotionSpec, generate, rest_rig

def capture_dict(frame):
    return {"t": frame.t, "joints": {j: list(p) for j, p in frame.as_dict().items()}}


# ── capture stream ───────────────────────────────────────────────────


def test_parse_valid_line(rest_frame):
    frame = parse_capture_line(json.dumps(capture_dict(rest_frame)))
    np.testing.assert_array_equal(frame.positions, rest_frame.positions)
    assert frame.t == 0.0


def test_parse_missing_joint(rest_frame):
    doc = capture_dict(rest_frame)
    del doc["joints"]["FootLeft"]
    with pytest.raises(MissingJoint) as info:
        parse_capture_line(json.dumps(doc))
    assert info.value.joint == "FootLeft"


def test_parse_unknown_joint(rest_frame):
    doc = capture_dict(rest_frame)
    doc["joints"]["SpineMid"] = [0, 1, 0]
    with pytest.raises(UnknownJoint):
        parse_capture_line(json.dumps(doc))


def test_parse_string_time_is_syntax_error(rest_frame):
    doc = capture_dict(rest_frame)
    doc["t"] = "abc"
    with pytest.raises(ParseError):
        parse_capture_line(json.dumps(doc))


def test_parse_nonfinite(rest_frame):
    line = json.dumps(capture_dict(rest_frame)).replace("1.62", "NaN", 1)
    with pytest.raises(NonFinite) as info:
        parse_capture_line(line)
    assert info.value.joint == "Head"


@pytest.mark.parametrize("line", [
    "",
    "   ",
    "{",
    "[]",
    '{"t": 0}',
    '{"joints": {}}',
])
def test_parse_malformed(line):
    with pytest.raises(ParseError):
        parse_capture_line(line)


def test_parse_rejects_extra_field_and_bad_vectors(rest_frame):
    doc = capture_dict(rest_frame)
    doc["confidence"] = 1
    with pytest.raises(ParseError):
        parse_capture_line(json.dumps(doc))
    for bad in ([0, 1], [0, 1, "2"], [0, 1, True], {"x": 0}):
        doc = capture_dict(rest_frame)
        doc["joints"]["Head"] = bad
        with pytest.raises(ParseError):
            parse_capture_line(json.dumps(doc))


@pytest.mark.parametrize("bad", [[0, 1, True], [False, 0.5, 1], [0, 1, None], [0, [1], 2], [0, 1, 2, 3]])
def test_parse_rejects_bad_vectors_with_other_joints_intact(rest_frame, bad):
    doc = capture_dict(rest_frame)
    doc["joints"]["HandLeft"] = bad
    with pytest.raises(ParseError, match="HandLeft"):
        parse_capture_line(json.dumps(doc))


def test_parse_integer_coordinates(rest_frame):
    doc = capture_dict(rest_frame)
    doc["joints"] = {j: [k, 2 * k + 1, -k] for k, j in enumerate(JOINTS)}
    frame = parse_capture_line(json.dumps(doc))
    assert frame.positions.dtype == np.float64
    np.testing.assert_array_equal(frame.positions[3], [3.0, 7.0, -3.0])


def test_parse_boolean_text_elsewhere_is_harmless(rest_frame):
    # a key spelled "true" sends the line down the slow path, which still rejects it cleanly
    line = write_capture_line(rest_frame)[:-2] + ',"true":[0,0,0]}}'
    with pytest.raises(UnknownJoint):
        parse_capture_line(line)


def test_parse_lone_surrogate_key(rest_frame):
    line = write_capture_line(rest_frame)[:-2] + ',"\\ud800":[0,0,0]}}'
    with pytest.raises(UnknownJoint):
        parse_capture_line(line)


def test_parse_negative_time(rest_frame):
    doc = capture_dict(rest_frame)
    doc["t"] = -1.0
    with pytest.raises(ValidationError):
        parse_capture_line(json.dumps(doc))


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_capture_line('{"t": 0, "joints": {]}')
    assert info.value.position == 20


def test_mirror_x(rest_frame):
    frame = parse_capture_line(write_capture_line(rest_frame), mirror_x=True)
    np.testing.assert_array_equal(frame.positions[:, 0], -rest_frame.positions[:, 0])
    np.testing.assert_array_equal(frame.positions[:, 1:], rest_frame.positions[:, 1:])


def test_write_line_order_and_determinism(rest_frame):
    frame = Frame(1.5, rest_frame.positions)
    line = write_capture_line(frame)
    assert line.startswith('{"t":1.5,')
    assert line == write_capture_line(frame)
    keys = list(json.loads(line)["joints"])
    assert keys == list(JOINTS)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e6, allow_nan=False), arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)))
def test_capture_round_trip(t, pos):
    pos = pos + np.arange(60).reshape(20, 3)  # keeps bones non-degenerate
    frame = Frame(t, pos)
    back = parse_capture_line(write_capture_line(frame))
    assert back.t == t
    np.testing.assert_allclose(back.positions, frame.positions, rtol=0, atol=1e-9)


def test_stream_reports_line_numbers(rest_frame):
    lines = [write_capture_line(Frame(i / 30, rest_frame.positions)) for i in range(20)]
    lines[16] = "{oops"
    with pytest.raises(ParseError) as info:
        list(read_capture_stream(lines))
    assert info.value.line == 17
    assert "line 17" in str(info.value)


def test_stream_rejects_time_going_back(rest_frame):
    text = write_capture_stream([Frame(0.1, rest_frame.positions), Frame(0.1, rest_frame.positions)])
    with pytest.raises(NonMonotonicTime) as info:
        list(read_capture_stream(text.splitlines(keepends=True)))
    assert info.value.line == 2


# ── rig ──────────────────────────────────────────────────────────────


def rig_doc(names=None):
    rig = rest_rig()
    doc = json.loads(write_rig(rig))
    if names:
        for entry in doc["joints"]:
            entry["name"] = names.get(entry["name"], entry["name"])
            if "parent" in entry:
                entry["parent"] = names.get(entry["parent"], entry["parent"])
    return doc


def test_rig_round_trip():
    rig = rest_rig()
    back = parse_rig(write_rig(rig))
    assert back.topology.joints == rig.topology.joints
    for j in JOINTS:
        np.testing.assert_array_equal(back.offsets[j], rig.offsets[j])


def test_rig_cycle():
    doc = rig_doc()
    for entry in doc["joints"]:
        if entry["name"] == "Spine":
            entry["parent"] = "Head"
        if entry["name"] == "Head":
            entry["parent"] = "Spine"
    with pytest.raises(CycleDetected) as info:
        parse_rig(json.dumps(doc))
    assert set(info.value.joints) >= {"Spine", "Head"}


def test_rig_map_renames():
    doc = rig_doc({"Spine": "SpineMid"})
    doc["map"] = {"SpineMid": "Spine"}
    rig = parse_rig(json.dumps(doc))
    assert "Spine" in rig.offsets and "SpineMid" not in rig.offsets
    assert rig.export_name("Spine") == "SpineMid"
    assert '"SpineMid"' in write_rig(rig)


def test_rig_unmapped_joint():
    doc = rig_doc({"Spine": "SpineMid"})
    with pytest.raises(UnmappedJoint) as info:
        parse_rig(json.dumps(doc))
    assert info.value.joint == "SpineMid"


def test_rig_duplicate_joint():
    doc = rig_doc()
    doc["joints"].append(dict(doc["joints"][3]))
    with pytest.raises(DuplicateJoint):
        parse_rig(json.dumps(doc))


def test_rig_degenerate_offset():
    doc = rig_doc()
    doc["joints"][5]["offset"] = [0, 0, 0]
    with pytest.raises(DegenerateOffset):
        parse_rig(json.dumps(doc))


def test_rig_missing_joint_and_roots():
    doc = rig_doc()
    doc["joints"] = [e for e in doc["joints"] if e["name"] != "FootLeft"]
    with pytest.raises(MissingJoint):
        parse_rig(json.dumps(doc))
    doc = rig_doc()
    del doc["joints"][4]["parent"]
    with pytest.raises(RigError):
        parse_rig(json.dumps(doc))


@pytest.mark.parametrize("text", ["", "[]", '{"joints": 3}', '{"name": "x", "joints": [], "extra": 1}'])
def test_rig_syntax(text):
    with pytest.raises(ParseError):
        parse_rig(text)


# ── pose lines and reports ───────────────────────────────────────────


def test_pose_line_schema(rig, rest_frame):
    (pose, positions), = run_stream([rest_frame], rig)
    doc = json.loads(write_pose_line(pose, positions))
    assert list(doc) == ["t", "joints", "rotations"]
    assert set(doc["joints"]) == set(JOINTS)
    assert set(doc["rotations"]) == set(JOINTS[1:])
    assert doc["rotations"]["Head"] == [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]


def reference_pose_line(pose, positions):
    doc = {"t": pose.t, "joints": {j: list(map(float, p)) for j, p in positions.items()},
           "rotations": {j: list(map(float, np.ravel(r))) for j, r in pose.rotations.items()}}
    return json.dumps(doc, separators=(",", ":"))


def test_pose_line_matches_json_reference(rig, trace_clip):
    frames, _ = trace_clip
    for pose, positions in run_stream(frames[:200], rig):
        assert write_pose_line(pose, positions) == reference_pose_line(pose, positions)


def test_report_empty():
    assert json.loads(write_gesture_report([])) == {"events": []}


def test_report_jump_and_kick():
    events = [
        GestureEvent("Jumping", 1.0, 1.5, "Both", metrics={"jump_height_m": 0.3}),
        GestureEvent("Kicking", 2.0, 2.2, "Left"),
    ]
    doc = json.loads(write_gesture_report(events))
    jump, kick = doc["events"]
    assert jump["class"] == "Jumping" and jump["metrics"]["jump_height_m"] == 0.3
    assert kick["joints"] == ["HipLeft", "KneeLeft", "AnkleLeft"]
    assert write_gesture_report(events) == write_gesture_report(events)


def test_truth_sidecar_has_rotations():
    frames, truth = generate(MotionSpec("trace", 1.0, 10.0, rotations={"WristLeft": ((0, 0, 1), 90.0)}))
    doc = json.loads(write_truth("trace", {}, [], truth.rotations, JOINTS[1:]))
    assert doc["events"] == []
    assert len(doc["rotations"]["WristLeft"]) == len(frames)
    np.testing.assert_allclose(np.reshape(doc["rotations"]["WristLeft"][-1], (3, 3)),
                               [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


# ── BVH ──────────────────────────────────────────────────────────────


def test_bvh_two_joint_golden():
    pose = RigPose(0.0, np.zeros(3), {"Spine": np.eye(3)})
    out = write_bvh(two_joint_rig(), [pose], fps=30)
    assert out == (GOLDEN / "two_joint.bvh").read_text()


def test_bvh_frame_time_and_channel_count(rig, trace_clip):
    frames, _ = trace_clip
    motion = [p for p, _ in run_stream(frames[:12], rig)]
    out = write_bvh(rig, motion, fps=30)
    assert "Frame Time: 0.033333\n" in out
    assert "Frames: 12\n" in out
    joints, frame_time, table = read_bvh(out)
    assert table.shape == (12, 6 + 3 * (len(joints) - 1))
    assert "\r" not in out


def test_bvh_errors(rig, rest_frame):
    with pytest.raises(EmptyMotion):
        write_bvh(rig, [])
    pose = RigPose(0.0, REST[0], {j: np.eye(3) for j in JOINTS[1:] if j != "Head"})
    with pytest.raises(MissingJointRotation):
        write_bvh(rig, [pose])


def test_bvh_golden_full_rig():
    rig, motion, _ = golden_motion()
    out = write_bvh(rig, motion, fps=10)
    assert out == write_bvh(rig, motion, fps=10)
    assert out == (GOLDEN / "rest_rig_ramp.bvh").read_text()


def test_bvh_playback_reproduces_positions():
    rig, motion, frames = golden_motion()
    joints, _, table = read_bvh(write_bvh(rig, motion, fps=10))
    for row, frame in zip(table, frames):
        world = bvh_world_positions(joints, row)
        for j in JOINTS:
            np.testing.assert_allclose(world[j], frame.joint(j), atol=1e-6)


def test_bvh_offset_scale(rig, rest_frame):
    motion = [p for p, _ in run_stream([rest_frame], rig)]
    joints, _, _ = read_bvh(write_bvh(rig, motion, offset_scale=100.0))
    by_name = {j.name: j for j in joints}
    np.testing.assert_allclose(by_name["Spine"].offset, [0.0, 20.0, 0.0])
    assert math.isclose(by_name["HipCenter"].offset[1], 96.0)
