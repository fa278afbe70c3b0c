import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from skelmotion.errors import CycleDetected, DegenerateBone, MissingJoint, NonFinite, UnknownJoint
from skelmotion.skeleton import (
    JOINTS,
    KINECT_PARENTS,
    Frame,
    SkeletonTopology,
    bone_array,
    bone_vectors,
    kinect20_topology,
    validate_frame,
)

coords = arrays(np.float64, (20, 3), elements=st.floats(-5, 5, allow_nan=False))


def test_topology_shape():
    topo = kinect20_topology()
    assert topo.root == "HipCenter"
    assert len(topo.joints) == 20 and len(set(topo.joints)) == 20
    assert len(topo.bones) == 19
    assert topo.parent["Head"] == "ShoulderCenter"
    assert "HipCenter" not in topo.parent


def test_topology_chains():
    topo = kinect20_topology()
    assert topo.chain("Head") == ["HipCenter", "Spine", "ShoulderCenter", "Head"]
    assert topo.chain("HandLeft") == ["HipCenter", "Spine", "ShoulderCenter", "ShoulderLeft",
                                      "ElbowLeft", "WristLeft", "HandLeft"]
    assert topo.chain("FootRight") == ["HipCenter", "HipRight", "KneeRight", "AnkleRight", "FootRight"]


def test_topology_is_a_tree():
    topo = kinect20_topology()
    seen = []
    stack = [topo.root]
    while stack:
        j = stack.pop()
        seen.append(j)
        stack.extend(topo.children(j))
    assert sorted(seen) == sorted(JOINTS)
    # parents precede children
    pos = {j: i for i, j in enumerate(topo.joints)}
    assert all(pos[p] < pos[c] for p, c in topo.bones)


def test_topology_rejects_cycle():
    parent = dict(KINECT_PARENTS)
    parent["Spine"] = "Head"
    with pytest.raises(CycleDetected):
        SkeletonTopology.from_parents("HipCenter", parent, order=JOINTS)


def test_validate_clean(rest_frame):
    report = validate_frame(rest_frame)
    assert report.ok and report.findings == []


def test_validate_missing_head(rest_frame):
    joints = rest_frame.as_dict()
    del joints["Head"]
    report = validate_frame(joints)
    assert not report.ok
    assert isinstance(report.findings[0], MissingJoint) and report.findings[0].joint == "Head"


def test_validate_unknown_and_nonfinite(rest_frame):
    joints = rest_frame.as_dict()
    joints["SpineMid"] = [0, 1, 0]
    assert isinstance(validate_frame(joints).findings[0], UnknownJoint)
    pos = rest_frame.positions.copy()
    pos[5, 1] = np.nan
    finding = validate_frame(Frame(0, pos)).findings[0]
    assert isinstance(finding, NonFinite) and finding.joint == "ElbowLeft"


def test_validate_degenerate_bone(rest_frame):
    pos = rest_frame.positions.copy()
    pos[1] = pos[0]
    finding = validate_frame(Frame(0, pos)).findings[0]
    assert isinstance(finding, DegenerateBone)
    assert finding.bone == ("HipCenter", "Spine")
    with pytest.raises(DegenerateBone):
        bone_vectors(Frame(0, pos))


def test_bone_vector_simple(rest_frame):
    pos = rest_frame.positions.copy()
    pos[0] = 0.0
    pos[1] = (0.0, 0.3, 0.0)
    v = bone_vectors(Frame(0, pos))
    np.testing.assert_array_equal(v[("HipCenter", "Spine")], [0.0, 0.3, 0.0])


def test_bone_vectors_equal_rig_offsets(rig):
    frame = Frame(0.0, np.array([rig.rest_positions()[j] for j in JOINTS]))
    for (p, c), v in bone_vectors(frame).items():
        np.testing.assert_allclose(v, rig.offsets[c], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(coords)
def test_chain_telescopes(pos):
    frame = Frame(0.0, pos)
    if not validate_frame(frame).ok:
        return
    topo = kinect20_topology()
    vecs = bone_vectors(frame)
    for leaf in ("Head", "HandLeft", "HandRight", "FootLeft", "FootRight"):
        chain = topo.chain(leaf)
        total = sum(vecs[(a, b)] for a, b in zip(chain, chain[1:]))
        np.testing.assert_allclose(total, frame.joint(leaf) - frame.joint("HipCenter"), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(coords, arrays(np.float64, 3, elements=st.floats(-100, 100)))
def test_bone_vectors_translation_invariant(pos, offset):
    frame = Frame(0.0, pos)
    if not validate_frame(frame).ok or not validate_frame(frame.translated(offset)).ok:
        return
    a = bone_array(frame.positions)
    b = bone_array(frame.translated(offset).positions)
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (20, 3), elements=st.sampled_from([0.0, 1e-7, 5e-7, 1e-6, 2e-6, 1.0])))
def test_validate_agrees_with_bone_vectors(pos):
    frame = Frame(0.0, pos)
    ok = validate_frame(frame).ok
    try:
        bone_vectors(frame)
        succeeded = True
    except DegenerateBone:
        succeeded = False
    assert ok == succeeded
