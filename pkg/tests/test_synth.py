import numpy as np
import pytest

from skelmotion.errors import InvalidSpec
from skelmotion.io_formats import write_capture_stream
from skelmotion.retarget import BONE_JOINTS
from skelmotion.rotation import is_rotation, rot_z
from skelmotion.skeleton import JOINT_INDEX, kinect20_topology, validate_frame
from skelmotion.synth import REST, MotionSpec, corpus, generate, pose_positions


def test_standing_clip():
    frames, truth = generate(MotionSpec("standing", 2.0, 30.0))
    assert len(frames) == 60
    assert all(np.array_equal(f.positions, frames[0].positions) for f in frames)
    assert truth.events == [] and truth.rotations is None


def test_trace_ramp_end_rotation():
    frames, truth = generate(MotionSpec("trace", 2.0, 30.0, rotations={"WristLeft": ((0, 0, 1), 90.0)}))
    np.testing.assert_allclose(truth.rotation(-1, "WristLeft"), rot_z(90), atol=1e-15)
    np.testing.assert_array_equal(truth.rotation(0, "WristLeft"), np.eye(3))
    elbow, wrist = JOINT_INDEX["ElbowLeft"], JOINT_INDEX["WristLeft"]
    np.testing.assert_allclose(frames[-1].positions[wrist] - frames[-1].positions[elbow],
                               rot_z(90) @ (REST[wrist] - REST[elbow]), atol=1e-15)


def test_jump_truth():
    _, truth = generate(MotionSpec("gesture", 3.0, 30.0, gesture="Jumping", rise_m=0.30))
    ev, = truth.events
    assert ev.cls == "Jumping" and ev.metrics["jump_height_m"] == 0.30


def test_jump_hip_peak():
    frames, _ = generate(MotionSpec("gesture", 3.0, 120.0, gesture="Jumping", rise_m=0.30))
    hip = np.array([f.positions[0, 1] for f in frames])
    assert hip.max() - REST[0, 1] == pytest.approx(0.30, abs=1e-3)


def test_trace_properties(trace_clip):
    frames, truth = trace_clip
    assert len(frames) >= 1000
    assert truth.rotations.shape == (len(frames), 19, 3, 3)
    np.testing.assert_array_equal(truth.rotations[0], np.tile(np.eye(3), (19, 1, 1)))
    assert all(is_rotation(r, 1e-12) for r in truth.rotations[::97].reshape(-1, 3, 3))


def test_fk_is_the_generator(trace_clip):
    frames, truth = trace_clip
    again = pose_positions(truth.root, truth.rotations)
    np.testing.assert_array_equal(again, np.stack([f.positions for f in frames]))
    topo = kinect20_topology()
    rest_len = np.linalg.norm(REST[topo.child_index] - REST[topo.parent_index], axis=1)
    for f in frames[::50]:
        got = np.linalg.norm(f.positions[topo.child_index] - f.positions[topo.parent_index], axis=1)
        np.testing.assert_allclose(got, rest_len, atol=1e-12)


def test_deterministic_bytes():
    spec = MotionSpec("trace", 5.0, 30.0, seed=11, noise_sigma=0.002)
    a = write_capture_stream(generate(spec)[0])
    b = write_capture_stream(generate(spec)[0])
    assert a == b
    c = write_capture_stream(generate(MotionSpec("trace", 5.0, 30.0, seed=12, noise_sigma=0.002))[0])
    assert a != c


def test_noise_is_additive():
    clean, _ = generate(MotionSpec("standing", 2.0, 30.0, seed=5))
    noisy, _ = generate(MotionSpec("standing", 2.0, 30.0, seed=5, noise_sigma=0.01))
    diff = np.stack([n.positions - c.positions for n, c in zip(noisy, clean)])
    assert diff.std() == pytest.approx(0.01, rel=0.1)


def test_corpus():
    clips = corpus()
    assert len(clips) == 8
    labels = [spec.gesture or spec.kind for spec, _, _ in clips]
    assert sorted(labels[:7]) == sorted(["Sprinting", "Jumping", "OneHandWave", "TwoHandsWave",
                                         "Throwing", "Heading", "Kicking"])
    assert labels[7] == "standing"
    for spec, frames, truth in clips:
        assert spec.fps == 30.0 and 2.0 <= spec.duration_s <= 6.0
        assert all(validate_frame(f).ok for f in frames)
    kick = next(t for s, _, t in clips if s.gesture == "Kicking")
    assert kick.events[0].joints == ["HipRight", "KneeRight", "AnkleRight"]


def test_corpus_deterministic():
    a = [write_capture_stream(f) for _, f, _ in corpus()]
    b = [write_capture_stream(f) for _, f, _ in corpus()]
    assert a == b


@pytest.mark.parametrize("spec", [
    MotionSpec("dance"),
    MotionSpec("standing", duration_s=-1.0),
    MotionSpec("standing", fps=0.0),
    MotionSpec("gesture", gesture="Dancing"),
    MotionSpec("gesture", gesture="Jumping", rise_m=3.0),
    MotionSpec("gesture", gesture="Kicking", duration_s=1.0),
    MotionSpec("trace", rotations={"HipCenter": ((0, 0, 1), 10.0)}),
    MotionSpec("trace", rotations={"Head": ((0, 0, 0), 10.0)}),
    MotionSpec("standing", noise_sigma=0.5),
])
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        generate(spec)


def test_bone_keys_cover_skeleton():
    assert set(BONE_JOINTS) == set(kinect20_topology().parent)
