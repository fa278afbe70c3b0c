"""Markerless skeleton motion retargeting via per-bone axis-angle rotations."""

from .errors import MocapError, ParseError, ValidationError
from .gestures import DetectorConfig, GestureEvent, detect
from .io_formats import RigDefinition, parse_capture_line, parse_rig, write_bvh, write_capture_line
from .retarget import RetargetConfig, Retargeter, RigPose, SmoothingConfig, forward_kinematics, run_stream
from .rotation import accumulate, axis_angle_between, orthonormalize, rodrigues, rotation_to_euler
from .skeleton import JOINTS, Frame, kinect20_topology, validate_frame

__all__ = [
    "JOINTS", "DetectorConfig", "Frame", "GestureEvent", "MocapError", "ParseError", "RetargetConfig",
    "Retargeter", "RigDefinition", "RigPose", "SmoothingConfig", "ValidationError", "accumulate",
    "axis_angle_between", "detect", "forward_kinematics", "kinect20_topology", "orthonormalize",
    "parse_capture_line", "parse_rig", "rodrigues", "rotation_to_euler", "run_stream", "validate_frame",
    "write_bvh", "write_capture_line",
]
