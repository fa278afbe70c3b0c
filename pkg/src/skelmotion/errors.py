"""Exception hierarchy.

Every error carries enough context to name the offending element. Stream
processors attach ``frame_index`` (0-based) and parsers attach ``line``
(1-based) before re-raising.
"""

from __future__ import annotations


class MocapError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
        self.frame_index: int | None = None
        self.line: int | None = None

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.frame_index is not None:
            where.append(f"frame {self.frame_index}")
        if where:
            return f"{', '.join(where)}: {self.message}"
        return self.message


class ValidationError(MocapError):
    """Input is well-formed but violates a data invariant."""


class MissingJoint(ValidationError):
    def __init__(self, joint: str):
        super().__init__(f"missing joint {joint}")
        self.joint = joint


class UnknownJoint(ValidationError):
    def __init__(self, joint: str):
        super().__init__(f"unknown joint {joint!r}")
        self.joint = joint


class NonFinite(ValidationError):
    def __init__(self, joint: str):
        super().__init__(f"non-finite coordinate on joint {joint}")
        self.joint = joint


class DegenerateBone(ValidationError):
    def __init__(self, bone: tuple[str, str]):
        super().__init__(f"degenerate bone {bone[0]}->{bone[1]}")
        self.bone = bone


class NonMonotonicTime(ValidationError):
    def __init__(self, t: float, prev_t: float):
        super().__init__(f"timestamp {t!r} does not increase past {prev_t!r}")
        self.t = t
        self.prev_t = prev_t


class ZeroHipHeight(ValidationError):
    def __init__(self, height: float):
        super().__init__(f"source hip height {height!r} is not above zero")
        self.height = height


class InvalidRestFrame(ValidationError):
    pass


class ParseError(MocapError):
    """Malformed text: bad JSON, wrong types, unexpected fields."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (char {position})")
        self.position = position


class RigError(ValidationError):
    """A rig document that parses but does not describe a usable tree."""


class CycleDetected(RigError):
    def __init__(self, joints: list[str]):
        super().__init__("cycle in rig hierarchy: " + " -> ".join(joints))
        self.joints = joints


class UnmappedJoint(RigError):
    def __init__(self, joint: str):
        super().__init__(f"rig joint {joint!r} does not map to a capture joint")
        self.joint = joint


class DuplicateJoint(RigError):
    def __init__(self, joint: str):
        super().__init__(f"duplicate rig joint {joint!r}")
        self.joint = joint


class DegenerateOffset(RigError):
    def __init__(self, joint: str):
        super().__init__(f"rest offset of {joint!r} has zero length")
        self.joint = joint


class EmptyMotion(MocapError):
    def __init__(self):
        super().__init__("motion has no frames")


class MissingJointRotation(MocapError):
    def __init__(self, joint: str):
        super().__init__(f"pose has no rotation for joint {joint!r}")
        self.joint = joint


class RotationError(MocapError):
    pass


class NonUnitAxis(RotationError):
    def __init__(self, norm: float):
        super().__init__(f"rotation axis has norm {norm!r}, expected 1")
        self.norm = norm


class ZeroVector(RotationError):
    def __init__(self):
        super().__init__("cannot take a rotation between zero-length vectors")


class SingularMatrix(RotationError):
    def __init__(self, det: float):
        super().__init__(f"matrix determinant {det!r} is not positive")
        self.det = det


class TooShort(MocapError):
    def __init__(self, n: int):
        super().__init__(f"need at least 2 frames, got {n}")
        self.n = n


class InvalidSpec(MocapError):
    pass
