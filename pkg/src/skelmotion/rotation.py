"""Axis-angle rotation math for per-bone motion transfer.

A rotation matrix is a plain ``(3, 3)`` float array; batched variants take
``(n, 3, 3)``. The axis-angle matrix is built entry by entry in the classic
Rodrigues form

    [[c + t x^2,    t x y - s z,  t x z + s y],
     [t y x + s z,  c + t y^2,    t y z - s x],
     [t z x - s y,  t z y + s x,  c + t z^2 ]]

with ``c = cos(theta)``, ``s = sin(theta)``, ``t = 1 - c``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import NonUnitAxis, SingularMatrix, ZeroVector

ZERO_EPS = 1e-12
PARALLEL_EPS = 1e-12
UNIT_TOL = 1e-6
# Below this cos(x) the Z-X-Y decomposition treats the pose as gimbal-locked.
GIMBAL_COS = 1e-7


class AxisAngle(NamedTuple):
    axis: np.ndarray
    theta: float


class EulerZXY(NamedTuple):
    """Degrees; the rotation is ``Rz(z) @ Rx(x) @ Ry(y)``."""

    z: float
    x: float
    y: float


# cross(a, b) = outer(a, b) flattened @ _CROSS_MAP; +-1/0 weights keep it bitwise exact.
_CROSS_MAP = np.zeros((9, 3))
_CROSS_MAP[[5, 6, 1], [0, 1, 2]] = 1.0
_CROSS_MAP[[7, 2, 3], [0, 1, 2]] = -1.0
# Flattened skew matrix of (s*v): row-major entries 5, 7 carry x; 2, 6 carry y; 1, 3 carry z.
_SKEW_MAP = np.zeros((3, 9))
_SKEW_MAP[[0, 1, 2], [7, 2, 3]] = 1.0
_SKEW_MAP[[0, 1, 2], [5, 6, 1]] = -1.0
_EYE = np.eye(3)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product of ``(n, 3)`` arrays."""
    return (a[:, :, None] * b[:, None, :]).reshape(-1, 9) @ _CROSS_MAP


def _norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", v, v))


def _rodrigues_unchecked(axes: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    c = np.cos(thetas)
    s = np.sin(thetas)
    tv = (1.0 - c)[:, None] * axes
    m = tv[:, :, None] * axes[:, None, :]  # entry (i, j) = t * v_i * v_j
    m += ((s[:, None] * axes) @ _SKEW_MAP).reshape(-1, 3, 3)
    m += c[:, None, None] * _EYE
    return m


def rodrigues_many(axes: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Batched axis-angle matrices, ``axes`` ``(n, 3)`` unit vectors, ``thetas`` ``(n,)`` radians."""
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    thetas = np.asarray(thetas, dtype=float).reshape(-1)
    norms = _norms(axes)
    dev = np.abs(norms - 1.0)
    if np.any(dev > UNIT_TOL):
        raise NonUnitAxis(float(norms[np.argmax(dev)]))
    return _rodrigues_unchecked(axes, thetas)


def rodrigues(aa: AxisAngle | tuple) -> np.ndarray:
    axis, theta = aa
    return rodrigues_many(np.asarray(axis, dtype=float)[None, :], np.array([theta]))[0]


def _axis_angle_units(ua: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _cross(ua, ub)
    s = _norms(c)
    d = np.einsum("ij,ij->i", ua, ub)
    thetas = np.arctan2(s, d)
    degenerate = s <= PARALLEL_EPS
    if degenerate.any():
        s = np.where(degenerate, 1.0, s)
    axes = c / s[:, None]
    # Re-project off ua: near-antiparallel cross products lose relative precision along ua.
    axes -= np.einsum("ij,ij->i", axes, ua)[:, None] * ua
    if degenerate.any():
        idx = np.nonzero(degenerate)[0]
        e = np.zeros((idx.size, 3))
        e[np.arange(idx.size), np.argmin(np.abs(ua[idx]), axis=1)] = 1.0
        axes[idx] = _cross(ua[idx], e)
        thetas[idx] = np.where(d[idx] > 0.0, 0.0, math.pi)
    axes /= _norms(axes)[:, None]
    return axes, thetas


def axis_angle_between_many(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shortest-arc axes ``(n, 3)`` and angles ``(n,)`` taking each ``a`` direction onto ``b``.

    The angle is ``atan2(|a x b|, a . b)``. Parallel and anti-parallel pairs get a
    deterministic axis perpendicular to ``a``: ``a x e`` normalized, where ``e`` is
    the basis vector along ``a``'s smallest absolute component (lowest index on ties).
    """
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    na = _norms(a)
    nb = _norms(b)
    if np.any(na <= ZERO_EPS) or np.any(nb <= ZERO_EPS):
        raise ZeroVector()
    return _axis_angle_units(a / na[:, None], b / nb[:, None])


def axis_angle_between(a, b) -> AxisAngle:
    axes, thetas = axis_angle_between_many(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return AxisAngle(axes[0], float(thetas[0]))


def _gram_schmidt_rows(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    r0 = m[:, 0, :] / _norms(m[:, 0, :])[:, None]
    r1 = m[:, 1, :] - np.einsum("ij,ij->i", m[:, 1, :], r0)[:, None] * r0
    r1 /= _norms(r1)[:, None]
    out[:, 0, :] = r0
    out[:, 1, :] = r1
    out[:, 2, :] = _cross(r0, r1)
    return out


def orthonormalize_many(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(-1, 3, 3)
    det = np.einsum("ij,ij->i", m[:, 0, :], _cross(m[:, 1, :], m[:, 2, :]))
    if np.any(det <= 1e-9):
        raise SingularMatrix(float(np.min(det)))
    return _gram_schmidt_rows(m)


def orthonormalize(r) -> np.ndarray:
    """Nearest-rotation cleanup by Gram-Schmidt on rows (row 2 rebuilt as row0 x row1)."""
    return orthonormalize_many(np.asarray(r, dtype=float)[None])[0]


def accumulate_many(prev: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return _gram_schmidt_rows(np.matmul(delta, prev))


def accumulate(prev, delta) -> np.ndarray:
    """Compose a new world-frame increment onto a running rotation: ``delta @ prev``."""
    m = np.asarray(delta, dtype=float) @ np.asarray(prev, dtype=float)
    return _gram_schmidt_rows(m[None])[0]


def rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(e: EulerZXY | tuple) -> np.ndarray:
    z, x, y = e
    return rot_z(z) @ rot_x(x) @ rot_y(y)


def rotation_to_euler_many(r: np.ndarray) -> np.ndarray:
    """Batched Z-X-Y decomposition: ``(n, 3, 3)`` rotations to ``(n, 3)`` degrees as (z, x, y)."""
    r = np.asarray(r, dtype=float).reshape(-1, 3, 3)
    cx = np.hypot(r[:, 0, 1], r[:, 1, 1])
    x = np.arctan2(r[:, 2, 1], cx)
    z = np.arctan2(-r[:, 0, 1], r[:, 1, 1])
    y = np.arctan2(-r[:, 2, 0], r[:, 2, 2])
    lock = cx < GIMBAL_COS
    if lock.any():
        z = np.where(lock, np.arctan2(r[:, 1, 0], r[:, 0, 0]), z)
        y = np.where(lock, 0.0, y)
    return np.degrees(np.stack([z, x, y], axis=1))


def rotation_to_euler(r) -> EulerZXY:
    """Decompose into Z-X-Y degrees, with x in [-90, 90].

    When cos(x) falls below GIMBAL_COS the y angle is set to zero and the
    combined z/y twist is carried by z.
    """
    z, x, y = rotation_to_euler_many(r)[0].tolist()
    return EulerZXY(z, x, y)


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(
        np.max(np.abs(m.T @ m - np.eye(3))) <= tol and abs(np.linalg.det(m) - 1.0) <= tol
    )
