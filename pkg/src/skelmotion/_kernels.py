"""Compiled per-frame kernels for the streaming engine.

Same arithmetic as the batched functions in ``rotation`` (axis from the cross
product, angle from atan2, the printed Rodrigues entries, row Gram-Schmidt),
fused into one pass per frame so a stream is not dominated by numpy call
overhead. Both offline and served streams go through these, which keeps
their outputs bit-identical.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def retarget_kernel(positions, parent_idx, child_idx, prev_units, acc, out_units, out_acc, eps2, parallel_eps):
    """Fill ``out_units``/``out_acc`` for one frame; return the first degenerate bone or -1.

    Nothing is written when a degenerate bone is found.
    """
    n = parent_idx.shape[0]
    b = np.empty((n, 3))
    for k in range(n):
        for i in range(3):
            b[k, i] = positions[child_idx[k], i] - positions[parent_idx[k], i]
        if b[k, 0] * b[k, 0] + b[k, 1] * b[k, 1] + b[k, 2] * b[k, 2] <= eps2:
            return k

    m = np.empty((3, 3))
    r = np.empty((3, 3))
    for k in range(n):
        nb = math.sqrt(b[k, 0] * b[k, 0] + b[k, 1] * b[k, 1] + b[k, 2] * b[k, 2])
        bx = b[k, 0] / nb
        by = b[k, 1] / nb
        bz = b[k, 2] / nb
        out_units[k, 0] = bx
        out_units[k, 1] = by
        out_units[k, 2] = bz
        ax = prev_units[k, 0]
        ay = prev_units[k, 1]
        az = prev_units[k, 2]

        cx = ay * bz - az * by
        cy = az * bx - ax * bz
        cz = ax * by - ay * bx
        s = math.sqrt(cx * cx + cy * cy + cz * cz)
        d = ax * bx + ay * by + az * bz
        theta = math.atan2(s, d)
        if s <= parallel_eps:
            # basis vector along the smallest |component| of a, lowest index on ties
            aabs0, aabs1, aabs2 = abs(ax), abs(ay), abs(az)
            if aabs0 <= aabs1 and aabs0 <= aabs2:
                x, y, z = 0.0, az, -ay
            elif aabs1 <= aabs2:
                x, y, z = -az, 0.0, ax
            else:
                x, y, z = ay, -ax, 0.0
            theta = 0.0 if d > 0.0 else math.pi
        else:
            x = cx / s
            y = cy / s
            z = cz / s
            p = x * ax + y * ay + z * az
            x -= p * ax
            y -= p * ay
            z -= p * az
        nv = math.sqrt(x * x + y * y + z * z)
        x /= nv
        y /= nv
        z /= nv

        c = math.cos(theta)
        sn = math.sin(theta)
        t = 1.0 - c
        m[0, 0] = c + t * x * x
        m[0, 1] = t * x * y - sn * z
        m[0, 2] = t * x * z + sn * y
        m[1, 0] = t * y * x + sn * z
        m[1, 1] = c + t * y * y
        m[1, 2] = t * y * z - sn * x
        m[2, 0] = t * z * x - sn * y
        m[2, 1] = t * z * y + sn * x
        m[2, 2] = c + t * z * z

        for i in range(3):
            for j in range(3):
                r[i, j] = m[i, 0] * acc[k, 0, j] + m[i, 1] * acc[k, 1, j] + m[i, 2] * acc[k, 2, j]

        n0 = math.sqrt(r[0, 0] * r[0, 0] + r[0, 1] * r[0, 1] + r[0, 2] * r[0, 2])
        r00 = r[0, 0] / n0
        r01 = r[0, 1] / n0
        r02 = r[0, 2] / n0
        p = r[1, 0] * r00 + r[1, 1] * r01 + r[1, 2] * r02
        r10 = r[1, 0] - p * r00
        r11 = r[1, 1] - p * r01
        r12 = r[1, 2] - p * r02
        n1 = math.sqrt(r10 * r10 + r11 * r11 + r12 * r12)
        r10 /= n1
        r11 /= n1
        r12 /= n1
        out_acc[k, 0, 0] = r00
        out_acc[k, 0, 1] = r01
        out_acc[k, 0, 2] = r02
        out_acc[k, 1, 0] = r10
        out_acc[k, 1, 1] = r11
        out_acc[k, 1, 2] = r12
        out_acc[k, 2, 0] = r01 * r12 - r02 * r11
        out_acc[k, 2, 1] = r02 * r10 - r00 * r12
        out_acc[k, 2, 2] = r00 * r11 - r01 * r10
    return -1


@njit(cache=True)
def fk_kernel(root, rotations, rot_idx, parent_pos, offsets, out):
    """Rig-order forward kinematics: ``out[0] = root``, ``out[k+1] = out[parent] + R @ offset``."""
    for i in range(3):
        out[0, i] = root[i]
    for k in range(offsets.shape[0]):
        rk = rot_idx[k]
        pk = parent_pos[k]
        for i in range(3):
            out[k + 1, i] = out[pk, i] + (
                rotations[rk, i, 0] * offsets[k, 0]
                + rotations[rk, i, 1] * offsets[k, 1]
                + rotations[rk, i, 2] * offsets[k, 2]
            )
