"""Quaternion helpers for skeletal poses.

Quaternions are numpy float64 arrays in (w, x, y, z) order. Euler
compositions are intrinsic: ``from_euler("zxy", (a, b, c))`` applies the
rotation about Z first, then X, then Y in the rotating frame.
"""

from __future__ import annotations

import math

import numpy as np

AXES = {"x": 0, "y": 1, "z": 2}

_GIMBAL_SIN = 1.0 - 1e-7


def identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(np.dot(q, q)))
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    """Inverse for unit quaternions."""
    return np.array([q[0], -q[1], -q[2], -q[3]])


def from_axis_angle(axis: str, angle_rad: float) -> np.ndarray:
    q = np.zeros(4)
    q[0] = math.cos(angle_rad / 2.0)
    q[1 + AXES[axis]] = math.sin(angle_rad / 2.0)
    return q


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation.

    Endpoints are returned verbatim (t<=0 gives a, t>=1 gives b) so callers
    can rely on bit-exact passthrough at full or zero weight.
    """
    if t <= 0.0:
        return a.copy()
    if t >= 1.0:
        return b.copy()
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-10:
        # nearly parallel: nlerp is accurate and avoids 0/0
        return normalize(a + t * (b - a))
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    wa = math.sin((1.0 - t) * theta) / s
    wb = math.sin(t * theta) / s
    return normalize(wa * a + wb * b)


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle in radians taking a to b, insensitive to quaternion sign."""
    dot = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(dot, 1.0))


def rotation_angle(q: np.ndarray) -> float:
    return 2.0 * math.acos(min(abs(float(q[0])), 1.0))


def from_euler(order: str, angles_deg) -> np.ndarray:
    """Compose intrinsic per-axis rotations given in degrees.

    ``order`` names the axes in application order, e.g. "zxy" for BVH
    channels "Zrotation Xrotation Yrotation".
    """
    q = identity()
    for axis, deg in zip(order.lower(), angles_deg):
        q = multiply(q, from_axis_angle(axis, math.radians(deg)))
    return normalize(q)


def to_euler_zxy(q: np.ndarray) -> tuple[float, float, float]:
    """Euler angles (z, x, y) in degrees for the intrinsic ZXY order.

    Near the gimbal singularity (x close to +-90 deg) the dependent y axis
    is zeroed and the full twist is folded into z; the returned angles still
    reproduce the input rotation.
    """
    w, x, y, z = normalize(q)
    sx = 2.0 * (y * z + w * x)
    sx = max(-1.0, min(1.0, sx))
    if abs(sx) >= _GIMBAL_SIN:
        ax = math.copysign(math.pi / 2.0, sx)
        az = math.atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (y * y + z * z))
        ay = 0.0
    else:
        ax = math.asin(sx)
        az = math.atan2(-2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z))
        ay = math.atan2(-2.0 * (x * z - w * y), 1.0 - 2.0 * (x * x + y * y))
    # + 0.0 canonicalizes -0.0 so identity exports as literal zeros
    return (math.degrees(az) + 0.0, math.degrees(ax) + 0.0, math.degrees(ay) + 0.0)
