"""Rig, pose and clip types shared by the blending, pose and BVH modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat

UNIT_NORM_TOL = 1e-6


class SkeletonMismatch(Exception):
    """Poses, masks or clips disagree with the skeleton they are applied to."""


@dataclass
class Joint:
    name: str
    parent: int  # -1 for the root
    rest_rotation: np.ndarray = field(default_factory=quat.identity)
    rest_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class Skeleton:
    """Topologically sorted joint list; joints[0] is the single root."""

    joints: list[Joint]

    def __post_init__(self):
        if not self.joints:
            raise ValueError("skeleton needs at least one joint")
        for i, j in enumerate(self.joints):
            if i == 0:
                if j.parent != -1:
                    raise ValueError("first joint must be the root (parent -1)")
            elif not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r} parent must precede it")
            n = math.sqrt(float(np.dot(j.rest_rotation, j.rest_rotation)))
            if abs(n - 1.0) > UNIT_NORM_TOL:
                raise ValueError(f"joint {j.name!r} rest rotation is not unit-norm")
        self._index = {j.name: i for i, j in enumerate(self.joints)}

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    def index_of(self, name: str) -> int:
        return self._index[name]

    def has_joint(self, name: str) -> bool:
        return name in self._index


@dataclass
class PoseFrame:
    """Per-joint local rotations (J, 4) wxyz plus root translation in meters."""

    rotations: np.ndarray
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "PoseFrame":
        return PoseFrame(self.rotations.copy(), self.root_translation.copy())

    @property
    def joint_count(self) -> int:
        return self.rotations.shape[0]


@dataclass
class AnimationClip:
    frames: list[PoseFrame]
    frame_rate: float
    loop: bool = False

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.frames) / self.frame_rate


def identity_pose(joint_count: int) -> PoseFrame:
    rots = np.zeros((joint_count, 4))
    rots[:, 0] = 1.0
    return PoseFrame(rots, np.zeros(3))


def interpolate_pose(a: PoseFrame, b: PoseFrame, t: float) -> PoseFrame:
    """Per-joint shortest-arc slerp, linear root translation.

    t=0 returns a and t=1 returns b exactly.
    """
    if a.rotations.shape != b.rotations.shape:
        raise SkeletonMismatch(
            f"pose joint counts differ: {a.joint_count} vs {b.joint_count}"
        )
    if t <= 0.0:
        return a.copy()
    if t >= 1.0:
        return b.copy()
    rots = np.empty_like(a.rotations)
    for j in range(a.joint_count):
        rots[j] = quat.slerp(a.rotations[j], b.rotations[j], t)
    root = (1.0 - t) * a.root_translation + t * b.root_translation
    return PoseFrame(rots, root)


def default_humanoid() -> Skeleton:
    """A 30-joint humanoid rig (y-up, meters) used by the shipped profiles."""
    joints: list[Joint] = []

    def add(name, parent_name, offset):
        parent = -1 if parent_name is None else names.index(parent_name)
        joints.append(Joint(name, parent, quat.identity(), np.array(offset, dtype=float)))
        names.append(name)

    names: list[str] = []
    add("Hips", None, (0.0, 0.95, 0.0))
    add("Spine", "Hips", (0.0, 0.10, 0.0))
    add("Chest", "Spine", (0.0, 0.15, 0.0))
    add("Neck", "Chest", (0.0, 0.20, 0.0))
    add("Head", "Neck", (0.0, 0.10, 0.0))
    add("Jaw", "Head", (0.0, 0.02, 0.05))
    for side, s in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}Shoulder", "Chest", (s * 0.05, 0.15, 0.0))
        add(f"{side}Arm", f"{side}Shoulder", (s * 0.12, 0.0, 0.0))
        add(f"{side}ForeArm", f"{side}Arm", (s * 0.26, 0.0, 0.0))
        add(f"{side}Hand", f"{side}ForeArm", (s * 0.25, 0.0, 0.0))
        add(f"{side}HandThumb", f"{side}Hand", (s * 0.03, 0.0, 0.03))
        add(f"{side}HandIndex", f"{side}Hand", (s * 0.09, 0.0, 0.02))
        add(f"{side}HandMiddle", f"{side}Hand", (s * 0.09, 0.0, 0.0))
        add(f"{side}HandRing", f"{side}Hand", (s * 0.085, 0.0, -0.02))
        add(f"{side}HandPinky", f"{side}Hand", (s * 0.075, 0.0, -0.035))
    for side, s in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}UpLeg", "Hips", (s * 0.09, -0.05, 0.0))
        add(f"{side}Leg", f"{side}UpLeg", (0.0, -0.40, 0.0))
        add(f"{side}Foot", f"{side}Leg", (0.0, -0.42, 0.0))
    return Skeleton(joints)
