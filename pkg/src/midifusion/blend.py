"""Masked animation layer compositing.

A stack starts from a full-body base layer and applies further layers in
list order. Override layers pull joints toward the layer pose, additive
layers compose a delta relative to the layer source's reference pose; both
are scaled per joint by mask weight times layer weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import quat
from .skeleton import (
    AnimationClip,
    PoseFrame,
    Skeleton,
    SkeletonMismatch,
    identity_pose,
    interpolate_pose,
)


class BlendError(Exception):
    pass


class EmptyClip(BlendError):
    pass


class LayerMode(Enum):
    OVERRIDE = "override"
    ADDITIVE = "additive"


@dataclass
class AvatarMask:
    """Per-joint scalar weights, clamped into [0, 1]."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.clip(np.asarray(self.weights, dtype=float), 0.0, 1.0)


def full_mask(joint_count: int) -> AvatarMask:
    return AvatarMask(np.ones(joint_count))


def mask_from_joints(skeleton: Skeleton, names, weight: float = 1.0) -> AvatarMask:
    w = np.zeros(skeleton.joint_count)
    for name in names:
        w[skeleton.index_of(name)] = weight
    return AvatarMask(w)


# name -> predicate over joint names
_BUILTIN_MASKS = {
    "full_body": lambda n: True,
    "arms": lambda n: any(k in n for k in ("Shoulder", "Arm", "ForeArm", "Hand")),
    "hands": lambda n: "Hand" in n,
    "fingers": lambda n: any(
        k in n for k in ("HandThumb", "HandIndex", "HandMiddle", "HandRing", "HandPinky")
    ),
    "head": lambda n: any(k in n for k in ("Neck", "Head", "Jaw")),
    "face": lambda n: "Jaw" in n,
    "legs": lambda n: any(k in n for k in ("UpLeg", "Leg", "Foot")),
    "upper_body": lambda n: any(
        k in n
        for k in ("Spine", "Chest", "Neck", "Head", "Jaw", "Shoulder", "Arm", "Hand")
    ),
    "lower_body": lambda n: any(k in n for k in ("Hips", "UpLeg", "Leg", "Foot")),
}

BUILTIN_MASK_NAMES = tuple(sorted(_BUILTIN_MASKS))


def builtin_mask(skeleton: Skeleton, name: str) -> AvatarMask:
    try:
        pred = _BUILTIN_MASKS[name]
    except KeyError:
        raise KeyError(f"unknown mask name {name!r}; known: {BUILTIN_MASK_NAMES}")
    return AvatarMask(np.array([1.0 if pred(n) else 0.0 for n in skeleton.names]))


@dataclass
class Layer:
    """One animation source plus where and how strongly it applies.

    source is an AnimationClip or any object with sample(t) -> PoseFrame and
    reference_pose() -> PoseFrame. Root translation only participates when
    affects_root is set, so performance layers cannot move the avatar.
    """

    source: object
    mask: AvatarMask
    mode: LayerMode = LayerMode.OVERRIDE
    weight: float = 1.0
    time_offset_s: float = 0.0
    affects_root: bool = False


@dataclass
class LayerStack:
    base: Layer
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not np.all(self.base.mask.weights == 1.0):
            raise ValueError("base layer mask must be all ones")


def sample_clip(clip: AnimationClip, t: float) -> PoseFrame:
    """Sample with linear inter-frame interpolation.

    Looping clips wrap modulo their duration (last frame blends back into
    the first); non-looping clips clamp to the first/last frame.
    """
    frames = clip.frames
    if not frames:
        raise EmptyClip("clip has no frames")
    n = len(frames)
    if n == 1:
        return frames[0].copy()
    if clip.loop:
        duration = n / clip.frame_rate
        x = (t % duration) * clip.frame_rate
        i0 = int(math.floor(x)) % n
        i1 = (i0 + 1) % n
        u = x - math.floor(x)
    else:
        x = t * clip.frame_rate
        if x <= 0.0:
            return frames[0].copy()
        if x >= n - 1:
            return frames[-1].copy()
        i0 = int(math.floor(x))
        i1 = i0 + 1
        u = x - i0
    return interpolate_pose(frames[i0], frames[i1], u)


def evaluate_layer(layer: Layer, t: float) -> PoseFrame:
    """Pose of a layer's source at t + time_offset_s."""
    tt = t + layer.time_offset_s
    src = layer.source
    if isinstance(src, AnimationClip):
        return sample_clip(src, tt)
    return src.sample(tt)


def layer_reference_pose(layer: Layer) -> PoseFrame:
    """Additive delta basis: a clip's own first frame, or the source's
    declared reference for procedural streams."""
    src = layer.source
    if isinstance(src, AnimationClip):
        if not src.frames:
            raise EmptyClip("clip has no frames")
        return src.frames[0]
    return src.reference_pose()


def blend(stack: LayerStack, skeleton: Skeleton, t: float) -> PoseFrame:
    """Evaluate the stack at time t against the given skeleton."""
    n = skeleton.joint_count
    result = evaluate_layer(stack.base, t)
    if result.joint_count != n:
        raise SkeletonMismatch("base layer pose does not match skeleton")
    result = result.copy()
    for layer in stack.layers:
        mw = layer.mask.weights
        if len(mw) != n:
            raise SkeletonMismatch("layer mask size does not match skeleton")
        lw = layer.weight
        if lw <= 0.0:
            continue
        pose = evaluate_layer(layer, t)
        if pose.joint_count != n:
            raise SkeletonMismatch("layer pose does not match skeleton")
        if layer.mode is LayerMode.OVERRIDE:
            for j in range(n):
                f = mw[j] * lw
                if f > 0.0:
                    result.rotations[j] = quat.slerp(
                        result.rotations[j], pose.rotations[j], f
                    )
            if layer.affects_root:
                fr = mw[0] * lw
                result.root_translation = (
                    (1.0 - fr) * result.root_translation + fr * pose.root_translation
                )
        elif layer.mode is LayerMode.ADDITIVE:
            ref = layer_reference_pose(layer)
            if ref.joint_count != n:
                raise SkeletonMismatch("additive reference pose does not match skeleton")
            for j in range(n):
                f = mw[j] * lw
                if f > 0.0:
                    delta = quat.multiply(
                        quat.conjugate(ref.rotations[j]), pose.rotations[j]
                    )
                    scaled = quat.slerp(quat.identity(), delta, f)
                    result.rotations[j] = quat.normalize(
                        quat.multiply(result.rotations[j], scaled)
                    )
            if layer.affects_root:
                fr = mw[0] * lw
                result.root_translation = result.root_translation + fr * (
                    pose.root_translation - ref.root_translation
                )
        else:
            raise ValueError(f"unknown layer mode {layer.mode!r}")
    return result


@dataclass
class StackDiagnostics:
    override_conflicts: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    unmapped_joints: list[str] = field(default_factory=list)
    size_mismatches: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.override_conflicts or self.unmapped_joints or self.size_mismatches)


def validate_stack(stack: LayerStack, skeleton: Skeleton) -> StackDiagnostics:
    """Report-only checks: joints claimed by several full-weight override
    layers, joints no layer touches, and mask size mismatches."""
    n = skeleton.joint_count
    diags = StackDiagnostics()
    indexed = [(-1, stack.base)] + list(enumerate(stack.layers))
    usable = []
    for idx, layer in indexed:
        if len(layer.mask.weights) != n:
            diags.size_mismatches.append((idx, len(layer.mask.weights), n))
        else:
            usable.append((idx, layer))
    for j, name in enumerate(skeleton.names):
        full = [
            idx
            for idx, layer in usable
            if idx >= 0
            and layer.mode is LayerMode.OVERRIDE
            and layer.weight * layer.mask.weights[j] >= 1.0
        ]
        if len(full) > 1:
            diags.override_conflicts.append((name, tuple(full)))
        touched = any(
            layer.weight * layer.mask.weights[j] > 0.0 for _, layer in usable
        )
        if not touched:
            diags.unmapped_joints.append(name)
    return diags
