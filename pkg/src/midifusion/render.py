"""Full pipeline glue: chord cues to a procedural pose layer, stack
assembly, and frame-by-frame rendering to a clip.

The performance source holds one cue per chord: ramp in from the previous
pose over the transition, hold the target from strike to release, then fade
back to neutral. Sampling exactly at a strike time returns the chord pose
verbatim.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

from .blend import (
    AvatarMask,
    Layer,
    LayerMode,
    LayerStack,
    blend,
    builtin_mask,
    full_mask,
)
from .bvh import parse_bvh
from .pose import (
    ChordEvent,
    InstrumentProfile,
    map_event_to_pose,
    parse_viseme_track,
    resolve_partial_pose,
    viseme_to_face_layer,
)
from .scheduler import chord_sustain_s
from .skeleton import AnimationClip, PoseFrame, Skeleton, identity_pose, interpolate_pose

RELEASE_FADE_S = 0.1


@dataclass
class ChordCue:
    attack_s: float
    strike_s: float
    release_s: float
    pose: PoseFrame


class ChordPoseSource:
    """Procedural layer source driven by compiled chord cues."""

    def __init__(self, skeleton: Skeleton, cues: list[ChordCue], fade_s: float = RELEASE_FADE_S):
        self._skeleton = skeleton
        self._cues = sorted(cues, key=lambda c: (c.attack_s, c.strike_s))
        self._attacks = [c.attack_s for c in self._cues]
        self._neutral = identity_pose(skeleton.joint_count)
        self._fade = fade_s

    def reference_pose(self) -> PoseFrame:
        return self._neutral.copy()

    def sample(self, t: float) -> PoseFrame:
        idx = bisect_right(self._attacks, t) - 1
        if idx < 0:
            return self._neutral.copy()
        cue = self._cues[idx]
        if t < cue.strike_s:
            prev = self._neutral
            if idx > 0 and self._cues[idx - 1].release_s >= cue.attack_s:
                prev = self._cues[idx - 1].pose
            span = cue.strike_s - cue.attack_s
            u = 1.0 if span <= 0 else (t - cue.attack_s) / span
            return interpolate_pose(prev, cue.pose, u)
        if t <= cue.release_s:
            return cue.pose.copy()
        if t <= cue.release_s + self._fade:
            u = (t - cue.release_s) / self._fade
            return interpolate_pose(cue.pose, self._neutral, u)
        return self._neutral.copy()


def build_chord_cues(
    skeleton: Skeleton, profile: InstrumentProfile, chords: list[ChordEvent]
) -> tuple[list[ChordCue], list[str]]:
    """Resolve chord targets onto the skeleton; unknown joint names are
    collected as diagnostics and skipped."""
    cues = []
    missing: set[str] = set()
    for chord in chords:
        partial, transition = map_event_to_pose(profile, chord)
        pose, absent = resolve_partial_pose(skeleton, partial)
        missing.update(absent)
        cues.append(
            ChordCue(
                attack_s=max(0.0, chord.onset_s - transition),
                strike_s=chord.onset_s,
                release_s=chord.onset_s + chord_sustain_s(profile, chord),
                pose=pose,
            )
        )
    return cues, sorted(missing)


def performance_layer(
    skeleton: Skeleton, profile: InstrumentProfile, chords: list[ChordEvent]
) -> tuple[Layer, list[str]]:
    cues, missing = build_chord_cues(skeleton, profile, chords)
    layer = Layer(
        source=ChordPoseSource(skeleton, cues),
        mask=profile.resolve_mask(skeleton),
        mode=LayerMode.OVERRIDE,
        weight=1.0,
    )
    return layer, missing


def render_duration_s(end_s: float, cues: list[ChordCue], fade_s: float = RELEASE_FADE_S) -> float:
    """Timeline end extended by the release fade of the last cue."""
    if not cues:
        return end_s
    return max(end_s, max(c.release_s for c in cues) + fade_s)


def render_clip(
    stack: LayerStack, skeleton: Skeleton, duration_s: float, fps: float
) -> AnimationClip:
    """Sample the blended stack at k/fps for ceil(duration * fps) frames."""
    frame_count = max(1, math.ceil(duration_s * fps))
    frames = [blend(stack, skeleton, k / fps) for k in range(frame_count)]
    return AnimationClip(frames=frames, frame_rate=fps, loop=False)


def _resolve_mask_arg(skeleton: Skeleton, spec: str) -> AvatarMask:
    from .blend import BUILTIN_MASK_NAMES, mask_from_joints

    if spec in BUILTIN_MASK_NAMES:
        return builtin_mask(skeleton, spec)
    return mask_from_joints(skeleton, spec.split(","))


def parse_layer_stack(
    text: str, base_dir: Path, skeleton: Skeleton, viseme_poses=None
) -> list[Layer]:
    """Layer-stack description: one layer per line, applied in order.

        layer clip=extra.bvh mask=arms mode=additive weight=0.5 offset=0.0 root=0 loop=1
        viseme track=song.vis mask=face weight=1.0

    Clip paths resolve relative to the stack file. Mask values are builtin
    mask names or comma-separated joint names.
    """
    layers: list[Layer] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, fields = parts[0], {}
        for tok in parts[1:]:
            if "=" not in tok:
                raise ValueError(f"stack line {ln}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        mask = _resolve_mask_arg(skeleton, fields.get("mask", "full_body"))
        weight = float(fields.get("weight", "1.0"))
        if kind == "layer":
            if "clip" not in fields:
                raise ValueError(f"stack line {ln}: layer needs clip=")
            clip_path = base_dir / fields["clip"]
            clip_skeleton, clip = parse_bvh(clip_path.read_text())
            if clip_skeleton.joint_count != skeleton.joint_count:
                raise ValueError(
                    f"stack line {ln}: clip rig has {clip_skeleton.joint_count}"
                    f" joints, base has {skeleton.joint_count}"
                )
            clip.loop = fields.get("loop", "0") == "1"
            layers.append(
                Layer(
                    source=clip,
                    mask=mask,
                    mode=LayerMode(fields.get("mode", "override")),
                    weight=weight,
                    time_offset_s=float(fields.get("offset", "0.0")),
                    affects_root=fields.get("root", "0") == "1",
                )
            )
        elif kind == "viseme":
            if "track" not in fields:
                raise ValueError(f"stack line {ln}: viseme needs track=")
            if viseme_poses is None:
                from .profiles import load_viseme_poses

                viseme_poses = load_viseme_poses(fields.get("poses", "default"))
            track = parse_viseme_track((base_dir / fields["track"]).read_text())
            layers.append(
                viseme_to_face_layer(track, mask, viseme_poses, skeleton, weight=weight)
            )
        else:
            raise ValueError(f"stack line {ln}: unknown entry kind {kind!r}")
    return layers


def build_stack(
    base_clip: AnimationClip,
    skeleton: Skeleton,
    extra_layers: list[Layer],
    perf_layer: Layer | None,
) -> LayerStack:
    base = Layer(
        source=base_clip,
        mask=full_mask(skeleton.joint_count),
        mode=LayerMode.OVERRIDE,
        weight=1.0,
        affects_root=True,
    )
    layers = list(extra_layers)
    if perf_layer is not None:
        layers.append(perf_layer)
    return LayerStack(base=base, layers=layers)
