"""Instrument profiles: mapping notes and chords to pose targets.

A profile declares chord shapes (pitch sets with hand poses), a total
per-pitch fallback rule, and the avatar mask its layer controls. Chord
detection groups a note timeline greedily by onset window and matches each
group to the shape with the largest pitch-class overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .blend import AvatarMask, Layer, LayerMode, builtin_mask, mask_from_joints
from .skeleton import PoseFrame, Skeleton, identity_pose, interpolate_pose  # noqa: F401  (interpolate_pose is part of this module's API)
from .smf import NoteEvent, NoteTimeline

INSTRUMENTS = ("guitar", "bass", "piano", "drums")

# shape ids for per-note fallback events
FALLBACK_PREFIX = "note:"

PartialPose = dict[str, np.ndarray]  # joint name -> local rotation quaternion


class ProfileMismatch(Exception):
    pass


class UnknownViseme(Exception):
    pass


@dataclass
class ChordShape:
    id: str
    pitch_set: frozenset[int]
    pose: PartialPose
    transition_s: float = 0.05

    def __post_init__(self):
        if not self.pitch_set:
            raise ValueError(f"shape {self.id!r} has an empty pitch set")

    @property
    def pitch_classes(self) -> frozenset[int]:
        return frozenset(p % 12 for p in self.pitch_set)


@dataclass
class SwingFallback:
    """Single-note rule: swing one joint about an axis, proportionally to
    the distance from a reference pitch (e.g. piano key spacing)."""

    joint: str
    axis: str = "z"
    degrees_per_unit: float = 1.5
    reference_pitch: int = 60

    def pose_for(self, pitch: int) -> PartialPose:
        ang = math.radians(self.degrees_per_unit * (pitch - self.reference_pitch))
        return {self.joint: quat.from_axis_angle(self.axis, ang)}


@dataclass
class TableFallback:
    """Single-note rule via a pitch lookup table (drum pieces)."""

    pieces: dict[str, PartialPose]
    note_map: dict[int, str]
    default_piece: str

    def __post_init__(self):
        if self.default_piece not in self.pieces:
            raise ValueError(f"default piece {self.default_piece!r} is not defined")
        for pitch, piece in self.note_map.items():
            if piece not in self.pieces:
                raise ValueError(f"pitch {pitch} maps to unknown piece {piece!r}")

    def piece_for(self, pitch: int) -> str:
        return self.note_map.get(pitch, self.default_piece)

    def pose_for(self, pitch: int) -> PartialPose:
        return dict(self.pieces[self.piece_for(pitch)])


@dataclass
class InstrumentProfile:
    instrument: str
    shapes: list[ChordShape] = field(default_factory=list)
    fallback: SwingFallback | TableFallback | None = None
    mask_names: list[str] = field(default_factory=list)
    mask_joints: list[str] = field(default_factory=list)
    chord_window_s: float = 0.030
    fallback_transition_s: float = 0.05

    def __post_init__(self):
        if self.instrument not in INSTRUMENTS:
            raise ValueError(f"unknown instrument {self.instrument!r}")
        if self.fallback is None:
            raise ValueError("profile needs a fallback rule")
        if self.chord_window_s <= 0:
            raise ValueError("chord_window_s must be positive")
        ids = [s.id for s in self.shapes]
        if len(set(ids)) != len(ids):
            raise ValueError("shape ids must be unique")
        self._shape_by_id = {s.id: s for s in self.shapes}

    def shape(self, shape_id: str) -> ChordShape | None:
        return self._shape_by_id.get(shape_id)

    def pose_joint_names(self) -> set[str]:
        names: set[str] = set()
        for s in self.shapes:
            names.update(s.pose)
        fb = self.fallback
        if isinstance(fb, SwingFallback):
            names.add(fb.joint)
        else:
            for pose in fb.pieces.values():
                names.update(pose)
        return names

    def resolve_mask(self, skeleton: Skeleton) -> AvatarMask:
        w = np.zeros(skeleton.joint_count)
        for name in self.mask_names:
            w = np.maximum(w, builtin_mask(skeleton, name).weights)
        if self.mask_joints:
            w = np.maximum(w, mask_from_joints(skeleton, self.mask_joints).weights)
        return AvatarMask(w)


@dataclass(frozen=True)
class ChordEvent:
    onset_s: float
    shape_id: str
    member_notes: tuple[NoteEvent, ...]
    peak_velocity: int


def detect_chords(timeline: NoteTimeline, profile: InstrumentProfile) -> list[ChordEvent]:
    """Greedy left-to-right grouping by the profile's onset window.

    Every note lands in exactly one event: matched groups become one chord
    event, unmatched groups fall back to one per-note event each.
    """
    groups: list[list[NoteEvent]] = []
    cur: list[NoteEvent] = []
    for n in timeline.notes:
        if cur and n.onset_s - cur[0].onset_s <= profile.chord_window_s:
            cur.append(n)
        else:
            if cur:
                groups.append(cur)
            cur = [n]
    if cur:
        groups.append(cur)

    events: list[ChordEvent] = []
    for g in groups:
        shape = _best_shape(profile, g)
        if shape is not None:
            events.append(
                ChordEvent(
                    onset_s=g[0].onset_s,
                    shape_id=shape.id,
                    member_notes=tuple(g),
                    peak_velocity=max(n.velocity for n in g),
                )
            )
        else:
            for n in g:
                events.append(
                    ChordEvent(
                        onset_s=n.onset_s,
                        shape_id=f"{FALLBACK_PREFIX}{n.pitch}",
                        member_notes=(n,),
                        peak_velocity=n.velocity,
                    )
                )
    return events


def _best_shape(profile: InstrumentProfile, group: list[NoteEvent]) -> ChordShape | None:
    pcs = {n.pitch % 12 for n in group}
    best = None
    best_overlap = 0
    for shape in sorted(profile.shapes, key=lambda s: s.id):
        overlap = len(pcs & shape.pitch_classes)
        if overlap > best_overlap:
            best, best_overlap = shape, overlap
    return best


def map_event_to_pose(
    profile: InstrumentProfile, ev: ChordEvent
) -> tuple[PartialPose, float]:
    """Resolve a chord event to its target pose and transition time.

    Total over pitches 0-127: unmatched events carry "note:<pitch>" ids and
    go through the fallback rule.
    """
    if ev.shape_id.startswith(FALLBACK_PREFIX):
        try:
            pitch = int(ev.shape_id[len(FALLBACK_PREFIX) :])
        except ValueError:
            raise ProfileMismatch(f"malformed fallback id {ev.shape_id!r}")
        if not 0 <= pitch <= 127:
            raise ProfileMismatch(f"pitch {pitch} out of range")
        return profile.fallback.pose_for(pitch), profile.fallback_transition_s
    shape = profile.shape(ev.shape_id)
    if shape is None:
        raise ProfileMismatch(f"shape {ev.shape_id!r} unknown to this profile")
    return dict(shape.pose), shape.transition_s


@dataclass
class VisemeTrack:
    """Keys of (time_s, viseme id, weight in [0, 1]), sorted by time."""

    keys: list[tuple[float, str, float]]

    def __post_init__(self):
        times = [k[0] for k in self.keys]
        if times != sorted(times):
            raise ValueError("viseme keys must be sorted by time")
        for t, vid, w in self.keys:
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"viseme weight {w} at {t} outside [0, 1]")


def parse_viseme_track(text: str) -> VisemeTrack:
    """One key per line: ``time_s viseme_id weight``."""
    keys = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad viseme key line: {raw!r}")
        keys.append((float(parts[0]), parts[1], float(parts[2])))
    return VisemeTrack(keys)


VISEME_RELEASE_S = 0.1


class VisemeSource:
    """Procedural face-delta stream with piecewise-linear weights.

    Weight ramps from an implicit zero anchor at t=0 to the first key and
    releases to zero over VISEME_RELEASE_S after the last key. Between keys
    the outgoing and incoming visemes crossfade.
    """

    def __init__(self, track: VisemeTrack, viseme_poses: dict[str, PartialPose], skeleton: Skeleton):
        for _, vid, _ in track.keys:
            if vid not in viseme_poses:
                raise UnknownViseme(f"viseme {vid!r} has no configured pose")
        self._skeleton = skeleton
        self._deltas = {
            vid: [(skeleton.index_of(j), q) for j, q in pose.items()]
            for vid, pose in viseme_poses.items()
        }
        anchors: list[tuple[float, str | None, float]] = []
        if not track.keys or track.keys[0][0] > 0.0:
            anchors.append((0.0, None, 0.0))
        anchors.extend(track.keys)
        if track.keys:
            anchors.append((track.keys[-1][0] + VISEME_RELEASE_S, None, 0.0))
        self._anchors = anchors

    def reference_pose(self) -> PoseFrame:
        return identity_pose(self._skeleton.joint_count)

    def sample(self, t: float) -> PoseFrame:
        pose = identity_pose(self._skeleton.joint_count)
        anchors = self._anchors
        if t <= anchors[0][0] or t >= anchors[-1][0]:
            return pose
        hi = 1
        while anchors[hi][0] < t:
            hi += 1
        t0, v0, w0 = anchors[hi - 1]
        t1, v1, w1 = anchors[hi]
        u = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
        for vid, contrib in ((v0, (1.0 - u) * w0), (v1, u * w1)):
            if vid is None or contrib <= 0.0:
                continue
            for j, dq in self._deltas[vid]:
                scaled = quat.slerp(quat.identity(), dq, contrib)
                pose.rotations[j] = quat.normalize(
                    quat.multiply(pose.rotations[j], scaled)
                )
        return pose


def viseme_to_face_layer(
    track: VisemeTrack,
    face_mask: AvatarMask,
    viseme_poses: dict[str, PartialPose],
    skeleton: Skeleton,
    weight: float = 1.0,
) -> Layer:
    """Additive face layer driven by a viseme track."""
    source = VisemeSource(track, viseme_poses, skeleton)
    return Layer(
        source=source,
        mask=face_mask,
        mode=LayerMode.ADDITIVE,
        weight=weight,
    )


def resolve_partial_pose(
    skeleton: Skeleton, partial: PartialPose
) -> tuple[PoseFrame, list[str]]:
    """Expand a joint-name pose onto a full identity frame.

    Names the skeleton lacks are returned, not raised, so callers can report
    them as diagnostics.
    """
    pose = identity_pose(skeleton.joint_count)
    missing = []
    for name, q in partial.items():
        if skeleton.has_joint(name):
            pose.rotations[skeleton.index_of(name)] = np.asarray(q, dtype=float)
        else:
            missing.append(name)
    return pose, missing
