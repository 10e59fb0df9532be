"""Config-file formats and the shipped default profiles.

Instrument profiles, device capacity profiles and viseme pose sets are all
plain line-based text so they can be diffed and edited. Profile names are
resolved against FUSION_PROFILE_PATH directories first, then the packaged
defaults, then treated as paths.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from . import quat
from .pose import (
    ChordShape,
    InstrumentProfile,
    PartialPose,
    SwingFallback,
    TableFallback,
)
from .session import DeviceProfile

PROFILE_PATH_ENV = "FUSION_PROFILE_PATH"

BUILTIN_PROFILES = ("guitar", "bass", "piano", "drums")
BUILTIN_DEVICES = ("quest1", "quest2")


class ProfileFormatError(Exception):
    pass


def _clean_lines(text: str):
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line


def _kv(tokens, line_no):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ProfileFormatError(f"line {line_no}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _euler_pose(parts, line_no) -> tuple[str, object]:
    if len(parts) != 4:
        raise ProfileFormatError(
            f"line {line_no}: pose lines need joint and 3 angles"
        )
    joint = parts[0]
    try:
        angles = [float(p) for p in parts[1:]]
    except ValueError:
        raise ProfileFormatError(f"line {line_no}: bad angle values")
    return joint, quat.from_euler("xyz", angles)


def parse_profile(text: str) -> InstrumentProfile:
    """Instrument profile format (angles in degrees, intrinsic XYZ):

        instrument guitar
        chord_window_s 0.030
        transition_s 0.050
        mask fingers
        mask_joints LeftHand RightHand
        fallback swing joint=LeftHand axis=z degrees_per_unit=1.8 reference_pitch=48
        fallback table default=perc
        piece kick RightFoot 25 0 0
        note 36 kick
        shape E
          pitches 40 44 47
          transition_s 0.060
          pose LeftHandIndex 0 0 -25
    """
    instrument = None
    chord_window = 0.030
    transition = 0.05
    mask_names: list[str] = []
    mask_joints: list[str] = []
    fallback_kind = None
    swing_args: dict[str, str] = {}
    table_default = None
    pieces: dict[str, PartialPose] = {}
    note_map: dict[int, str] = {}
    shapes: list[dict] = []
    cur_shape: dict | None = None

    for ln, line in _clean_lines(text):
        parts = line.split()
        key, rest = parts[0], parts[1:]
        if key == "shape":
            if len(rest) != 1:
                raise ProfileFormatError(f"line {ln}: shape needs exactly one id")
            cur_shape = {"id": rest[0], "pitches": [], "transition_s": None, "pose": {}}
            shapes.append(cur_shape)
        elif key == "pitches":
            if cur_shape is None:
                raise ProfileFormatError(f"line {ln}: pitches outside a shape block")
            try:
                cur_shape["pitches"] = [int(p) for p in rest]
            except ValueError:
                raise ProfileFormatError(f"line {ln}: bad pitch values")
        elif key == "pose":
            if cur_shape is None:
                raise ProfileFormatError(f"line {ln}: pose outside a shape block")
            joint, q = _euler_pose(rest, ln)
            cur_shape["pose"][joint] = q
        elif key == "transition_s" and cur_shape is not None:
            cur_shape["transition_s"] = float(rest[0])
        elif key == "instrument":
            instrument = rest[0]
        elif key == "chord_window_s":
            chord_window = float(rest[0])
        elif key == "transition_s":
            transition = float(rest[0])
        elif key == "mask":
            mask_names.extend(rest)
        elif key == "mask_joints":
            mask_joints.extend(rest)
        elif key == "fallback":
            if not rest:
                raise ProfileFormatError(f"line {ln}: fallback needs a kind")
            fallback_kind = rest[0]
            if fallback_kind == "swing":
                swing_args = _kv(rest[1:], ln)
            elif fallback_kind == "table":
                table_default = _kv(rest[1:], ln).get("default")
            else:
                raise ProfileFormatError(f"line {ln}: unknown fallback {fallback_kind!r}")
        elif key == "piece":
            if len(rest) < 1:
                raise ProfileFormatError(f"line {ln}: piece needs a name")
            name = rest[0]
            joint, q = _euler_pose(rest[1:], ln)
            pieces.setdefault(name, {})[joint] = q
        elif key == "note":
            if len(rest) != 2:
                raise ProfileFormatError(f"line {ln}: note needs pitch and piece")
            note_map[int(rest[0])] = rest[1]
        else:
            raise ProfileFormatError(f"line {ln}: unknown key {key!r}")

    if instrument is None:
        raise ProfileFormatError("profile declares no instrument")
    if fallback_kind == "swing":
        try:
            fallback = SwingFallback(
                joint=swing_args["joint"],
                axis=swing_args.get("axis", "z"),
                degrees_per_unit=float(swing_args.get("degrees_per_unit", "1.5")),
                reference_pitch=int(swing_args.get("reference_pitch", "60")),
            )
        except KeyError as exc:
            raise ProfileFormatError(f"swing fallback missing field {exc}")
    elif fallback_kind == "table":
        if table_default is None:
            raise ProfileFormatError("table fallback needs default=<piece>")
        try:
            fallback = TableFallback(pieces=pieces, note_map=note_map, default_piece=table_default)
        except ValueError as exc:
            raise ProfileFormatError(str(exc))
    else:
        raise ProfileFormatError("profile declares no fallback rule")

    shape_objs = []
    for s in shapes:
        if not s["pitches"]:
            raise ProfileFormatError(f"shape {s['id']!r} declares no pitches")
        shape_objs.append(
            ChordShape(
                id=s["id"],
                pitch_set=frozenset(s["pitches"]),
                pose=s["pose"],
                transition_s=s["transition_s"] if s["transition_s"] is not None else transition,
            )
        )
    try:
        return InstrumentProfile(
            instrument=instrument,
            shapes=shape_objs,
            fallback=fallback,
            mask_names=mask_names,
            mask_joints=mask_joints,
            chord_window_s=chord_window,
            fallback_transition_s=transition,
        )
    except ValueError as exc:
        raise ProfileFormatError(str(exc))


def parse_device_profile(text: str) -> DeviceProfile:
    """Device profile format:

        name quest2
        target_fps 72
        drop_threshold 22
        knee 22 72
        knee 30 55
        polygons 30000
        materials 6 14
    """
    name = None
    target_fps = None
    drop_threshold = None
    knees: list[tuple[int, float]] = []
    polygons = 30_000
    materials = (6, 14)
    for ln, line in _clean_lines(text):
        parts = line.split()
        key, rest = parts[0], parts[1:]
        try:
            if key == "name":
                name = rest[0]
            elif key == "target_fps":
                target_fps = float(rest[0])
            elif key == "drop_threshold":
                drop_threshold = int(rest[0])
            elif key == "knee":
                knees.append((int(rest[0]), float(rest[1])))
            elif key == "polygons":
                polygons = int(rest[0])
            elif key == "materials":
                materials = (int(rest[0]), int(rest[1]))
            else:
                raise ProfileFormatError(f"line {ln}: unknown key {key!r}")
        except (IndexError, ValueError):
            raise ProfileFormatError(f"line {ln}: bad values for {key!r}")
    if name is None or target_fps is None or drop_threshold is None:
        raise ProfileFormatError("device profile needs name, target_fps, drop_threshold")
    try:
        return DeviceProfile(
            name=name,
            target_fps=target_fps,
            drop_threshold_avatars=drop_threshold,
            curve=tuple(knees),
            polygon_budget=polygons,
            material_range=materials,
        )
    except ValueError as exc:
        raise ProfileFormatError(str(exc))


def parse_viseme_poses(text: str) -> dict[str, PartialPose]:
    """Viseme pose config: ``viseme <id> <joint> <x> <y> <z>`` lines."""
    poses: dict[str, PartialPose] = {}
    for ln, line in _clean_lines(text):
        parts = line.split()
        if parts[0] != "viseme":
            raise ProfileFormatError(f"line {ln}: unknown key {parts[0]!r}")
        if len(parts) != 6:
            raise ProfileFormatError(f"line {ln}: viseme needs id, joint and 3 angles")
        vid = parts[1]
        joint, q = _euler_pose(parts[2:], ln)
        poses.setdefault(vid, {})[joint] = q
    return poses


def _search_dirs() -> list[Path]:
    dirs = []
    env = os.environ.get(PROFILE_PATH_ENV, "")
    for part in env.split(os.pathsep):
        if part:
            dirs.append(Path(part))
    return dirs


def _packaged(sub: str, filename: str) -> str | None:
    ref = resources.files("midifusion").joinpath("data", sub, filename)
    if ref.is_file():
        return ref.read_text()
    return None


def _load_text(name_or_path: str, sub: str, suffix: str) -> str:
    p = Path(name_or_path)
    if p.suffix and p.is_file():
        return p.read_text()
    for d in _search_dirs():
        cand = d / f"{name_or_path}{suffix}"
        if cand.is_file():
            return cand.read_text()
    packaged = _packaged(sub, f"{name_or_path}{suffix}")
    if packaged is not None:
        return packaged
    if p.is_file():
        return p.read_text()
    raise FileNotFoundError(
        f"no {suffix} file for {name_or_path!r} (searched {PROFILE_PATH_ENV},"
        " packaged defaults, and the literal path)"
    )


def load_profile(name_or_path: str) -> InstrumentProfile:
    return parse_profile(_load_text(name_or_path, "profiles", ".profile"))


def load_device_profile(name_or_path: str) -> DeviceProfile:
    return parse_device_profile(_load_text(name_or_path, "devices", ".device"))


def load_viseme_poses(name_or_path: str = "default") -> dict[str, PartialPose]:
    return parse_viseme_poses(_load_text(name_or_path, "visemes", ".visemes"))
