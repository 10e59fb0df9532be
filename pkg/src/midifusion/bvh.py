"""BVH motion-capture text I/O.

Parsing accepts arbitrary per-joint rotation channel orders and converts to
quaternions; offsets and root positions are scaled into meters (default
assumes centimeter files). Export is fixed for bit-stable output: ZXY
rotation channels, offsets in centimeters, 6-decimal numbers, 2-space
indentation. BVH has no rest rotation, so exported skeletons keep their
frame rotations as-is and parse back with identity rests.
"""

from __future__ import annotations

from collections import Counter, defaultdict

import numpy as np

from . import quat
from .skeleton import AnimationClip, Joint, PoseFrame, Skeleton, SkeletonMismatch


class BvhError(Exception):
    pass


class MalformedHierarchy(BvhError):
    pass


class ChannelCountMismatch(BvhError):
    pass


class FrameCountMismatch(BvhError):
    pass


class DuplicateTargetName(BvhError):
    pass


_POSITION_AXES = {"Xposition": 0, "Yposition": 1, "Zposition": 2}
_ROTATION_AXES = {"Xrotation": "x", "Yrotation": "y", "Zrotation": "z"}


def parse_bvh(text: str, scale: float = 0.01) -> tuple[Skeleton, AnimationClip]:
    """Parse BVH text into a skeleton and clip.

    scale converts file units into meters (0.01 for centimeter files).
    Near-integer frame rates are snapped so integer rates survive the
    6-decimal Frame Time field exactly.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != "HIERARCHY":
        raise MalformedHierarchy("file must begin with HIERARCHY")

    names: list[str] = []
    parents: list[int] = []
    offsets: list[np.ndarray | None] = []
    channel_lists: list[list[str] | None] = []
    stack: list[int] = []
    i = 1
    while i < len(lines) and lines[i] != "MOTION":
        ln = lines[i]
        if ln.startswith("ROOT ") or ln.startswith("JOINT "):
            keyword, name = ln.split(None, 1)
            name = name.strip()
            if keyword == "ROOT" and names:
                raise MalformedHierarchy("multiple ROOT declarations")
            if keyword == "JOINT" and not stack:
                raise MalformedHierarchy("JOINT outside of a ROOT block")
            parent = stack[-1] if stack else -1
            idx = len(names)
            names.append(name)
            parents.append(parent)
            offsets.append(None)
            channel_lists.append(None)
            i += 1
            if i >= len(lines) or lines[i] != "{":
                raise MalformedHierarchy(f"expected '{{' after joint {name!r}")
            stack.append(idx)
            i += 1
        elif ln == "End Site":
            i += 1
            if i >= len(lines) or lines[i] != "{":
                raise MalformedHierarchy("expected '{' after End Site")
            i += 1
            if i >= len(lines) or not lines[i].startswith("OFFSET"):
                raise MalformedHierarchy("End Site must contain an OFFSET")
            i += 1
            if i >= len(lines) or lines[i] != "}":
                raise MalformedHierarchy("End Site must contain only an OFFSET")
            i += 1
        elif ln.startswith("OFFSET"):
            parts = ln.split()
            if len(parts) != 4:
                raise MalformedHierarchy("OFFSET needs exactly 3 values")
            if not stack:
                raise MalformedHierarchy("OFFSET outside of a joint block")
            try:
                vals = [float(p) for p in parts[1:]]
            except ValueError:
                raise MalformedHierarchy(f"bad OFFSET values: {ln!r}")
            offsets[stack[-1]] = np.array(vals) * scale
            i += 1
        elif ln.startswith("CHANNELS"):
            parts = ln.split()
            if len(parts) < 2:
                raise ChannelCountMismatch("CHANNELS line missing count")
            try:
                count = int(parts[1])
            except ValueError:
                raise ChannelCountMismatch(f"bad channel count in {ln!r}")
            chans = parts[2:]
            if count != len(chans):
                raise ChannelCountMismatch(
                    f"declared {count} channels, listed {len(chans)}"
                )
            if count not in (3, 6):
                raise ChannelCountMismatch(f"only 3 or 6 channels supported, got {count}")
            for ch in chans:
                if ch not in _POSITION_AXES and ch not in _ROTATION_AXES:
                    raise ChannelCountMismatch(f"unknown channel {ch!r}")
            if not stack:
                raise MalformedHierarchy("CHANNELS outside of a joint block")
            channel_lists[stack[-1]] = chans
            i += 1
        elif ln == "}":
            if not stack:
                raise MalformedHierarchy("unbalanced '}'")
            stack.pop()
            i += 1
        else:
            raise MalformedHierarchy(f"unexpected line: {ln!r}")
    if stack:
        raise MalformedHierarchy("unbalanced braces in hierarchy")
    if not names:
        raise MalformedHierarchy("hierarchy declares no joints")
    for idx, name in enumerate(names):
        if offsets[idx] is None:
            raise MalformedHierarchy(f"joint {name!r} has no OFFSET")
        if channel_lists[idx] is None:
            raise ChannelCountMismatch(f"joint {name!r} has no CHANNELS")

    if i >= len(lines) or lines[i] != "MOTION":
        raise MalformedHierarchy("missing MOTION section")
    i += 1
    if i >= len(lines) or not lines[i].startswith("Frames:"):
        raise MalformedHierarchy("missing Frames: line")
    try:
        frame_count = int(lines[i].split(":", 1)[1])
    except ValueError:
        raise MalformedHierarchy("bad Frames: line")
    i += 1
    if i >= len(lines) or not lines[i].startswith("Frame Time:"):
        raise MalformedHierarchy("missing Frame Time: line")
    try:
        frame_time = float(lines[i].split(":", 1)[1])
    except ValueError:
        raise MalformedHierarchy("bad Frame Time: line")
    i += 1
    if frame_time <= 0:
        raise MalformedHierarchy("Frame Time must be positive")
    frame_rate = 1.0 / frame_time
    snapped = round(frame_rate)
    if snapped > 0 and abs(frame_rate - snapped) <= 1e-3 * snapped:
        frame_rate = float(snapped)

    frame_lines = lines[i:]
    if len(frame_lines) != frame_count:
        raise FrameCountMismatch(
            f"declared {frame_count} frames, found {len(frame_lines)}"
        )
    values_per_frame = sum(len(ch) for ch in channel_lists)

    joint_count = len(names)
    frames: list[PoseFrame] = []
    for fi, raw in enumerate(frame_lines):
        try:
            vals = [float(v) for v in raw.split()]
        except ValueError:
            raise FrameCountMismatch(f"frame {fi} has non-numeric values")
        if len(vals) != values_per_frame:
            raise FrameCountMismatch(
                f"frame {fi} has {len(vals)} values, expected {values_per_frame}"
            )
        rots = np.zeros((joint_count, 4))
        root = np.zeros(3)
        cursor = 0
        for j in range(joint_count):
            chans = channel_lists[j]
            order = ""
            angles = []
            for ch in chans:
                v = vals[cursor]
                cursor += 1
                if ch in _POSITION_AXES:
                    if j == 0:
                        root[_POSITION_AXES[ch]] = v * scale
                    # positions on non-root joints are consumed and ignored
                else:
                    order += _ROTATION_AXES[ch]
                    angles.append(v)
            rots[j] = quat.from_euler(order, angles) if order else quat.identity()
        frames.append(PoseFrame(rots, root))

    joints = [
        Joint(names[j], parents[j], quat.identity(), offsets[j])
        for j in range(joint_count)
    ]
    skeleton = Skeleton(joints)
    clip = AnimationClip(frames=frames, frame_rate=frame_rate, loop=False)
    return skeleton, clip


def _fmt(v: float) -> str:
    return f"{v + 0.0:.6f}"  # + 0.0 folds -0.0 into 0.0


def export_bvh(skeleton: Skeleton, clip: AnimationClip) -> str:
    """Emit BVH text: ZXY rotations, centimeter offsets, 6-decimal values."""
    for frame in clip.frames:
        if frame.joint_count != skeleton.joint_count:
            raise SkeletonMismatch("clip frames do not match skeleton joint count")

    children: dict[int, list[int]] = defaultdict(list)
    for idx, joint in enumerate(skeleton.joints):
        if joint.parent >= 0:
            children[joint.parent].append(idx)

    out: list[str] = ["HIERARCHY"]

    def emit(idx: int, depth: int, keyword: str):
        pad = "  " * depth
        joint = skeleton.joints[idx]
        off = joint.rest_offset * 100.0
        out.append(f"{pad}{keyword} {joint.name}")
        out.append(pad + "{")
        out.append(f"{pad}  OFFSET {_fmt(off[0])} {_fmt(off[1])} {_fmt(off[2])}")
        if idx == 0:
            out.append(
                f"{pad}  CHANNELS 6 Xposition Yposition Zposition"
                " Zrotation Xrotation Yrotation"
            )
        else:
            out.append(f"{pad}  CHANNELS 3 Zrotation Xrotation Yrotation")
        kids = children.get(idx, [])
        if kids:
            for k in kids:
                emit(k, depth + 1, "JOINT")
        else:
            out.append(pad + "  End Site")
            out.append(pad + "  {")
            out.append(pad + "    OFFSET 0.000000 0.000000 0.000000")
            out.append(pad + "  }")
        out.append(pad + "}")

    emit(0, 0, "ROOT")
    out.append("MOTION")
    out.append(f"Frames: {len(clip.frames)}")
    out.append(f"Frame Time: {1.0 / clip.frame_rate:.6f}")
    for frame in clip.frames:
        vals: list[str] = []
        tr = frame.root_translation * 100.0
        vals.extend(_fmt(v) for v in tr)
        for j in range(skeleton.joint_count):
            z, x, y = quat.to_euler_zxy(frame.rotations[j])
            vals.extend((_fmt(z), _fmt(x), _fmt(y)))
        out.append(" ".join(vals))
    return "\n".join(out) + "\n"


def map_joint_names(skeleton: Skeleton, name_map: dict[str, str]) -> Skeleton:
    """Rename joints; unmapped names pass through, structure is untouched."""
    new_names = [name_map.get(j.name, j.name) for j in skeleton.joints]
    dupes = sorted(n for n, c in Counter(new_names).items() if c > 1)
    if dupes:
        raise DuplicateTargetName(f"duplicate joint names after mapping: {dupes}")
    joints = [
        Joint(new, j.parent, j.rest_rotation.copy(), j.rest_offset.copy())
        for new, j in zip(new_names, skeleton.joints)
    ]
    return Skeleton(joints)
