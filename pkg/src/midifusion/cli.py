"""Command-line front door for the whole pipeline.

Subcommands: inspect-midi, notes, compile, render, bench, sim, replay,
validate-profile. All outputs are plain text without timestamps so reruns
are byte-identical; files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import blend, bvh, pose, profiles, render, scheduler, session, smf
from .skeleton import SkeletonMismatch, default_humanoid

_ERROR_TYPES = (
    smf.SmfError,
    bvh.BvhError,
    blend.BlendError,
    pose.ProfileMismatch,
    pose.UnknownViseme,
    session.SessionError,
    profiles.ProfileFormatError,
    SkeletonMismatch,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    KeyError,
)


def _write_output(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=".tmp-", suffix=target.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_channels(value: str | None) -> set[int] | None:
    if value is None:
        return None
    chans = {int(v) for v in value.split(",")}
    for c in chans:
        if not 0 <= c <= 15:
            raise ValueError(f"channel {c} outside 0-15")
    return chans


def _load_midi(path: str):
    data = Path(path).read_bytes()
    header, tracks = smf.parse_smf(data)
    tempo_map = smf.build_tempo_map(header, tracks)
    return header, tracks, tempo_map


def _cmd_inspect_midi(args) -> str:
    header, tracks, tempo_map = _load_midi(args.file)
    timeline = smf.extract_notes(header, tracks, tempo_map)
    out = [
        f"format\t{header.format}",
        f"tracks\t{header.track_count}",
        f"division\t{header.division}",
    ]
    for tick, tempo in tempo_map.segments:
        out.append(f"tempo\t{tick}\t{tempo}")
    out.append(f"notes\t{len(timeline.notes)}")
    out.append(f"end_s\t{timeline.end_s:.6f}")
    d = timeline.diagnostics
    out.append(f"diag_ignored_tempo_events\t{tempo_map.ignored_tempo_events}")
    out.append(f"diag_zero_duration_dropped\t{d.zero_duration_dropped}")
    out.append(f"diag_unterminated_closed\t{d.unterminated_closed}")
    out.append(f"diag_orphan_note_offs\t{d.orphan_note_offs}")
    return "".join(ln + "\n" for ln in out)


def _cmd_notes(args) -> str:
    header, tracks, tempo_map = _load_midi(args.file)
    timeline = smf.extract_notes(
        header, tracks, tempo_map, channel_filter=_parse_channels(args.channel)
    )
    lines = [
        f"{n.onset_s:.6f}\t{n.duration_s:.6f}\t{n.pitch}\t{n.velocity}\t{n.channel}\t{n.track}"
        for n in timeline.notes
    ]
    return "".join(ln + "\n" for ln in lines)


def _cmd_compile(args) -> str:
    header, tracks, tempo_map = _load_midi(args.file)
    timeline = smf.extract_notes(
        header, tracks, tempo_map, channel_filter=_parse_channels(args.channel)
    )
    profile = profiles.load_profile(args.profile)
    chords = pose.detect_chords(timeline, profile)
    compiled = scheduler.compile_events(chords, profile)
    return scheduler.format_event_timeline(compiled)


def _cmd_render(args) -> str:
    header, tracks, tempo_map = _load_midi(args.file)
    timeline = smf.extract_notes(
        header, tracks, tempo_map, channel_filter=_parse_channels(args.channel)
    )
    profile = profiles.load_profile(args.profile)
    chords = pose.detect_chords(timeline, profile)

    base_path = Path(args.base)
    skeleton, base_clip = bvh.parse_bvh(base_path.read_text())
    base_clip.loop = True  # the mocap base idles under the whole performance

    extra = []
    if args.layers:
        stack_path = Path(args.layers)
        extra = render.parse_layer_stack(stack_path.read_text(), stack_path.parent, skeleton)
    perf, missing = render.performance_layer(skeleton, profile, chords)
    for name in missing:
        print(f"warning: profile joint {name!r} not in base rig", file=sys.stderr)

    stack = render.build_stack(base_clip, skeleton, extra, perf)
    diags = blend.validate_stack(stack, skeleton)
    for joint, idxs in diags.override_conflicts:
        print(f"warning: joint {joint!r} fully overridden by layers {idxs}", file=sys.stderr)

    cues, _ = render.build_chord_cues(skeleton, profile, chords)
    duration = render.render_duration_s(timeline.end_s, cues)
    clip = render.render_clip(stack, skeleton, duration, args.fps)
    return bvh.export_bvh(skeleton, clip)


def _cmd_bench(args) -> str:
    device = profiles.load_device_profile(args.device)
    floor = args.floor if args.floor is not None else device.target_fps
    out = [
        f"device\t{device.name}",
        f"target_fps\t{device.target_fps:.6f}",
        f"floor\t{floor:.6f}",
        f"polygon_budget\t{device.polygon_budget}",
        f"materials\t{device.material_range[0]}\t{device.material_range[1]}",
    ]
    for count in range(device.max_modelled_avatars + 1):
        out.append(f"fps\t{count}\t{session.capacity_fps(device, count):.6f}")
    out.append(f"max_avatars\t{session.max_avatars_at(device, floor)}")
    return "".join(ln + "\n" for ln in out)


def _cmd_sim(args) -> str:
    config = session.SessionConfig(
        agents=args.agents,
        seed=args.seed,
        dt_s=args.dt,
        duration_s=args.duration,
        device=args.device,
        npc_count=args.npc,
        comm_quality_mode=args.comm_quality,
    )
    device = profiles.load_device_profile(args.device)
    injected = []
    if args.inject:
        injected = [
            ev
            for ev in session.parse_log(Path(args.inject).read_text())
            if ev.kind in session.INJECTABLE_KINDS
        ]
    state = session.run_session(config, device, injected)
    return session.format_log(state.event_log)


def _cmd_replay(args) -> str:
    state = session.replay(
        Path(args.log).read_text(), device_loader=profiles.load_device_profile
    )
    out = [
        f"time_s\t{state.time_s:.6f}",
        f"agents\t{len(state.agents)}",
        f"events\t{len(state.event_log)}",
        f"saluted_pairs\t{len(state.saluted_pairs) // 2}",
    ]
    for a in state.agents:
        out.append(
            f"agent\t{a.id}\tx={a.x:.6f}\ty={a.y:.6f}"
            f"\texcitement={a.excitement:.6f}\tspeaking={int(a.speaking)}"
            f"\tleave_s={a.planned_leave_s:.6f}"
        )
    return "".join(ln + "\n" for ln in out)


def _cmd_validate_profile(args) -> str:
    profile = profiles.load_profile(args.profile)
    skeleton = default_humanoid()
    out = [f"instrument\t{profile.instrument}", f"shapes\t{len(profile.shapes)}"]
    problems = []

    for pitch in range(128):
        ev = pose.ChordEvent(0.0, f"{pose.FALLBACK_PREFIX}{pitch}", (), pitch or 1)
        try:
            pose.map_event_to_pose(profile, ev)
        except Exception as exc:  # totality check wants every failure listed
            problems.append(f"pitch {pitch}: {exc}")

    mask = profile.resolve_mask(skeleton)
    masked = {skeleton.names[i] for i, w in enumerate(mask.weights) if w > 0}
    for name in sorted(profile.pose_joint_names()):
        if not skeleton.has_joint(name):
            problems.append(f"joint {name!r} not in the default rig")
        elif name not in masked:
            problems.append(f"joint {name!r} posed but outside the profile mask")

    out.append(f"mask_joints\t{len(masked)}")
    if problems:
        out.extend(f"problem\t{p}" for p in problems)
        out.append("status\tinvalid")
    else:
        out.append("status\tok")
    return "".join(ln + "\n" for ln in out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="midifusion",
        description="MIDI to avatar animation pipeline and session simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect-midi", help="header, tempo map and diagnostics")
    p.add_argument("file")
    p.set_defaults(func=_cmd_inspect_midi)

    p = sub.add_parser("notes", help="tempo-resolved note timeline as TSV")
    p.add_argument("file")
    p.add_argument("--channel", help="comma-separated channel filter (0-15)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_notes)

    p = sub.add_parser("compile", help="compile notes into an animation event timeline")
    p.add_argument("file")
    p.add_argument("--profile", required=True)
    p.add_argument("--channel")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("render", help="full pass: MIDI + base mocap to fused BVH")
    p.add_argument("file")
    p.add_argument("--profile", required=True)
    p.add_argument("--base", required=True, help="base mocap clip (.bvh)")
    p.add_argument("--layers", help="extra layer stack description file")
    p.add_argument("--channel")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("bench", help="device capacity table and max avatar count")
    p.add_argument("--device", required=True)
    p.add_argument("--floor", type=float, help="fps floor (default: device target)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("sim", help="run a deterministic session, emit its event log")
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--device", default="quest2")
    p.add_argument("--npc", type=int, default=0)
    p.add_argument("--comm-quality", action="store_true")
    p.add_argument("--inject", help="event log whose note/speak lines are injected")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("replay", help="rebuild the final state from an event log")
    p.add_argument("log")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("validate-profile", help="profile totality and mask checks")
    p.add_argument("profile")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_validate_profile)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
        _write_output(getattr(args, "output", None), text)
    except _ERROR_TYPES as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
