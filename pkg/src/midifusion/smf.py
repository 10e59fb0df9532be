"""Standard MIDI File reading and tempo-resolved note extraction.

Covers the SMF 1.0 features the animation pipeline needs: MThd/MTrk chunk
framing with big-endian lengths, variable-length delta times, running
status, Set Tempo (0x51) and End of Track (0x2F) meta events. Everything
else (other metas, sysex, non-note channel messages) is decoded far enough
to skip it exactly.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from enum import Enum


class SmfError(Exception):
    """Base error for malformed or unsupported SMF input."""


class BadMagic(SmfError):
    pass


class TruncatedInput(SmfError):
    pass


class TruncatedChunk(SmfError):
    pass


class VlqOverrun(SmfError):
    pass


class SmpteDivisionUnsupported(SmfError):
    pass


class DanglingRunningStatus(SmfError):
    pass


class StructureError(SmfError):
    pass


DEFAULT_TEMPO_US = 500_000
META_SET_TEMPO = 0x51
META_END_OF_TRACK = 0x2F


class EventKind(Enum):
    NOTE_ON = "note_on"
    NOTE_OFF = "note_off"
    META = "meta"
    OTHER_CHANNEL = "other_channel"
    SYSEX = "sysex"


@dataclass(frozen=True)
class SmfHeader:
    format: int
    track_count: int
    division: int  # ticks per quarter note


@dataclass(frozen=True)
class RawTrackEvent:
    delta_ticks: int
    kind: EventKind
    channel: int | None = None  # channel kinds only
    data: bytes = b""
    meta_type: int | None = None

    @property
    def pitch(self) -> int:
        return self.data[0]

    @property
    def velocity(self) -> int:
        return self.data[1]


@dataclass(frozen=True)
class TempoMap:
    """Ordered (start_tick, microseconds per quarter note) segments.

    The first segment always starts at tick 0; a default of 500000 us/qn is
    inserted when the file sets no tempo there.
    """

    segments: tuple[tuple[int, int], ...]
    ignored_tempo_events: int = field(default=0, compare=False)


@dataclass(frozen=True)
class NoteEvent:
    onset_s: float
    duration_s: float
    pitch: int
    velocity: int
    channel: int
    track: int


@dataclass
class NoteDiagnostics:
    zero_duration_dropped: int = 0
    unterminated_closed: int = 0
    orphan_note_offs: int = 0


@dataclass
class NoteTimeline:
    """Note events sorted by (onset_s, track, pitch); end_s covers all tracks."""

    notes: list[NoteEvent]
    end_s: float
    diagnostics: NoteDiagnostics = field(default_factory=NoteDiagnostics, compare=False)


def decode_vlq(data, offset: int = 0) -> tuple[int, int]:
    """Decode a variable-length quantity; returns (value, bytes consumed).

    At most 4 bytes are read, so values stay below 2**28.
    """
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise TruncatedInput("input ends inside a variable-length quantity")
        b = data[offset + i]
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i + 1
    raise VlqOverrun("variable-length quantity runs past 4 bytes")


def parse_smf(data: bytes) -> tuple[SmfHeader, list[list[RawTrackEvent]]]:
    """Parse SMF bytes into a header and per-track event lists.

    Running status is honored, note-ons with velocity 0 are normalized to
    note-offs, and unknown chunk types are skipped by their declared length.
    """
    if len(data) < 4 or data[:4] != b"MThd":
        raise BadMagic("expected MThd chunk tag")
    if len(data) < 8:
        raise TruncatedChunk("header chunk truncated")
    (length,) = struct.unpack(">I", data[4:8])
    if length < 6:
        raise StructureError(f"MThd length {length} < 6")
    if len(data) < 8 + length:
        raise TruncatedChunk("header chunk truncated")
    fmt, track_count, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1, 2):
        raise StructureError(f"unknown SMF format {fmt}")
    if track_count < 1:
        raise StructureError("track count must be positive")
    if fmt == 0 and track_count != 1:
        raise StructureError("format 0 requires exactly one track")
    if division & 0x8000:
        raise SmpteDivisionUnsupported("SMPTE time division is not supported")
    if division == 0:
        raise StructureError("division must be positive")
    header = SmfHeader(fmt, track_count, division)

    tracks: list[list[RawTrackEvent]] = []
    pos = 8 + length
    while len(tracks) < track_count:
        if pos + 8 > len(data):
            raise StructureError(
                f"declared {track_count} tracks, found {len(tracks)}"
            )
        tag = data[pos : pos + 4]
        (chunk_len,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        body_start = pos + 8
        if body_start + chunk_len > len(data):
            raise TruncatedChunk(f"chunk {tag!r} truncated")
        if tag == b"MTrk":
            tracks.append(_parse_track(data[body_start : body_start + chunk_len]))
        pos = body_start + chunk_len
    return header, tracks


def _parse_track(body: bytes) -> list[RawTrackEvent]:
    events: list[RawTrackEvent] = []
    pos = 0
    running_status: int | None = None
    while True:
        if pos >= len(body):
            raise StructureError("track ended without end-of-track meta event")
        try:
            delta, used = decode_vlq(body, pos)
        except TruncatedInput as exc:
            raise TruncatedChunk(str(exc)) from exc
        pos += used
        if pos >= len(body):
            raise TruncatedChunk("track ends after a delta time")
        lead = body[pos]
        if lead >= 0x80:
            status = lead
            pos += 1
        else:
            if running_status is None:
                raise DanglingRunningStatus(
                    "data byte with no preceding status byte"
                )
            status = running_status

        if status == 0xFF:
            running_status = None
            if pos >= len(body):
                raise TruncatedChunk("meta event truncated")
            meta_type = body[pos]
            pos += 1
            try:
                ln, used = decode_vlq(body, pos)
            except TruncatedInput as exc:
                raise TruncatedChunk(str(exc)) from exc
            pos += used
            payload = bytes(body[pos : pos + ln])
            if len(payload) < ln:
                raise TruncatedChunk("meta event payload truncated")
            pos += ln
            events.append(
                RawTrackEvent(delta, EventKind.META, data=payload, meta_type=meta_type)
            )
            if meta_type == META_END_OF_TRACK:
                return events
        elif status in (0xF0, 0xF7):
            running_status = None
            try:
                ln, used = decode_vlq(body, pos)
            except TruncatedInput as exc:
                raise TruncatedChunk(str(exc)) from exc
            pos += used
            payload = bytes(body[pos : pos + ln])
            if len(payload) < ln:
                raise TruncatedChunk("sysex payload truncated")
            pos += ln
            events.append(RawTrackEvent(delta, EventKind.SYSEX, data=payload))
        elif 0x80 <= status <= 0xEF:
            running_status = status
            hi = status & 0xF0
            channel = status & 0x0F
            n = 1 if hi in (0xC0, 0xD0) else 2
            dbytes = bytes(body[pos : pos + n])
            if len(dbytes) < n:
                raise TruncatedChunk("channel event data truncated")
            if any(x >= 0x80 for x in dbytes):
                raise StructureError("channel event data byte out of range")
            pos += n
            if hi == 0x90 and dbytes[1] > 0:
                events.append(
                    RawTrackEvent(delta, EventKind.NOTE_ON, channel=channel, data=dbytes)
                )
            elif hi == 0x90:
                # velocity-0 note-on is a note-off by convention
                events.append(
                    RawTrackEvent(delta, EventKind.NOTE_OFF, channel=channel, data=dbytes)
                )
            elif hi == 0x80:
                events.append(
                    RawTrackEvent(delta, EventKind.NOTE_OFF, channel=channel, data=dbytes)
                )
            else:
                events.append(
                    RawTrackEvent(
                        delta, EventKind.OTHER_CHANNEL, channel=channel, data=dbytes
                    )
                )
        else:
            raise StructureError(f"unsupported status byte 0x{status:02X}")


def build_tempo_map(header: SmfHeader, tracks: list[list[RawTrackEvent]]) -> TempoMap:
    """Collect Set Tempo events into an ordered map.

    Format 1 takes tempo from track 0 only (others are counted as ignored);
    a duplicate tempo at the same tick keeps the last writer.
    """
    entries: dict[int, int] = {}
    ignored = 0
    for ti, track in enumerate(tracks):
        use = ti == 0 if header.format == 1 else True
        tick = 0
        for ev in track:
            tick += ev.delta_ticks
            if ev.kind is EventKind.META and ev.meta_type == META_SET_TEMPO:
                if len(ev.data) != 3:
                    raise StructureError("set-tempo payload must be 3 bytes")
                tempo = int.from_bytes(ev.data, "big")
                if tempo == 0:
                    raise StructureError("tempo of 0 microseconds per quarter")
                if use:
                    entries[tick] = tempo
                else:
                    ignored += 1
    if 0 not in entries:
        entries[0] = DEFAULT_TEMPO_US
    segments = tuple(sorted(entries.items()))
    return TempoMap(segments=segments, ignored_tempo_events=ignored)


def ticks_to_seconds(tempo_map: TempoMap, division: int, tick: int) -> float:
    """Piecewise accumulation of tick spans times tempo.

    The sum of span * tempo is kept in exact integer arithmetic; only the
    final division produces a float, so segment boundaries are exact.
    """
    if tick < 0:
        raise ValueError("tick must be non-negative")
    numer = 0
    segs = tempo_map.segments
    for i, (start, tempo) in enumerate(segs):
        if tick <= start:
            break
        end = segs[i + 1][0] if i + 1 < len(segs) else None
        span_end = tick if end is None or tick < end else end
        numer += (span_end - start) * tempo
        if end is None or tick < end:
            break
    return numer / (division * 1_000_000)


def extract_notes(
    header: SmfHeader,
    tracks: list[list[RawTrackEvent]],
    tempo_map: TempoMap,
    channel_filter: set[int] | None = None,
) -> NoteTimeline:
    """Pair note-ons with note-offs FIFO per (track, channel, pitch).

    Notes left open are closed at their track's end tick; zero-duration
    notes are dropped. Pairing anomalies land in the diagnostics record,
    never raise.
    """
    diags = NoteDiagnostics()
    raw: list[tuple[int, int, int, int, int, int]] = []  # on, off, pitch, vel, ch, track
    end_ticks: list[int] = []
    for ti, track in enumerate(tracks):
        pending: dict[tuple[int, int], deque] = {}
        tick = 0
        for ev in track:
            tick += ev.delta_ticks
            if ev.kind is EventKind.NOTE_ON:
                pending.setdefault((ev.channel, ev.pitch), deque()).append(
                    (tick, ev.velocity)
                )
            elif ev.kind is EventKind.NOTE_OFF:
                q = pending.get((ev.channel, ev.pitch))
                if q:
                    on_tick, vel = q.popleft()
                    raw.append((on_tick, tick, ev.pitch, vel, ev.channel, ti))
                else:
                    diags.orphan_note_offs += 1
        end_ticks.append(tick)
        for (channel, pitch), q in sorted(pending.items()):
            for on_tick, vel in q:
                diags.unterminated_closed += 1
                raw.append((on_tick, tick, pitch, vel, channel, ti))

    notes: list[NoteEvent] = []
    for on_tick, off_tick, pitch, vel, channel, track in raw:
        if channel_filter is not None and channel not in channel_filter:
            continue
        if off_tick <= on_tick:
            diags.zero_duration_dropped += 1
            continue
        onset = ticks_to_seconds(tempo_map, header.division, on_tick)
        offset = ticks_to_seconds(tempo_map, header.division, off_tick)
        notes.append(NoteEvent(onset, offset - onset, pitch, vel, channel, track))

    notes.sort(key=lambda n: (n.onset_s, n.track, n.pitch))
    end_s = 0.0
    if end_ticks:
        end_s = max(
            ticks_to_seconds(tempo_map, header.division, t) for t in end_ticks
        )
    return NoteTimeline(notes=notes, end_s=end_s, diagnostics=diags)
