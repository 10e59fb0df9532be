"""Byte-level SMF builders for tests.

Deliberately independent of the package: the VLQ encoder and chunk
assembly are written from the wire format directly so round-trip tests
check the parser against a second implementation, not against itself.
"""

from __future__ import annotations

import struct


def encode_vlq(value: int) -> bytes:
    if not 0 <= value < 2**28:
        raise ValueError("VLQ range is [0, 2**28)")
    groups = [(value >> s) & 0x7F for s in (21, 14, 7, 0)]
    while len(groups) > 1 and groups[0] == 0:
        groups.pop(0)
    return bytes([g | 0x80 for g in groups[:-1]] + [groups[-1]])


def mthd(fmt: int, track_count: int, division: int) -> bytes:
    return b"MThd" + struct.pack(">IHHH", 6, fmt, track_count, division)


def mtrk(body: bytes) -> bytes:
    return b"MTrk" + struct.pack(">I", len(body)) + body


def note_on(delta: int, pitch: int, velocity: int, channel: int = 0) -> bytes:
    return encode_vlq(delta) + bytes([0x90 | channel, pitch, velocity])


def note_off(delta: int, pitch: int, velocity: int = 0, channel: int = 0) -> bytes:
    return encode_vlq(delta) + bytes([0x80 | channel, pitch, velocity])


def meta(delta: int, meta_type: int, payload: bytes = b"") -> bytes:
    return encode_vlq(delta) + bytes([0xFF, meta_type]) + encode_vlq(len(payload)) + payload


def set_tempo(delta: int, us_per_quarter: int) -> bytes:
    return meta(delta, 0x51, us_per_quarter.to_bytes(3, "big"))


def end_of_track(delta: int = 0) -> bytes:
    return meta(delta, 0x2F)


def track(*events: bytes, eot_delta: int = 0) -> bytes:
    return mtrk(b"".join(events) + end_of_track(eot_delta))


def single_track_file(*events: bytes, division: int = 480, eot_delta: int = 0) -> bytes:
    return mthd(0, 1, division) + track(*events, eot_delta=eot_delta)


def statused_track_bytes(events: list[tuple[int, int, int, int]], running: bool) -> bytes:
    """Encode (delta, status, d0, d1) channel events, optionally collapsing
    repeated status bytes into running status."""
    out = b""
    last_status = None
    for delta, status, d0, d1 in events:
        out += encode_vlq(delta)
        if not running or status != last_status:
            out += bytes([status])
        out += bytes([d0, d1])
        last_status = status
    return out
