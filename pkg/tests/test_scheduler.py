"""Event compilation, clock dispatch and the wire serialization."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midifusion.pose import ChordEvent, ChordShape, InstrumentProfile, SwingFallback
from midifusion.scheduler import (
    AnimationEvent,
    EventTimeline,
    SimulatedClock,
    SinkRejected,
    WallClock,
    compile_events,
    effect_intensity,
    format_event_timeline,
    parse_event_timeline,
    run,
)
from midifusion import quat
from midifusion.smf import NoteEvent


def _profile(instrument="guitar", shapes=()):
    return InstrumentProfile(
        instrument=instrument,
        shapes=list(shapes),
        fallback=SwingFallback(joint="LeftHand"),
        mask_names=["arms"],
    )


def _chord(onset, shape_id="note:60", dur=0.5, vel=100):
    note = NoteEvent(onset, dur, 60, vel, 0, 0)
    return ChordEvent(onset, shape_id, (note,), vel)


class TestEffectIntensity:
    def test_max(self):
        assert effect_intensity(127) == 1.0

    def test_min(self):
        assert effect_intensity(1) == pytest.approx(1 / 127)

    def test_mid(self):
        assert effect_intensity(64) == pytest.approx(64 / 127)

    def test_clamped(self):
        assert effect_intensity(300) == 1.0
        assert effect_intensity(-5) == 0.0


class TestCompile:
    def test_empty(self):
        tl = compile_events([], _profile())
        assert tl.events == []
        assert tl.duration_s == 0.0

    def test_three_event_rule(self):
        shape = ChordShape(id="E", pitch_set=frozenset({4}), pose={}, transition_s=0.2)
        prof = _profile(shapes=[shape])
        tl = compile_events([_chord(1.0, "E", dur=0.5)], prof)
        assert [(e.time_s, e.function) for e in tl.events] == [
            (0.8, "attack"),
            (1.0, "strike"),
            (1.5, "release"),
        ]
        assert all(e.note_code == "E" for e in tl.events)
        assert all(e.target_layer == "guitar_performance" for e in tl.events)

    def test_attack_clamped_at_zero(self):
        shape = ChordShape(id="E", pitch_set=frozenset({4}), pose={}, transition_s=0.2)
        tl = compile_events([_chord(0.05, "E")], _profile(shapes=[shape]))
        assert tl.events[0].time_s == 0.0

    def test_sustain_capped(self):
        tl = compile_events([_chord(0.0, dur=10.0)], _profile())
        release = [e for e in tl.events if e.function == "release"][0]
        assert release.time_s == pytest.approx(2.0)

    def test_drum_sustain(self):
        prof = InstrumentProfile(
            instrument="drums",
            fallback=SwingFallback(joint="RightHand"),
            mask_names=["arms"],
        )
        tl = compile_events([_chord(1.0, dur=5.0)], prof)
        release = [e for e in tl.events if e.function == "release"][0]
        assert release.time_s == pytest.approx(1.1)

    def test_sorted_stably(self):
        chords = [_chord(0.0), _chord(0.02), _chord(1.0)]
        tl = compile_events(chords, _profile())
        times = [e.time_s for e in tl.events]
        assert times == sorted(times)

    def test_deterministic_byte_equal(self):
        chords = [_chord(0.123456), _chord(0.5), _chord(2.0)]
        a = format_event_timeline(compile_events(chords, _profile()))
        b = format_event_timeline(compile_events(chords, _profile()))
        assert a == b


class TestRun:
    def test_simulated_clock_exact(self):
        events = [AnimationEvent(t, "strike", "E", 100, "x") for t in (0.1, 0.5, 2.0)]
        tl = EventTimeline(events=events)
        seen = []
        report = run(tl, seen.append, SimulatedClock())
        assert [e.time_s for e in seen] == [0.1, 0.5, 2.0]
        assert report.delivered == 3
        assert report.lateness_s == [0.0, 0.0, 0.0]

    def test_empty_timeline(self):
        report = run(EventTimeline(events=[]), lambda e: None, SimulatedClock())
        assert report.delivered == 0
        assert report.lateness_s == []

    def test_never_early(self):
        events = [AnimationEvent(t, "strike", "E", 1, "x") for t in (0.0, 0.25, 0.25, 1.0)]
        tl = EventTimeline(events=events)
        clock = SimulatedClock()
        stamps = []
        run(tl, lambda e: stamps.append((clock.now(), e.time_s)), clock)
        assert all(now >= t for now, t in stamps)

    def test_sink_rejection(self):
        events = [AnimationEvent(float(i), "strike", "E", 1, "x") for i in range(5)]
        tl = EventTimeline(events=events)
        def sink(ev):
            return ev.time_s < 2.0
        with pytest.raises(SinkRejected) as info:
            run(tl, sink, SimulatedClock())
        assert info.value.delivered == 2

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 10), max_size=20))
    def test_dispatch_order_matches_timeline(self, times):
        events = [AnimationEvent(t, "strike", "E", 1, "x") for t in sorted(times)]
        tl = EventTimeline(events=events)
        seen = []
        report = run(tl, seen.append, SimulatedClock())
        assert seen == events
        assert report.delivered == len(events)

    def test_wall_clock_lateness(self):
        # short real-time run: lateness stays under two 10 ms ticks
        events = [AnimationEvent(0.01 * i, "strike", "E", 1, "x") for i in range(5)]
        tl = EventTimeline(events=events)
        report = run(tl, lambda e: None, WallClock(tick_s=0.010))
        assert report.delivered == 5
        assert report.max_lateness_s < 0.020


class TestSerialization:
    def test_wire_format(self):
        tl = EventTimeline(events=[AnimationEvent(0.8, "attack", "E", 100, "guitar_performance")])
        assert format_event_timeline(tl) == "0.800000\tattack\tE\t100\tguitar_performance\n"

    def test_roundtrip(self):
        chords = [_chord(0.25), _chord(1.0)]
        tl = compile_events(chords, _profile())
        text = format_event_timeline(tl)
        back = parse_event_timeline(text)
        assert format_event_timeline(back) == text
        assert [e.function for e in back.events] == [e.function for e in tl.events]

    def test_bad_line_rejected(self):
        with pytest.raises(ValueError):
            parse_event_timeline("0.1\tattack\tE\n")
        with pytest.raises(ValueError):
            parse_event_timeline("0.1\tboom\tE\t10\tlayer\n")
