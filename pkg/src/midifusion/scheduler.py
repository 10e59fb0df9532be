"""Compile chord events into dispatchable animation events and run them.

Each chord becomes three events: attack (transition start, clamped at 0),
strike (onset), release (onset + sustain). Dispatch is exactly-once and in
timeline order against an injected clock; lateness is recorded, never
compensated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .pose import ChordEvent, InstrumentProfile, map_event_to_pose

DRUM_SUSTAIN_S = 0.1
MAX_SUSTAIN_S = 2.0

FUNCTIONS = ("attack", "strike", "release")


class SinkRejected(Exception):
    def __init__(self, delivered: int, message: str = "sink rejected event"):
        super().__init__(f"{message} (delivered {delivered})")
        self.delivered = delivered


@dataclass(frozen=True)
class AnimationEvent:
    time_s: float
    function: str  # attack | strike | release
    note_code: str  # shape id or note:<pitch>
    velocity: int
    target_layer: str


@dataclass
class EventTimeline:
    events: list[AnimationEvent]
    duration_s: float = 0.0

    def __post_init__(self):
        if self.events:
            self.duration_s = max(self.duration_s, self.events[-1].time_s)


def effect_intensity(velocity: int) -> float:
    """Linear velocity-to-intensity map, clamped to [0, 1]."""
    return min(max(velocity, 0), 127) / 127.0


def chord_sustain_s(profile: InstrumentProfile, chord: ChordEvent) -> float:
    if profile.instrument == "drums":
        return DRUM_SUSTAIN_S
    longest = max(n.duration_s for n in chord.member_notes)
    return min(longest, MAX_SUSTAIN_S)


def compile_events(
    chords: list[ChordEvent], profile: InstrumentProfile
) -> EventTimeline:
    """Three events per chord, sorted stably by (time, generation order)."""
    layer_name = f"{profile.instrument}_performance"
    raw: list[tuple[float, int, AnimationEvent]] = []
    seq = 0

    def emit(t: float, function: str, chord: ChordEvent):
        nonlocal seq
        raw.append(
            (
                t,
                seq,
                AnimationEvent(t, function, chord.shape_id, chord.peak_velocity, layer_name),
            )
        )
        seq += 1

    for chord in chords:
        _, transition = map_event_to_pose(profile, chord)
        attack_t = max(0.0, chord.onset_s - transition)
        release_t = chord.onset_s + chord_sustain_s(profile, chord)
        emit(attack_t, "attack", chord)
        emit(chord.onset_s, "strike", chord)
        emit(release_t, "release", chord)

    raw.sort(key=lambda r: (r[0], r[1]))
    events = [e for _, _, e in raw]
    duration = events[-1].time_s if events else 0.0
    return EventTimeline(events=events, duration_s=duration)


class SimulatedClock:
    """Exact clock for tests and replay: sleeping jumps straight to the target."""

    def __init__(self, start_s: float = 0.0):
        self._now = start_s

    def now(self) -> float:
        return self._now

    def sleep_until(self, t: float):
        if t > self._now:
            self._now = t


class WallClock:
    """Monotonic wall clock, sleeping in bounded ticks."""

    def __init__(self, tick_s: float = 0.010):
        self.tick_s = tick_s
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def sleep_until(self, t: float):
        while True:
            remaining = t - self.now()
            if remaining <= 0:
                return
            time.sleep(min(remaining, self.tick_s))


@dataclass
class DispatchReport:
    delivered: int = 0
    lateness_s: list[float] = field(default_factory=list)

    @property
    def max_lateness_s(self) -> float:
        return max(self.lateness_s, default=0.0)


def run(timeline: EventTimeline, sink, clock) -> DispatchReport:
    """Deliver every event once, in order, never before its time.

    The sink is any callable taking an AnimationEvent; returning False
    aborts the run with SinkRejected carrying the delivered count.
    """
    report = DispatchReport()
    for ev in timeline.events:
        clock.sleep_until(ev.time_s)
        now = clock.now()
        if sink(ev) is False:
            raise SinkRejected(report.delivered)
        report.delivered += 1
        report.lateness_s.append(now - ev.time_s)
    return report


def format_event_timeline(timeline: EventTimeline) -> str:
    """Tab-separated wire form: time_s function note_code velocity layer."""
    lines = [
        f"{ev.time_s:.6f}\t{ev.function}\t{ev.note_code}\t{ev.velocity}\t{ev.target_layer}"
        for ev in timeline.events
    ]
    return "".join(line + "\n" for line in lines)


def parse_event_timeline(text: str) -> EventTimeline:
    events = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 5:
            raise ValueError(f"line {ln}: expected 5 tab-separated fields")
        t, function, note_code, velocity, layer = parts
        if function not in FUNCTIONS:
            raise ValueError(f"line {ln}: unknown function {function!r}")
        events.append(AnimationEvent(float(t), function, note_code, int(velocity), layer))
    duration = events[-1].time_s if events else 0.0
    return EventTimeline(events=events, duration_s=duration)
