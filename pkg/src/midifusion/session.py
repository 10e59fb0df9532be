"""Deterministic multi-avatar session simulation.

The world is a 2-D plane. Agents wander between seeded-random waypoints,
never overlap (pairwise circle push-out each step), salute each other when
close, and carry an excitement meter fed by note events. A device capacity
model maps avatar count to an expected frame rate.

Everything observable goes through the append-only event log, one line per
event: ``time_s<TAB>kind<TAB>actor<TAB>payload``. The log is the wire
protocol: replaying it reruns the same deterministic simulation and lands
on the exact same final state.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field

from .scheduler import effect_intensity

SALUTE_RANGE_M = 2.0
SALUTE_BONUS_S = 180.0
EXCITEMENT_GAIN = 5.0
EXCITEMENT_DECAY_PER_S = 0.2
EXCITEMENT_MAX = 100.0
EFFECT_THRESHOLD = 80.0
AUDIBLE_SPEAKER_CAP = 11
CONVERSATION_RANGE_M = 2.0
COMM_QUALITY_BAND = (5, 11)

SPEAK_START_RATE_PER_S = 0.05
SPEAK_MIN_S = 2.0
SPEAK_MAX_S = 6.0

EVENT_KINDS = ("join", "leave", "note", "salute", "speak_start", "speak_stop", "effect")
INJECTABLE_KINDS = ("note", "speak_start", "speak_stop")

_INSTRUMENT_CYCLE = ("guitar", "bass", "piano", "drums")


class SessionError(Exception):
    pass


class OutOfRange(SessionError):
    pass


class CorruptLog(SessionError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class DeviceProfile:
    """Capacity calibration: flat at target fps through the drop threshold,
    then piecewise linear through the knee points."""

    name: str
    target_fps: float
    drop_threshold_avatars: int
    curve: tuple[tuple[int, float], ...]
    polygon_budget: int = 30_000
    material_range: tuple[int, int] = (6, 14)

    def __post_init__(self):
        if self.target_fps <= 0:
            raise ValueError("target_fps must be positive")
        if not self.curve:
            raise ValueError("capacity curve needs at least one knee point")
        counts = [c for c, _ in self.curve]
        fpss = [f for _, f in self.curve]
        if counts != sorted(set(counts)):
            raise ValueError("knee counts must be strictly increasing")
        if any(b > a for a, b in zip(fpss, fpss[1:])):
            raise ValueError("knee fps values must be non-increasing")
        if self.curve[0][0] != self.drop_threshold_avatars:
            raise ValueError("first knee must sit at the drop threshold")
        if self.curve[0][1] != self.target_fps:
            raise ValueError("first knee fps must equal target_fps")

    @property
    def max_modelled_avatars(self) -> int:
        return self.curve[-1][0]


def capacity_fps(device: DeviceProfile, avatar_count: int) -> float:
    """Expected fps for a number of rendered avatars."""
    if avatar_count < 0:
        raise ValueError("avatar_count must be non-negative")
    if avatar_count <= device.drop_threshold_avatars:
        return device.target_fps
    curve = device.curve
    if avatar_count >= curve[-1][0]:
        return curve[-1][1]
    for (c0, f0), (c1, f1) in zip(curve, curve[1:]):
        if c0 <= avatar_count <= c1:
            u = (avatar_count - c0) / (c1 - c0)
            return f0 + u * (f1 - f0)
    return curve[-1][1]


def max_avatars_at(device: DeviceProfile, fps_floor: float) -> int:
    """Largest avatar count whose modelled fps stays at or above the floor."""
    if fps_floor > device.target_fps:
        raise ValueError("fps_floor above the device target is unreachable")
    best = 0
    for count in range(device.max_modelled_avatars + 1):
        if capacity_fps(device, count) >= fps_floor:
            best = count
    return best


BUILTIN_DEVICES = ("quest1", "quest2")


@dataclass
class AvatarAgent:
    id: str
    x: float
    y: float
    radius: float = 0.4
    instrument: str | None = None
    speaking: bool = False
    excitement: float = 0.0
    is_npc: bool = False
    session_time_s: float = 0.0
    planned_leave_s: float = 600.0
    # steering / bookkeeping
    waypoint: tuple[float, float] | None = None
    speak_until_s: float = 0.0
    effect_armed: bool = True


@dataclass(frozen=True)
class SessionEvent:
    time_s: float
    kind: str
    actor: str
    payload: str = ""


@dataclass
class SessionConfig:
    agents: int = 4
    seed: int = 0
    dt_s: float = 0.01
    duration_s: float = 10.0
    device: str = "quest2"
    arena_half_m: float = 6.0
    speed_mps: float = 1.0
    radius_m: float = 0.4
    default_stay_s: float = 600.0
    npc_count: int = 0
    comm_quality_mode: bool = False


@dataclass
class SessionState:
    config: SessionConfig
    device: DeviceProfile
    agents: list[AvatarAgent]
    time_s: float = 0.0
    step_index: int = 0
    event_log: list[SessionEvent] = field(default_factory=list)
    saluted_pairs: set[tuple[str, str]] = field(default_factory=set)
    rng: random.Random = field(default_factory=random.Random)
    pending: deque = field(default_factory=deque)

    def agent(self, agent_id: str) -> AvatarAgent:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"no agent {agent_id!r}")


def _session_payload(cfg: SessionConfig) -> str:
    return (
        f"seed={cfg.seed} agents={cfg.agents} dt={cfg.dt_s:.6f}"
        f" duration={cfg.duration_s:.6f} device={cfg.device}"
        f" arena={cfg.arena_half_m:.6f} speed={cfg.speed_mps:.6f}"
        f" radius={cfg.radius_m:.6f} stay={cfg.default_stay_s:.6f}"
        f" npcs={cfg.npc_count} comm={int(cfg.comm_quality_mode)}"
    )


def init_session(config: SessionConfig, device: DeviceProfile) -> SessionState:
    """Spawn the roster deterministically and log the join events."""
    if config.npc_count > config.agents:
        raise ValueError("npc_count cannot exceed agent count")
    rng = random.Random(config.seed)
    state = SessionState(config=config, device=device, agents=[], rng=rng)
    lo = -config.arena_half_m + config.radius_m
    hi = config.arena_half_m - config.radius_m
    if lo >= hi:
        raise ValueError("arena too small for the agent radius")
    for i in range(config.agents):
        for _ in range(1000):
            x = rng.uniform(lo, hi)
            y = rng.uniform(lo, hi)
            if all(
                math.hypot(x - a.x, y - a.y) >= config.radius_m + a.radius
                for a in state.agents
            ):
                break
        else:
            raise ValueError("could not place agents without overlap")
        is_npc = i >= config.agents - config.npc_count
        agent = AvatarAgent(
            id=f"a{i}",
            x=x,
            y=y,
            radius=config.radius_m,
            instrument=_INSTRUMENT_CYCLE[i] if i < len(_INSTRUMENT_CYCLE) else None,
            is_npc=is_npc,
            planned_leave_s=config.default_stay_s,
        )
        state.agents.append(agent)
        payload = (
            f"x={agent.x:.6f} y={agent.y:.6f} radius={agent.radius:.6f}"
            f" instrument={agent.instrument or '-'} npc={int(agent.is_npc)}"
            f" stay={agent.planned_leave_s:.6f}"
        )
        if i == 0:
            payload = f"{_session_payload(config)} {payload}"
        state.event_log.append(SessionEvent(0.0, "join", agent.id, payload))
    return state


def inject_events(state: SessionState, events) -> SessionState:
    """Queue external events; each is applied at the next step boundary."""
    for ev in sorted(events, key=lambda e: e.time_s):
        if ev.kind not in INJECTABLE_KINDS:
            raise SessionError(f"kind {ev.kind!r} cannot be injected")
        state.pending.append(ev)
    return state


def _advance_agent(state: SessionState, agent: AvatarAgent, dt: float):
    if agent.is_npc:
        return  # performers hold their spot
    cfg = state.config
    lo = -cfg.arena_half_m + agent.radius
    hi = cfg.arena_half_m - agent.radius
    if agent.waypoint is None:
        agent.waypoint = (state.rng.uniform(lo, hi), state.rng.uniform(lo, hi))
    wx, wy = agent.waypoint
    dx = wx - agent.x
    dy = wy - agent.y
    dist = math.hypot(dx, dy)
    step = cfg.speed_mps * dt
    if dist <= step or dist < 1e-12:
        agent.x, agent.y = wx, wy
        agent.waypoint = (state.rng.uniform(lo, hi), state.rng.uniform(lo, hi))
    else:
        agent.x += dx / dist * step
        agent.y += dy / dist * step


def _resolve_collisions(agents: list[AvatarAgent], arena_half: float, max_iters: int = 8):
    """Equal push-out along the center line, iterated to a fixpoint."""
    n = len(agents)
    for _ in range(max_iters):
        moved = False
        for i in range(n):
            for j in range(i + 1, n):
                a, b = agents[i], agents[j]
                dx = b.x - a.x
                dy = b.y - a.y
                min_d = a.radius + b.radius
                d2 = dx * dx + dy * dy
                if d2 >= min_d * min_d:
                    continue
                d = math.sqrt(d2)
                if d < 1e-9:
                    dx, dy, d = 1.0, 0.0, 1.0  # coincident centers: push along +x
                push = (min_d - d) / 2.0 + 1e-9
                ux, uy = dx / d, dy / d
                a.x -= ux * push
                a.y -= uy * push
                b.x += ux * push
                b.y += uy * push
                moved = True
        for ag in agents:
            lo = -arena_half + ag.radius
            hi = arena_half - ag.radius
            ag.x = min(max(ag.x, lo), hi)
            ag.y = min(max(ag.y, lo), hi)
        if not moved:
            break


def salute(state: SessionState, a: AvatarAgent, b: AvatarAgent) -> SessionState:
    """Mutual greeting: both agents stay 180 s longer, once per pair."""
    d = math.hypot(a.x - b.x, a.y - b.y)
    if d > SALUTE_RANGE_M:
        raise OutOfRange(f"agents {a.id} and {b.id} are {d:.2f} m apart")
    if (a.id, b.id) in state.saluted_pairs:
        return state
    state.saluted_pairs.add((a.id, b.id))
    state.saluted_pairs.add((b.id, a.id))
    a.planned_leave_s += SALUTE_BONUS_S
    b.planned_leave_s += SALUTE_BONUS_S
    state.event_log.append(
        SessionEvent(state.time_s, "salute", a.id, f"partner={b.id}")
    )
    return state


def update_excitement(state: SessionState, events, dt: float) -> SessionState:
    """Decay everyone, add note gains, emit one effect per upward crossing."""
    decay = math.exp(-EXCITEMENT_DECAY_PER_S * dt)
    for agent in state.agents:
        agent.excitement *= decay
    for ev in events:
        if ev.kind != "note":
            continue
        fields = parse_payload(ev.payload)
        velocity = int(fields.get("velocity", "0"))
        try:
            agent = state.agent(ev.actor)
        except KeyError:
            continue
        agent.excitement = min(
            EXCITEMENT_MAX, agent.excitement + EXCITEMENT_GAIN * effect_intensity(velocity)
        )
    for agent in state.agents:
        if agent.excitement < EFFECT_THRESHOLD:
            agent.effect_armed = True
        elif agent.effect_armed:
            agent.effect_armed = False
            state.event_log.append(
                SessionEvent(
                    state.time_s,
                    "effect",
                    agent.id,
                    f"kind=gift excitement={agent.excitement:.6f}",
                )
            )
    return state


def step_session(state: SessionState, dt: float) -> SessionState:
    """Advance one step: apply due injected events, move, resolve
    collisions, salute, speak, update excitement, process leaves."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state.time_s += dt
    state.step_index += 1
    now = state.time_s

    due = []
    while state.pending and state.pending[0].time_s <= now:
        due.append(state.pending.popleft())
    note_events = []
    for ev in due:
        fields = parse_payload(ev.payload)
        try:
            agent = state.agent(ev.actor)
        except KeyError:
            continue  # target already left
        if ev.kind == "note":
            payload = (
                f"pitch={int(fields.get('pitch', '0'))}"
                f" velocity={int(fields.get('velocity', '0'))} src=ext"
            )
            logged = SessionEvent(now, "note", ev.actor, payload)
            state.event_log.append(logged)
            note_events.append(logged)
        elif ev.kind == "speak_start":
            agent.speaking = True
            agent.speak_until_s = math.inf
            state.event_log.append(SessionEvent(now, "speak_start", ev.actor, "src=ext"))
        elif ev.kind == "speak_stop":
            agent.speaking = False
            agent.speak_until_s = 0.0
            state.event_log.append(SessionEvent(now, "speak_stop", ev.actor, "src=ext"))

    for agent in state.agents:
        _advance_agent(state, agent, dt)
        agent.session_time_s += dt
    _resolve_collisions(state.agents, state.config.arena_half_m)

    # spontaneous salutes: first time a pair is in range, humans initiating
    for i in range(len(state.agents)):
        for j in range(i + 1, len(state.agents)):
            a, b = state.agents[i], state.agents[j]
            if a.is_npc and b.is_npc:
                continue
            if (a.id, b.id) in state.saluted_pairs:
                continue
            if math.hypot(a.x - b.x, a.y - b.y) <= SALUTE_RANGE_M:
                initiator, partner = (a, b) if not a.is_npc else (b, a)
                salute(state, initiator, partner)

    for agent in state.agents:
        if agent.is_npc:
            continue
        if agent.speaking:
            if agent.speak_until_s <= now:
                agent.speaking = False
                state.event_log.append(SessionEvent(now, "speak_stop", agent.id, "src=rng"))
        else:
            if state.rng.random() < SPEAK_START_RATE_PER_S * dt:
                agent.speaking = True
                agent.speak_until_s = now + state.rng.uniform(SPEAK_MIN_S, SPEAK_MAX_S)
                state.event_log.append(SessionEvent(now, "speak_start", agent.id, "src=rng"))

    update_excitement(state, note_events, dt)

    leavers = [a for a in state.agents if now >= a.planned_leave_s]
    for agent in leavers:
        state.event_log.append(
            SessionEvent(now, "leave", agent.id, f"stayed={agent.session_time_s:.6f}")
        )
        state.agents.remove(agent)
    return state


def run_session(
    config: SessionConfig, device: DeviceProfile, injected=()
) -> SessionState:
    state = init_session(config, device)
    inject_events(state, injected)
    steps = int(round(config.duration_s / config.dt_s))
    for _ in range(steps):
        step_session(state, config.dt_s)
    return state


@dataclass
class CommQualityReport:
    agent_count: int
    fps_estimate: float
    crowding_flags: list[str] = field(default_factory=list)
    distance_flags: list[str] = field(default_factory=list)
    advisories: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.crowding_flags or self.distance_flags)


def validate_comm_quality(state: SessionState) -> CommQualityReport:
    """Flag audio crowding and out-of-range conversations; the avatar-count
    band is advisory and only checked in communication-quality mode."""
    agents = state.agents
    report = CommQualityReport(
        agent_count=len(agents),
        fps_estimate=capacity_fps(state.device, len(agents)),
    )
    for listener in agents:
        audible = sum(
            1
            for other in agents
            if other is not listener
            and other.speaking
            and math.hypot(listener.x - other.x, listener.y - other.y)
            <= CONVERSATION_RANGE_M
        )
        if audible > AUDIBLE_SPEAKER_CAP:
            report.crowding_flags.append(
                f"{listener.id}: {audible} speakers within {CONVERSATION_RANGE_M} m"
            )
    for speaker in agents:
        if not speaker.speaking:
            continue
        dists = [
            math.hypot(speaker.x - o.x, speaker.y - o.y)
            for o in agents
            if o is not speaker
        ]
        if not dists or min(dists) > CONVERSATION_RANGE_M:
            report.distance_flags.append(
                f"{speaker.id}: no listener within {CONVERSATION_RANGE_M} m"
            )
    if state.config.comm_quality_mode:
        lo, hi = COMM_QUALITY_BAND
        if not lo <= len(agents) <= hi:
            report.advisories.append(
                f"agent count {len(agents)} outside the {lo}-{hi} communication band"
            )
    return report


def parse_payload(payload: str) -> dict[str, str]:
    fields = {}
    for token in payload.split():
        if "=" in token:
            k, v = token.split("=", 1)
            fields[k] = v
    return fields


def format_event(ev: SessionEvent) -> str:
    return f"{ev.time_s:.6f}\t{ev.kind}\t{ev.actor}\t{ev.payload}"


def format_log(events) -> str:
    return "".join(format_event(ev) + "\n" for ev in events)


def parse_log(text: str) -> list[SessionEvent]:
    events = []
    last_t = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise CorruptLog("expected 4 tab-separated fields", ln)
        t_str, kind, actor, payload = parts
        try:
            t = float(t_str)
        except ValueError:
            raise CorruptLog(f"bad timestamp {t_str!r}", ln)
        if kind not in EVENT_KINDS:
            raise CorruptLog(f"unknown event kind {kind!r}", ln)
        if last_t is not None and t < last_t:
            raise CorruptLog("timestamps must be non-decreasing", ln)
        last_t = t
        events.append(SessionEvent(t, kind, actor, payload))
    return events


def _config_from_join(ev: SessionEvent) -> SessionConfig:
    f = parse_payload(ev.payload)
    try:
        return SessionConfig(
            agents=int(f["agents"]),
            seed=int(f["seed"]),
            dt_s=float(f["dt"]),
            duration_s=float(f["duration"]),
            device=f["device"],
            arena_half_m=float(f["arena"]),
            speed_mps=float(f["speed"]),
            radius_m=float(f["radius"]),
            default_stay_s=float(f["stay"]),
            npc_count=int(f["npcs"]),
            comm_quality_mode=bool(int(f["comm"])),
        )
    except KeyError as exc:
        raise CorruptLog(f"first join event lacks session field {exc}", 1)


def replay(log_text: str, device_loader=None) -> SessionState:
    """Rebuild the exact final state from a session log.

    The first join event carries the session config; externally injected
    events (src=ext) are re-injected; everything else is regenerated by the
    deterministic rerun. An empty log yields an empty initial state.
    """
    events = parse_log(log_text)
    if not events:
        device = builtin_device("quest2")
        cfg = SessionConfig(agents=0, duration_s=0.0)
        return SessionState(config=cfg, device=device, agents=[])
    joins = [e for e in events if e.kind == "join"]
    if not joins:
        raise CorruptLog("log contains no join events", 1)
    cfg = _config_from_join(joins[0])
    if device_loader is not None:
        device = device_loader(cfg.device)
    else:
        device = builtin_device(cfg.device)
    ext = [
        e
        for e in events
        if e.kind in INJECTABLE_KINDS and parse_payload(e.payload).get("src") == "ext"
    ]
    return run_session(cfg, device, ext)


def builtin_device(name: str) -> DeviceProfile:
    # late import: profiles.py owns the packaged config files
    from .profiles import load_device_profile

    return load_device_profile(name)
