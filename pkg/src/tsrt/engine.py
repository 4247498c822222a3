"""Seeded discrete-event kernel.

Events are ordered by ``(time, sequence)``, so events scheduled for the same
instant run in the order they were scheduled. All randomness (loss, jitter,
backoff, protocol choices) is drawn from one ``numpy`` generator seeded from
``SimConfig.seed``; the trace of a run is therefore a pure function of
(seed, config, scenario).

Protocol code is written as handlers: ``sim.on(kind, fn)`` registers
``fn(node, message)`` to be called for every delivered message of that kind.
Timestamps are taken at the modelled transmit/receive instant through
``sim.local_now(node)``.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .clockmodel import LocalClock, local_time
from .topology import CONTROL_CHANNEL, ChannelAssignment, NetworkGraph, assign_channels


class SimulationError(RuntimeError):
    pass


class MessageKind(enum.Enum):
    FD_PKT = "fd_pkt"
    ACK_PKT = "ack_pkt"
    SYN_BEGIN = "syn_begin"
    REPLY = "reply"
    OFFSET_BCAST = "offset_bcast"
    DATA_PKT = "data_pkt"


PROTOCOL_KINDS = (MessageKind.SYN_BEGIN, MessageKind.REPLY, MessageKind.OFFSET_BCAST)

_REQUIRED_STAMPS = {
    MessageKind.SYN_BEGIN: ("t1",),
    MessageKind.REPLY: ("t1", "t2", "t3"),
    MessageKind.OFFSET_BCAST: ("t2", "delta", "d"),
}


@dataclass
class Message:
    kind: MessageKind
    src: int
    channel: int = CONTROL_CHANNEL
    stamps: dict = field(default_factory=dict)
    designated: int | None = None
    dest: int | None = None
    level: int | None = None
    hops: int | None = None
    round: int | None = None
    beacon: int | None = None
    beacons: tuple | None = None

    def __post_init__(self):
        missing = [k for k in _REQUIRED_STAMPS.get(self.kind, ()) if k not in self.stamps]
        if missing:
            raise SimulationError(f"{self.kind.value} message missing timestamp(s) {missing}")
        if self.kind is MessageKind.SYN_BEGIN and self.designated is None:
            raise SimulationError("syn_begin must name a designated responder")

    def describe(self) -> str:
        parts = [self.kind.value, f"src={self.src}", f"ch={self.channel}"]
        for name in ("designated", "dest", "level", "hops", "round", "beacon", "beacons"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value}")
        parts += [f"{k}={v!r}" for k, v in self.stamps.items()]
        return " ".join(parts)


@dataclass
class SimConfig:
    seed: int = 0
    loss_prob: float = 0.0
    jitter_std: float = 0.0
    clock_jitter_std: float | None = None
    backoff_max: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise SimulationError(f"loss_prob must be in [0, 1], got {self.loss_prob}")
        if self.jitter_std < 0 or (self.clock_jitter_std is not None and self.clock_jitter_std < 0):
            raise SimulationError("jitter standard deviations must be >= 0")
        if self.backoff_max < 0:
            raise SimulationError(f"backoff_max must be >= 0, got {self.backoff_max}")

    def jitter_for(self, channel: int) -> float:
        if channel == CONTROL_CHANNEL or self.clock_jitter_std is None:
            return self.jitter_std
        return self.clock_jitter_std


@dataclass(frozen=True)
class Deliver:
    message: Message


@dataclass(frozen=True)
class TimerFire:
    timer_id: int


@dataclass(frozen=True)
class Internal:
    action: object
    label: str = "action"


@dataclass(order=False)
class Event:
    at: float
    target: int
    body: object
    seq: int = -1


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: int
    kind: str
    detail: str = ""
    message: Message | None = None

    def line(self) -> str:
        return f"{self.time!r} {self.node} {self.kind} {self.detail}".rstrip()


class EventTrace(list):
    """List of ``TraceRecord`` with a few counting helpers."""

    def sends(self, kind: MessageKind | None = None):
        return [r for r in self if r.kind == "send" and (kind is None or r.message.kind is kind)]

    def count_sends(self, kinds=None) -> int:
        if kinds is None:
            return len(self.sends())
        if isinstance(kinds, MessageKind):
            kinds = (kinds,)
        return sum(1 for r in self if r.kind == "send" and r.message.kind in kinds)

    def send_counts(self) -> dict:
        counts = {k.value: 0 for k in MessageKind}
        for r in self.sends():
            counts[r.message.kind.value] += 1
        return counts

    def of_kind(self, kind: str):
        return [r for r in self if r.kind == kind]

    def to_text(self) -> str:
        return "".join(r.line() + "\n" for r in self)


class Simulator:
    def __init__(self, graph: NetworkGraph, config: SimConfig | None = None,
                 clocks=None, channels: ChannelAssignment | None = None):
        self.graph = graph
        self.config = config or SimConfig()
        self.rng = np.random.default_rng(self.config.seed)
        self.channels = channels or assign_channels(graph)
        n = graph.node_count
        self.clocks = list(clocks) if clocks is not None else [LocalClock() for _ in range(n)]
        if len(self.clocks) != n:
            raise SimulationError(f"expected {n} clocks, got {len(self.clocks)}")
        self.listening = [CONTROL_CHANNEL] * n
        self.now = 0.0
        self.trace = EventTrace()
        self._queue = []
        self._seq = 0
        self._timers = {}
        self._next_timer = 0
        self._handlers = {}

    # -- scheduling -----------------------------------------------------

    def schedule(self, ev: Event) -> Event:
        if not ev.at >= self.now or math.isnan(ev.at):
            raise SimulationError(f"cannot schedule event at {ev.at!r}, now is {self.now!r}")
        ev.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (ev.at, ev.seq, ev))
        return ev

    def call_later(self, node: int, delay: float, action, label: str = "action") -> Event:
        return self.schedule(Event(self.now + delay, node, Internal(action, label)))

    def backoff(self) -> float:
        if self.config.backoff_max <= 0:
            return 0.0
        return float(self.rng.uniform(0.0, self.config.backoff_max))

    def set_timer(self, node: int, delay: float, callback=None) -> int:
        if delay < 0:
            raise SimulationError(f"timer delay must be >= 0, got {delay}")
        timer_id = self._next_timer
        self._next_timer += 1
        self._timers[timer_id] = (node, callback)
        self.schedule(Event(self.now + delay, node, TimerFire(timer_id)))
        return timer_id

    def cancel_timer(self, timer_id) -> None:
        self._timers.pop(timer_id, None)

    def timer_pending(self, timer_id) -> bool:
        return timer_id in self._timers

    # -- radio ----------------------------------------------------------

    def on(self, kind: MessageKind, handler) -> None:
        self._handlers[kind] = handler

    def tune(self, node: int, channel: int) -> None:
        self.listening[node] = channel

    def broadcast(self, src: int, msg: Message, t_send_true: float | None = None) -> None:
        t_send = self.now if t_send_true is None else t_send_true
        if t_send < self.now:
            raise SimulationError(f"cannot transmit in the past ({t_send!r} < {self.now!r})")
        self.trace.append(TraceRecord(t_send, src, "send", msg.describe(), msg))
        jitter = self.config.jitter_for(msg.channel)
        for v in self.graph.neighbors(src):
            if self.config.loss_prob > 0 and self.rng.random() < self.config.loss_prob:
                self.trace.append(TraceRecord(self.now, v, "drop", msg.describe(), msg))
                continue
            lag = self.graph.delay(src, v)
            if jitter > 0:
                # arrival never precedes the transmission
                lag = max(0.0, lag + float(self.rng.normal(0.0, jitter)))
            self.schedule(Event(t_send + lag, v, Deliver(msg)))

    # -- clocks ---------------------------------------------------------

    def local_now(self, node: int) -> float:
        return local_time(self.clocks[node], self.now)

    def adjust_clock(self, node: int, amount: float, skew_adjustment: float = 0.0) -> None:
        self.clocks[node] = self.clocks[node].corrected(self.now, amount, skew_adjustment)
        self.trace.append(TraceRecord(self.now, node, "correct", f"amount={amount!r}"))

    def mismatch(self, node: int, reference: int | None = None) -> float:
        reference = self.graph.reference_node if reference is None else reference
        return self.local_now(node) - self.local_now(reference)

    def note(self, node: int, text: str) -> None:
        self.trace.append(TraceRecord(self.now, node, "note", text))

    # -- main loop ------------------------------------------------------

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, ev = heapq.heappop(self._queue)
        self.now = at
        body = ev.body
        if isinstance(body, Deliver):
            msg = body.message
            if self.listening[ev.target] != msg.channel:
                return True
            if msg.dest is not None and msg.dest != ev.target:
                return True
            self.trace.append(TraceRecord(at, ev.target, "deliver", msg.describe(), msg))
            handler = self._handlers.get(msg.kind)
            if handler is not None:
                handler(ev.target, msg)
        elif isinstance(body, TimerFire):
            entry = self._timers.pop(body.timer_id, None)
            if entry is None:
                return True
            self.trace.append(TraceRecord(at, ev.target, "timer", f"id={body.timer_id}"))
            if entry[1] is not None:
                entry[1]()
        elif isinstance(body, Internal):
            self.trace.append(TraceRecord(at, ev.target, body.label))
            body.action()
        else:
            raise SimulationError(f"unknown event body {body!r}")
        return True

    def run_until(self, t_end: float) -> EventTrace:
        if t_end < self.now:
            raise SimulationError(f"t_end {t_end!r} is before now {self.now!r}")
        while self._queue and self._queue[0][0] <= t_end:
            self.step()
        self.now = t_end
        return self.trace

    def run(self, max_events: int = 10_000_000) -> EventTrace:
        """Process events until the queue drains."""
        for _ in range(max_events):
            if not self.step():
                return self.trace
        raise SimulationError(f"event budget of {max_events} exhausted")

    def pending(self) -> int:
        return len(self._queue)
