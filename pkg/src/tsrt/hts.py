"""Hierarchy time synchronization ripple.

One round in the broadcast domain of a synchronized node ``rn``:

1. ``rn`` broadcasts ``syn_begin`` (its send time ``t1`` and one randomly
   designated child) on the control channel and tunes to its own clock
   channel. Every child records its local receive time ``t2'``.
2. The designated child tunes to ``rn``'s clock channel and, after a random
   backoff, replies with ``t2`` and its send time ``t3``.
3. ``rn`` stamps ``t4``, derives drift and delay from the four stamps and
   broadcasts ``t2 = t1 + delta + d`` together with ``delta`` and ``d`` on the
   control channel. Each child compares ``t2`` with its own ``t2'`` and
   corrects its clock.
4. Children with children of their own repeat the procedure one level down.

With ``n_beacons > 1`` steps 1-2 repeat ``n_beacons`` times before the single
offset broadcast; the drift and delay are averaged over the beacons.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .engine import Message, MessageKind, PROTOCOL_KINDS, SimConfig, Simulator
from .pairwise import ExchangeRecord, compute_drift_delay, mean_estimate
from .topology import CONTROL_CHANNEL, NetworkGraph
from .treebuild import TreeBuilder, TreeState


class Phase(enum.Enum):
    IDLE = "idle"
    AWAITING_REPLY = "awaiting_reply"
    AWAITING_OFFSET = "awaiting_offset"
    SYNCHRONIZED = "synchronized"


class CorrectionMode(enum.Enum):
    PAPER = "paper"  # T = t + d + d'
    CORRECTED = "corrected"  # T = t + d' - delta

    @classmethod
    def parse(cls, value) -> "CorrectionMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass
class HtsNodeState:
    phase: Phase = Phase.IDLE
    round: int = -1
    t2prime: dict = field(default_factory=dict)  # beacon index -> local receive time
    designated_child: int | None = None
    timer: int | None = None
    # initiator bookkeeping for the current round
    beacon: int = 0
    t1: dict = field(default_factory=dict)
    exchanges: dict = field(default_factory=dict)
    synced_at: float | None = None

    @property
    def recorded_t2prime(self) -> float | None:
        if not self.t2prime:
            return None
        return float(np.mean(list(self.t2prime.values())))


@dataclass
class DomainResult:
    rn: int
    designated: int
    delta: float
    d: float
    t2: float


@dataclass
class NodeError:
    node: int
    level: int
    error: float  # local clock minus reference clock at report time
    synchronized: bool

    @property
    def abs_error(self) -> float:
        return abs(self.error)


@dataclass
class SyncErrorReport:
    nodes: list
    message_counts: dict
    time: float
    domains: list = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    @property
    def max_abs_error(self) -> float:
        return max((e.abs_error for e in self.nodes), default=0.0)

    @property
    def all_synchronized(self) -> bool:
        return all(e.synchronized for e in self.nodes)

    def by_level(self) -> dict:
        out = {}
        for e in self.nodes:
            out.setdefault(e.level, []).append(e)
        return dict(sorted(out.items()))

    @property
    def protocol_messages(self) -> int:
        return sum(self.message_counts.get(k.value, 0) for k in PROTOCOL_KINDS)

    def to_text(self) -> str:
        lines = ["# id level abs_error_seconds"]
        lines += [f"{e.node} {e.level} {e.abs_error!r}" for e in self.nodes]
        lines.append("# kind count")
        lines += [f"{k} {v}" for k, v in self.message_counts.items()]
        return "\n".join(lines) + "\n"


class HtsProtocol:
    def __init__(self, sim: Simulator, tree: TreeState, n_beacons: int = 1,
                 mode: CorrectionMode | str = CorrectionMode.CORRECTED,
                 spacing: float = 0.4, timer_duration: float | None = None):
        if n_beacons < 1:
            raise ValueError(f"n_beacons must be >= 1, got {n_beacons}")
        self.sim = sim
        self.tree = tree
        self.children = tree.children_map()
        self.n_beacons = n_beacons
        self.mode = CorrectionMode.parse(mode)
        self.spacing = spacing
        if timer_duration is None:
            timer_duration = 4 * sim.graph.max_delay() + sim.config.backoff_max
        self.timer_duration = timer_duration
        self.state = [HtsNodeState() for _ in range(sim.graph.node_count)]
        self.domains = []
        self.round = -1
        sim.on(MessageKind.SYN_BEGIN, self.handle_syn_begin)
        sim.on(MessageKind.REPLY, self.handle_reply)
        sim.on(MessageKind.OFFSET_BCAST, self.handle_offset_bcast)

    # -- reference side ------------------------------------------------

    def start_round(self) -> None:
        self.round += 1
        root = self.tree.root
        st = self.state[root]
        self._reset(st)
        st.phase = Phase.SYNCHRONIZED
        st.synced_at = self.sim.now
        self.start_sync(root)

    def start_sync(self, rn: int) -> None:
        kids = self.children.get(rn, [])
        if not kids:
            self.sim.note(rn, "no children, nothing to synchronize")
            return
        st = self.state[rn]
        st.designated_child = kids[int(self.sim.rng.integers(len(kids)))]
        st.beacon = 0
        st.t1 = {}
        st.exchanges = {}
        self._send_beacon(rn)

    def _send_beacon(self, rn: int) -> None:
        st = self.state[rn]
        st.beacon += 1
        t1 = self.sim.local_now(rn)
        st.t1[st.beacon] = t1
        msg = Message(MessageKind.SYN_BEGIN, rn, CONTROL_CHANNEL, {"t1": t1},
                      designated=st.designated_child, round=self.round, beacon=st.beacon)
        self.sim.broadcast(rn, msg)
        self.sim.tune(rn, self.sim.channels.of(rn))
        st.phase = Phase.AWAITING_REPLY
        st.timer = self.sim.set_timer(rn, self.timer_duration, lambda: self._on_timeout(rn))

    def _on_timeout(self, rn: int) -> None:
        st = self.state[rn]
        self.sim.tune(rn, CONTROL_CHANNEL)
        st.phase = Phase.SYNCHRONIZED
        st.timer = None
        self.sim.note(rn, f"round {self.round} aborted at beacon {st.beacon}: no reply")

    def handle_reply(self, rn: int, msg: Message) -> None:
        st = self.state[rn]
        if (st.phase is not Phase.AWAITING_REPLY or msg.src != st.designated_child
                or msg.round != self.round or msg.beacon != st.beacon):
            return
        if st.timer is None or not self.sim.timer_pending(st.timer):
            return
        t4 = self.sim.local_now(rn)
        self.sim.cancel_timer(st.timer)
        st.timer = None
        self.sim.tune(rn, CONTROL_CHANNEL)
        s = msg.stamps
        st.exchanges[st.beacon] = ExchangeRecord(s["t1"], s["t2"], s["t3"], t4)
        if st.beacon < self.n_beacons:
            st.phase = Phase.SYNCHRONIZED
            self.sim.call_later(rn, self.spacing, lambda: self._send_beacon(rn), "beacon")
            return
        self._broadcast_offset(rn)

    def _broadcast_offset(self, rn: int) -> None:
        st = self.state[rn]
        st.phase = Phase.SYNCHRONIZED
        used = tuple(sorted(st.exchanges))
        records = [st.exchanges[b] for b in used]
        if len(records) == 1:
            est = compute_drift_delay(records[0])
        else:
            est = mean_estimate(records)
        t1_mean = float(np.mean([st.t1[b] for b in used]))
        t2 = t1_mean + est.delta + est.d
        self.domains.append(DomainResult(rn, st.designated_child, est.delta, est.d, t2))
        msg = Message(MessageKind.OFFSET_BCAST, rn, CONTROL_CHANNEL,
                      {"t2": t2, "delta": est.delta, "d": est.d},
                      designated=st.designated_child, round=self.round, beacons=used)
        self.sim.broadcast(rn, msg)

    # -- child side ----------------------------------------------------

    def handle_syn_begin(self, node: int, msg: Message) -> None:
        if msg.src != self.tree[node].parent:
            return
        st = self.state[node]
        if st.round != msg.round:
            self._reset(st)
            st.round = msg.round
        if st.phase is Phase.SYNCHRONIZED:
            return
        st.t2prime[msg.beacon] = self.sim.local_now(node)
        st.phase = Phase.AWAITING_OFFSET
        if msg.designated != node:
            return
        t2 = st.t2prime[msg.beacon]
        clock_channel = self.sim.channels.of(msg.src)
        self.sim.tune(node, clock_channel)

        def reply():
            out = Message(MessageKind.REPLY, node, clock_channel,
                          {"t1": msg.stamps["t1"], "t2": t2, "t3": self.sim.local_now(node)},
                          dest=msg.src, round=msg.round, beacon=msg.beacon)
            self.sim.broadcast(node, out)
            self.sim.tune(node, CONTROL_CHANNEL)

        self.sim.call_later(node, self.sim.backoff(), reply, "backoff")

    def handle_offset_bcast(self, node: int, msg: Message) -> None:
        if msg.src != self.tree[node].parent:
            return
        st = self.state[node]
        if st.round != msg.round or st.phase is not Phase.AWAITING_OFFSET:
            return
        if not all(b in st.t2prime for b in msg.beacons):
            self.sim.note(node, "offset broadcast covers beacons this node missed")
            return
        t2prime = float(np.mean([st.t2prime[b] for b in msg.beacons]))
        s = msg.stamps
        d_prime = s["t2"] - t2prime
        if self.mode is CorrectionMode.PAPER:
            adjustment = s["d"] + d_prime
        elif node == msg.designated:
            adjustment = -s["delta"]
        else:
            adjustment = d_prime - s["delta"]
        self.sim.adjust_clock(node, adjustment)
        st.phase = Phase.SYNCHRONIZED
        st.synced_at = self.sim.now
        self.sim.note(node, "synchronized")
        if self.children.get(node):
            self.sim.call_later(node, self.sim.backoff(), lambda: self.start_sync(node), "start_sync")

    # -- whole network -------------------------------------------------

    def run_network_sync(self, rounds: int = 1, gap: float = 0.0, settle: float = 0.0) -> SyncErrorReport:
        """Run ``rounds`` complete ripples from the root.

        ``gap`` is idle time between rounds, ``settle`` idle time after the
        last round before clocks are compared.
        """
        first = len(self.sim.trace)
        for r in range(rounds):
            if r:
                self.sim.run_until(self.sim.now + gap)
            self.start_round()
            self.sim.run()
        self.sim.run_until(self.sim.now + settle)
        return self.report(first)

    def report(self, trace_start: int = 0) -> SyncErrorReport:
        counts = {k.value: 0 for k in PROTOCOL_KINDS}
        for rec in self.sim.trace[trace_start:]:
            if rec.kind == "send" and rec.message.kind in PROTOCOL_KINDS:
                counts[rec.message.kind.value] += 1
        root = self.tree.root
        nodes = []
        for u in range(self.sim.graph.node_count):
            if u == root:
                continue
            nodes.append(NodeError(u, self.tree[u].level, self.sim.mismatch(u, root),
                                   self.state[u].phase is Phase.SYNCHRONIZED
                                   and self.state[u].round == self.round))
        return SyncErrorReport(nodes, counts, self.sim.now, list(self.domains))

    @staticmethod
    def _reset(st: HtsNodeState) -> None:
        st.phase = Phase.IDLE
        st.t2prime = {}
        st.designated_child = None
        st.timer = None
        st.beacon = 0
        st.t1 = {}
        st.exchanges = {}
        st.synced_at = None


def simulate_tsrt(graph: NetworkGraph, config: SimConfig | None = None, clocks=None,
                  n_beacons: int = 1, mode=CorrectionMode.CORRECTED, rounds: int = 1,
                  spacing: float = 0.4, settle: float = 0.0):
    """Flood a tree, then run HTS ripples. Returns (report, simulator, tree)."""
    sim = Simulator(graph, config, clocks=clocks)
    builder = TreeBuilder(sim)
    builder.initiate_flood()
    sim.run()
    proto = HtsProtocol(sim, builder.state, n_beacons=n_beacons, mode=mode, spacing=spacing)
    report = proto.run_network_sync(rounds, settle=settle)
    return report, sim, builder.state
