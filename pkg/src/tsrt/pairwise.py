"""Two-way timestamp exchange between an initiator A and a responder B.

A sends at ``t1`` (A's clock), B receives at ``t2`` and answers at ``t3``
(B's clock), A receives the answer at ``t4``. With a symmetric link,
``t2 = t1 + delta + d`` where ``delta`` is B's clock minus A's clock, and

    delta = ((t2 - t1) - (t4 - t3)) / 2
    d     = ((t2 - t1) + (t4 - t3)) / 2
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .engine import Message, MessageKind, Simulator
from .topology import CONTROL_CHANNEL

log = logging.getLogger(__name__)


class ExchangeFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class ExchangeRecord:
    t1: float
    t2: float
    t3: float
    t4: float

    def is_consistent(self) -> bool:
        return self.t4 >= self.t1 and self.t3 >= self.t2

    def swapped(self) -> "ExchangeRecord":
        """The same two legs seen with the roles of A and B exchanged."""
        return ExchangeRecord(self.t3, self.t4, self.t1, self.t2)


@dataclass(frozen=True)
class DriftDelayEstimate:
    delta: float
    d: float
    skew: float | None = None  # responder rate minus initiator rate, if estimated
    ref_time: float | None = None  # initiator-local time at which delta holds

    @property
    def negative_delay(self) -> bool:
        return self.d < 0

    def swapped(self) -> "DriftDelayEstimate":
        skew = None if self.skew is None else -self.skew
        return DriftDelayEstimate(-self.delta, self.d, skew, self.ref_time)

    def delta_at(self, t_local: float) -> float:
        if self.skew is None or self.ref_time is None:
            return self.delta
        return self.delta + self.skew * (t_local - self.ref_time)


def compute_drift_delay(rec: ExchangeRecord) -> DriftDelayEstimate:
    out_leg = rec.t2 - rec.t1
    back_leg = rec.t4 - rec.t3
    est = DriftDelayEstimate((out_leg - back_leg) / 2.0, (out_leg + back_leg) / 2.0, ref_time=rec.t1)
    if est.negative_delay:
        log.warning("negative propagation delay estimate %r from %r", est.d, rec)
    return est


def mean_estimate(records) -> DriftDelayEstimate:
    """Arithmetic mean of the per-round estimates."""
    if not records:
        raise ExchangeFailed("no successful exchange rounds")
    ests = [compute_drift_delay(r) for r in records]
    delta = float(np.mean([e.delta for e in ests]))
    d = float(np.mean([e.d for e in ests]))
    return DriftDelayEstimate(delta, d, ref_time=float(np.mean([r.t1 for r in records])))


def regression_estimate(records) -> DriftDelayEstimate:
    """Least-squares line through the per-round drift against ``t1``.

    The slope is the relative skew; ``delta`` is the fitted drift at the mean
    send time. Needs at least three rounds.
    """
    if len(records) < 3:
        raise ExchangeFailed(f"regression needs >= 3 rounds, got {len(records)}")
    t1 = np.array([r.t1 for r in records])
    ests = [compute_drift_delay(r) for r in records]
    deltas = np.array([e.delta for e in ests])
    t_ref = float(t1.mean())
    slope, intercept = np.polyfit(t1 - t_ref, deltas, 1)
    return DriftDelayEstimate(float(intercept), float(np.mean([e.d for e in ests])),
                              skew=float(slope), ref_time=t_ref)


def aggregate(records, estimator: str = "mean") -> DriftDelayEstimate:
    if estimator == "regression" and len(records) >= 3:
        return regression_estimate(records)
    return mean_estimate(records)


class PairwiseProtocol:
    """Request/reply rounds over the engine.

    Requests are ``syn_begin`` messages addressed to the responder, answers
    are ``reply`` messages addressed back to the initiator.
    """

    def __init__(self, sim: Simulator, channel: int = CONTROL_CHANNEL,
                 spacing: float = 0.4, timeout: float | None = None):
        self.sim = sim
        self.channel = channel
        self.spacing = spacing
        self.timeout = timeout if timeout is not None else 4 * sim.graph.max_delay() + sim.config.backoff_max
        self._sessions = {}
        sim.on(MessageKind.SYN_BEGIN, self._on_request)
        sim.on(MessageKind.REPLY, self._on_reply)

    def start(self, initiator: int, responder: int, n_beacons: int, on_done=None) -> list:
        if n_beacons < 1:
            raise ValueError(f"n_beacons must be >= 1, got {n_beacons}")
        if responder not in self.sim.graph.neighbors(initiator):
            raise ValueError(f"nodes {initiator} and {responder} are not adjacent")
        session = {"responder": responder, "left": n_beacons, "records": [], "timer": None,
                   "on_done": on_done, "beacon": 0}
        self._sessions[initiator] = session
        self._send_request(initiator)
        return session["records"]

    def _send_request(self, initiator):
        s = self._sessions[initiator]
        s["left"] -= 1
        s["beacon"] += 1
        msg = Message(MessageKind.SYN_BEGIN, initiator, self.channel,
                      {"t1": self.sim.local_now(initiator)},
                      designated=s["responder"], dest=s["responder"], round=s["beacon"])
        self.sim.broadcast(initiator, msg)
        s["timer"] = self.sim.set_timer(initiator, self.timeout, lambda: self._round_over(initiator))

    def _on_request(self, node, msg):
        t2 = self.sim.local_now(node)

        def answer():
            reply = Message(MessageKind.REPLY, node, self.channel,
                            {"t1": msg.stamps["t1"], "t2": t2, "t3": self.sim.local_now(node)},
                            dest=msg.src, round=msg.round)
            self.sim.broadcast(node, reply)

        self.sim.call_later(node, self.sim.backoff(), answer, "backoff")

    def _on_reply(self, node, msg):
        s = self._sessions.get(node)
        if s is None or msg.src != s["responder"] or msg.round != s["beacon"]:
            return
        if not self.sim.timer_pending(s["timer"]):
            return
        self.sim.cancel_timer(s["timer"])
        st = msg.stamps
        s["records"].append(ExchangeRecord(st["t1"], st["t2"], st["t3"], self.sim.local_now(node)))
        self._round_over(node)

    def _round_over(self, initiator):
        s = self._sessions[initiator]
        self.sim.cancel_timer(s["timer"])
        if s["left"] > 0:
            self.sim.call_later(initiator, self.spacing, lambda: self._send_request(initiator), "beacon")
            return
        del self._sessions[initiator]
        if s["on_done"] is not None:
            s["on_done"](s["records"])


def two_way_exchange(sim: Simulator, initiator: int, responder: int, n_beacons: int,
                     spacing: float = 0.4) -> list:
    """Run ``n_beacons`` rounds to completion; lost rounds are left out."""
    proto = PairwiseProtocol(sim, spacing=spacing)
    records = proto.start(initiator, responder, n_beacons)
    sim.run()
    if not records:
        raise ExchangeFailed(f"all {n_beacons} rounds between {initiator} and {responder} were lost")
    return records


def synchronize_pair(sim: Simulator, child: int, parent: int, estimate: DriftDelayEstimate) -> None:
    """Align ``child`` to ``parent``.

    ``estimate.delta`` is the child's clock minus the parent's, i.e. the result
    of an exchange the parent initiated. Pass ``est.swapped()`` for an
    exchange the child initiated.
    """
    delta = estimate.delta
    if estimate.skew is not None and estimate.ref_time is not None:
        delta = estimate.delta_at(sim.local_now(parent))
    sim.adjust_clock(child, -delta, -(estimate.skew or 0.0))
