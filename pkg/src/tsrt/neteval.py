"""Network evaluation: message rates, AO/SI mode choice and the resync period.

Time unit is the second throughout; ``hop_rate`` is hops per second.

``ps`` is read as the probability that the clock mismatch exceeds
``eps_max``, i.e. ``ps = erfc(eps_max / (sqrt(2) * sigma_eps))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from . import kernels
from .clockmodel import ErrorModel
from .engine import Message, MessageKind, Simulator
from .topology import CONTROL_CHANNEL

# relative bracket width at which the sigma bisection stops
SIGMA_REL_TOL = 1e-14


class EvalError(ValueError):
    pass


class Mode(enum.Enum):
    AO = "AO"  # always on
    SI = "SI"  # sensor initiated


@dataclass(frozen=True)
class SyncParams:
    branches: int = 5
    tau: float = 1.0
    hop_rate: float = 0.0
    delta: float = 0.0
    n_beacons: int = 1
    eps_max: float = 10e-3
    ps_limit: float = 1e-4
    tau_sync: float = 0.0

    def __post_init__(self):
        if self.branches < 1:
            raise EvalError(f"branches: must be >= 1, got {self.branches}")
        if not self.tau > 0:
            raise EvalError(f"tau: must be > 0, got {self.tau}")
        if self.hop_rate < 0:
            raise EvalError(f"hop_rate: must be >= 0, got {self.hop_rate}")
        if not 0.0 <= self.delta <= 1.0:
            raise EvalError(f"delta: latency factor must be in [0, 1], got {self.delta}")
        if self.n_beacons < 1:
            raise EvalError(f"n_beacons: must be >= 1, got {self.n_beacons}")
        if not self.eps_max > 0:
            raise EvalError(f"eps_max: must be > 0, got {self.eps_max}")
        if not 0.0 < self.ps_limit < 1.0:
            raise EvalError(f"ps_limit: must be in (0, 1), got {self.ps_limit}")
        if self.tau_sync < 0:
            raise EvalError(f"tau_sync: must be >= 0, got {self.tau_sync}")

    def with_beacons(self, n: int) -> "SyncParams":
        return replace(self, n_beacons=n)


@dataclass(frozen=True)
class EvalReport:
    mode: Mode
    sigma_eps: float
    tau_max: float
    tau: float
    m_per_unit_time: float
    n_beacons: int
    sigma_o: float
    sigma_s: float


def messages_per_unit_time(mode: Mode, p: SyncParams) -> float:
    if not p.tau > 0:
        raise EvalError("tau must be > 0")
    if Mode(mode) is Mode.AO:
        return 2.0 * p.branches * p.n_beacons / p.tau
    return 2.0 * p.hop_rate * p.n_beacons


def select_mode(p: SyncParams) -> Mode:
    """SI when ``tau < B * delta / h``, AO otherwise.

    With no data traffic (``h == 0``) and ``delta > 0`` the threshold is
    infinite and SI is chosen; ``delta == 0`` always gives AO.
    """
    if p.delta == 0:
        return Mode.AO
    if p.hop_rate == 0:
        return Mode.SI
    return Mode.SI if p.tau < p.branches * p.delta / p.hop_rate else Mode.AO


def erfc(x: float) -> float:
    return float(kernels.erfc(float(x)))


def sigma_from_ps(eps_max: float, ps: float) -> float:
    """Mismatch std-dev at which ``P(|eps| > eps_max) == ps``.

    Bisects the argument of erfc; since sigma is inversely proportional to
    that argument the relative tolerance carries over unchanged.
    """
    if not 0.0 < ps < 1.0:
        raise EvalError(f"ps must be in (0, 1), got {ps}")
    if not eps_max > 0:
        raise EvalError(f"eps_max must be > 0, got {eps_max}")
    x = kernels.erfc_inv(float(ps), SIGMA_REL_TOL)
    return eps_max / (math.sqrt(2.0) * x)


def tau_max(sigma_eps: float, sigma_oN: float, sigma_sN: float) -> float:
    if not sigma_sN > 0:
        raise EvalError(f"skew error std-dev must be > 0, got {sigma_sN}")
    if not sigma_eps > sigma_oN:
        raise EvalError(
            f"offset error alone exceeds budget: sigma_o={sigma_oN!r} >= sigma_eps={sigma_eps!r}"
        )
    return math.sqrt((sigma_eps * sigma_eps - sigma_oN * sigma_oN) / (sigma_sN * sigma_sN))


def evaluate(p: SyncParams, model: ErrorModel) -> EvalReport:
    sigma_eps = sigma_from_ps(p.eps_max, p.ps_limit)
    sigma_o = model.sigma_o(p.n_beacons)
    sigma_s = model.sigma_s(p.n_beacons)
    tmax = tau_max(sigma_eps, sigma_o, sigma_s)
    resolved = replace(p, tau=tmax + p.tau_sync)
    mode = select_mode(resolved)
    return EvalReport(
        mode=mode,
        sigma_eps=sigma_eps,
        tau_max=tmax,
        tau=resolved.tau,
        m_per_unit_time=messages_per_unit_time(mode, resolved),
        n_beacons=p.n_beacons,
        sigma_o=sigma_o,
        sigma_s=sigma_s,
    )


class HopRateTracker:
    """Hop counts reported by data-packet destinations.

    ``record`` is called by a destination for every delivered data packet;
    ``rate`` gives hops per second over the trailing window.
    """

    def __init__(self):
        self._events = []  # (true time, hops)

    def record(self, t: float, hops: int) -> None:
        self._events.append((t, hops))

    def total_hops(self, start: float = -math.inf, end: float = math.inf) -> int:
        return sum(h for t, h in self._events if start < t <= end)

    def rate(self, window: float, end: float) -> float:
        if not window > 0:
            raise EvalError(f"window must be > 0, got {window}")
        return self.total_hops(end - window, end) / window


def track_hop_rate(tracker: HopRateTracker, window: float, end: float) -> float:
    return tracker.rate(window, end)


class DataTraffic:
    """Sensing traffic routed hop by hop up the tree to the reference node,
    which records the hop count of every packet it receives."""

    def __init__(self, sim: Simulator, tree, tracker: HopRateTracker | None = None):
        self.sim = sim
        self.tree = tree
        self.tracker = tracker or HopRateTracker()
        sim.on(MessageKind.DATA_PKT, self._on_data)

    def send(self, src: int) -> None:
        if src == self.tree.root:
            return
        self._forward(src, 0)

    def _forward(self, node: int, hops: int) -> None:
        parent = self.tree[node].parent
        self.sim.broadcast(node, Message(MessageKind.DATA_PKT, node, CONTROL_CHANNEL,
                                         dest=parent, hops=hops + 1))

    def _on_data(self, node: int, msg: Message) -> None:
        if node == self.tree.root:
            self.tracker.record(self.sim.now, msg.hops)
        else:
            self._forward(node, msg.hops)

    def poisson(self, rate: float, duration: float, sources=None) -> int:
        """Schedule packets as a Poisson process of ``rate`` per second from
        uniformly chosen non-root sources; returns the number scheduled."""
        sources = list(sources) if sources is not None else [
            u for u in range(len(self.tree)) if u != self.tree.root]
        t = self.sim.now
        count = 0
        while True:
            t += float(self.sim.rng.exponential(1.0 / rate))
            if t > self.sim.now + duration:
                return count
            src = sources[int(self.sim.rng.integers(len(sources)))]
            self.sim.call_later(src, t - self.sim.now, lambda s=src: self.send(s), "sense")
            count += 1
