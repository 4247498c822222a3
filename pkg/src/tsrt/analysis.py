"""Message-cost models, the M-versus-N sweep and error statistics.

Per synchronization round with ``N`` beacons:

* TSRT spends ``2N + 1`` messages per broadcast domain that has children
  (``N`` beacons, ``N`` designated replies, one offset broadcast), however
  many children the domain has.
* TPSN spends ``2N`` messages per non-root node, since every child runs its
  own two-way exchange with its parent.
* RBS (closed form only) spends one reference broadcast plus a two-message
  exchange for every pair of receivers.

The average message rate is ``messages_per_sync / tau(N)`` where ``tau(N)``
comes from the network evaluation. TPSN does not estimate skew, so its skew
error stays at the single-exchange value for every ``N``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .clockmodel import ErrorModel
from .engine import MessageKind, SimConfig, Simulator
from .hts import SyncErrorReport
from .neteval import EvalError, SyncParams, evaluate
from .pairwise import PairwiseProtocol, aggregate, synchronize_pair
from .topology import NetworkGraph
from .treebuild import TreeBuilder, TreeState

SWEEP_HEADER = ("N", "M_tsrt", "M_tpsn", "tau_max_tsrt", "tau_max_tpsn", "mode")


class Protocol(enum.Enum):
    TSRT = "tsrt"
    TPSN = "tpsn"
    RBS = "rbs"


@dataclass(frozen=True)
class CostModel:
    protocol: Protocol
    per_domain_messages: object  # (n_beacons, child_count) -> int
    skew_estimated: bool

    def messages(self, n_beacons: int, child_count: int) -> int:
        if child_count < 1:
            return 0
        return self.per_domain_messages(n_beacons, child_count)


COST_MODELS = {
    Protocol.TSRT: CostModel(Protocol.TSRT, lambda n, k: 2 * n + 1, True),
    Protocol.TPSN: CostModel(Protocol.TPSN, lambda n, k: 2 * n * k, False),
    # pairwise verification between every two receivers plus one reference broadcast
    Protocol.RBS: CostModel(Protocol.RBS, lambda n, k: k * (k - 1) + 1, False),
}


def _domain_sizes(tree: TreeState):
    return [len(kids) for kids in tree.children_map().values() if kids]


def tsrt_messages_per_sync(tree: TreeState, n_beacons: int) -> int:
    _check_beacons(n_beacons)
    return sum(COST_MODELS[Protocol.TSRT].messages(n_beacons, k) for k in _domain_sizes(tree))


def tpsn_messages_per_sync(tree: TreeState, n_beacons: int) -> int:
    _check_beacons(n_beacons)
    return sum(COST_MODELS[Protocol.TPSN].messages(n_beacons, k) for k in _domain_sizes(tree))


def rbs_messages_per_sync(tree: TreeState) -> int:
    return sum(COST_MODELS[Protocol.RBS].messages(1, k) for k in _domain_sizes(tree))


def _check_beacons(n):
    if n < 1:
        raise ValueError(f"n_beacons must be >= 1, got {n}")


def chain_tree(depth: int) -> TreeState:
    return TreeState.from_parents([None] + list(range(depth)), root=0)


# -- sweep ----------------------------------------------------------------

@dataclass
class SweepRow:
    N: int
    M_tsrt: float
    M_tpsn: float
    tau_max_tsrt: float
    tau_max_tpsn: float
    mode: str
    defined: bool = True


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows:
            w.writerow([r.N, repr(r.M_tsrt), repr(r.M_tpsn), repr(r.tau_max_tsrt),
                        repr(r.tau_max_tpsn), r.mode])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            for k, v in d.items():
                if isinstance(v, float) and math.isnan(v):
                    d[k] = None
            rows.append(d)
        return json.dumps({"columns": list(SWEEP_HEADER), "rows": rows}, indent=2) + "\n"


def sweep_m_vs_n(p: SyncParams, model: ErrorModel, n_range, tree: TreeState | None = None) -> SweepResult:
    """M for TSRT and TPSN at every N in ``n_range`` (ascending).

    ``tree`` defaults to a chain of depth ``p.branches``. Rows where the
    offset error alone exceeds the budget are kept with NaN values.
    """
    ns = [int(n) for n in n_range]
    if not ns:
        raise ValueError("n_range is empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_range must be strictly increasing")
    tree = tree if tree is not None else chain_tree(p.branches)
    tpsn_model = model.without_skew_estimation()
    result = SweepResult()
    for n in ns:
        pn = p.with_beacons(n)
        try:
            ts = evaluate(pn, model)
            tp = evaluate(pn, tpsn_model)
        except EvalError:
            nan = float("nan")
            result.rows.append(SweepRow(n, nan, nan, nan, nan, "undefined", False))
            continue
        result.rows.append(SweepRow(
            N=n,
            M_tsrt=tsrt_messages_per_sync(tree, n) / ts.tau,
            M_tpsn=tpsn_messages_per_sync(tree, n) / tp.tau,
            tau_max_tsrt=ts.tau_max,
            tau_max_tpsn=tp.tau_max,
            mode=ts.mode.value,
        ))
    return result


# -- error statistics -------------------------------------------------------

@dataclass
class LevelStats:
    count: int
    mean: float
    std: float
    max: float


@dataclass
class ErrorSummary:
    per_level: dict
    overall_max: float
    exceedance: float
    unsynchronized: int


def error_stats(report: SyncErrorReport, eps_max: float = math.inf) -> ErrorSummary:
    if not report.nodes:
        raise ValueError("empty report")
    per_level = {}
    for level, entries in report.by_level().items():
        errs = np.array([e.abs_error for e in entries])
        per_level[level] = LevelStats(len(errs), float(errs.mean()), float(errs.std()), float(errs.max()))
    errs = np.array([e.abs_error for e in report.nodes])
    return ErrorSummary(
        per_level=per_level,
        overall_max=float(errs.max()),
        exceedance=float(np.mean(errs > eps_max)),
        unsynchronized=sum(not e.synchronized for e in report.nodes),
    )


# -- TPSN baseline simulation ---------------------------------------------

def simulate_tpsn(graph: NetworkGraph, config: SimConfig | None = None, clocks=None,
                  n_beacons: int = 1, spacing: float = 0.4, estimator: str = "mean",
                  tree: TreeState | None = None):
    """Flood a tree, then synchronize level by level: every child runs its own
    ``n_beacons``-round exchange with its parent and corrects its clock.

    Returns (simulator, tree, number of sync-phase messages).
    """
    sim = Simulator(graph, config, clocks=clocks)
    if tree is None:
        builder = TreeBuilder(sim)
        builder.initiate_flood()
        sim.run()
        tree = builder.state
    first = len(sim.trace)
    proto = PairwiseProtocol(sim, spacing=spacing)
    by_level = {}
    for u in tree.accepted():
        if u != tree.root:
            by_level.setdefault(tree[u].level, []).append(u)
    for level in sorted(by_level):
        results = {}
        for child in by_level[level]:
            proto.start(child, tree[child].parent, n_beacons,
                        on_done=lambda recs, c=child: results.__setitem__(c, recs))
        sim.run()
        for child in by_level[level]:
            recs = results.get(child)
            if not recs:
                sim.note(child, "exchange failed")
                continue
            # the child initiated, so the estimate is parent minus child
            est = aggregate(recs, estimator).swapped()
            synchronize_pair(sim, child, tree[child].parent, est)
    sent = sum(1 for r in sim.trace[first:] if r.kind == "send"
               and r.message.kind in (MessageKind.SYN_BEGIN, MessageKind.REPLY))
    return sim, tree, sent
