"""Static network graph, broadcast domains and channel assignment.

Edge-list file grammar (one statement per line, ``#`` starts a comment)::

    nodes <count>            # optional; defaults to 1 + highest id seen
    reference <id>           # optional; defaults to 0
    <u> <v> <delay_seconds>  # undirected edge, delay > 0

Node ids are the integers ``0 .. count-1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONTROL_CHANNEL = 0


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkGraph:
    node_count: int
    edges: dict  # frozenset({u, v}) -> delay seconds
    reference_node: int = 0
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise TopologyError("a network needs at least one node")
        if not 0 <= self.reference_node < self.node_count:
            raise TopologyError(f"reference node {self.reference_node} not in graph")
        adj = [[] for _ in range(self.node_count)]
        for key, delay in self.edges.items():
            u, v = sorted(key)
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            if not (0 <= u and v < self.node_count):
                raise TopologyError(f"edge ({u}, {v}) references unknown node")
            if not delay > 0:
                raise TopologyError(f"edge ({u}, {v}) needs a positive delay, got {delay}")
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))
        if not self.is_connected():
            raise TopologyError("network is not connected")

    @classmethod
    def from_edges(cls, node_count, edge_list, reference_node=0):
        edges = {}
        for u, v, delay in edge_list:
            edges[frozenset((int(u), int(v)))] = float(delay)
        return cls(node_count, edges, reference_node)

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    def neighbors(self, u: int) -> tuple:
        self._check(u)
        return self._adj[u]

    def delay(self, u: int, v: int) -> float:
        try:
            return self.edges[frozenset((u, v))]
        except KeyError:
            raise TopologyError(f"no edge between {u} and {v}") from None

    def max_delay(self) -> float:
        return max(self.edges.values(), default=0.0)

    def degree(self, u: int) -> int:
        return len(self.neighbors(u))

    def edge_list(self):
        return sorted((*sorted(k), d) for k, d in self.edges.items())

    def bfs_distances(self, source=None) -> list:
        source = self.reference_node if source is None else source
        dist = [-1] * self.node_count
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self._adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        return min(self.bfs_distances(0)) >= 0

    def diameter(self) -> int:
        return max(max(self.bfs_distances(u)) for u in self.nodes)

    def _check(self, u):
        if not (isinstance(u, (int, np.integer)) and 0 <= u < self.node_count):
            raise TopologyError(f"unknown node {u!r}")


@dataclass(frozen=True)
class ChannelAssignment:
    clock_channel: tuple
    control_channel: int = CONTROL_CHANNEL

    def of(self, u: int) -> int:
        return self.clock_channel[u]

    def validate(self, g: NetworkGraph) -> None:
        for u in g.nodes:
            if self.clock_channel[u] == self.control_channel:
                raise TopologyError(f"node {u} clock channel collides with the control channel")
            for v in g.neighbors(u):
                if self.clock_channel[u] == self.clock_channel[v]:
                    raise TopologyError(f"neighbors {u} and {v} share clock channel {self.clock_channel[u]}")


def linear_network(depth: int, delay: float = 10e-3) -> NetworkGraph:
    if depth < 0:
        raise TopologyError(f"depth must be >= 0, got {depth}")
    return NetworkGraph.from_edges(depth + 1, [(i, i + 1, delay) for i in range(depth)], 0)


def star_network(leaves: int, delay: float = 10e-3) -> NetworkGraph:
    """Hub 0 with ``leaves`` neighbors 1..leaves."""
    if leaves < 0:
        raise TopologyError(f"leaf count must be >= 0, got {leaves}")
    return NetworkGraph.from_edges(leaves + 1, [(0, i, delay) for i in range(1, leaves + 1)], 0)


def random_connected(n: int, rng, extra_edge_prob: float = 0.15, delay: float = 10e-3) -> NetworkGraph:
    """Random spanning tree plus independent extra edges; uniform delays."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.add(frozenset((int(order[i]), int(order[j]))))
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < extra_edge_prob:
                edges.add(frozenset((u, v)))
    return NetworkGraph(n, {e: delay for e in edges}, 0)


def assign_channels(g: NetworkGraph) -> ChannelAssignment:
    """Greedy colouring in node-id order; colours start at 1 so none is the control channel."""
    colours = [0] * g.node_count
    for u in g.nodes:
        taken = {colours[v] for v in g.neighbors(u) if colours[v]}
        c = 1
        while c in taken:
            c += 1
        colours[u] = c
    return ChannelAssignment(tuple(colours))


def broadcast_domain(g: NetworkGraph, u: int) -> set:
    return set(g.neighbors(u))


def parse_edge_list(text: str) -> NetworkGraph:
    node_count = None
    reference = 0
    edge_list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "reference" and len(parts) == 2:
                reference = int(parts[1])
            elif parts[0] == "nodes" and len(parts) == 2:
                node_count = int(parts[1])
            elif len(parts) == 3:
                edge_list.append((int(parts[0]), int(parts[1]), float(parts[2])))
            else:
                raise ValueError("expected `u v delay`, `reference <id>` or `nodes <count>`")
        except ValueError as exc:
            raise TopologyError(f"line {lineno}: {exc}: {raw!r}") from None
    if node_count is None:
        ids = [max(u, v) for u, v, _ in edge_list] + [reference]
        node_count = max(ids) + 1
    if any(u < 0 or v < 0 for u, v, _ in edge_list):
        raise TopologyError("node ids must be non-negative")
    return NetworkGraph.from_edges(node_count, edge_list, reference)


def load_edge_list(path) -> NetworkGraph:
    return parse_edge_list(Path(path).read_text())


def format_edge_list(g: NetworkGraph) -> str:
    lines = [f"nodes {g.node_count}", f"reference {g.reference_node}"]
    lines += [f"{u} {v} {d!r}" for u, v, d in g.edge_list()]
    return "\n".join(lines) + "\n"
