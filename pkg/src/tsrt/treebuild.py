"""Flood-based construction of the synchronization tree.

The root broadcasts an ``fd_pkt`` carrying its level. A node accepts only the
first flood packet it hears: it adopts the sender as parent, takes the
sender's level plus one, acknowledges the parent and rebroadcasts. Later
flood packets are ignored. Each ``ack_pkt`` bumps the receiver's
``no_receiver`` count.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Message, MessageKind, SimConfig, Simulator
from .topology import CONTROL_CHANNEL, NetworkGraph


class TreeError(RuntimeError):
    pass


@dataclass
class TreeNode:
    parent: int | None = None
    level: int = 0
    no_receiver: int = 0
    accepted: bool = False


class TreeState:
    def __init__(self, node_count: int, root: int):
        self.root = root
        self.nodes = [TreeNode() for _ in range(node_count)]

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, u) -> TreeNode:
        return self.nodes[u]

    @classmethod
    def from_parents(cls, parents, root: int = 0) -> "TreeState":
        """Tree from an explicit parent list (``None`` at the root)."""
        state = cls(len(parents), root)
        for u, p in enumerate(parents):
            state.nodes[u].parent = p
            state.nodes[u].accepted = True
        for u in range(len(parents)):
            level, v, seen = 0, u, set()
            while state.nodes[v].parent is not None:
                if v in seen:
                    raise TreeError("parent pointers contain a cycle")
                seen.add(v)
                v = state.nodes[v].parent
                level += 1
            if v != root:
                raise TreeError(f"node {u} does not lead to root {root}")
            state.nodes[u].level = level
            if state.nodes[u].parent is not None:
                state.nodes[state.nodes[u].parent].no_receiver += 1
        return state

    def children(self, u: int) -> list:
        return [v for v, n in enumerate(self.nodes) if n.parent == u]

    def children_map(self) -> dict:
        out = {u: [] for u in range(len(self.nodes))}
        for v, n in enumerate(self.nodes):
            if n.parent is not None:
                out[n.parent].append(v)
        return out

    def internal_nodes(self) -> list:
        return [u for u, kids in self.children_map().items() if kids]

    def accepted(self) -> list:
        return [u for u, n in enumerate(self.nodes) if n.accepted]

    def coverage(self) -> float:
        return len(self.accepted()) / len(self.nodes)

    def depth(self) -> int:
        return max((n.level for n in self.nodes if n.accepted), default=0)

    def dump(self) -> str:
        lines = []
        for u, n in enumerate(self.nodes):
            parent = "-" if n.parent is None else str(n.parent)
            level = str(n.level) if n.accepted else "-"
            lines.append(f"{u} {parent} {level} {n.no_receiver}")
        return "\n".join(lines) + "\n"


class TreeBuilder:
    """Flooding protocol bound to a simulator."""

    def __init__(self, sim: Simulator, root: int | None = None):
        self.sim = sim
        self.root = sim.graph.reference_node if root is None else root
        self.state = TreeState(sim.graph.node_count, self.root)
        self._started = False
        sim.on(MessageKind.FD_PKT, self.handle_fd_pkt)
        sim.on(MessageKind.ACK_PKT, self.handle_ack_pkt)

    def initiate_flood(self) -> None:
        if self._started:
            raise TreeError("flood already initiated")
        self._started = True
        root = self.state[self.root]
        root.accepted = True
        root.level = 0
        self.sim.broadcast(self.root, Message(MessageKind.FD_PKT, self.root, CONTROL_CHANNEL, level=0))

    def handle_fd_pkt(self, node: int, msg: Message) -> None:
        me = self.state[node]
        if me.accepted:
            return
        me.accepted = True
        me.parent = msg.src
        me.level = msg.level + 1
        self.sim.broadcast(node, Message(MessageKind.ACK_PKT, node, CONTROL_CHANNEL, dest=msg.src))
        self.sim.broadcast(node, Message(MessageKind.FD_PKT, node, CONTROL_CHANNEL, level=me.level))

    def handle_ack_pkt(self, node: int, msg: Message) -> None:
        self.state[node].no_receiver += 1


def build_tree(graph: NetworkGraph, config: SimConfig | None = None, sim: Simulator | None = None) -> TreeState:
    """Run the flood to quiescence and return the resulting tree."""
    sim = sim or Simulator(graph, config)
    builder = TreeBuilder(sim)
    builder.initiate_flood()
    sim.run()
    return builder.state
