"""Push-pull epidemic dissemination over a static topology.

Rounds are synchronous: every node picks ``fanout`` neighbours uniformly at
random and the pair reconciles digests against their knowledge at the
start of the round, then exchanges the missing item bodies. Read-only nodes
(the supervisor observer) pull but never hand anything out.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable


class TopologyError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Topology:
    n: int
    edges: frozenset[tuple[int, int]]
    fanout: int = 1
    read_only: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.fanout < 1:
            raise TopologyError("fanout must be at least 1")
        for u, v in self.edges:
            if u == v:
                raise TopologyError(f"self-loop at {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise TopologyError(f"edge ({u}, {v}) outside 0..{self.n - 1}")
        adjacency: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adjacency[u].append(v)
            adjacency[v].append(u)
        object.__setattr__(self, "_adjacency", tuple(tuple(sorted(set(a))) for a in adjacency))

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adjacency[u]  # type: ignore[attr-defined]


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def make_topology(n: int, edges: Iterable[tuple[int, int]], fanout: int = 1, read_only: Iterable[int] = ()) -> Topology:
    return Topology(n, frozenset(_edge(u, v) for u, v in edges), fanout, frozenset(read_only))


def complete_graph(n: int, fanout: int = 1) -> Topology:
    return make_topology(n, ((u, v) for u in range(n) for v in range(u + 1, n)), fanout)


def random_graph(n: int, p: float, rng: random.Random, fanout: int = 1) -> Topology:
    """Erdős–Rényi G(n, p); edges drawn in lexicographic order."""
    return make_topology(n, ((u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p), fanout)


def connected_random_graph(n: int, p: float, rng: random.Random, fanout: int = 1, max_tries: int = 1000) -> Topology:
    for _ in range(max_tries):
        topo = random_graph(n, p, rng, fanout)
        if len(partition_check(topo)) <= 1:
            return topo
    raise TopologyError(f"no connected G({n}, {p}) found in {max_tries} draws")


def parse_topology(text: str, n: int | None = None, fanout: int = 1) -> Topology:
    """Parse a ``u v`` edge list; ``#`` starts a comment."""
    edges = []
    highest = -1
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError("expected 'u v'", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise TopologyError(f"non-integer node in {line!r}", lineno) from None
        if u < 0 or v < 0:
            raise TopologyError("negative node id", lineno)
        if u == v:
            raise TopologyError(f"self-loop at {u}", lineno)
        edges.append((u, v))
        highest = max(highest, u, v)
    size = highest + 1 if n is None else n
    if highest >= size:
        raise TopologyError(f"node {highest} outside declared size {size}")
    return make_topology(size, edges, fanout)


def partition_check(topo: Topology) -> list[list[int]]:
    """Connected components by breadth-first search, each sorted, ordered by smallest node."""
    seen = [False] * topo.n
    components = []
    for start in range(topo.n):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        comp = []
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in topo.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        components.append(sorted(comp))
    return components


@dataclass
class GossipState:
    known: list[set[bytes]]
    bodies: dict[bytes, bytes] = field(default_factory=dict)
    round: int = 0

    @classmethod
    def empty(cls, n: int) -> "GossipState":
        return cls([set() for _ in range(n)])

    def seed(self, node: int, digest: bytes, body: bytes = b"") -> None:
        self.known[node].add(digest)
        self.bodies.setdefault(digest, body)


def round(state: GossipState, topology: Topology, rng: random.Random) -> GossipState:
    """Advance one synchronous push-pull round in place and return the state."""
    if len(state.known) != topology.n:
        raise ValueError("state and topology disagree on node count")
    snapshot = [frozenset(k) for k in state.known]
    for u in range(topology.n):
        peers = topology.neighbors(u)
        if not peers:
            continue
        for v in rng.sample(peers, min(topology.fanout, len(peers))):
            if v not in topology.read_only:
                state.known[u] |= snapshot[v] - snapshot[u]
            if u not in topology.read_only:
                state.known[v] |= snapshot[u] - snapshot[v]
    state.round += 1
    return state


def converged(state: GossipState, item: bytes, nodes: Iterable[int] | None = None) -> bool:
    members = range(len(state.known)) if nodes is None else nodes
    return all(item in state.known[u] for u in members)


def spread(
    state: GossipState,
    topology: Topology,
    rng: random.Random,
    item: bytes,
    max_rounds: int,
) -> int | None:
    """Run rounds until ``item`` covers the component(s) that hold it.

    Returns the number of rounds taken, or None if ``max_rounds`` ran out.
    """
    holders = {u for u, k in enumerate(state.known) if item in k}
    targets = [u for comp in partition_check(topology) if holders & set(comp) for u in comp]
    for taken in range(max_rounds + 1):
        if converged(state, item, targets):
            return taken
        if taken < max_rounds:
            round(state, topology, rng)
    return None
