"""Directed-graph model: the maximal digraph, activation-induced subgraphs,
cluster (SCC) detection, exact diameters, and windowed connectivity checks.

Edges are ordered pairs ``(i, j)`` meaning *i sends to j* (j receives from i).
Node identifiers run from 1 to ``node_count``.  All operations here are pure
functions of their inputs and safe to call concurrently.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import ConfigurationError

Edge = tuple[int, int]


@dataclass(frozen=True)
class MaximalDigraph:
    """The full potential network; every runtime graph is an activation-induced
    subgraph of it.

    ``diameter_bound`` is the number of detection-flood iterations agents run
    each round, so it must dominate the diameter of any strongly connected
    subnetwork that can form.  Construction checks it against the full graph;
    shipped scenarios are additionally checked subset-exhaustively in tests.
    """

    node_count: int
    edges: frozenset[Edge]
    diameter_bound: int

    def __post_init__(self):
        if self.node_count < 1:
            raise ConfigurationError(f"node_count must be >= 1, got {self.node_count}")
        for i, j in self.edges:
            if i == j:
                raise ConfigurationError(f"self-loop edge {i}->{j} is not allowed")
            if not (1 <= i <= self.node_count and 1 <= j <= self.node_count):
                raise ConfigurationError(
                    f"edge {i}->{j} references a node outside 1..{self.node_count}"
                )
        if self.diameter_bound < 1:
            raise ConfigurationError(
                f"diameter_bound must be a positive integer, got {self.diameter_bound}"
            )
        needed = required_diameter_bound(self.node_count, self.edges)
        if self.diameter_bound < needed:
            raise ConfigurationError(
                f"diameter_bound {self.diameter_bound} is below the graph's "
                f"exact diameter {needed}; bounds may only be raised"
            )

    @cached_property
    def _out(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, list[int]] = {v: [] for v in self.nodes()}
        for i, j in sorted(self.edges):
            table[i].append(j)
        return {v: tuple(ns) for v, ns in table.items()}

    @cached_property
    def _in(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, list[int]] = {v: [] for v in self.nodes()}
        for i, j in sorted(self.edges):
            table[j].append(i)
        return {v: tuple(ns) for v, ns in table.items()}

    def nodes(self) -> range:
        return range(1, self.node_count + 1)

    def potential_out(self, node: int) -> tuple[int, ...]:
        """All nodes this one may ever send to."""
        return self._out[node]

    def potential_in(self, node: int) -> tuple[int, ...]:
        """All nodes this one may ever receive from."""
        return self._in[node]


@dataclass(frozen=True)
class ActivationVector:
    """Indicator of which agents are active; bit j-1 is agent j."""

    bits: tuple[bool, ...]

    @classmethod
    def from_ids(cls, node_count: int, active: Iterable[int]) -> "ActivationVector":
        on = set(active)
        return cls(tuple(v in on for v in range(1, node_count + 1)))

    def __len__(self) -> int:
        return len(self.bits)

    def is_active(self, node: int) -> bool:
        return self.bits[node - 1]

    def active_ids(self) -> tuple[int, ...]:
        return tuple(v for v, on in enumerate(self.bits, start=1) if on)


@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint strongly connected components covering the active nodes.

    Clusters are ordered by smallest member, so cluster indices are stable
    for a given activation pattern.
    """

    clusters: tuple[frozenset[int], ...]

    @cached_property
    def cluster_of(self) -> dict[int, int]:
        table: dict[int, int] = {}
        for idx, members in enumerate(self.clusters):
            for v in members:
                table[v] = idx
        return table

    def __len__(self) -> int:
        return len(self.clusters)


def active_subgraph(g: MaximalDigraph, a: ActivationVector) -> frozenset[Edge]:
    """Edges of the maximal digraph whose endpoints are both active."""
    if len(a) != g.node_count:
        raise ConfigurationError(
            f"activation length {len(a)} does not match node_count {g.node_count}"
        )
    return frozenset((i, j) for i, j in g.edges if a.is_active(i) and a.is_active(j))


def strongly_connected_components(
    nodes: Iterable[int], edges: Iterable[Edge]
) -> list[frozenset[int]]:
    """Tarjan's algorithm (iterative), restricted to the given node set.

    Components are returned sorted by smallest member.
    """
    node_list = sorted(set(nodes))
    node_set = set(node_list)
    succ: dict[int, list[int]] = {v: [] for v in node_list}
    for i, j in sorted(edges):
        if i in node_set and j in node_set:
            succ[i].append(j)

    index: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    counter = 0
    components: list[frozenset[int]] = []

    for root in node_list:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, children = work[-1]
            advanced = False
            for w in children:
                if w not in index:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))

    components.sort(key=min)
    return components


def clusters(active_edges: Iterable[Edge], active_nodes: Iterable[int]) -> ClusterPartition:
    """Partition the active nodes into strongly connected clusters.

    Isolated active nodes form trivial clusters of size one.  An empty active
    set yields an empty partition.
    """
    node_set = set(active_nodes)
    edge_list = list(active_edges)
    for i, j in edge_list:
        if i not in node_set or j not in node_set:
            raise ConfigurationError(
                f"edge {i}->{j} has an endpoint outside the active node set"
            )
    return ClusterPartition(tuple(strongly_connected_components(node_set, edge_list)))


def is_strongly_connected(nodes: Iterable[int], edges: Iterable[Edge]) -> bool:
    """True iff the given nodes form a single strongly connected component."""
    node_set = set(nodes)
    if len(node_set) <= 1:
        return True
    return len(strongly_connected_components(node_set, edges)) == 1


def _bfs_distances(source: int, succ: dict[int, list[int]]) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in succ[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def induced_diameter(nodes: Iterable[int], edges: Iterable[Edge]) -> int:
    """Longest shortest directed path within the induced subgraph.

    Raises if some ordered pair is unreachable, naming the pair.
    """
    node_list = sorted(set(nodes))
    node_set = set(node_list)
    succ: dict[int, list[int]] = {v: [] for v in node_list}
    for i, j in edges:
        if i in node_set and j in node_set:
            succ[i].append(j)
    best = 0
    for s in node_list:
        dist = _bfs_distances(s, succ)
        for t in node_list:
            if t not in dist:
                raise ConfigurationError(
                    f"graph is not strongly connected: no path from v{s} to v{t}"
                )
            best = max(best, dist[t])
    return best


def exact_diameter(g: MaximalDigraph) -> int:
    """Exact diameter of the maximal digraph (all-pairs shortest paths)."""
    return induced_diameter(g.nodes(), g.edges)


def required_diameter_bound(node_count: int, edges: Iterable[Edge]) -> int:
    """The minimum admissible diameter bound for a graph.

    For a strongly connected graph this is its exact diameter; otherwise the
    maximum diameter over its strongly connected components.  Always >= 1.
    """
    edge_list = list(edges)
    needed = 1
    for comp in strongly_connected_components(range(1, node_count + 1), edge_list):
        needed = max(needed, induced_diameter(comp, edge_list))
    return needed


def build_digraph(
    node_count: int, edges: Iterable[Edge], diameter_bound: int | None = None
) -> MaximalDigraph:
    """Construct a maximal digraph, auto-filling the diameter bound if omitted."""
    edge_set = frozenset((int(i), int(j)) for i, j in edges)
    if diameter_bound is None:
        probe = MaximalDigraph(node_count, edge_set, diameter_bound=10**9)
        diameter_bound = required_diameter_bound(node_count, probe.edges)
    return MaximalDigraph(node_count, edge_set, diameter_bound)


def is_beta_strongly_connected(
    edge_sets: Sequence[Iterable[Edge]], beta: int, nodes: Iterable[int]
) -> bool:
    """Check windowed connectivity of an edge-set sequence over a fixed node set.

    True iff, for every aligned window of ``beta`` consecutive rounds, the
    union of the window's edge sets restricted to ``nodes`` is strongly
    connected on ``nodes``.  A trailing partial window is ignored.
    """
    if beta < 1:
        raise ConfigurationError(f"beta must be >= 1, got {beta}")
    if len(edge_sets) < beta:
        raise ConfigurationError(
            f"need at least beta={beta} rounds of edges, got {len(edge_sets)}"
        )
    node_set = set(nodes)
    for start in range(0, (len(edge_sets) // beta) * beta, beta):
        window: set[Edge] = set()
        for k in range(start, start + beta):
            window.update(
                (i, j) for i, j in edge_sets[k] if i in node_set and j in node_set
            )
        if not is_strongly_connected(node_set, window):
            return False
    return True


# Constructed 7-node experiment graph: two strongly connected blocks
# {v1,v2,v3} and {v5,v6,v7} bridged only through v4, so removing v4 splits
# the network into two clusters regardless of the presence of v3 or v5.
DEFAULT_EDGES: tuple[Edge, ...] = (
    (1, 2), (2, 3), (3, 1), (2, 1),
    (5, 6), (6, 7), (7, 5), (7, 6),
    (2, 4), (4, 6), (7, 4), (4, 1),
)


def default_maximal_digraph() -> MaximalDigraph:
    """The shipped 7-agent maximal digraph with its exact diameter as bound."""
    return build_digraph(7, DEFAULT_EDGES)
