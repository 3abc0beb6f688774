"""DAG checks, source-to-sink path enumeration and critical-path latency."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Mapping

from .model import (
    DeviceTopology,
    ModelError,
    ModelParams,
    OperatorGraph,
    Placement,
    ValidationReport,
    edge_latency,
)

DEFAULT_PATH_CAP = 10**6


class CycleError(ModelError):
    def __init__(self, cycle: list[int]):
        super().__init__(f"operator graph has a cycle: {' -> '.join(map(str, cycle))}")
        self.cycle = cycle


class PathExplosionError(ModelError):
    def __init__(self, cap: int):
        super().__init__(
            f"more than {cap} source-to-sink paths; use the critical path "
            "(evaluate) instead of listing every path"
        )
        self.cap = cap


@dataclass(frozen=True)
class DagPath:
    edges: tuple[tuple[int, int], ...]

    @property
    def nodes(self) -> tuple[int, ...]:
        if not self.edges:
            return ()
        return (self.edges[0][0],) + tuple(j for _, j in self.edges)

    def __len__(self):
        return len(self.edges)

    def __str__(self):
        return " -> ".join(map(str, self.nodes))

    @classmethod
    def from_nodes(cls, nodes) -> DagPath:
        nodes = list(nodes)
        return cls(tuple(zip(nodes[:-1], nodes[1:])))


@dataclass(frozen=True)
class CriticalPath:
    latency: float
    path: DagPath


def find_cycle(graph: OperatorGraph) -> list[int] | None:
    """Return a witness cycle ``[a, b, ..., a]`` or None for a DAG."""
    n = graph.n_operators
    state = [0] * n  # 0 new, 1 on stack, 2 done
    stack: list[int] = []

    def visit(u):
        state[u] = 1
        stack.append(u)
        for v in graph.successors(u):
            if state[v] == 1:
                return stack[stack.index(v):] + [v]
            if state[v] == 0:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for u in range(n):
        if state[u] == 0:
            found = visit(u)
            if found:
                return found
    return None


def topological_order(graph: OperatorGraph) -> list[int]:
    """Kahn's algorithm, always releasing the smallest ready id first."""
    indeg = [0] * graph.n_operators
    for _, j in graph.valid_edges():
        indeg[j] += 1
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in graph.successors(u):
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != graph.n_operators:
        raise CycleError(find_cycle(graph) or [])
    return order


def validate_graph(graph: OperatorGraph) -> ValidationReport:
    report = ValidationReport()
    n = graph.n_operators
    for k, (i, j) in enumerate(graph.edges):
        for end in (i, j):
            if not 0 <= end < n:
                report.error("dangling-edge", f"edge ({i}, {j}) references unknown operator {end}",
                             f"edges[{k}]")
        if i == j:
            report.error("cycle", f"self-loop on operator {i}", f"edges[{k}]", (i, i))
    for op in graph.operators:
        if not op.selectivity >= 0:
            report.error("negative-selectivity",
                         f"operator {op.id} has selectivity {op.selectivity}",
                         f"operators[{op.id}]")
    if n == 0:
        report.error("empty-graph", "graph has no operators", "operators")
        return report
    cycle = find_cycle(graph)
    if cycle and len(cycle) > 2:
        report.error("cycle", f"cycle {cycle}", "edges", cycle)
    sources = graph.sources()
    if not sources:
        report.error("no-source", "graph has no source operator", "edges")
    if not graph.sinks():
        report.error("no-sink", "graph has no sink operator", "edges")
    for i in sources:
        if graph.selectivity(i) != 1:
            report.error("source-selectivity",
                         f"source operator {i} has selectivity {graph.selectivity(i)}, expected 1",
                         f"operators[{i}].selectivity")
    return report


def enumerate_paths(graph: OperatorGraph, cap: int = DEFAULT_PATH_CAP) -> list[DagPath]:
    """All source-to-sink paths in lexicographic order of operator ids.

    Graphs without edges have no paths.
    """
    topological_order(graph)
    sinks = set(graph.sinks())
    paths: list[DagPath] = []

    def walk(nodes):
        u = nodes[-1]
        if u in sinks:
            if len(nodes) > 1:
                if len(paths) >= cap:
                    raise PathExplosionError(cap)
                paths.append(DagPath.from_nodes(nodes))
            return
        for v in graph.successors(u):
            nodes.append(v)
            walk(nodes)
            nodes.pop()

    for s in graph.sources():
        walk([s])
    return paths


def count_paths(graph: OperatorGraph) -> int:
    """Number of source-to-sink paths, by DP (no enumeration)."""
    order = topological_order(graph)
    ways = [0] * graph.n_operators
    for s in graph.sources():
        if graph.successors(s):
            ways[s] = 1
    for u in order:
        for v in graph.successors(u):
            ways[v] += ways[u]
    return sum(ways[t] for t in graph.sinks())


def edge_weights(graph: OperatorGraph, topo: DeviceTopology, placement: Placement,
                 params: ModelParams) -> dict[tuple[int, int], float]:
    return {(i, j): edge_latency(i, j, graph, topo, placement, params).latency
            for i, j in graph.valid_edges()}


def path_latency(path: DagPath, weights: Mapping[tuple[int, int], float]) -> float:
    total = 0.0
    for e in path.edges:
        total = total + weights[e]
    return total


def longest_path(graph: OperatorGraph, weights: Mapping[tuple[int, int], float]) -> CriticalPath:
    """Heaviest source-to-sink path for fixed nonnegative edge weights.

    Ties resolve to the lexicographically smallest node sequence.
    """
    order = topological_order(graph)
    dist: dict[int, float] = {}
    best: dict[int, tuple[int, ...]] = {}
    for s in graph.sources():
        dist[s] = 0.0
        best[s] = (s,)
    for u in order:
        for v in graph.successors(u):
            cand = dist[u] + weights[(u, v)]
            nodes = best[u] + (v,)
            if v not in dist or cand > dist[v] or (cand == dist[v] and nodes < best[v]):
                dist[v] = cand
                best[v] = nodes
    winner: tuple[float, tuple[int, ...]] | None = None
    for t in graph.sinks():
        if len(best[t]) < 2:
            continue
        if winner is None or dist[t] > winner[0] or (dist[t] == winner[0] and best[t] < winner[1]):
            winner = (dist[t], best[t])
    if winner is None:
        return CriticalPath(0.0, DagPath(()))
    return CriticalPath(winner[0], DagPath.from_nodes(winner[1]))


def critical_path(graph: OperatorGraph, topo: DeviceTopology, placement: Placement,
                  params: ModelParams) -> CriticalPath:
    return longest_path(graph, edge_weights(graph, topo, placement, params))


def total_latency(graph: OperatorGraph, topo: DeviceTopology, placement: Placement,
                  params: ModelParams) -> float:
    return critical_path(graph, topo, placement, params).latency
