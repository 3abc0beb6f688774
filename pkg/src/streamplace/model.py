"""Data model and per-edge cost evaluation for fractional operator placement.

An analytics job is a DAG of operators. Each operator is split across a set
of devices by a row of fractions; the cost of a DAG edge (i, j) is the
slowest single-device transfer from the instances of ``i`` to those of
``j``, plus a congestion charge per enabled cross-device link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9


class ModelError(Exception):
    """Base class for errors raised by the cost model."""


class ShapeError(ModelError, ValueError):
    """Array dimensions disagree between placement, topology and graph."""


class EdgeNotFoundError(ModelError, KeyError):
    """The requested (i, j) pair is not an edge of the operator graph."""


class LinkCountMode(str, Enum):
    PAIRS = "pairs"
    DEVICES = "devices"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Operator:
    id: int
    selectivity: float = 1.0


@dataclass(frozen=True)
class OperatorGraph:
    """Operators indexed 0..n-1 plus directed edges between them.

    Structural problems (cycles, dangling endpoints, bad source selectivity)
    are tolerated at construction and surfaced by ``validate_graph``.
    """

    operators: tuple[Operator, ...]
    edges: tuple[tuple[int, int], ...]

    def __init__(self, operators: Iterable[Operator], edges: Iterable[Sequence[int]]):
        ops = tuple(sorted(operators, key=lambda op: op.id))
        ids = [op.id for op in ops]
        if ids != list(range(len(ops))):
            raise ModelError(f"operator ids must be exactly 0..{len(ops) - 1}, got {ids}")
        es = tuple((int(e[0]), int(e[1])) for e in edges)
        if len(set(es)) != len(es):
            raise ModelError("duplicate edge in operator graph")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "edges", es)

    @classmethod
    def from_selectivities(cls, selectivities: Sequence[float], edges) -> OperatorGraph:
        return cls([Operator(i, float(s)) for i, s in enumerate(selectivities)], edges)

    @property
    def n_operators(self) -> int:
        return len(self.operators)

    def selectivity(self, i: int) -> float:
        return self.operators[i].selectivity

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self._edge_set

    @cached_property
    def _edge_set(self) -> frozenset:
        return frozenset(self.edges)

    @cached_property
    def _valid_edges(self) -> tuple[tuple[int, int], ...]:
        n = self.n_operators
        return tuple(sorted((i, j) for i, j in self.edges if 0 <= i < n and 0 <= j < n))

    def valid_edges(self) -> list[tuple[int, int]]:
        """Edges whose endpoints both exist, sorted by (i, j)."""
        return list(self._valid_edges)

    def successors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.valid_edges() if a == i)

    def predecessors(self, j: int) -> list[int]:
        return sorted(i for i, b in self.valid_edges() if b == j)

    def sources(self) -> list[int]:
        targets = {j for _, j in self.valid_edges()}
        return [i for i in range(self.n_operators) if i not in targets]

    def sinks(self) -> list[int]:
        origins = {i for i, _ in self.valid_edges()}
        return [i for i in range(self.n_operators) if i not in origins]


@dataclass(frozen=True, eq=False)
class DeviceTopology:
    """Pairwise sender->receiver cost per unit of data and operator availability."""

    com_cost: np.ndarray
    availability: np.ndarray

    def __init__(self, com_cost, availability):
        cc = _frozen_array(com_cost, float)
        av = _frozen_array(availability, bool)
        if cc.ndim != 2 or cc.shape[0] != cc.shape[1]:
            raise ShapeError(f"com_cost must be square, got shape {cc.shape}")
        if av.ndim != 2 or av.shape[1] != cc.shape[0]:
            raise ShapeError(
                f"availability must be operators x {cc.shape[0]} devices, got shape {av.shape}"
            )
        object.__setattr__(self, "com_cost", cc)
        object.__setattr__(self, "availability", av)

    @classmethod
    def fully_available(cls, com_cost, n_operators: int) -> DeviceTopology:
        n = len(com_cost)
        return cls(com_cost, np.ones((n_operators, n), dtype=bool))

    @property
    def n_devices(self) -> int:
        return self.com_cost.shape[0]

    def available_devices(self, i: int) -> list[int]:
        return [int(u) for u in np.flatnonzero(self.availability[i])]


@dataclass(frozen=True)
class Placement:
    """Operator x device matrix of assigned fractions."""

    x: np.ndarray

    def __init__(self, x):
        arr = _frozen_array(x, float)
        if arr.ndim != 2:
            raise ShapeError(f"placement must be a 2-D matrix, got shape {arr.shape}")
        object.__setattr__(self, "x", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.x.shape

    def row(self, i: int) -> np.ndarray:
        return self.x[i]

    def tolist(self) -> list[list[float]]:
        return self.x.tolist()

    def __eq__(self, other):
        if not isinstance(other, Placement):
            return NotImplemented
        return self.x.shape == other.x.shape and bool(np.array_equal(self.x, other.x))

    def __hash__(self):
        return hash((self.x.shape, self.x.tobytes()))


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 0.0
    beta: float = 0.0
    dq_fraction: float = 0.0
    link_count_mode: LinkCountMode = LinkCountMode.PAIRS
    # data units per source batch; scales every transfer term
    batch_size: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "link_count_mode", LinkCountMode(self.link_count_mode))
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.dq_fraction <= 1.0:
            raise ValueError(f"dq_fraction must lie in [0, 1], got {self.dq_fraction}")
        if not self.batch_size > 0:
            raise ValueError(f"batch_size must be > 0, got {self.batch_size}")

    def with_dq(self, dq_fraction: float) -> ModelParams:
        return ModelParams(self.alpha, self.beta, dq_fraction, self.link_count_mode, self.batch_size)


@dataclass(frozen=True)
class EdgeLatencyBreakdown:
    edge: tuple[int, int]
    per_device_cost: tuple[float, ...]
    enabled_links: int
    latency: float

    @property
    def transfer_max(self) -> float:
        return max(self.per_device_cost, default=0.0)


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    location: str = ""
    witness: tuple = ()

    def __str__(self):
        where = f"{self.location}: " if self.location else ""
        return f"{where}[{self.code}] {self.message}"


@dataclass
class ValidationReport:
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return self.ok

    def codes(self) -> list[str]:
        return [issue.code for issue in self.errors]

    def extend(self, other: ValidationReport) -> ValidationReport:
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)
        return self

    def error(self, code: str, message: str, location: str = "", witness: tuple = ()):
        self.errors.append(Issue(code, message, location, tuple(witness)))

    def warn(self, code: str, message: str, location: str = ""):
        self.warnings.append(Issue(code, message, location))


def _check_edge(graph: OperatorGraph, i: int, j: int):
    if not graph.has_edge(i, j):
        raise EdgeNotFoundError(f"({i}, {j}) is not an edge of the operator graph")


def _check_shapes(graph: OperatorGraph, topo: DeviceTopology, placement: Placement):
    expected = (graph.n_operators, topo.n_devices)
    if placement.shape != expected:
        raise ShapeError(f"placement shape {placement.shape} != (operators, devices) {expected}")
    if topo.availability.shape[0] != graph.n_operators:
        raise ShapeError(
            f"availability has {topo.availability.shape[0]} rows for {graph.n_operators} operators"
        )


def _support(row: np.ndarray) -> list[int]:
    return [int(u) for u in np.flatnonzero(row != 0.0)]


def count_enabled_links(row_i: np.ndarray, row_j: np.ndarray, mode=LinkCountMode.PAIRS) -> int:
    """Count cross-device links between two fraction rows."""
    sup_i, sup_j = _support(row_i), _support(row_j)
    pairs = [(u, v) for u in sup_i for v in sup_j if u != v]
    if LinkCountMode(mode) is LinkCountMode.PAIRS:
        return len(pairs)
    return len({d for pair in pairs for d in pair})


def enabled_links(i: int, j: int, graph: OperatorGraph, placement: Placement,
                  mode=LinkCountMode.PAIRS) -> int:
    _check_edge(graph, i, j)
    return count_enabled_links(placement.x[i], placement.x[j], mode)


def receive_cost(com_cost: np.ndarray, row_j: np.ndarray) -> list[float]:
    """Per sending device u, the fraction-weighted cost of reaching the instances of j.

    Sums use ``math.fsum`` so the result does not depend on device order.
    """
    n = com_cost.shape[0]
    return [math.fsum(com_cost[u, v] * row_j[v] for v in range(n)) for u in range(n)]


def edge_latency(i: int, j: int, graph: OperatorGraph, topo: DeviceTopology,
                 placement: Placement, params: ModelParams) -> EdgeLatencyBreakdown:
    _check_edge(graph, i, j)
    _check_shapes(graph, topo, placement)
    row_i, row_j = placement.x[i], placement.x[j]
    s_i = graph.selectivity(i)
    inner = receive_cost(topo.com_cost, row_j)
    per_device = []
    for u in range(topo.n_devices):
        if topo.availability[i, u]:
            per_device.append(float(row_i[u] * s_i * inner[u] * params.batch_size))
        else:
            per_device.append(0.0)
    links = count_enabled_links(row_i, row_j, params.link_count_mode)
    latency = max(per_device, default=0.0) + params.alpha * links
    return EdgeLatencyBreakdown((i, j), tuple(per_device), links, float(latency))


def objective_f(latency: float, params: ModelParams) -> float:
    """Latency discounted by the weighted share of quality-checked input."""
    return latency / (1.0 + params.beta * params.dq_fraction)


def network_volume(graph: OperatorGraph, topo: DeviceTopology, placement: Placement,
                   batch_size: float = 1.0) -> float:
    """Total fraction-weighted data crossing device boundaries, summed over edges."""
    _check_shapes(graph, topo, placement)
    n = topo.n_devices
    terms = []
    for i, j in graph.valid_edges():
        s_i = graph.selectivity(i)
        for u in range(n):
            for v in range(n):
                if u != v:
                    terms.append(placement.x[i, u] * s_i * placement.x[j, v] * batch_size)
    return math.fsum(terms)


def validate_topology(topo: DeviceTopology, n_operators: int | None = None) -> ValidationReport:
    report = ValidationReport()
    cc = topo.com_cost
    for u, v in zip(*np.nonzero(~(cc >= 0))):
        report.error("negative-cost", f"com_cost[{u}][{v}] = {cc[u, v]} is negative",
                     f"com_cost[{u}][{v}]")
    for u in range(topo.n_devices):
        if cc[u, u] != 0:
            report.warn("nonzero-diagonal", f"device {u} has self-cost {cc[u, u]}",
                        f"com_cost[{u}][{u}]")
    rows = topo.availability.shape[0]
    if n_operators is not None and rows != n_operators:
        report.error("dimension-mismatch",
                     f"availability has {rows} rows for {n_operators} operators", "availability")
    for i in range(rows):
        if not topo.availability[i].any():
            report.error("no-available-device", f"operator {i} has no available device",
                         f"availability[{i}]")
    return report


def validate_placement(placement: Placement, graph: OperatorGraph, topo: DeviceTopology,
                       caps: np.ndarray | None = None) -> ValidationReport:
    """List every violated placement constraint; an empty report means valid.

    ``caps`` optionally bounds each entry from above (operator x device).
    """
    report = ValidationReport()
    expected = (graph.n_operators, topo.n_devices)
    if placement.shape != expected:
        report.error("dimension-mismatch",
                     f"placement shape {placement.shape} != (operators, devices) {expected}",
                     "placement")
        return report
    if topo.availability.shape[0] != graph.n_operators:
        report.error("dimension-mismatch",
                     f"availability has {topo.availability.shape[0]} rows for "
                     f"{graph.n_operators} operators", "availability")
        return report
    x = placement.x
    for i in range(expected[0]):
        row = x[i]
        total = math.fsum(row)
        if not abs(total - 1.0) <= ROW_SUM_TOL:
            report.error("row-sum", f"operator {i} fractions sum to {total:.12g}, not 1",
                         f"placement[{i}]")
        for u in range(expected[1]):
            where = f"placement[{i}][{u}]"
            if not row[u] >= 0:
                report.error("negative-fraction", f"x[{i}][{u}] = {row[u]} is negative", where)
            if row[u] > 0 and not topo.availability[i, u]:
                report.error("unavailable-device",
                             f"operator {i} has fraction {row[u]} on unavailable device {u}",
                             where)
            if caps is not None and row[u] > caps[i, u] + ROW_SUM_TOL:
                report.error("cap-exceeded",
                             f"x[{i}][{u}] = {row[u]} exceeds cap {caps[i, u]}", where)
        if not any(row[u] > 0 and topo.availability[i, u] for u in range(expected[1])):
            report.error("empty-support", f"operator {i} has no mass on an available device",
                         f"placement[{i}]")
    return report
