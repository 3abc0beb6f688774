"""Placement search minimizing the quality-weighted latency objective.

Two searchers share one evaluation path:

* ``brute_force_optimize`` enumerates every placement whose rows are
  compositions of ``granularity`` quanta over the permitted devices. Edge
  weights depend only on the two endpoint rows, so they are tabulated once
  per edge and the candidates are scored in vectorized chunks.
* ``local_search_optimize`` moves mass between devices one step at a time
  from seeded random starts, with optional annealing.

Data-quality levels are explicit scenario data: each level carries a
``dq_fraction`` and per-entry caps on the placement matrix (cap 0 removes a
device for that operator).
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .graph import edge_weights, longest_path, topological_order
from .model import (
    DeviceTopology,
    ModelError,
    ModelParams,
    OperatorGraph,
    Placement,
    count_enabled_links,
    network_volume,
    objective_f,
    receive_cost,
    validate_placement,
)

CANDIDATE_CAP = 10**7
_CHUNK = 1 << 16
_CAP_TOL = 1e-12


class SearchSpaceError(ModelError):
    def __init__(self, count: int, cap: int = CANDIDATE_CAP):
        super().__init__(f"search space has {count} candidates, above the cap of {cap}")
        self.count = count
        self.cap = cap


class InfeasibleError(ModelError):
    """A scenario level leaves some operator without an assignable device."""


class InvalidCandidateError(ModelError):
    def __init__(self, report):
        super().__init__("invalid placement: " + "; ".join(map(str, report.errors)))
        self.report = report


class Method(str, Enum):
    BRUTE_FORCE = "brute"
    LOCAL_SEARCH = "local"


@dataclass(frozen=True)
class Cap:
    op: int
    device: int
    max_fraction: float


@dataclass(frozen=True)
class DqLevel:
    dq_fraction: float
    caps: tuple[Cap, ...] = ()
    # optional fixed placement for this level, used by fixed-placement sweeps
    placement: Placement | None = None

    def cap_matrix(self, n_operators: int, n_devices: int) -> np.ndarray:
        caps = np.ones((n_operators, n_devices))
        for c in self.caps:
            caps[c.op, c.device] = min(caps[c.op, c.device], c.max_fraction)
        return caps


@dataclass(frozen=True)
class DqScenario:
    levels: tuple[DqLevel, ...]

    def __init__(self, levels: Sequence[DqLevel]):
        levels = tuple(levels)
        if not levels:
            raise ValueError("scenario needs at least one level")
        dqs = [lv.dq_fraction for lv in levels]
        if len(set(dqs)) != len(dqs):
            raise ValueError(f"scenario dq_fraction values must be distinct, got {dqs}")
        for lv in levels:
            if not 0.0 <= lv.dq_fraction <= 1.0:
                raise ValueError(f"dq_fraction {lv.dq_fraction} outside [0, 1]")
            for c in lv.caps:
                if not 0.0 <= c.max_fraction <= 1.0:
                    raise ValueError(f"cap {c} outside [0, 1]")
        object.__setattr__(self, "levels", levels)

    def without(self, dq_fraction: float) -> DqScenario:
        return DqScenario([lv for lv in self.levels if lv.dq_fraction != dq_fraction])


@dataclass(frozen=True)
class OptimizerConfig:
    granularity: int = 10
    max_iterations: int = 500
    restarts: int = 10
    # None means one quantum, 1 / granularity
    move_step: float | None = None
    # relative to each restart's starting objective; 0 disables annealing
    initial_temperature: float = 0.05
    decay: float = 0.99
    seed: int = 0
    candidate_cap: int = CANDIDATE_CAP

    def __post_init__(self):
        if self.granularity < 1:
            raise ValueError("granularity must be >= 1")
        if self.move_step is not None and not 0 < self.move_step <= 1:
            raise ValueError("move_step must lie in (0, 1]")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.initial_temperature < 0:
            raise ValueError("initial_temperature must be >= 0")
        if self.restarts < 1 or self.max_iterations < 0:
            raise ValueError("restarts must be >= 1 and max_iterations >= 0")

    @property
    def step(self) -> float:
        return 1.0 / self.granularity if self.move_step is None else self.move_step


@dataclass(frozen=True)
class Evaluation:
    latency: float
    objective: float
    network_volume: float


@dataclass(frozen=True)
class OptimizationResult:
    placement: Placement
    dq_fraction: float
    latency: float
    objective: float
    evaluations: int
    method: Method
    network_volume: float = field(default=0.0, compare=False)
    # objective of each local-search restart's starting placement
    start_objectives: tuple[float, ...] = field(default=(), compare=False)

    def sort_key(self):
        return (self.objective, self.dq_fraction, tuple(self.placement.x.ravel()))


def evaluate_candidate(graph: OperatorGraph, topo: DeviceTopology, placement: Placement,
                       params: ModelParams, caps: np.ndarray | None = None) -> Evaluation:
    report = validate_placement(placement, graph, topo, caps)
    if not report.ok:
        raise InvalidCandidateError(report)
    latency = _latency(graph, topo, placement, params)
    return Evaluation(latency, objective_f(latency, params),
                      network_volume(graph, topo, placement, params.batch_size))


def _latency(graph, topo, placement, params) -> float:
    return longest_path(graph, edge_weights(graph, topo, placement, params)).latency


def _levels(params: ModelParams, scenario: DqScenario | None) -> list[DqLevel]:
    if scenario is None:
        return [DqLevel(params.dq_fraction)]
    return list(scenario.levels)


def _allowed(topo: DeviceTopology, caps: np.ndarray) -> np.ndarray:
    return topo.availability & (caps > 0)


def _compositions(allowed: np.ndarray, caps: np.ndarray, g: int) -> np.ndarray:
    """Rows of k/g fractions over allowed devices, lexicographically ascending."""
    devices = [int(u) for u in np.flatnonzero(allowed)]
    limit = [int(math.floor(caps[u] * g + 1e-9)) for u in devices]
    rows = []

    def fill(pos, left, acc):
        if pos == len(devices) - 1:
            if left <= limit[pos]:
                rows.append(acc + [left])
            return
        for k in range(min(left, limit[pos]) + 1):
            fill(pos + 1, left - k, acc + [k])

    if devices:
        fill(0, g, [])
    out = np.zeros((len(rows), allowed.shape[0]))
    for r, counts in enumerate(rows):
        for u, k in zip(devices, counts):
            out[r, u] = k / g
    # counts grow fastest on the last device, so rows are already ascending
    return out


def _edge_table(i, j, graph, topo, comps_i, comps_j, params) -> np.ndarray:
    """Latency of edge (i, j) for every pair of candidate rows.

    Mirrors ``model.edge_latency`` operation by operation so table entries
    are bit-identical to the scalar evaluation.
    """
    n = topo.n_devices
    s_i = graph.selectivity(i)
    inner = np.array([receive_cost(topo.com_cost, row) for row in comps_j]).reshape(len(comps_j), n)
    cost = np.zeros((len(comps_i), len(comps_j), n))
    for u in range(n):
        if topo.availability[i, u]:
            cost[:, :, u] = (comps_i[:, u] * s_i)[:, None] * inner[None, :, u] * params.batch_size
    worst = cost.max(axis=2) if n else np.zeros((len(comps_i), len(comps_j)))
    links = np.array([[count_enabled_links(a, b, params.link_count_mode) for b in comps_j]
                      for a in comps_i], dtype=float).reshape(worst.shape)
    return worst + params.alpha * links


def _level_space(graph, topo, level: DqLevel, g: int):
    caps = level.cap_matrix(graph.n_operators, topo.n_devices)
    allowed = _allowed(topo, caps)
    comps = [_compositions(allowed[i], caps[i], g) for i in range(graph.n_operators)]
    return caps, comps


def count_candidates(graph: OperatorGraph, topo: DeviceTopology, params: ModelParams,
                     scenario: DqScenario | None, granularity: int) -> int:
    total = 0
    for level in _levels(params, scenario):
        _, comps = _level_space(graph, topo, level, granularity)
        total += math.prod(len(c) for c in comps)
    return total


def _brute_force_level(graph, topo, params, level, config) -> OptimizationResult:
    g = config.granularity
    caps, comps = _level_space(graph, topo, level, g)
    sizes = [len(c) for c in comps]
    if 0 in sizes:
        bad = sizes.index(0)
        raise InfeasibleError(
            f"operator {bad} has no placement at granularity {g} under level "
            f"dq_fraction={level.dq_fraction}"
        )
    lp = params.with_dq(level.dq_fraction)
    order = topological_order(graph)
    edges = graph.valid_edges()
    tables = {(i, j): _edge_table(i, j, graph, topo, comps[i], comps[j], lp) for i, j in edges}
    preds = {v: [u for u in graph.predecessors(v)] for v in range(graph.n_operators)}
    sinks = [t for t in graph.sinks() if preds[t]]
    total = math.prod(sizes)
    denom = 1.0 + lp.beta * lp.dq_fraction

    best_val, best_idx = math.inf, -1
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.unravel_index(flat, sizes)
        dist = {}
        for v in order:
            if not preds[v]:
                dist[v] = np.zeros(len(flat))
                continue
            acc = None
            for u in preds[v]:
                cand = dist[u] + tables[(u, v)][idx[u], idx[v]]
                acc = cand if acc is None else np.maximum(acc, cand)
            dist[v] = acc
        if sinks:
            lat = dist[sinks[0]]
            for t in sinks[1:]:
                lat = np.maximum(lat, dist[t])
        else:
            lat = np.zeros(len(flat))
        f = lat / denom
        k = int(np.argmin(f))
        if f[k] < best_val:
            best_val, best_idx = float(f[k]), int(flat[k])

    pick = np.unravel_index(best_idx, sizes)
    x = np.array([comps[i][pick[i]] for i in range(graph.n_operators)])
    placement = Placement(x)
    ev = evaluate_candidate(graph, topo, placement, lp, caps)
    return OptimizationResult(placement, level.dq_fraction, ev.latency, ev.objective, total,
                              Method.BRUTE_FORCE, ev.network_volume)


def _pick_best(results: list[OptimizationResult]) -> OptimizationResult:
    best = min(results, key=OptimizationResult.sort_key)
    starts = tuple(f for r in results for f in r.start_objectives)
    return replace(best, evaluations=sum(r.evaluations for r in results), start_objectives=starts)


def brute_force_optimize(graph: OperatorGraph, topo: DeviceTopology, params: ModelParams,
                         scenario: DqScenario | None = None,
                         config: OptimizerConfig | None = None) -> OptimizationResult:
    """Exact minimum of the objective over the 1/g placement lattice.

    Ties go to the lowest dq_fraction, then the lexicographically smallest
    placement matrix.
    """
    config = config or OptimizerConfig()
    count = count_candidates(graph, topo, params, scenario, config.granularity)
    if count > config.candidate_cap:
        raise SearchSpaceError(count, config.candidate_cap)
    return _pick_best([_brute_force_level(graph, topo, params, lv, config)
                       for lv in _levels(params, scenario)])


def _level_rng(seed: int, dq_fraction: float) -> np.random.Generator:
    # keyed by the level's dq value so results do not depend on which other levels exist
    key = struct.unpack("<Q", struct.pack("<d", float(dq_fraction)))[0]
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


def _random_start(rng, allowed: np.ndarray, caps: np.ndarray, g: int) -> np.ndarray:
    """Random composition of g quanta respecting caps, returned in quanta counts."""
    n_ops, n = allowed.shape
    counts = np.zeros((n_ops, n))
    limit = np.floor(caps * g + 1e-9) * allowed
    for i in range(n_ops):
        for _ in range(g):
            room = np.flatnonzero(counts[i] < limit[i])
            counts[i, rng.choice(room)] += 1
    return counts


def _local_search_level(graph, topo, params, level, config) -> OptimizationResult:
    caps = level.cap_matrix(graph.n_operators, topo.n_devices)
    allowed = _allowed(topo, caps)
    g = config.granularity
    limit = np.floor(caps * g + 1e-9) * allowed
    if np.any(limit.sum(axis=1) < g):
        bad = int(np.flatnonzero(limit.sum(axis=1) < g)[0])
        raise InfeasibleError(
            f"operator {bad} cannot be placed at granularity {g} under level "
            f"dq_fraction={level.dq_fraction}"
        )
    lp = params.with_dq(level.dq_fraction)
    rng = _level_rng(config.seed, level.dq_fraction)

    # state holds mass in units of one move step; a row totals `units`
    units = 1.0 / config.step
    if abs(units - round(units)) <= 1e-9:
        units = float(round(units))
    cap_units = caps * units * allowed
    movable = [i for i in range(graph.n_operators) if allowed[i].sum() > 1]

    def score(state):
        x = state / units
        return objective_f(_latency(graph, topo, Placement(x), lp), lp)

    best_state, best_f = None, math.inf
    evaluations = 0
    starts = []
    for _ in range(config.restarts):
        state = _random_start(rng, allowed, caps, g) * (units / g)
        cur_f = score(state)
        evaluations += 1
        starts.append(cur_f)
        if cur_f < best_f or (cur_f == best_f and tuple(state.ravel()) < tuple(best_state.ravel())):
            best_state, best_f = state.copy(), cur_f
        temp = config.initial_temperature * cur_f
        for _ in range(config.max_iterations):
            if not movable:
                break
            i = movable[rng.integers(len(movable))]
            senders = np.flatnonzero(state[i] > 0)
            a = senders[rng.integers(len(senders))]
            receivers = np.flatnonzero(allowed[i] & (state[i] < cap_units[i] - _CAP_TOL))
            receivers = receivers[receivers != a]
            if len(receivers) == 0:
                continue
            b = receivers[rng.integers(len(receivers))]
            amount = min(1.0, state[i, a], cap_units[i, b] - state[i, b])
            trial = state.copy()
            trial[i, a] -= amount
            trial[i, b] += amount
            if trial[i, a] < _CAP_TOL:
                trial[i, a] = 0.0
                trial[i, b] = units - (trial[i].sum() - trial[i, b])
            new_f = score(trial)
            evaluations += 1
            delta = new_f - cur_f
            accept = delta < 0
            if not accept and temp > 0:
                accept = rng.random() < math.exp(-delta / temp)
            if accept:
                state, cur_f = trial, new_f
                if cur_f < best_f or (cur_f == best_f
                                      and tuple(state.ravel()) < tuple(best_state.ravel())):
                    best_state, best_f = state.copy(), cur_f
            temp *= config.decay

    placement = Placement(best_state / units)
    ev = evaluate_candidate(graph, topo, placement, lp, caps)
    return OptimizationResult(placement, level.dq_fraction, ev.latency, ev.objective,
                              evaluations, Method.LOCAL_SEARCH, ev.network_volume, tuple(starts))


def local_search_optimize(graph: OperatorGraph, topo: DeviceTopology, params: ModelParams,
                          scenario: DqScenario | None = None,
                          config: OptimizerConfig | None = None) -> OptimizationResult:
    config = config or OptimizerConfig()
    return _pick_best([_local_search_level(graph, topo, params, lv, config)
                       for lv in _levels(params, scenario)])


def optimize_with_dq(graph: OperatorGraph, topo: DeviceTopology, params: ModelParams,
                     scenario: DqScenario, config: OptimizerConfig | None = None,
                     method: Method | str = Method.BRUTE_FORCE) -> OptimizationResult:
    """Best (level, placement) pair across the scenario's quality levels."""
    method = Method(method)
    if method is Method.BRUTE_FORCE:
        return brute_force_optimize(graph, topo, params, scenario, config)
    return local_search_optimize(graph, topo, params, scenario, config)


def random_instance(rng: np.random.Generator, n_operators: int, n_devices: int,
                    max_edges: int | None = None, p_edge: float = 0.5,
                    p_available: float = 0.8):
    """Random DAG (edges only from lower to higher id) plus topology, for tests and demos."""
    pairs = [(i, j) for i, j in itertools.combinations(range(n_operators), 2)]
    edges = [e for e in pairs if rng.random() < p_edge]
    if max_edges is not None and len(edges) > max_edges:
        keep = sorted(rng.choice(len(edges), size=max_edges, replace=False))
        edges = [edges[k] for k in keep]
    targets = {j for _, j in edges}
    sel = [1.0 if i not in targets else float(rng.uniform(0.2, 2.0)) for i in range(n_operators)]
    graph = OperatorGraph.from_selectivities(sel, edges)
    cost = rng.uniform(0.0, 3.0, size=(n_devices, n_devices))
    np.fill_diagonal(cost, 0.0)
    avail = rng.random((n_operators, n_devices)) < p_available
    for i in range(n_operators):
        if not avail[i].any():
            avail[i, rng.integers(n_devices)] = True
    return graph, DeviceTopology(cost, avail)
