"""Reading and writing problem bundles (JSON).

A bundle mirrors the model's notation one-to-one::

    {
      "operators": [{"id": 0, "selectivity": 1.0}, ...],
      "edges": [[0, 1], ...],
      "com_cost": [[...], ...],          # sender row -> receiver column
      "availability": [[true, ...], ...],  # operator-major; optional, default all true
      "placement": [[...], ...],         # optional, operator-major
      "params": {"alpha": 0, "beta": 1, "dq_fraction": 0.5,
                 "link_count_mode": "pairs", "batch_size": 1},
      "scenario": [{"dq_fraction": 1.0,
                    "caps": [{"op": 2, "device": 0, "max_fraction": 0}],
                    "placement": [[...], ...]}]   # optional per-level placement
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import validate_graph
from .model import (
    DeviceTopology,
    ModelError,
    ModelParams,
    Operator,
    OperatorGraph,
    Placement,
    ValidationReport,
    validate_placement,
    validate_topology,
)
from .optimizer import Cap, DqLevel, DqScenario


class BundleError(ModelError):
    """The file cannot be parsed into a bundle."""


class BundleValidationError(BundleError):
    def __init__(self, report: ValidationReport, path=None):
        head = f"{path}: " if path else ""
        lines = "\n".join(f"  {issue}" for issue in report.errors)
        super().__init__(f"{head}{len(report.errors)} validation error(s)\n{lines}")
        self.report = report


@dataclass(frozen=True)
class ProblemBundle:
    graph: OperatorGraph
    topology: DeviceTopology
    params: ModelParams
    placement: Placement | None = None
    scenario: DqScenario | None = None

    def __eq__(self, other):
        if not isinstance(other, ProblemBundle):
            return NotImplemented
        return bundle_to_dict(self) == bundle_to_dict(other)

    __hash__ = None


def paper_example_path() -> Path:
    return Path(str(resources.files("streamplace") / "data" / "paper_example.json"))


def _field(obj, key, where, default=...):
    if not isinstance(obj, dict):
        raise BundleError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        if default is ...:
            raise BundleError(f"{where}: missing field '{key}'")
        return default
    return obj[key]


def _matrix(value, where, dtype=float) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise BundleError(f"{where}: expected a list of rows")
    widths = {len(r) for r in value}
    if len(widths) > 1:
        raise BundleError(f"{where}: rows have differing lengths {sorted(widths)}")
    for r, row in enumerate(value):
        for c, cell in enumerate(row):
            ok = isinstance(cell, bool) if dtype is bool else (
                isinstance(cell, (int, float)) and not isinstance(cell, bool))
            if not ok:
                raise BundleError(f"{where}[{r}][{c}]: expected {dtype.__name__}, got {cell!r}")
    arr = np.array(value, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(len(value), 0)
    return arr


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BundleError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _parse_params(raw) -> ModelParams:
    raw = raw or {}
    kwargs = {}
    for key in ("alpha", "beta", "dq_fraction", "batch_size"):
        if key in raw:
            kwargs[key] = _number(raw[key], f"params.{key}")
    if "link_count_mode" in raw:
        kwargs["link_count_mode"] = raw["link_count_mode"]
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise BundleError(f"params: {exc}") from None


def bundle_from_dict(data) -> ProblemBundle:
    """Build a bundle from parsed JSON; raises BundleError on malformed fields.

    Semantic problems (cycles, bad rows) are left to ``check_bundle``.
    """
    ops_raw = _field(data, "operators", "<root>")
    if not isinstance(ops_raw, list):
        raise BundleError("operators: expected a list")
    operators = []
    for k, op in enumerate(ops_raw):
        oid = _field(op, "id", f"operators[{k}]")
        if isinstance(oid, bool) or not isinstance(oid, int):
            raise BundleError(f"operators[{k}].id: expected an integer, got {oid!r}")
        sel = _number(_field(op, "selectivity", f"operators[{k}]", 1.0),
                      f"operators[{k}].selectivity")
        operators.append(Operator(oid, sel))
    edges_raw = _field(data, "edges", "<root>")
    if not isinstance(edges_raw, list):
        raise BundleError("edges: expected a list")
    edges = []
    for k, e in enumerate(edges_raw):
        if (not isinstance(e, list) or len(e) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise BundleError(f"edges[{k}]: expected [i, j] integer pair, got {e!r}")
        edges.append(tuple(e))
    try:
        graph = OperatorGraph(operators, edges)
    except ModelError as exc:
        raise BundleError(f"operators/edges: {exc}") from None

    cost = _matrix(_field(data, "com_cost", "<root>"), "com_cost")
    if "availability" in data:
        avail = _matrix(data["availability"], "availability", bool)
    else:
        avail = np.ones((graph.n_operators, cost.shape[0]), dtype=bool)
    try:
        topo = DeviceTopology(cost, avail)
    except ModelError as exc:
        raise BundleError(f"com_cost/availability: {exc}") from None

    placement = None
    if data.get("placement") is not None:
        placement = Placement(_matrix(data["placement"], "placement"))

    scenario = None
    if data.get("scenario") is not None:
        levels = []
        if not isinstance(data["scenario"], list):
            raise BundleError("scenario: expected a list of levels")
        for k, lv in enumerate(data["scenario"]):
            where = f"scenario[{k}]"
            dq = _number(_field(lv, "dq_fraction", where), f"{where}.dq_fraction")
            caps = []
            for c, cap in enumerate(_field(lv, "caps", where, [])):
                cw = f"{where}.caps[{c}]"
                caps.append(Cap(int(_number(_field(cap, "op", cw), f"{cw}.op")),
                                int(_number(_field(cap, "device", cw), f"{cw}.device")),
                                _number(_field(cap, "max_fraction", cw), f"{cw}.max_fraction")))
            lp = None
            if lv.get("placement") is not None:
                lp = Placement(_matrix(lv["placement"], f"{where}.placement"))
            levels.append(DqLevel(dq, tuple(caps), lp))
        try:
            scenario = DqScenario(levels)
        except ValueError as exc:
            raise BundleError(f"scenario: {exc}") from None

    return ProblemBundle(graph, topo, _parse_params(data.get("params")), placement, scenario)


def check_bundle(bundle: ProblemBundle) -> ValidationReport:
    """Run every graph, topology, placement and scenario check."""
    graph, topo = bundle.graph, bundle.topology
    report = validate_graph(graph)
    report.extend(validate_topology(topo, graph.n_operators))
    if topo.availability.shape[0] != graph.n_operators:
        return report
    if bundle.placement is not None:
        report.extend(validate_placement(bundle.placement, graph, topo))
    if bundle.scenario is not None:
        n, m = graph.n_operators, topo.n_devices
        for k, lv in enumerate(bundle.scenario.levels):
            bad = False
            for c, cap in enumerate(lv.caps):
                if not (0 <= cap.op < n and 0 <= cap.device < m):
                    report.error("dimension-mismatch",
                                 f"cap targets operator {cap.op}, device {cap.device} "
                                 f"outside {n} x {m}", f"scenario[{k}].caps[{c}]")
                    bad = True
            if bad:
                continue
            caps = lv.cap_matrix(n, m)
            room = (caps * topo.availability).sum(axis=1)
            for i in np.flatnonzero(room < 1 - 1e-9):
                report.error("infeasible-level",
                             f"operator {i} can hold at most {room[i]:.6g} of its mass "
                             f"under this level", f"scenario[{k}]")
            if lv.placement is not None:
                sub = validate_placement(lv.placement, graph, topo, caps)
                for issue in sub.errors:
                    report.error(issue.code, issue.message,
                                 f"scenario[{k}].{issue.location}")
    return report


def load_bundle(path, strict: bool = True) -> ProblemBundle:
    """Parse and validate a bundle file.

    With ``strict`` any validation error raises BundleValidationError whose
    report names each offending field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise BundleError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        bundle = bundle_from_dict(data)
    except BundleError as exc:
        raise BundleError(f"{path}: {exc}") from None
    if strict:
        report = check_bundle(bundle)
        if not report.ok:
            raise BundleValidationError(report, path)
    return bundle


def placement_to_list(placement: Placement) -> list[list[float]]:
    return [[float(v) for v in row] for row in placement.x]


def bundle_to_dict(bundle: ProblemBundle) -> dict:
    p = bundle.params
    out = {
        "operators": [{"id": op.id, "selectivity": op.selectivity} for op in bundle.graph.operators],
        "edges": [list(e) for e in bundle.graph.edges],
        "com_cost": bundle.topology.com_cost.tolist(),
        "availability": bundle.topology.availability.tolist(),
        "params": {"alpha": p.alpha, "beta": p.beta, "dq_fraction": p.dq_fraction,
                   "link_count_mode": p.link_count_mode.value, "batch_size": p.batch_size},
    }
    if bundle.placement is not None:
        out["placement"] = placement_to_list(bundle.placement)
    if bundle.scenario is not None:
        levels = []
        for lv in bundle.scenario.levels:
            entry = {"dq_fraction": lv.dq_fraction,
                     "caps": [{"op": c.op, "device": c.device, "max_fraction": c.max_fraction}
                              for c in lv.caps]}
            if lv.placement is not None:
                entry["placement"] = placement_to_list(lv.placement)
            levels.append(entry)
        out["scenario"] = levels
    return out


def dumps_bundle(bundle: ProblemBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=2)


def save_bundle(bundle: ProblemBundle, path) -> None:
    Path(path).write_text(dumps_bundle(bundle) + "\n")
