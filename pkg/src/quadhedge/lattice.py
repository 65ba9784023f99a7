"""Futures-price lattices, discounting and option payoffs.

A lattice is a finite, stage-layered graph of futures-price nodes.  Edges
carry statistical (real-world) transition probabilities and every period
has a deterministic discount factor.  Lattices and payoffs are read from
small JSON documents::

    {"stages": 2, "discounts": [1.0],
     "nodes": [{"id": 0, "stage": 0, "price": 3.2,
                "edges": [{"to": 1, "p": 0.05}, ...]}, ...]}

    {"kind": "call", "strike": 3}
    {"kind": "table", "values": {"0": 0.2, "1": 0.0, ...}}
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping

from .errors import LatticeParseError, ValidationError

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    id: int
    stage: int
    price: float
    edges: tuple[tuple[int, float], ...] = ()

    @property
    def children(self) -> tuple[int, ...]:
        return tuple(child for child, _ in self.edges)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    node: int | None = None

    def __str__(self) -> str:
        where = f" (node {self.node})" if self.node is not None else ""
        return f"{self.message}{where}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str, node: int | None = None) -> None:
        self.violations.append(Violation(code, message, node))

    def raise_if_invalid(self, what: str = "lattice") -> None:
        if self.violations:
            raise ValidationError(f"invalid {what}: {self.violations[0]}", self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


@dataclass(frozen=True, eq=False)
class MarketLattice:
    """Stage-layered futures price lattice under the statistical measure.

    ``discounts[k]`` is the one-period discount factor from stage ``k + 1``
    back to stage ``k``.  Node edges are kept sorted by child id so that
    every expectation is summed in the same order on every platform.
    Construction does not validate; use :func:`validate_lattice` or
    :func:`load_lattice`.
    """

    stage_count: int
    discounts: tuple[float, ...]
    nodes: Mapping[int, Node]

    @classmethod
    def build(
        cls,
        stage_count: int,
        discounts: Iterable[float],
        nodes: Iterable[Node],
    ) -> "MarketLattice":
        table: dict[int, Node] = {}
        for node in nodes:
            edges = tuple(sorted((int(c), float(p)) for c, p in node.edges))
            table[node.id] = Node(int(node.id), int(node.stage), float(node.price), edges)
        return cls(int(stage_count), tuple(float(d) for d in discounts), table)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarketLattice):
            return NotImplemented
        return (
            self.stage_count == other.stage_count
            and self.discounts == other.discounts
            and dict(self.nodes) == dict(other.nodes)
        )

    @cached_property
    def root(self) -> int | None:
        roots = [n.id for n in self.nodes.values() if n.stage == 0]
        return roots[0] if len(roots) == 1 else None

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Node ids sorted by (stage, id)."""
        return tuple(sorted(self.nodes, key=lambda k: (self.nodes[k].stage, k)))

    @cached_property
    def parents(self) -> dict[int, tuple[int, ...]]:
        acc: dict[int, list[int]] = {k: [] for k in self.nodes}
        for nid in self.order:
            for child in self.nodes[nid].children:
                if child in acc:
                    acc[child].append(nid)
        return {k: tuple(v) for k, v in acc.items()}

    @cached_property
    def is_tree(self) -> bool:
        return all(len(p) <= 1 for p in self.parents.values())

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id}") from None

    def is_terminal(self, node_id: int) -> bool:
        return self.nodes[node_id].stage == self.stage_count - 1

    def stage_nodes(self, stage: int) -> list[int]:
        return [k for k in self.order if self.nodes[k].stage == stage]

    def compound_discount(self, i: int, j: int) -> float:
        return compound_discount(self, i, j)

    def sublattice(self, node_id: int) -> "MarketLattice":
        """The lattice of everything reachable from ``node_id``, restaged so it is the root."""
        top = self.node(node_id)
        seen = {node_id}
        queue = deque([node_id])
        while queue:
            for child in self.nodes[queue.popleft()].children:
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        shifted = [
            Node(n.id, n.stage - top.stage, n.price, n.edges)
            for n in (self.nodes[k] for k in self.order if k in seen)
        ]
        return MarketLattice.build(
            self.stage_count - top.stage, self.discounts[top.stage :], shifted
        )


def compound_discount(lattice: MarketLattice, i: int, j: int) -> float:
    """Discount factor from stage ``j`` back to stage ``i`` (1 when ``i == j``)."""
    if i < 0 or j >= lattice.stage_count or i > j:
        raise IndexError(
            f"compound_discount needs 0 <= i <= j < {lattice.stage_count}, got ({i}, {j})"
        )
    return math.prod(lattice.discounts[i:j])


# -- validation ---------------------------------------------------------------


def validate_lattice(lattice: MarketLattice) -> ValidationReport:
    """Report every violated lattice invariant; never raises."""
    report = ValidationReport()
    last = lattice.stage_count - 1

    if lattice.stage_count < 1:
        report.add("stages", "stage count < 1")
    if len(lattice.discounts) != max(lattice.stage_count - 1, 0):
        report.add(
            "discount_count",
            f"expected {max(lattice.stage_count - 1, 0)} discounts, got {len(lattice.discounts)}",
        )
    for k, d in enumerate(lattice.discounts):
        if not (math.isfinite(d) and 0.0 < d <= 1.0):
            report.add("discount_range", f"discount D_{k + 1} = {d!r} outside (0, 1]")

    roots = [n.id for n in lattice.nodes.values() if n.stage == 0]
    if len(roots) != 1:
        report.add("root", f"expected exactly one stage-0 node, found {len(roots)}")

    for nid in lattice.order:
        node = lattice.nodes[nid]
        if not 0 <= node.stage <= last:
            report.add("stage_range", f"stage {node.stage} outside 0..{last}", nid)
        if not math.isfinite(node.price):
            report.add("price_finite", "price is not finite", nid)
        elif node.price < 0:
            report.add("price_negative", "price < 0", nid)

        if node.stage == last:
            if node.edges:
                report.add("terminal_edges", "terminal node has outgoing edges", nid)
            continue
        if not node.edges:
            report.add("no_edges", "non-terminal node has no outgoing edges", nid)
            continue

        total = 0.0
        seen: set[int] = set()
        for child, p in node.edges:
            if child in seen:
                report.add("duplicate_edge", f"duplicate edge to {child}", nid)
            seen.add(child)
            if not (0.0 < p <= 1.0):
                report.add("probability_range", f"edge to {child} has probability {p!r} outside (0, 1]", nid)
            total += p
            target = lattice.nodes.get(child)
            if target is None:
                report.add("unknown_child", f"edge to unknown node {child}", nid)
            elif target.stage != node.stage + 1:
                report.add("edge_stage", f"edge to {child} skips from stage {node.stage} to {target.stage}", nid)
        if abs(total - 1.0) > PROB_SUM_TOL:
            report.add("probability_sum", "probabilities do not sum to 1", nid)

    if len(roots) == 1:
        reached = {roots[0]}
        queue = deque(roots)
        while queue:
            for child in lattice.nodes[queue.popleft()].children:
                if child in lattice.nodes and child not in reached:
                    reached.add(child)
                    queue.append(child)
        for nid in lattice.order:
            if nid not in reached:
                report.add("unreachable", "unreachable node", nid)
    return report


# -- payoffs ------------------------------------------------------------------


@dataclass(frozen=True)
class PayoffSpec:
    kind: str
    strike: float | None = None
    values: Mapping[int, float] | None = None

    @classmethod
    def call(cls, strike: float) -> "PayoffSpec":
        return cls("call", strike=float(strike))

    @classmethod
    def put(cls, strike: float) -> "PayoffSpec":
        return cls("put", strike=float(strike))

    @classmethod
    def table(cls, values: Mapping[int, float]) -> "PayoffSpec":
        return cls("table", values={int(k): float(v) for k, v in values.items()})


def cash_flow(payoff: PayoffSpec, node: Node) -> float:
    if payoff.kind == "call":
        return max(node.price - payoff.strike, 0.0)
    if payoff.kind == "put":
        return max(payoff.strike - node.price, 0.0)
    if payoff.kind == "table":
        try:
            return payoff.values[node.id]
        except KeyError:
            raise ValidationError(f"payoff table has no entry for node {node.id}") from None
    raise ValidationError(f"unknown payoff kind {payoff.kind!r}")


def tabulate(payoff: PayoffSpec, lattice: MarketLattice) -> PayoffSpec:
    """Resolve any payoff to an explicit per-node table on ``lattice``."""
    return PayoffSpec.table({k: cash_flow(payoff, lattice.nodes[k]) for k in lattice.order})


def validate_payoff(payoff: PayoffSpec, lattice: MarketLattice) -> ValidationReport:
    report = ValidationReport()
    if payoff.kind in ("call", "put"):
        if payoff.strike is None or not math.isfinite(payoff.strike):
            report.add("strike", f"{payoff.kind} payoff needs a finite strike")
        return report
    if payoff.kind != "table":
        report.add("kind", f"unknown payoff kind {payoff.kind!r}")
        return report
    values = payoff.values or {}
    for nid in lattice.order:
        if nid not in values:
            report.add("table_missing", "payoff table has no entry", nid)
        elif not (math.isfinite(values[nid]) and values[nid] >= 0):
            report.add("cash_flow_negative", f"cash flow {values[nid]!r} is negative or not finite", nid)
    return report


# -- documents ----------------------------------------------------------------


def read_document(source: Any) -> Any:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LatticeParseError(f"document is not UTF-8: {exc}") from None
    try:
        return json.loads(source)
    except (json.JSONDecodeError, TypeError) as exc:
        raise LatticeParseError(f"malformed document: {exc}") from None


def _number(value: Any, what: str) -> float:
    # Decimal strings are accepted too; each is converted exactly once.
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise LatticeParseError(f"{what} must be a number, got {value!r}")
    try:
        return float(value)
    except ValueError:
        raise LatticeParseError(f"{what} must be a number, got {value!r}") from None


def _integer(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise LatticeParseError(f"{what} must be an integer, got {value!r}")
    return value


def parse_lattice(doc: Any) -> MarketLattice:
    """Build an (unvalidated) lattice from an already-decoded document."""
    if not isinstance(doc, dict):
        raise LatticeParseError("lattice document must be an object")
    for key in ("stages", "discounts", "nodes"):
        if key not in doc:
            raise LatticeParseError(f"lattice document lacks field {key!r}")
    stages = _integer(doc["stages"], "stages")
    if not isinstance(doc["discounts"], list) or not isinstance(doc["nodes"], list):
        raise LatticeParseError("'discounts' and 'nodes' must be arrays")
    discounts = [_number(d, "discount") for d in doc["discounts"]]

    nodes: list[Node] = []
    ids: set[int] = set()
    for raw in doc["nodes"]:
        if not isinstance(raw, dict):
            raise LatticeParseError("each node must be an object")
        try:
            nid = _integer(raw["id"], "node id")
            stage = _integer(raw["stage"], f"stage of node {nid}")
            price = _number(raw["price"], f"price of node {nid}")
        except KeyError as exc:
            raise LatticeParseError(f"node lacks field {exc.args[0]!r}") from None
        if nid in ids:
            raise LatticeParseError(f"duplicate node id {nid}")
        ids.add(nid)
        edges = []
        raw_edges = raw.get("edges", [])
        if not isinstance(raw_edges, list):
            raise LatticeParseError(f"edges of node {nid} must be an array")
        for edge in raw_edges:
            if not isinstance(edge, dict) or "to" not in edge or "p" not in edge:
                raise LatticeParseError(f"node {nid}: each edge needs 'to' and 'p'")
            edges.append((_integer(edge["to"], "edge target"), _number(edge["p"], "edge probability")))
        nodes.append(Node(nid, stage, price, tuple(edges)))
    return MarketLattice.build(stages, discounts, nodes)


def load_lattice(source: Any) -> MarketLattice:
    """Parse and validate a lattice document (bytes, text or a binary/text stream)."""
    lattice = parse_lattice(read_document(source))
    validate_lattice(lattice).raise_if_invalid("lattice")
    return lattice


def lattice_to_doc(lattice: MarketLattice) -> dict:
    return {
        "stages": lattice.stage_count,
        "discounts": list(lattice.discounts),
        "nodes": [
            {
                "id": n.id,
                "stage": n.stage,
                "price": n.price,
                "edges": [{"to": c, "p": p} for c, p in n.edges],
            }
            for n in (lattice.nodes[k] for k in lattice.order)
        ],
    }


def dump_lattice(lattice: MarketLattice) -> str:
    # json emits the shortest repr of each float, which round-trips exactly.
    return json.dumps(lattice_to_doc(lattice), indent=2)


def load_payoff(source: Any) -> PayoffSpec:
    doc = read_document(source)
    if not isinstance(doc, dict) or "kind" not in doc:
        raise LatticeParseError("payoff document must be an object with a 'kind'")
    kind = doc["kind"]
    if kind in ("call", "put"):
        if "strike" not in doc:
            raise LatticeParseError(f"{kind} payoff lacks 'strike'")
        return PayoffSpec(kind, strike=_number(doc["strike"], "strike"))
    if kind == "table":
        values = doc.get("values")
        if not isinstance(values, dict):
            raise LatticeParseError("table payoff needs a 'values' object")
        try:
            table = {int(k): _number(v, f"cash flow of node {k}") for k, v in values.items()}
        except ValueError:
            raise LatticeParseError("table payoff keys must be node ids") from None
        return PayoffSpec("table", values=table)
    raise LatticeParseError(f"unknown payoff kind {kind!r}")


def payoff_to_doc(payoff: PayoffSpec) -> dict:
    if payoff.kind == "table":
        return {"kind": "table", "values": {str(k): v for k, v in sorted(payoff.values.items())}}
    return {"kind": payoff.kind, "strike": payoff.strike}


def dump_payoff(payoff: PayoffSpec) -> str:
    return json.dumps(payoff_to_doc(payoff), indent=2)
