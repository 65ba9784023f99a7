"""Exercise-policy optimization under three regimes.

``vo``  maximizes the hedge's initial capital (the minimal production
        cost) by exhaustive search over canonical policies.
``tc``  builds a time-consistent policy backward: each node compares its
        cash flow with the VO value of continuing one step while the
        descendants follow their already fixed decisions.
``rn``  classic optimal stopping under a supplied risk-neutral measure.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import LatticeParseError
from .hedging import (
    NodeCoefficients,
    compute_coefficients,
    continuation_coefficients,
    stop_coefficients,
)
from .lattice import MarketLattice, PayoffSpec, ValidationReport, cash_flow, read_document
from .policy import (
    ABANDON,
    DEFAULT_CAP,
    EXERCISE,
    ExercisePolicy,
    alive_nodes,
    canonicalize,
    enumerate_policies,
    iter_stopped,
    realized_cash_flow,
)

RN_SUM_TOL = 1e-10
RN_MARTINGALE_REL = 1e-8
TIE_REL = 1e-12


@dataclass
class RNMeasureSpec:
    """Risk-neutral transition probabilities, ``probs[parent][child]``."""

    probs: dict[int, dict[int, float]]

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int, float]]) -> "RNMeasureSpec":
        probs: dict[int, dict[int, float]] = {}
        for parent, child, p in edges:
            probs.setdefault(int(parent), {})[int(child)] = float(p)
        return cls(probs)

    def edges(self) -> list[tuple[int, int, float]]:
        return [(a, b, p) for a in sorted(self.probs) for b, p in sorted(self.probs[a].items())]


@dataclass
class OptimizationResult:
    policy: ExercisePolicy
    value: float
    per_node_values: dict[int, float] | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)


# -- risk-neutral measures ----------------------------------------------------


def validate_rn_measure(lattice: MarketLattice, rn: RNMeasureSpec) -> ValidationReport:
    report = ValidationReport()
    for nid in lattice.order:
        node = lattice.nodes[nid]
        if not node.edges:
            if rn.probs.get(nid):
                report.add("rn_terminal", "terminal node carries probabilities", nid)
            continue
        given = rn.probs.get(nid, {})
        for extra in sorted(set(given) - set(node.children)):
            report.add("rn_unknown_edge", f"probability on non-edge {nid}->{extra}", nid)
        total = mean = 0.0
        complete = True
        for child in node.children:
            if child not in given:
                report.add("rn_missing", f"missing probability on edge {nid}->{child}", nid)
                complete = False
                continue
            p = given[child]
            if not p > 0.0:
                report.add("rn_positive", f"non-positive probability {p!r} on edge {nid}->{child}", nid)
            total += p
            mean += p * lattice.nodes[child].price
        if not complete:
            continue
        if abs(total - 1.0) > RN_SUM_TOL:
            report.add("rn_sum", f"probabilities sum to {total!r}, not 1", nid)
        residual = mean - node.price
        if abs(residual) > RN_MARTINGALE_REL * node.price:
            report.add("rn_martingale", f"martingale violated, residual {residual!r}", nid)
    for extra in sorted(set(rn.probs) - set(lattice.nodes)):
        report.add("rn_unknown_node", f"probabilities for unknown node {extra}")
    return report


def rn_policy_value(
    lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy, rn: RNMeasureSpec
) -> float:
    """Risk-neutral value of the discounted stopped cash flow of ``policy``."""
    validate_rn_measure(lattice, rn).raise_if_invalid("risk-neutral measure")
    root = lattice.root
    if root in policy.exercise:
        return cash_flow(payoff, lattice.nodes[root])
    total = 0.0
    for prefix, w in iter_stopped(lattice, policy, root, lambda a, b, _p: rn.probs[a][b]):
        stop = prefix[-1]
        disc = lattice.compound_discount(0, lattice.nodes[stop].stage)
        total += w * disc * realized_cash_flow(lattice, payoff, policy, stop)
    return total


def optimize_risk_neutral(
    lattice: MarketLattice, payoff: PayoffSpec, rn: RNMeasureSpec
) -> OptimizationResult:
    validate_rn_measure(lattice, rn).raise_if_invalid("risk-neutral measure")
    values: dict[int, float] = {}
    exercise: set[int] = set()
    for nid in reversed(lattice.order):
        node = lattice.nodes[nid]
        cf = cash_flow(payoff, node)
        if not node.edges:
            cont = 0.0
        else:
            expected = sum(rn.probs[nid][c] * values[c] for c in node.children)
            cont = lattice.discounts[node.stage] * expected
        if cf > cont:
            exercise.add(nid)
        values[nid] = max(cf, cont)
    policy = canonicalize(ExercisePolicy(frozenset(exercise)), lattice)
    return OptimizationResult(
        policy, values[lattice.root], values, {"method": "rn", "nodes_evaluated": len(values)}
    )


# -- variance-optimal regimes -------------------------------------------------


def _root_capital(args: tuple[MarketLattice, PayoffSpec, ExercisePolicy]) -> float:
    lattice, payoff, policy = args
    return compute_coefficients(lattice, payoff, policy).root.b


def optimize_vo_naive(
    lattice: MarketLattice, payoff: PayoffSpec, cap: int = DEFAULT_CAP, workers: int = 1
) -> OptimizationResult:
    """Policy with the largest initial hedge capital over the whole canonical space.

    Ties (within a 1e-12 relative band) go to the policy with fewer exercise
    nodes, then to the earlier one in enumeration order.  The scan over
    candidates is sequential, so the answer does not depend on ``workers``.
    """
    policies = list(enumerate_policies(lattice, cap))
    jobs = [(lattice, payoff, pol) for pol in policies]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            capitals = list(pool.map(_root_capital, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        capitals = [_root_capital(job) for job in jobs]

    best = 0
    ties = 0
    for k in range(1, len(policies)):
        band = TIE_REL * max(1.0, abs(capitals[best]))
        if capitals[k] > capitals[best] + band:
            best = k
        elif abs(capitals[k] - capitals[best]) <= band:
            ties += 1
            if len(policies[k]) < len(policies[best]):
                best = k
    return OptimizationResult(
        policies[best],
        capitals[best],
        None,
        {"method": "vo", "policies_evaluated": len(policies), "ties": ties},
    )


def optimize_vo_time_consistent(lattice: MarketLattice, payoff: PayoffSpec) -> OptimizationResult:
    """Backward construction of the time-consistent VO policy.

    Continues on ties; terminal nodes exercise only when the cash flow is
    positive.
    """
    table: dict[int, NodeCoefficients] = {}
    exercise: set[int] = set()
    for nid in reversed(lattice.order):
        node = lattice.nodes[nid]
        cf = cash_flow(payoff, node)
        if not node.edges:
            if cf > 0.0:
                exercise.add(nid)
                table[nid] = stop_coefficients(lattice, nid, cf, EXERCISE)
            else:
                table[nid] = stop_coefficients(lattice, nid, 0.0, ABANDON)
            continue
        cont = continuation_coefficients(lattice, nid, table)
        if cf > cont.b:
            exercise.add(nid)
            table[nid] = stop_coefficients(lattice, nid, cf, EXERCISE)
        else:
            table[nid] = cont
    policy = canonicalize(ExercisePolicy(frozenset(exercise)), lattice)
    values = {nid: table[nid].b for nid in lattice.order}
    return OptimizationResult(
        policy, values[lattice.root], values, {"method": "tc", "nodes_evaluated": len(values)}
    )


def residual_policy(policy: ExercisePolicy, sub: MarketLattice) -> ExercisePolicy:
    """The part of ``policy`` that lives on a sublattice, in canonical form there."""
    return canonicalize(ExercisePolicy(frozenset(k for k in policy.exercise if k in sub.nodes)), sub)


@dataclass(frozen=True)
class ConsistencyViolation:
    node: int
    policy_exercises: bool
    reoptimized_exercises: bool


def time_consistency_violations(
    lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy
) -> list[ConsistencyViolation]:
    """Alive nodes where re-solving the time-consistent problem changes the decision."""
    policy = canonicalize(policy, lattice)
    found = []
    for nid in alive_nodes(lattice, policy):
        resolved = optimize_vo_time_consistent(lattice.sublattice(nid), payoff)
        here = nid in policy.exercise
        there = nid in resolved.policy.exercise
        if here != there:
            found.append(ConsistencyViolation(nid, here, there))
    return found


def value_of(lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy) -> float:
    """Initial hedge capital of a policy (convenience wrapper)."""
    return compute_coefficients(lattice, payoff, policy).root.b


# -- documents ----------------------------------------------------------------


def load_rn_measure(source: Any) -> RNMeasureSpec:
    doc = read_document(source)
    if not isinstance(doc, dict) or not isinstance(doc.get("edges"), list):
        raise LatticeParseError("measure document must be an object with an 'edges' array")
    edges = []
    for e in doc["edges"]:
        if not isinstance(e, dict) or not {"from", "to", "p"} <= set(e):
            raise LatticeParseError("each measure edge needs 'from', 'to' and 'p'")
        try:
            p = float(e["p"])
        except (TypeError, ValueError):
            raise LatticeParseError(f"edge probability {e['p']!r} is not a number") from None
        if not math.isfinite(p):
            raise LatticeParseError(f"edge probability {e['p']!r} is not finite")
        edges.append((e["from"], e["to"], p))
    try:
        return RNMeasureSpec.from_edges(edges)
    except (TypeError, ValueError):
        raise LatticeParseError("measure edge endpoints must be node ids") from None


def rn_measure_to_doc(rn: RNMeasureSpec) -> dict:
    return {"edges": [{"from": a, "to": b, "p": p} for a, b, p in rn.edges()]}


def dump_rn_measure(rn: RNMeasureSpec) -> str:
    return json.dumps(rn_measure_to_doc(rn), indent=2)
