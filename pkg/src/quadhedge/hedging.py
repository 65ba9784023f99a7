"""Quadratic hedging of an exercise policy by backward induction.

For a fixed policy, the minimal expected squared replication error from an
alive node with portfolio value ``V`` is the parabola ``a * (b - V)**2 + c``.
Working backward from the stopping nodes, each continuation node's
``(a, b, c)`` follows from its children's by a one-step weighted least
squares fit of the futures move ``dF``:

    q = E[a' dF] / E[a' dF^2]
    p = E[a' b' dF] / E[a' dF^2]
    a = E[a' (1 - q dF)^2] / D^2
    b = E[a' (b' - p dF)(1 - q dF)] / (a D)
    c = E[c'] + E[a' (b' - p dF)^2] - a b^2

where ``D`` is the one-period discount factor and primes denote children.
The optimal futures position for value ``V`` is ``p - q V / D`` and the
optimal initial capital is ``b`` at the root.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import DegenerateWeightError, NodeStateError, SingularityError
from .lattice import MarketLattice, PayoffSpec
from .policy import (
    CONTINUE,
    ExercisePolicy,
    alive_nodes,
    canonicalize,
    node_action,
    realized_cash_flow,
)

SINGULARITY_REL = 1e-12
A_FLOOR = 1e-300


@dataclass(frozen=True)
class NodeCoefficients:
    a: float
    b: float
    c: float
    p: float | None = None
    q: float | None = None
    action: str = CONTINUE

    def value(self, v: float) -> float:
        return self.a * (self.b - v) ** 2 + self.c


@dataclass(frozen=True, eq=False)
class HedgeCoefficients:
    """Coefficient table of one (lattice, payoff, policy) triple over its alive nodes."""

    lattice: MarketLattice
    payoff: PayoffSpec
    policy: ExercisePolicy
    table: Mapping[int, NodeCoefficients]

    def __getitem__(self, node_id: int) -> NodeCoefficients:
        try:
            return self.table[node_id]
        except KeyError:
            raise NodeStateError(f"node {node_id} is not alive under this policy") from None

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.table

    @property
    def root(self) -> NodeCoefficients:
        return self.table[self.lattice.root]


def stop_coefficients(lattice: MarketLattice, node_id: int, target: float, action: str) -> NodeCoefficients:
    """Coefficients of a node where the option stops with cash flow ``target``."""
    stage = lattice.nodes[node_id].stage
    to_end = lattice.compound_discount(stage, lattice.stage_count - 1)
    return NodeCoefficients(a=to_end**-2, b=target, c=0.0, action=action)


def continuation_coefficients(
    lattice: MarketLattice, node_id: int, children: Mapping[int, NodeCoefficients]
) -> NodeCoefficients:
    """One backward step at a continuation node given its children's coefficients."""
    node = lattice.nodes[node_id]
    disc = lattice.discounts[node.stage]
    moves = [(children[k], p, lattice.nodes[k].price - node.price) for k, p in node.edges]

    m1 = m2 = mb = 0.0
    for ch, p, df in moves:
        w = p * ch.a
        m1 += w * df
        m2 += w * df * df
        mb += w * ch.b * df
    if m2 <= SINGULARITY_REL * node.price**2:
        raise SingularityError(node_id, m2)
    q = m1 / m2
    pos = mb / m2

    a_sum = 0.0
    for ch, p, df in moves:
        a_sum += p * ch.a * (1.0 - q * df) ** 2
    a = a_sum / disc**2
    if a <= A_FLOOR:
        raise DegenerateWeightError(node_id, a)

    b_sum = c_sum = fit = 0.0
    for ch, p, df in moves:
        resid = ch.b - pos * df
        b_sum += p * ch.a * resid * (1.0 - q * df)
        c_sum += p * ch.c
        fit += p * ch.a * resid * resid
    b = b_sum / (a * disc)
    c = c_sum + fit - a * b * b
    return NodeCoefficients(a=a, b=b, c=c, p=pos, q=q, action=CONTINUE)


def compute_coefficients(
    lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy
) -> HedgeCoefficients:
    """Backward induction over the nodes that are alive under ``policy``."""
    policy = canonicalize(policy, lattice)
    table: dict[int, NodeCoefficients] = {}
    for nid in reversed(alive_nodes(lattice, policy)):
        action = node_action(lattice, policy, nid)
        if action == CONTINUE:
            table[nid] = continuation_coefficients(lattice, nid, table)
        else:
            cf = realized_cash_flow(lattice, payoff, policy, nid)
            table[nid] = stop_coefficients(lattice, nid, cf, action)
    return HedgeCoefficients(lattice, payoff, policy, table)


def optimal_initial_capital(coeffs: HedgeCoefficients) -> float:
    return coeffs.root.b


def evaluate_value_function(coeffs: HedgeCoefficients, node_id: int, value: float) -> float:
    """Minimal expected squared (end-date) replication error from ``node_id`` holding ``value``."""
    return coeffs[node_id].value(value)


def trade_decision(coeffs: HedgeCoefficients, node_id: int, value: float) -> float:
    """Optimal futures position at a continuation node holding portfolio value ``value``."""
    nc = coeffs[node_id]
    if nc.action != CONTINUE:
        raise NodeStateError(f"node {node_id} does not trade ({nc.action})")
    disc = coeffs.lattice.discounts[coeffs.lattice.nodes[node_id].stage]
    return nc.p - nc.q * value / disc


def anchored_objective(coeffs: HedgeCoefficients, v0: float) -> float:
    """Expected squared replication error when the initial capital is fixed at ``v0``."""
    return coeffs.root.value(v0)


def coefficients_to_doc(coeffs: HedgeCoefficients) -> str:
    """JSON text mapping node id to its coefficients, 17 significant digits each."""
    lines = []
    for nid in coeffs.lattice.order:
        if nid not in coeffs.table:
            continue
        nc = coeffs.table[nid]
        fields = [("a", nc.a), ("b", nc.b), ("c", nc.c)]
        if nc.p is not None:
            fields += [("p", nc.p), ("q", nc.q)]
        body = ", ".join(f'"{k}": {v:.17g}' for k, v in fields)
        lines.append(f'  "{nid}": {{{body}, "action": "{nc.action}"}}')
    return "{\n" + ",\n".join(lines) + "\n}"
