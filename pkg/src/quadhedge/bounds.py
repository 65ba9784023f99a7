"""No-arbitrage value intervals of a policy's cash-flow stream.

The set of equivalent martingale measures on a lattice is rectangular: each
continuation node picks its own strictly positive conditional distribution
with mean equal to the node price.  The supremum (infimum) of the policy
value is therefore a backward recursion of small linear programs over
``{m >= 0, sum(m) = 1, sum(m * F_child) = F}``.  Every vertex of that set
puts mass on at most two children, so the programs are solved exactly by
listing vertices.

The endpoint is attained by an equivalent measure only when each node's
objective is constant on its feasible set; otherwise that end is open.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ArbitrageError
from .lattice import MarketLattice, PayoffSpec
from .policy import CONTINUE, ExercisePolicy, alive_nodes, canonicalize, node_action, realized_cash_flow

PRICE_TIE_REL = 1e-12
FLAT_REL = 1e-12
MEMBERSHIP_REL = 1e-12


@dataclass(frozen=True)
class ValueInterval:
    lo: float
    hi: float
    open_lo: bool = True
    open_hi: bool = True

    def __str__(self) -> str:
        left = "(" if self.open_lo else "["
        right = ")" if self.open_hi else "]"
        return f"{left}{self.lo:.6f}, {self.hi:.6f}{right}"


@dataclass
class WitnessMeasure:
    """Optimizing conditional distributions; ``boundary`` if any has a zero entry."""

    probs: dict[int, dict[int, float]]
    boundary: bool


def vertex_distributions(child_prices: dict[int, float], price: float) -> list[dict[int, float]]:
    """Vertices of the one-step martingale simplex slice, in a fixed order.

    Raises :class:`ArbitrageError` (with node id -1; callers re-raise with
    the real id) when no strictly positive distribution exists.
    """
    tol = PRICE_TIE_REL * max(1.0, abs(price))
    below = [k for k, f in child_prices.items() if f < price - tol]
    above = [k for k, f in child_prices.items() if f > price + tol]
    level = [k for k, f in child_prices.items() if abs(f - price) <= tol]
    if not (below and above) and len(level) != len(child_prices):
        raise ArbitrageError(-1)
    verts: list[dict[int, float]] = [{k: 1.0} for k in level]
    for lo in below:
        for hi in above:
            up = (price - child_prices[lo]) / (child_prices[hi] - child_prices[lo])
            verts.append({lo: 1.0 - up, hi: up})
    return verts


def _node_vertices(lattice: MarketLattice, node_id: int) -> list[dict[int, float]]:
    node = lattice.nodes[node_id]
    prices = {k: lattice.nodes[k].price for k in node.children}
    try:
        return vertex_distributions(prices, node.price)
    except ArbitrageError:
        raise ArbitrageError(node_id) from None


def _sweep(lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy, maximize: bool):
    policy = canonicalize(policy, lattice)
    values: dict[int, float] = {}
    chosen: dict[int, dict[int, float]] = {}
    flat = True
    for nid in reversed(alive_nodes(lattice, policy)):
        if node_action(lattice, policy, nid) != CONTINUE:
            values[nid] = realized_cash_flow(lattice, payoff, policy, nid)
            continue
        disc = lattice.discounts[lattice.nodes[nid].stage]
        verts = _node_vertices(lattice, nid)
        scores = [disc * sum(m * values[k] for k, m in v.items()) for v in verts]
        best = max(scores) if maximize else min(scores)
        spread = max(scores) - min(scores)
        if spread <= FLAT_REL * max(1.0, abs(best)):
            # constant objective: the centroid of the vertices is strictly positive
            centroid: dict[int, float] = {k: 0.0 for k in lattice.nodes[nid].children}
            for v in verts:
                for k, m in v.items():
                    centroid[k] += m / len(verts)
            chosen[nid] = centroid
        else:
            flat = False
            pick = verts[scores.index(best)]
            chosen[nid] = {k: pick.get(k, 0.0) for k in lattice.nodes[nid].children}
        values[nid] = best
    return values[lattice.root], not flat, chosen


def value_bounds(lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy) -> ValueInterval:
    hi, open_hi, _ = _sweep(lattice, payoff, policy, maximize=True)
    lo, open_lo, _ = _sweep(lattice, payoff, policy, maximize=False)
    return ValueInterval(lo, hi, open_lo, open_hi)


def witness_measure(
    lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy, end: str = "max"
) -> WitnessMeasure:
    if end not in ("min", "max"):
        raise ValueError("end must be 'min' or 'max'")
    _, _, chosen = _sweep(lattice, payoff, policy, maximize=end == "max")
    boundary = any(m <= 0.0 for dist in chosen.values() for m in dist.values())
    return WitnessMeasure(chosen, boundary)


def contains(interval: ValueInterval, x: float) -> bool:
    eps = MEMBERSHIP_REL * max(1.0, abs(interval.hi))
    above_lo = x > interval.lo + eps if interval.open_lo else x >= interval.lo - eps
    below_hi = x < interval.hi - eps if interval.open_hi else x <= interval.hi + eps
    return above_lo and below_hi
