"""The variance-optimal signed martingale measure induced by a hedged policy.

At an alive continuation node the one-step weight of child ``k`` is

    prob(k) * a'(k) * (1 - q dF(k))  /  sum of the same over children,

which is the conditional form of the density that quadratic hedging puts on
the statistical measure.  Under these weights the futures price is a
one-step martingale and ``b = D * sum(weight * b')``, so the hedge's initial
capital is the discounted expectation of the stopped cash flow.  The
weights can be negative, in which case the measure is not equivalent to
the statistical one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DegenerateMeasureError, NodeStateError
from .hedging import HedgeCoefficients
from .lattice import MarketLattice, PayoffSpec, cash_flow
from .policy import CONTINUE, ExercisePolicy, Path, iter_stopped, realized_cash_flow

NORMALIZER_FLOOR = 1e-14
EQUIVALENCE_EPS = 1e-12


@dataclass
class SignedStoppedMeasure:
    """Signed weights of the stopped path prefixes leaving ``start``."""

    start: int
    weights: dict[Path, float]
    horizon: int | None = None

    def by_node(self) -> dict[int, float]:
        """Weights aggregated by stopping node (lossless on trees)."""
        acc: dict[int, float] = {}
        for prefix, w in self.weights.items():
            acc[prefix[-1]] = acc.get(prefix[-1], 0.0) + w
        return acc

    def total(self) -> float:
        return sum(self.weights.values())


@dataclass
class EquivalenceVerdict:
    equivalent: bool
    offending: list[Path] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.equivalent


def _require_continuation(coeffs: HedgeCoefficients, node_id: int) -> None:
    action = coeffs[node_id].action
    if action != CONTINUE:
        raise NodeStateError(f"node {node_id} is not a continuation node ({action})")


def one_step_weights(coeffs: HedgeCoefficients, node_id: int) -> dict[int, float]:
    """Signed VO transition weights from an alive continuation node to its children."""
    _require_continuation(coeffs, node_id)
    lattice = coeffs.lattice
    node = lattice.nodes[node_id]
    q = coeffs[node_id].q
    terms = {}
    for child, p in node.edges:
        df = lattice.nodes[child].price - node.price
        terms[child] = p * coeffs.table[child].a * (1.0 - q * df)
    total = sum(terms.values())
    if abs(total) <= NORMALIZER_FLOOR:
        raise DegenerateMeasureError(node_id, total)
    return {child: t / total for child, t in terms.items()}


def edge_measure(coeffs: HedgeCoefficients) -> dict[int, dict[int, float]]:
    """One-step weights at every alive continuation node."""
    return {
        nid: one_step_weights(coeffs, nid)
        for nid in coeffs.lattice.order
        if nid in coeffs.table and coeffs.table[nid].action == CONTINUE
    }


def stopped_path_weights(
    coeffs: HedgeCoefficients, from_node: int, horizon: int | None = None
) -> SignedStoppedMeasure:
    """Product of one-step weights along each prefix until the policy stops.

    With ``horizon`` the prefixes are also cut at that stage, which gives the
    measure of ``F`` at the stopped time ``min(stop, horizon)``.
    """
    _require_continuation(coeffs, from_node)
    cache: dict[int, dict[int, float]] = {}

    def step(parent: int, child: int, _p: float) -> float:
        if parent not in cache:
            cache[parent] = one_step_weights(coeffs, parent)
        return cache[parent][child]

    weights = dict(iter_stopped(coeffs.lattice, coeffs.policy, from_node, step, horizon))
    return SignedStoppedMeasure(from_node, weights, horizon)


def vo_expected_value(
    lattice: MarketLattice,
    payoff: PayoffSpec,
    policy: ExercisePolicy,
    from_node: int,
    coeffs: HedgeCoefficients,
) -> float:
    """Discounted stopped cash flow from ``from_node`` under the VO measure."""
    if from_node in policy.exercise:
        return cash_flow(payoff, lattice.nodes[from_node])
    if lattice.is_terminal(from_node):
        return 0.0
    measure = stopped_path_weights(coeffs, from_node)
    stage = lattice.nodes[from_node].stage
    total = 0.0
    for prefix, w in measure.weights.items():
        stop = prefix[-1]
        disc = lattice.compound_discount(stage, lattice.nodes[stop].stage)
        total += w * disc * realized_cash_flow(lattice, payoff, policy, stop)
    return total


def is_equivalent_measure(
    measure: SignedStoppedMeasure, eps: float = EQUIVALENCE_EPS
) -> EquivalenceVerdict:
    offending = [prefix for prefix, w in measure.weights.items() if w <= eps]
    return EquivalenceVerdict(not offending, offending)


def check_stopped_martingale(coeffs: HedgeCoefficients, from_node: int, horizon: int) -> float:
    """Residual ``E_VO[F at min(stop, horizon)] - F(from_node)``."""
    lattice = coeffs.lattice
    start = lattice.nodes[from_node]
    if not start.stage < horizon <= lattice.stage_count - 1:
        raise ValueError(f"horizon {horizon} must lie in ({start.stage}, {lattice.stage_count - 1}]")
    measure = stopped_path_weights(coeffs, from_node, horizon)
    expected = sum(w * lattice.nodes[prefix[-1]].price for prefix, w in measure.weights.items())
    return expected - start.price


def measure_report(coeffs: HedgeCoefficients) -> dict:
    """Everything the ``measure`` command prints, as plain data."""
    lattice = coeffs.lattice
    root = lattice.root
    report: dict = {"one_step_weights": {}, "equivalent": None, "offending": [], "martingale_residuals": {}}
    report["one_step_weights"] = {
        str(nid): {str(c): w for c, w in ws.items()} for nid, ws in edge_measure(coeffs).items()
    }
    if coeffs[root].action != CONTINUE:
        return report
    measure = stopped_path_weights(coeffs, root)
    verdict = is_equivalent_measure(measure)
    report["equivalent"] = verdict.equivalent
    report["offending"] = [
        {"prefix": list(prefix), "node": prefix[-1], "weight": measure.weights[prefix]}
        for prefix in verdict.offending
    ]
    report["stopped_weights"] = [
        {"prefix": list(prefix), "node": prefix[-1], "weight": w}
        for prefix, w in measure.weights.items()
    ]
    report["martingale_residuals"] = {
        str(j): check_stopped_martingale(coeffs, root, j) for j in range(1, lattice.stage_count)
    }
    return report
