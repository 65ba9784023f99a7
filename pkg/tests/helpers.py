"""Random lattice generators and independent oracles used across the test suite.

The oracles deliberately avoid the library's backward recursions:

* ``least_squares_hedge`` solves the whole hedging problem at once as a
  weighted linear least-squares fit over stopped outcomes (normal equations).
* ``density_product_value`` values a policy with the unconditional
  normalized product of ``(1 - q dF)`` factors under the statistical measure.
* ``joint_lp_bounds`` optimizes the policy value over path measures with
  ``scipy.optimize.linprog`` instead of node-by-node vertex enumeration.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from quadhedge.bounds import vertex_distributions
from quadhedge.hedging import HedgeCoefficients
from quadhedge.lattice import MarketLattice, Node, PayoffSpec
from quadhedge.policy import ExercisePolicy, canonicalize, iter_paths, iter_stopped, realized_cash_flow
from quadhedge.reference import HIGH, LOW, MID

# Exact rational values for the two-date example, computed by hand with
# fractions (prices 16/5 -> 64/25, 32/5, 16 with probabilities 1/20, 1/20, 9/10).
EXACT = {
    "weights": {LOW: Fraction(1265, 2004), MID: Fraction(901, 2004), HIGH: Fraction(-27, 334)},
    "q": Fraction(2275, 28904),
    "b_k3_mid": Fraction(15317, 10020),
    "b_k3_mid_high": Fraction(4787, 10020),
    "b_k7_high": Fraction(-243, 334),
    "rn_value_k3_mid_high": Fraction(83, 140),
}


def random_tree(
    rng: np.random.Generator,
    stages: int | None = None,
    fanout: tuple[int, int] = (2, 4),
    zero_rate: bool = False,
    binomial: bool = False,
) -> MarketLattice:
    """A random tree whose children always straddle the parent price (arbitrage free)."""
    stages = int(rng.integers(2, 5)) if stages is None else stages
    discounts = [1.0] * (stages - 1) if zero_rate else list(rng.uniform(0.9, 1.0, stages - 1))
    nodes: list[Node] = []
    next_id = [0]

    def grow(stage: int, price: float) -> int:
        nid = next_id[0]
        next_id[0] += 1
        if stage == stages - 1:
            nodes.append(Node(nid, stage, price))
            return nid
        k = 2 if binomial else int(rng.integers(fanout[0], fanout[1] + 1))
        factors = [rng.uniform(0.55, 0.95), rng.uniform(1.05, 1.6)]
        factors += list(rng.uniform(0.55, 1.6, k - 2))
        probs = 0.1 / k + 0.9 * rng.dirichlet(np.ones(k))
        probs = probs / probs.sum()
        edges = []
        for f, p in zip(factors, probs):
            edges.append((grow(stage + 1, price * float(f)), float(p)))
        nodes.append(Node(nid, stage, price, tuple(edges)))
        return nid

    grow(0, float(rng.uniform(2.0, 20.0)))
    return MarketLattice.build(stages, discounts, nodes)


def random_table_payoff(rng: np.random.Generator, lattice: MarketLattice, zero_share: float = 0.2) -> PayoffSpec:
    values = {}
    for nid in lattice.order:
        values[nid] = 0.0 if rng.random() < zero_share else float(rng.uniform(0.1, 5.0))
    return PayoffSpec.table(values)


def random_policy(rng: np.random.Generator, lattice: MarketLattice, rate: float = 0.3) -> ExercisePolicy:
    raw = ExercisePolicy.of(k for k in lattice.order if rng.random() < rate)
    return canonicalize(raw, lattice)


def binomial_rn_measure(lattice: MarketLattice) -> dict[int, dict[int, float]]:
    """Unique one-step martingale probabilities of a binomial lattice."""
    probs = {}
    for nid in lattice.order:
        node = lattice.nodes[nid]
        if not node.edges:
            continue
        (lo, _), (hi, _) = sorted(node.edges, key=lambda e: lattice.nodes[e[0]].price)
        f_lo, f_hi = lattice.nodes[lo].price, lattice.nodes[hi].price
        up = (node.price - f_lo) / (f_hi - f_lo)
        probs[nid] = {lo: 1.0 - up, hi: up}
    return probs


def random_rn_measure(rng: np.random.Generator, lattice: MarketLattice) -> dict[int, dict[int, float]]:
    """A strictly positive martingale measure: random interior mix of each node's vertex measures."""
    probs = {}
    for nid in lattice.order:
        node = lattice.nodes[nid]
        if not node.edges:
            continue
        verts = vertex_distributions({k: lattice.nodes[k].price for k in node.children}, node.price)
        mix = rng.dirichlet(np.ones(len(verts)))
        dist = {k: 0.0 for k in node.children}
        for weight, vert in zip(mix, verts):
            for k, m in vert.items():
                dist[k] += weight * m
        probs[nid] = dist
    return probs


# -- least-squares oracle -----------------------------------------------------


def least_squares_hedge(
    lattice: MarketLattice,
    payoff: PayoffSpec,
    policy: ExercisePolicy,
    v0: float | None = None,
) -> dict:
    """Global least squares over (V0, one futures position per alive continuation node).

    Needs a tree so a node-keyed position is a fully general trading rule.
    Returns the minimal objective, the minimizing V0 and positions, and the
    objective scale ``sum P y^2``.
    """
    assert lattice.is_tree
    policy = canonicalize(policy, lattice)
    last = lattice.stage_count - 1
    root = lattice.root

    def disc(i: int, j: int) -> float:
        return math.prod(lattice.discounts[i:j])

    if root in policy.exercise:
        cf = realized_cash_flow(lattice, payoff, policy, root)
        start = cf if v0 is None else v0
        resid = (cf - start) / disc(0, last)
        return {"objective": resid**2, "v0": start, "theta": {}, "scale": (cf / disc(0, last)) ** 2}

    outcomes = list(iter_stopped(lattice, policy, root, lambda _a, _b, p: p))
    trading = sorted({n for prefix, _ in outcomes for n in prefix[:-1]})
    col = {n: k for k, n in enumerate(trading)}
    offset = 1 if v0 is None else 0
    A = np.zeros((len(outcomes), offset + len(trading)))
    y = np.zeros(len(outcomes))
    w = np.zeros(len(outcomes))
    for r, (prefix, prob) in enumerate(outcomes):
        stop = prefix[-1]
        iota = lattice.nodes[stop].stage
        y[r] = realized_cash_flow(lattice, payoff, policy, stop) / disc(iota, last)
        if v0 is None:
            A[r, 0] = 1.0 / disc(0, last)
        else:
            y[r] -= v0 / disc(0, last)
        for parent, child in zip(prefix, prefix[1:]):
            k = lattice.nodes[parent].stage
            move = lattice.nodes[child].price - lattice.nodes[parent].price
            A[r, offset + col[parent]] = move / disc(k + 1, last)
        w[r] = prob
    normal = A.T @ (w[:, None] * A)
    rhs = A.T @ (w * y)
    x = np.linalg.solve(normal, rhs)
    resid = y - A @ x
    return {
        "objective": float(np.sum(w * resid**2)),
        "v0": float(x[0]) if v0 is None else v0,
        "theta": {n: float(x[offset + col[n]]) for n in trading},
        "scale": float(np.sum(w * y**2)),
    }


# -- change-of-measure oracle --------------------------------------------------


def density_product_value(coeffs: HedgeCoefficients) -> float:
    """b0 as E[prod(1 - q dF) * D * C] / E[prod(1 - q dF)] under the statistical measure."""
    lattice, policy = coeffs.lattice, coeffs.policy
    num = den = 0.0
    for prefix, prob in iter_stopped(lattice, policy, lattice.root, lambda _a, _b, p: p):
        density = 1.0
        for parent, child in zip(prefix, prefix[1:]):
            move = lattice.nodes[child].price - lattice.nodes[parent].price
            density *= 1.0 - coeffs.table[parent].q * move
        stop = prefix[-1]
        d = math.prod(lattice.discounts[: lattice.nodes[stop].stage])
        num += prob * density * d * realized_cash_flow(lattice, coeffs.payoff, policy, stop)
        den += prob * density
    return num / den


# -- joint LP oracle -----------------------------------------------------------


def joint_lp_bounds(lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy) -> tuple[float, float]:
    """Inf and sup of the policy value over all martingale path measures (closure)."""
    policy = canonicalize(policy, lattice)
    paths = [p for p, _ in iter_paths(lattice)]
    value = np.zeros(len(paths))
    for r, path in enumerate(paths):
        for nid in path:
            if nid in policy.exercise:
                stage = lattice.nodes[nid].stage
                value[r] = math.prod(lattice.discounts[:stage]) * realized_cash_flow(lattice, payoff, policy, nid)
                break
    rows = [np.ones(len(paths))]
    rhs = [1.0]
    for nid in lattice.order:
        node = lattice.nodes[nid]
        if not node.edges:
            continue
        row = np.zeros(len(paths))
        for r, path in enumerate(paths):
            if path[node.stage] == nid:
                row[r] = lattice.nodes[path[node.stage + 1]].price - node.price
        rows.append(row)
        rhs.append(0.0)
    A_eq, b_eq = np.array(rows), np.array(rhs)
    lo = linprog(value, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    hi = linprog(-value, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert lo.status == 0 and hi.status == 0
    return float(lo.fun), float(-hi.fun)


def scale_of(lattice: MarketLattice, payoff: PayoffSpec) -> float:
    return max(1.0, max(abs(payoff.values[k]) for k in lattice.order) if payoff.kind == "table" else 1.0)
