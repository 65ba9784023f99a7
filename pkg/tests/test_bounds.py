from fractions import Fraction

import numpy as np
import pytest

from quadhedge.bounds import ValueInterval, contains, value_bounds, vertex_distributions, witness_measure
from quadhedge.errors import ArbitrageError
from quadhedge.lattice import MarketLattice, Node, PayoffSpec
from quadhedge.optimize import RNMeasureSpec, rn_policy_value
from quadhedge.policy import ExercisePolicy
from quadhedge.reference import HIGH, LOW, MID, ROOT, ex1_rn_measure

from helpers import (
    binomial_rn_measure,
    joint_lp_bounds,
    random_policy,
    random_rn_measure,
    random_table_payoff,
    random_tree,
)


def _close(iv, lo, hi, tol=1e-9):
    return abs(iv.lo - float(lo)) <= tol and abs(iv.hi - float(hi)) <= tol


def test_ex1_intervals(ex1, call3, call7, mid_policy, rn_policy):
    naive = value_bounds(ex1, call3, mid_policy)
    assert _close(naive, 0, Fraction(17, 30)) and naive.open_lo and naive.open_hi
    rn = value_bounds(ex1, call3, rn_policy)
    assert _close(rn, Fraction(17, 30), Fraction(13, 21)) and rn.open_lo and rn.open_hi
    ex2 = value_bounds(ex1, call7, ExercisePolicy.of([HIGH]))
    assert _close(ex2, 0, Fraction(3, 7)) and ex2.open_lo and ex2.open_hi


def test_published_membership_verdicts(ex1, call3, mid_policy, rn_policy):
    assert not contains(value_bounds(ex1, call3, mid_policy), 1.5286)
    assert not contains(value_bounds(ex1, call3, rn_policy), 0.47806)
    assert not contains(value_bounds(ex1, call3, rn_policy), 0.4777)


def test_contains_semantics():
    iv = ValueInterval(0.0, 1.0)
    assert contains(iv, 0.5)
    assert not contains(iv, 0.0) and not contains(iv, 1.0)
    closed = ValueInterval(0.0, 1.0, False, False)
    assert contains(closed, 0.0) and contains(closed, 1.0)
    point = ValueInterval(2.0, 2.0, False, False)
    assert contains(point, 2.0)


def test_witnesses(ex1, call3, mid_policy):
    top = witness_measure(ex1, call3, mid_policy, "max")
    assert top.boundary
    assert top.probs[ROOT] == pytest.approx({LOW: 5 / 6, MID: 1 / 6, HIGH: 0.0}, abs=1e-12)
    bottom = witness_measure(ex1, call3, mid_policy, "min")
    assert bottom.boundary
    assert bottom.probs[ROOT][HIGH] == pytest.approx(1 / 21, abs=1e-12)
    assert bottom.probs[ROOT][MID] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        witness_measure(ex1, call3, mid_policy, "mid")


def test_family_values_lie_inside(ex1, call3, rn_policy, mid_policy):
    for policy in (rn_policy, mid_policy):
        iv = value_bounds(ex1, call3, policy)
        for r in np.linspace(0.001, 1 / 21 - 0.001, 25):
            v = rn_policy_value(ex1, call3, policy, ex1_rn_measure(r))
            assert iv.lo < v < iv.hi


def test_arbitrage_error():
    lat = MarketLattice.build(
        2, [1.0], [Node(0, 0, 5.0, ((1, 0.5), (2, 0.5))), Node(1, 1, 6.0), Node(2, 1, 7.0)]
    )
    with pytest.raises(ArbitrageError) as info:
        value_bounds(lat, PayoffSpec.call(5), ExercisePolicy())
    assert info.value.node_id == 0


def test_vertex_distributions_are_martingale():
    rng = np.random.default_rng(50)
    for _ in range(50):
        prices = {k: float(rng.uniform(1, 10)) for k in range(int(rng.integers(2, 9)))}
        price = float(rng.uniform(min(prices.values()) + 0.01, max(prices.values()) - 0.01))
        for vert in vertex_distributions(prices, price):
            assert sum(vert.values()) == pytest.approx(1.0, abs=1e-12)
            assert sum(m * prices[k] for k, m in vert.items()) == pytest.approx(price, abs=1e-10)
            assert all(m >= 0 for m in vert.values()) and len(vert) <= 2


def _random_cases(seed, count, **kw):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        lat = random_tree(rng, **kw)
        yield rng, lat, random_table_payoff(rng, lat), random_policy(rng, lat)


def test_sampled_equivalent_measures_lie_inside():
    for rng, lat, payoff, policy in _random_cases(51, 40):
        iv = value_bounds(lat, payoff, policy)
        tol = 1e-12 * max(1.0, abs(iv.hi))
        for _ in range(100):
            v = rn_policy_value(lat, payoff, policy, RNMeasureSpec(random_rn_measure(rng, lat)))
            assert iv.lo - tol <= v <= iv.hi + tol
            # interior measures never reach an open end
            if iv.open_lo:
                assert v > iv.lo
            if iv.open_hi:
                assert v < iv.hi


def test_binomial_lattices_give_a_closed_point():
    for rng, lat, payoff, policy in _random_cases(52, 30, binomial=True):
        iv = value_bounds(lat, payoff, policy)
        value = rn_policy_value(lat, payoff, policy, RNMeasureSpec(binomial_rn_measure(lat)))
        assert iv.lo == pytest.approx(value, rel=1e-12, abs=1e-12)
        assert iv.hi == pytest.approx(value, rel=1e-12, abs=1e-12)
        assert not iv.open_lo and not iv.open_hi
        for end in ("min", "max"):
            w = witness_measure(lat, payoff, policy, end)
            assert not w.boundary


def test_monotone_in_cash_flows():
    for rng, lat, payoff, policy in _random_cases(53, 30):
        bigger = PayoffSpec.table({k: v + float(rng.uniform(0, 1)) for k, v in payoff.values.items()})
        a, b = value_bounds(lat, payoff, policy), value_bounds(lat, bigger, policy)
        assert b.lo >= a.lo - 1e-12 and b.hi >= a.hi - 1e-12


def test_independent_of_statistical_probabilities():
    for rng, lat, payoff, policy in _random_cases(54, 30):
        nodes = []
        for node in lat.nodes.values():
            if node.edges:
                probs = rng.dirichlet(np.ones(len(node.edges)))
                node = Node(node.id, node.stage, node.price, tuple((c, float(p)) for (c, _), p in zip(node.edges, probs)))
            nodes.append(node)
        other = MarketLattice.build(lat.stage_count, lat.discounts, nodes)
        assert value_bounds(other, payoff, policy) == value_bounds(lat, payoff, policy)


def test_node_decomposition_matches_joint_lp():
    for rng, lat, payoff, policy in _random_cases(55, 40, stages=3):
        iv = value_bounds(lat, payoff, policy)
        lo, hi = joint_lp_bounds(lat, payoff, policy)
        scale = max(1.0, max(payoff.values.values()))
        assert iv.lo == pytest.approx(lo, abs=1e-8 * scale)
        assert iv.hi == pytest.approx(hi, abs=1e-8 * scale)
