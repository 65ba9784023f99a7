import numpy as np
import pytest

from quadhedge.errors import CapacityError, LatticeParseError, ValidationError
from quadhedge.lattice import MarketLattice, Node
from quadhedge.policy import (
    ExercisePolicy,
    alive_nodes,
    canonicalize,
    check_path,
    count_policies,
    dump_policy,
    enumerate_policies,
    is_canonical,
    iter_paths,
    load_policy,
    policy_cash_flow,
    stopping_stage,
)
from quadhedge.reference import HIGH, LOW, MID, ROOT

from helpers import random_policy, random_tree


def chain(length: int) -> MarketLattice:
    nodes = [Node(k, k, 1.0, ((k + 1, 1.0),)) for k in range(length - 1)]
    nodes.append(Node(length - 1, length - 1, 1.0))
    return MarketLattice.build(length, [1.0] * (length - 1), nodes)


def test_canonicalize_examples(ex1):
    everything = ExercisePolicy.of([ROOT, LOW, MID, HIGH])
    assert canonicalize(everything, ex1) == ExercisePolicy.of([ROOT])
    assert canonicalize(ExercisePolicy.of([MID]), ex1) == ExercisePolicy.of([MID])
    assert canonicalize(ExercisePolicy(), ex1) == ExercisePolicy()


def test_canonicalize_rejects_unknown_nodes(ex1):
    with pytest.raises(ValidationError, match="unknown node"):
        canonicalize(ExercisePolicy.of([17]), ex1)


def test_canonicalize_idempotent_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(50):
        lat = random_tree(rng)
        raw = ExercisePolicy.of(k for k in lat.order if rng.random() < 0.4)
        once = canonicalize(raw, lat)
        assert canonicalize(once, lat) == once
        assert is_canonical(once, lat)
        alive = set(alive_nodes(lat, once))
        assert once.exercise <= alive


def test_stopping_stage_examples(ex1):
    mid = ExercisePolicy.of([MID])
    assert stopping_stage(mid, [ROOT, MID], ex1) == (1, True)
    assert stopping_stage(mid, [ROOT, HIGH], ex1) == (1, False)
    root = ExercisePolicy.of([ROOT])
    for leaf in (LOW, MID, HIGH):
        assert stopping_stage(root, [ROOT, leaf], ex1) == (0, True)


def test_policy_cash_flow_examples(ex1, call3, call7):
    both = ExercisePolicy.of([MID, HIGH])
    assert policy_cash_flow(both, call3, [ROOT, HIGH], ex1) == (1, 13.0)
    assert policy_cash_flow(ExercisePolicy.of([MID]), call3, [ROOT, HIGH], ex1) == (1, 0.0)
    for leaf in (LOW, MID, HIGH):
        assert policy_cash_flow(ExercisePolicy(), call7, [ROOT, leaf], ex1) == (1, 0.0)


def test_check_path(ex1):
    check_path(ex1, [ROOT, MID])
    with pytest.raises(ValidationError):
        check_path(ex1, [MID])
    with pytest.raises(ValidationError):
        check_path(ex1, [ROOT])


def test_ex1_has_nine_policies(ex1):
    policies = list(enumerate_policies(ex1))
    assert len(policies) == 9 == count_policies(ex1)
    assert ExercisePolicy.of([ROOT]) in policies
    assert ExercisePolicy() in policies
    assert len(set(policies)) == 9


def test_single_node_has_two_policies():
    lat = chain(1)
    assert list(enumerate_policies(lat)) == [ExercisePolicy(), ExercisePolicy.of([0])]


def test_capacity_error():
    with pytest.raises(CapacityError):
        list(enumerate_policies(chain(30), cap=2**20))


def test_enumeration_properties_on_random_trees():
    rng = np.random.default_rng(7)
    for _ in range(30):
        lat = random_tree(rng, stages=int(rng.integers(2, 4)), fanout=(2, 3))
        if len(lat.nodes) > 14:
            continue
        policies = list(enumerate_policies(lat))
        assert len(policies) == len(set(policies)) == count_policies(lat)
        assert all(is_canonical(p, lat) for p in policies)
        # every random canonical policy is among them
        assert random_policy(rng, lat) in set(policies)


def test_paths_cover_the_statistical_measure():
    rng = np.random.default_rng(2)
    lat = random_tree(rng, stages=3)
    total = sum(p for _, p in iter_paths(lat))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_policy_documents(ex1):
    pol = ExercisePolicy.of([MID, HIGH])
    assert load_policy(dump_policy(pol), ex1) == pol
    assert load_policy('{"policy": {"exercise": [2]}, "value": 1.0}') == ExercisePolicy.of([MID])
    assert load_policy('{"exercise": [0, 2]}', ex1) == ExercisePolicy.of([ROOT])
    with pytest.raises(LatticeParseError):
        load_policy('{"exercise": ["a"]}')
    with pytest.raises(LatticeParseError):
        load_policy("[1, 2]")


def test_decisions(ex1):
    pol = ExercisePolicy.of([MID])
    assert pol.decisions(ex1) == {ROOT: 0, LOW: 0, MID: 1, HIGH: 0}
    assert len(pol) == 1
