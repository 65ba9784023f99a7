"""Exercise policies: decision rules keyed by lattice node.

A policy is the set of nodes at which the option is exercised.  Every other
node continues; a terminal node that is not exercised lets the option
expire with a zero cash flow.  Only nodes reachable while the option is
still alive matter, and the canonical form zeroes every other decision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Sequence

from .errors import CapacityError, LatticeParseError, ValidationError
from .lattice import MarketLattice, PayoffSpec, cash_flow, read_document

Path = tuple[int, ...]

DEFAULT_CAP = 2**20

EXERCISE = "exercise"
ABANDON = "abandon"
CONTINUE = "continue"


@dataclass(frozen=True)
class ExercisePolicy:
    exercise: frozenset[int] = frozenset()

    @classmethod
    def of(cls, nodes: Iterable[int] = ()) -> "ExercisePolicy":
        return cls(frozenset(int(n) for n in nodes))

    def decision(self, node_id: int) -> int:
        return int(node_id in self.exercise)

    def decisions(self, lattice: MarketLattice) -> dict[int, int]:
        return {k: self.decision(k) for k in lattice.order}

    def __len__(self) -> int:
        return len(self.exercise)


def node_action(lattice: MarketLattice, policy: ExercisePolicy, node_id: int) -> str:
    if node_id in policy.exercise:
        return EXERCISE
    if lattice.is_terminal(node_id):
        return ABANDON
    return CONTINUE


def realized_cash_flow(
    lattice: MarketLattice, payoff: PayoffSpec, policy: ExercisePolicy, node_id: int
) -> float:
    """Cash flow received when the option stops at ``node_id`` (0 on expiry)."""
    if node_id in policy.exercise:
        return cash_flow(payoff, lattice.nodes[node_id])
    return 0.0


def alive_nodes(lattice: MarketLattice, policy: ExercisePolicy) -> list[int]:
    """Nodes reachable from the root before any exercise, in (stage, id) order."""
    alive = {lattice.root}
    for nid in lattice.order:
        if nid in alive and nid not in policy.exercise:
            alive.update(lattice.nodes[nid].children)
    return [k for k in lattice.order if k in alive]


def canonicalize(policy: ExercisePolicy, lattice: MarketLattice) -> ExercisePolicy:
    unknown = sorted(k for k in policy.exercise if k not in lattice.nodes)
    if unknown:
        raise ValidationError(f"policy refers to unknown node id {unknown[0]}")
    alive = set(alive_nodes(lattice, policy))
    return ExercisePolicy(frozenset(k for k in policy.exercise if k in alive))


def is_canonical(policy: ExercisePolicy, lattice: MarketLattice) -> bool:
    return canonicalize(policy, lattice) == policy


def stopping_stage(
    policy: ExercisePolicy, path: Sequence[int], lattice: MarketLattice
) -> tuple[int, bool]:
    """Stage at which the option stops along ``path`` and whether it was exercised."""
    for nid in path:
        if nid in policy.exercise:
            return lattice.nodes[nid].stage, True
    return lattice.stage_count - 1, False


def policy_cash_flow(
    policy: ExercisePolicy, payoff: PayoffSpec, path: Sequence[int], lattice: MarketLattice
) -> tuple[int, float]:
    for nid in path:
        if nid in policy.exercise:
            return lattice.nodes[nid].stage, cash_flow(payoff, lattice.nodes[nid])
    return lattice.stage_count - 1, 0.0


def check_path(lattice: MarketLattice, path: Sequence[int]) -> None:
    if not path or path[0] != lattice.root:
        raise ValidationError("path must start at the root")
    if len(path) != lattice.stage_count:
        raise ValidationError(f"path must visit {lattice.stage_count} stages, got {len(path)}")
    for parent, child in zip(path, path[1:]):
        if child not in lattice.nodes[parent].children:
            raise ValidationError(f"no edge from {parent} to {child}")


def iter_stopped(
    lattice: MarketLattice,
    policy: ExercisePolicy,
    start: int,
    step_weight: Callable[[int, int, float], float],
    horizon: int | None = None,
) -> Iterator[tuple[Path, float]]:
    """Yield ``(prefix, weight)`` for every stopped path prefix from ``start``.

    A prefix ends where the policy exercises, at the last stage, or at stage
    ``horizon`` when one is given.  Its weight is the product of
    ``step_weight(parent, child, p)`` over the edges it crosses.  ``start``
    itself is treated as a continuation node unless it is terminal or at the
    horizon, so callers decide what exercising at ``start`` means.
    """
    last = lattice.stage_count - 1 if horizon is None else horizon

    def stops(nid: int) -> bool:
        return nid in policy.exercise or lattice.nodes[nid].stage >= last

    if lattice.nodes[start].stage >= last:
        yield (start,), 1.0
        return
    stack: list[tuple[Path, float]] = [((start,), 1.0)]
    while stack:
        prefix, weight = stack.pop()
        node = lattice.nodes[prefix[-1]]
        # reversed so the first child is emitted first
        for child, p in reversed(node.edges):
            w = weight * step_weight(node.id, child, p)
            if stops(child):
                yield prefix + (child,), w
            else:
                stack.append((prefix + (child,), w))


def iter_paths(lattice: MarketLattice) -> Iterator[tuple[Path, float]]:
    """Every root-to-terminal path with its statistical probability."""
    never = ExercisePolicy()
    yield from iter_stopped(lattice, never, lattice.root, lambda _n, _c, p: p)


def enumerate_policies(
    lattice: MarketLattice, cap: int = DEFAULT_CAP
) -> Iterator[ExercisePolicy]:
    """Every canonical policy exactly once, in lexicographic order.

    Nodes are visited in (stage, id) order with "continue" tried before
    "exercise"; a node below an exercised ancestor is forced to 0.
    """
    free = len(lattice.nodes)
    if 2**free > cap:
        raise CapacityError(free, cap)
    order = lattice.order
    parents = lattice.parents
    root = lattice.root

    def walk(k: int, alive: frozenset[int], chosen: tuple[int, ...]) -> Iterator[ExercisePolicy]:
        if k == len(order):
            yield ExercisePolicy(frozenset(chosen))
            return
        nid = order[k]
        reachable = nid == root or any(
            par in alive and par not in chosen for par in parents[nid]
        )
        if not reachable:
            yield from walk(k + 1, alive, chosen)
            return
        alive = alive | {nid}
        yield from walk(k + 1, alive, chosen)
        yield from walk(k + 1, alive, chosen + (nid,))

    yield from walk(0, frozenset(), ())


def count_policies(lattice: MarketLattice) -> int:
    """Number of canonical policies, by a backward recursion (no enumeration)."""
    # On a tree each continuation node independently chooses among its
    # children's sub-policies; DAGs fall back to enumeration.
    if not lattice.is_tree:
        return sum(1 for _ in enumerate_policies(lattice, cap=2 ** len(lattice.nodes)))
    counts: dict[int, int] = {}
    for nid in reversed(lattice.order):
        product = 1
        for child in lattice.nodes[nid].children:
            product *= counts[child]
        counts[nid] = 1 + product if lattice.nodes[nid].children else 2
    return counts[lattice.root]


# -- documents ----------------------------------------------------------------


def load_policy(source: Any, lattice: MarketLattice | None = None) -> ExercisePolicy:
    doc = read_document(source)
    if isinstance(doc, dict) and "exercise" not in doc and isinstance(doc.get("policy"), dict):
        doc = doc["policy"]  # output of `optimize --json`
    if not isinstance(doc, dict) or not isinstance(doc.get("exercise"), list):
        raise LatticeParseError("policy document must be an object with an 'exercise' array")
    ids = doc["exercise"]
    if any(isinstance(k, bool) or not isinstance(k, int) for k in ids):
        raise LatticeParseError("policy 'exercise' entries must be node ids")
    policy = ExercisePolicy.of(ids)
    if lattice is not None:
        policy = canonicalize(policy, lattice)
    return policy


def policy_to_doc(policy: ExercisePolicy) -> dict:
    return {"exercise": sorted(policy.exercise)}


def dump_policy(policy: ExercisePolicy) -> str:
    return json.dumps(policy_to_doc(policy))
