"""Exception hierarchy shared by every quadhedge module."""

from __future__ import annotations


class QuadHedgeError(Exception):
    """Base class for all library errors."""


class LatticeParseError(QuadHedgeError):
    """A model document could not be parsed."""


class ValidationError(QuadHedgeError):
    """An input violated a documented invariant.

    ``violations`` holds the full report so callers can show every problem,
    not just the first one.
    """

    def __init__(self, message: str, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class CapacityError(QuadHedgeError):
    def __init__(self, free_nodes: int, cap: int):
        super().__init__(
            f"policy space has 2^{free_nodes} candidates, exceeding cap {cap}"
        )
        self.free_nodes = free_nodes
        self.cap = cap


class SingularityError(QuadHedgeError):
    """The next-step futures move has (numerically) zero weighted variance."""

    def __init__(self, node_id: int, moment: float):
        super().__init__(
            f"node {node_id}: E[a'*dF^2] = {moment!r} is too small to determine a hedge"
        )
        self.node_id = node_id


class DegenerateWeightError(QuadHedgeError):
    def __init__(self, node_id: int, a: float):
        super().__init__(f"node {node_id}: quadratic weight a = {a!r} is not positive")
        self.node_id = node_id


class DegenerateMeasureError(QuadHedgeError):
    def __init__(self, node_id: int, total: float):
        super().__init__(f"node {node_id}: change-of-measure normalizer {total!r} is zero")
        self.node_id = node_id


class ArbitrageError(QuadHedgeError):
    """Child prices admit no strictly positive martingale distribution."""

    def __init__(self, node_id: int):
        super().__init__(
            f"node {node_id}: child prices do not straddle the node price (arbitrage in model)"
        )
        self.node_id = node_id


class NodeStateError(QuadHedgeError):
    """An operation was asked about a node in the wrong state (dead, exercised, terminal)."""
