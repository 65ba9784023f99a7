"""Monte Carlo check of the hedging recursion.

Paths are drawn under the statistical measure with a counter-based
generator: the uniforms of path ``k`` come from Philox block
``k * ceil((I - 1) / 4)`` under key ``seed``, so any path can be regenerated
alone and chunked or threaded runs agree bit for bit.  Paths are processed
in fixed chunks of ``CHUNK`` and chunk statistics are merged in index
order, which keeps the aggregate independent of the worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import ValidationError
from .hedging import HedgeCoefficients
from .lattice import MarketLattice, PayoffSpec
from .policy import CONTINUE, ExercisePolicy, canonicalize, iter_stopped, node_action, realized_cash_flow

CHUNK = 1 << 16
Z_PASS = 3.0


@dataclass(frozen=True)
class SimulationConfig:
    path_count: int
    seed: int = 0
    initial_capital: float | None = None

    def __post_init__(self):
        if self.path_count < 1:
            raise ValueError("path_count must be >= 1")


@dataclass(frozen=True)
class PnlStats:
    path_count: int
    initial_capital: float
    mean_error: float
    mean_squared_error: float
    unhedged_second_moment: float
    se_mean_error: float
    se_mean_squared_error: float
    se_unhedged: float
    max_abs_error: float


@dataclass
class PathRecords:
    path_id: np.ndarray
    iota: np.ndarray
    cashflow: np.ndarray
    terminal_wealth: np.ndarray
    error: np.ndarray

    def write_csv(self, out: TextIO) -> None:
        writer = csv.writer(out)
        writer.writerow(["path_id", "iota", "cashflow", "terminal_wealth", "error"])
        for row in zip(self.path_id, self.iota, self.cashflow, self.terminal_wealth, self.error):
            writer.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])


class _DenseLattice:
    """Array view of a lattice for vectorized path sampling."""

    def __init__(self, lattice: MarketLattice):
        self.lattice = lattice
        self.ids = np.array(lattice.order, dtype=np.int64)
        self.index = {nid: k for k, nid in enumerate(lattice.order)}
        n = len(self.ids)
        width = max((len(node.edges) for node in lattice.nodes.values()), default=0)
        width = max(width, 1)
        self.children = np.zeros((n, width), dtype=np.int64)
        self.cum = np.full((n, width), 2.0)
        self.fanout = np.ones(n, dtype=np.int64)
        self.price = np.array([lattice.nodes[k].price for k in lattice.order])
        self.root = self.index[lattice.root]
        for k, nid in enumerate(lattice.order):
            edges = lattice.nodes[nid].edges
            if not edges:
                self.children[k, 0] = k
                continue
            self.fanout[k] = len(edges)
            self.children[k, : len(edges)] = [self.index[c] for c, _ in edges]
            self.cum[k, : len(edges)] = np.cumsum([p for _, p in edges])

    def uniforms(self, seed: int, start: int, count: int) -> np.ndarray:
        steps = self.lattice.stage_count - 1
        if steps == 0:
            return np.zeros((count, 0))
        blocks = -(-steps // 4)
        gen = np.random.Philox(key=seed)
        gen.advance(start * blocks)
        raw = gen.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :steps]
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        """Dense node indices, shape ``(count, I)``, for paths ``start .. start+count-1``."""
        u = self.uniforms(seed, start, count)
        out = np.empty((count, self.lattice.stage_count), dtype=np.int64)
        out[:, 0] = self.root
        for s in range(self.lattice.stage_count - 1):
            cur = out[:, s]
            slot = (self.cum[cur] <= u[:, s, None]).sum(axis=1)
            slot = np.minimum(slot, self.fanout[cur] - 1)
            out[:, s + 1] = self.children[cur, slot]
        return out


def sample_paths(lattice: MarketLattice, n: int, seed: int) -> np.ndarray:
    """``n`` root-to-terminal paths as an ``(n, I)`` array of node ids."""
    dense = _DenseLattice(lattice)
    parts = [dense.sample(seed, s, min(CHUNK, n - s)) for s in range(0, n, CHUNK)]
    return dense.ids[np.concatenate(parts)] if parts else np.empty((0, lattice.stage_count), dtype=np.int64)


@dataclass
class _Moments:
    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        mean = float(np.mean(x)) if len(x) else 0.0
        return cls(len(x), mean, float(np.sum((x - mean) ** 2)))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        if n == 0:
            return self
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return _Moments(n, mean, m2)

    @property
    def se(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / (self.n - 1) / self.n)


def _check_coefficients(lattice, payoff, policy, coeffs: HedgeCoefficients) -> ExercisePolicy:
    policy = canonicalize(policy, lattice)
    if coeffs.lattice != lattice or coeffs.policy != policy or coeffs.payoff != payoff:
        raise ValidationError("coefficient table was built for a different lattice, payoff or policy")
    return policy


def run_hedge(
    lattice: MarketLattice,
    payoff: PayoffSpec,
    policy: ExercisePolicy,
    coeffs: HedgeCoefficients,
    config: SimulationConfig,
    workers: int = 1,
    keep_paths: bool = False,
) -> tuple[PnlStats, PathRecords | None]:
    """Execute the optimal hedge on sampled paths and aggregate the replication errors."""
    policy = _check_coefficients(lattice, payoff, policy, coeffs)
    dense = _DenseLattice(lattice)
    n_nodes = len(dense.ids)
    stops = np.zeros(n_nodes, dtype=bool)
    realized = np.zeros(n_nodes)
    p_coef = np.zeros(n_nodes)
    q_coef = np.zeros(n_nodes)
    for k, nid in enumerate(lattice.order):
        stops[k] = node_action(lattice, policy, nid) != CONTINUE
        realized[k] = realized_cash_flow(lattice, payoff, policy, nid)
        nc = coeffs.table.get(nid)
        if nc is not None and nc.action == CONTINUE:
            p_coef[k], q_coef[k] = nc.p, nc.q
    last = lattice.stage_count - 1
    disc = np.array(lattice.discounts + (1.0,))
    to_end = np.array([lattice.compound_discount(s, last) for s in range(last + 1)])
    from_start = np.array([lattice.compound_discount(0, s) for s in range(last + 1)])
    v0 = coeffs.root.b if config.initial_capital is None else float(config.initial_capital)

    def chunk(start: int):
        count = min(CHUNK, config.path_count - start)
        paths = dense.sample(config.seed, start, count)
        wealth = np.full(count, v0)
        alive = np.ones(count, dtype=bool)
        iota = np.full(count, last, dtype=np.int64)
        cf = np.zeros(count)
        final = np.zeros(count)
        for s in range(last + 1):
            cur = paths[:, s]
            here = alive & stops[cur]
            iota[here] = s
            cf[here] = realized[cur[here]]
            final[here] = wealth[here]
            alive &= ~here
            if s < last:
                theta = p_coef[cur] - q_coef[cur] * wealth / disc[s]
                moved = wealth / disc[s] + (dense.price[paths[:, s + 1]] - dense.price[cur]) * theta
                wealth = np.where(alive, moved, wealth)
        err = (cf - final) / to_end[iota]
        unhedged = (cf - v0 / from_start[iota]) / to_end[iota]
        moments = (_Moments.of(err), _Moments.of(err * err), _Moments.of(unhedged * unhedged))
        rec = None
        if keep_paths:
            rec = PathRecords(np.arange(start, start + count), iota, cf, final, err)
        return moments, float(np.max(np.abs(err))), rec

    starts = list(range(0, config.path_count, CHUNK))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(chunk, starts))
        # pool.map preserves input order, so the merge below is scheduling-independent
    else:
        results = [chunk(s) for s in starts]

    err_m, sq_m, un_m = results[0][0]
    worst = results[0][1]
    for moments, mx, _ in results[1:]:
        err_m = err_m.merge(moments[0])
        sq_m = sq_m.merge(moments[1])
        un_m = un_m.merge(moments[2])
        worst = max(worst, mx)

    records = None
    if keep_paths:
        parts = [r[2] for r in results]
        records = PathRecords(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                                ("path_id", "iota", "cashflow", "terminal_wealth", "error")))
    stats = PnlStats(
        path_count=config.path_count,
        initial_capital=v0,
        mean_error=err_m.mean,
        mean_squared_error=sq_m.mean,
        unhedged_second_moment=un_m.mean,
        se_mean_error=err_m.se,
        se_mean_squared_error=sq_m.se,
        se_unhedged=un_m.se,
        max_abs_error=worst,
    )
    return stats, records


def exact_hedge_moments(
    lattice: MarketLattice,
    payoff: PayoffSpec,
    policy: ExercisePolicy,
    coeffs: HedgeCoefficients,
    initial_capital: float | None = None,
) -> tuple[float, float]:
    """Mean and second moment of the replication error over every path, weighted exactly."""
    policy = _check_coefficients(lattice, payoff, policy, coeffs)
    last = lattice.stage_count - 1
    v0 = coeffs.root.b if initial_capital is None else float(initial_capital)
    root = lattice.root
    if root in policy.exercise:
        err = (realized_cash_flow(lattice, payoff, policy, root) - v0) / lattice.compound_discount(0, last)
        return err, err * err

    mean = second = 0.0
    for prefix, prob in iter_stopped(lattice, policy, root, lambda _a, _b, p: p):
        wealth = v0
        for parent, child in zip(prefix, prefix[1:]):
            node = lattice.nodes[parent]
            d = lattice.discounts[node.stage]
            nc = coeffs.table[parent]
            theta = nc.p - nc.q * wealth / d
            wealth = wealth / d + (lattice.nodes[child].price - node.price) * theta
        stop = prefix[-1]
        err = (realized_cash_flow(lattice, payoff, policy, stop) - wealth) / lattice.compound_discount(
            lattice.nodes[stop].stage, last
        )
        mean += prob * err
        second += prob * err * err
    return mean, second


@dataclass(frozen=True)
class SimulationSummary:
    empirical: float
    predicted: float
    standard_error: float
    z: float
    passed: bool


def summarize(stats: PnlStats, predicted: float) -> SimulationSummary:
    """Compare the empirical mean squared error with the predicted value."""
    diff = stats.mean_squared_error - predicted
    se = stats.se_mean_squared_error
    if se > 0.0:
        z = diff / se
    else:
        z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(predicted)) else math.inf
    return SimulationSummary(stats.mean_squared_error, predicted, se, z, abs(z) <= Z_PASS)
