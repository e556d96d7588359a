"""Strategy evaluation: protection values, gradients, and the game value.

The protection of a slot e = ((v', m'), (v, m)) against a target is the
expected value defended when an intrusion starts the moment the defender
commits to e.  It sums, over all continuation walks that reach the target
within its attack time, the walk probability times the detection payoff.

The sweep computes all protections for one target at once by searching the
graph backwards from the target, layer by layer in total suffix time,
aggregating walks with equal (pair, time) into single items (the coalesced
min-heap of the search is realized as a time-indexed layer table).  The
same recursion propagates exact derivatives, either as dense per-item rows
(the gradient table) or by a reverse sweep for one weighted objective (the
optimizer path).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import PatrollingGraph
from .strategy import Strategy, StrategyIndex, is_deterministic_update

DEFAULT_EPS_SUPPORT = 1e-6

# Refuse to materialize gradient tables beyond this many float64 entries
# (n_targets * n_slots^2); the optimizer never needs them at such sizes.
_GRAD_TABLE_ENTRY_LIMIT = 2.5e8


class EvaluationError(ValueError):
    """Raised for invalid evaluation inputs (unnormalized or unsupported)."""


@dataclass(frozen=True)
class SofteningConfig:
    """Worst-case softening: blend near-maximal losses instead of the single max.

    margin: losses within this distance of the maximum participate.  The
    default spans the full loss range of cost-100 instances, so effectively
    every supported observation participates with a softmax weight.
    temperature: softmax sharpness over participating losses.
    eps_support: slots below this probability are treated as unused.
    """

    margin: float = 100.0
    temperature: float = 5.0
    eps_support: float = DEFAULT_EPS_SUPPORT

    def __post_init__(self):
        if not (np.isfinite(self.margin) and self.margin >= 0):
            raise ValueError(f"margin must be finite and >= 0, got {self.margin}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature}")
        if not 0 <= self.eps_support < 1:
            raise ValueError(f"eps_support must be in [0, 1), got {self.eps_support}")


@dataclass
class TargetSearchStats:
    """Instrumentation of one target's backward sweep."""

    target: str
    lam: int
    items_popped: int
    heap_peak: int
    layer_times: np.ndarray


@dataclass
class EvalStats:
    """Aggregated sweep instrumentation for one evaluation."""

    per_target: list[TargetSearchStats]
    n_pairs: int

    @property
    def lambda_max(self) -> int:
        return max((s.lam for s in self.per_target), default=0)

    @property
    def heap_peak(self) -> int:
        return max((s.heap_peak for s in self.per_target), default=0)

    @property
    def items_popped(self) -> int:
        return sum(s.items_popped for s in self.per_target)

    @property
    def heap_bound_ok(self) -> bool:
        """Item and peak counts never exceed n_pairs * lambda, per target."""
        return all(
            s.items_popped <= self.n_pairs * s.lam and s.heap_peak <= self.n_pairs * s.lam
            for s in self.per_target
        )


@dataclass
class ProtectionTable:
    """Protection values and (optionally) their exact gradients.

    values[j, i] is the protection of slot j against target i; a zero entry
    means no eligible walk reaches the target within its budget.  grads, when
    requested, holds the partial derivatives of values[j, i] with respect to
    every raw slot probability; entries are zero off the reachable subgraph.
    """

    values: np.ndarray
    grads: np.ndarray | None
    stats: EvalStats
    target_ids: list[str] = field(default_factory=list)

    def _ti(self, target: str) -> int:
        try:
            return self.target_ids.index(target)
        except ValueError:
            raise KeyError(f"unknown target {target!r}") from None

    def value(self, slot: int, target: str) -> float:
        return float(self.values[slot, self._ti(target)])

    def grad(self, slot: int, target: str) -> np.ndarray:
        if self.grads is None:
            raise EvaluationError("table was computed without gradients")
        return self.grads[self._ti(target), slot]


def eval_term(alpha: float, beta: float, visits: int) -> float:
    """Expected defended value when the visits-th arrival is the detecting one.

    alpha * (1 - beta)^(visits - 1) * beta, with 0^0 read as 1 so that a
    certain detection on the first visit defends the full cost.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if not (isinstance(visits, (int, np.integer)) and visits >= 1):
        raise ValueError(f"visits must be an integer >= 1, got {visits}")
    return float(alpha) * (1.0 - float(beta)) ** (int(visits) - 1) * float(beta)


def _check_normalized(index: StrategyIndex, sigma: Strategy, tol: float = 1e-6) -> None:
    sums = np.add.reduceat(sigma.probs, index.row_ptr[:-1])
    bad = np.nonzero(np.abs(sums - 1.0) > tol)[0]
    if bad.size:
        r = int(bad[0])
        raise EvaluationError(
            f"strategy row {index.pair_label(r)} sums to {sums[r]:.9f}, not 1 (+-{tol})"
        )
    if np.any(sigma.probs < -tol) or np.any(sigma.probs > 1 + tol):
        raise EvaluationError("strategy entries outside [0, 1]")


def _target_inputs(g: PatrollingGraph, index: StrategyIndex, ti: int, sigma: Strategy):
    """Per-target kernel inputs: seeds, budget, and scaled slot factors."""
    tv = int(g.target_vertex[ti])
    beta = float(g.beta[ti])
    d = int(g.attack_time[ti])
    seeds = np.nonzero(index.pair_vertex == tv)[0].astype(np.int64)
    fac = np.where(index.slot_src_vertex == tv, 1.0 - beta, 1.0)
    f = sigma.probs * fac
    seed_val = float(g.alpha[ti]) * beta
    return tv, d, seeds, seed_val, f, fac


def forward_protection(
    g: PatrollingGraph, index: StrategyIndex, sigma: Strategy
) -> tuple[np.ndarray, list[np.ndarray], EvalStats]:
    """Value-only sweep over all targets.

    Returns (values matrix, per-target layer stacks, stats).  The layer
    stacks hold the aggregated reach value of every (pair, suffix time)
    cell and feed the adjoint gradient sweep.
    """
    _check_normalized(index, sigma)
    values = np.zeros((index.n_slots, g.n_targets))
    layer_stacks: list[np.ndarray] = []
    per_target: list[TargetSearchStats] = []
    for ti in range(g.n_targets):
        _, d, seeds, seed_val, f, fac = _target_inputs(g, index, ti, sigma)
        layers, P, times, items, peak = _kernels.forward_sweep(
            d,
            index.n_pairs,
            index.n_slots,
            seeds,
            seed_val,
            f,
            index.slot_src,
            index.slot_dst,
            index.slot_time,
            index.in_ptr,
            index.in_ids,
        )
        values[:, ti] = P
        layer_stacks.append(layers)
        per_target.append(
            TargetSearchStats(g.target_ids[ti], len(times), items, peak, times)
        )
    return values, layer_stacks, EvalStats(per_target, index.n_pairs)


def protection_table(
    g: PatrollingGraph, index: StrategyIndex, sigma: Strategy, want_grads: bool = True
) -> ProtectionTable:
    """Joint computation of all protections and, optionally, their gradients.

    The backward search processes suffix times in strictly increasing order;
    items with equal (pair, time) are merged on insert, which keeps the live
    item count within n_pairs per time layer.  Gradient rows follow the
    product rule of the walk-probability polynomial, so entries are exact
    partial derivatives of the raw slot variables (no normalization inside).
    """
    if not want_grads:
        values, _, stats = forward_protection(g, index, sigma)
        return ProtectionTable(values, None, stats, list(g.target_ids))
    _check_normalized(index, sigma)
    entries = float(g.n_targets) * float(index.n_slots) ** 2
    if entries > _GRAD_TABLE_ENTRY_LIMIT:
        raise EvaluationError(
            f"gradient table would hold {entries:.2e} entries; "
            "recompute with want_grads=False or reduce the instance"
        )
    values = np.zeros((index.n_slots, g.n_targets))
    grads = np.zeros((g.n_targets, index.n_slots, index.n_slots))
    per_target: list[TargetSearchStats] = []
    max_time = int(index.slot_time.max()) if index.n_slots else 1
    for ti in range(g.n_targets):
        _, d, seeds, seed_val, f, fac = _target_inputs(g, index, ti, sigma)
        ring = min(max_time, d) + 1
        P, GT, times, items, peak = _kernels.table_sweep(
            d,
            ring,
            index.n_pairs,
            index.n_slots,
            seeds,
            seed_val,
            f,
            fac,
            index.slot_src,
            index.slot_dst,
            index.slot_time,
            index.in_ptr,
            index.in_ids,
        )
        values[:, ti] = P
        grads[ti] = GT
        per_target.append(
            TargetSearchStats(g.target_ids[ti], len(times), items, peak, times)
        )
    return ProtectionTable(values, grads, EvalStats(per_target, index.n_pairs), list(g.target_ids))


@dataclass
class RvalReport:
    """Game value of a strategy against the worst supported observation."""

    value: float
    worst_case: tuple[int, str]
    per_candidate: list[tuple[int, str, float]]
    alpha_max: float


def _support_mask(sigma: Strategy, eps_support: float) -> np.ndarray:
    return sigma.probs >= eps_support


def _worst_loss(values: np.ndarray, g: PatrollingGraph, supported: np.ndarray):
    """Max attacker gain over supported slots; ties resolve to the lowest
    (slot id, target id) pair via row-major argmax."""
    losses = g.alpha[None, :] - values
    masked = np.where(supported[:, None], losses, -np.inf)
    flat = int(np.argmax(masked))
    ws, wt = divmod(flat, values.shape[1])
    return losses, masked, float(masked[ws, wt]), ws, wt


def hard_value(
    table: ProtectionTable,
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    eps_support: float = DEFAULT_EPS_SUPPORT,
) -> RvalReport:
    """alpha_max minus the largest loss over supported (slot, target) pairs.

    A missing table entry counts as zero protection.  Raises when no slot
    reaches the support threshold.
    """
    supported = _support_mask(sigma, eps_support)
    if not supported.any():
        raise EvaluationError(f"no slot has probability >= {eps_support}")
    losses, masked, max_loss, ws, wt = _worst_loss(table.values, g, supported)
    alpha_max = float(np.max(g.alpha))
    sup_slots = np.nonzero(supported)[0]
    cand = [
        (int(j), g.target_ids[ti], float(losses[j, ti]))
        for j in sup_slots
        for ti in range(g.n_targets)
    ]
    cand.sort(key=lambda c: (-c[2], c[0], c[1]))
    return RvalReport(
        value=alpha_max - max_loss,
        worst_case=(ws, g.target_ids[wt]),
        per_candidate=cand,
        alpha_max=alpha_max,
    )


def _softening_weights(
    values: np.ndarray, g: PatrollingGraph, supported: np.ndarray, cfg: SofteningConfig
):
    """Candidate (slot, target) pairs near the worst loss and their softmax
    weights; margin 0 degenerates to the single tie-broken worst case."""
    losses, masked, max_loss, ws, wt = _worst_loss(values, g, supported)
    if cfg.margin == 0.0:
        slots = np.array([ws], dtype=np.int64)
        tis = np.array([wt], dtype=np.int64)
        weights = np.array([1.0])
    else:
        mask = masked >= max_loss - cfg.margin
        slots, tis = np.nonzero(mask)
        raw = np.exp((masked[slots, tis] - max_loss) / cfg.temperature)
        weights = raw / raw.sum()
    return max_loss, (ws, wt), slots, tis, weights


def soft_value_gradient(
    table: ProtectionTable,
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    cfg: SofteningConfig,
) -> tuple[float, np.ndarray]:
    """Hard value plus the softened ascent direction from table gradients.

    The gradient is the weighted sum of the protection gradients of all
    candidate pairs whose loss lies within margin of the maximum.
    """
    supported = _support_mask(sigma, cfg.eps_support)
    if not supported.any():
        raise EvaluationError(f"no slot has probability >= {cfg.eps_support}")
    max_loss, _, slots, tis, weights = _softening_weights(table.values, g, supported, cfg)
    if table.grads is None:
        raise EvaluationError("soft gradient needs a table computed with want_grads=True")
    grad = np.zeros(index.n_slots)
    for j, ti, w in zip(slots, tis, weights):
        grad += w * table.grads[ti, j]
    value = float(np.max(g.alpha)) - max_loss
    return value, grad


def soft_eval(
    g: PatrollingGraph, index: StrategyIndex, sigma: Strategy, cfg: SofteningConfig
) -> tuple[float, np.ndarray, EvalStats, float]:
    """Value and softened gradient without materializing the gradient table.

    Runs the value sweep, selects the softening candidates, then pulls their
    weighted protection objective back through one reverse sweep per target.
    The gradient matches soft_value_gradient up to floating-point
    accumulation order.  Also returns the softened objective itself (the
    weighted blend of candidate values), which moves smoothly even while the
    hard worst case is stuck on an unreachable observation.
    """
    values, layer_stacks, stats = forward_protection(g, index, sigma)
    supported = _support_mask(sigma, cfg.eps_support)
    if not supported.any():
        raise EvaluationError(f"no slot has probability >= {cfg.eps_support}")
    max_loss, _, slots, tis, weights = _softening_weights(values, g, supported, cfg)
    losses = g.alpha[tis] - values[slots, tis]
    soft_value = float(np.max(g.alpha)) - float(np.dot(weights, losses))
    grad = np.zeros(index.n_slots)
    for ti in np.unique(tis):
        w_slot = np.zeros(index.n_slots)
        sel = tis == ti
        np.add.at(w_slot, slots[sel], weights[sel])
        _, d, _, _, f, fac = _target_inputs(g, index, int(ti), sigma)
        grad += _kernels.adjoint_sweep(
            d,
            index.n_pairs,
            index.n_slots,
            w_slot,
            f,
            fac,
            index.slot_src,
            index.slot_dst,
            index.slot_time,
            layer_stacks[int(ti)],
        )
    value = float(np.max(g.alpha)) - max_loss
    return value, grad, stats, soft_value


def rval_of(
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    eps_support: float = DEFAULT_EPS_SUPPORT,
) -> float:
    """Hard game value alone, via the value-only sweep."""
    values, _, _ = forward_protection(g, index, sigma)
    supported = _support_mask(sigma, eps_support)
    if not supported.any():
        raise EvaluationError(f"no slot has probability >= {eps_support}")
    _, _, max_loss, _, _ = _worst_loss(values, g, supported)
    return float(np.max(g.alpha)) - max_loss


def claim_equality_warnings(
    index: StrategyIndex, sigma: Strategy, eps: float = DEFAULT_EPS_SUPPORT
) -> list[str]:
    """Conditions under which the reported value may understate the true one.

    The worst-case value equals the true strategy value when the supported
    pair graph is strongly connected and memory updates are deterministic;
    violations are reported as warnings, never enforced.
    """
    warnings: list[str] = []
    n = index.n_pairs
    fwd: list[list[int]] = [[] for _ in range(n)]
    rev: list[list[int]] = [[] for _ in range(n)]
    for j in np.nonzero(sigma.probs >= eps)[0]:
        s, t = int(index.slot_src[j]), int(index.slot_dst[j])
        fwd[s].append(t)
        rev[t].append(s)

    def full_reach(adj):
        seen = [False] * n
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return all(seen)

    if not (full_reach(fwd) and full_reach(rev)):
        warnings.append(
            "supported pair graph is not strongly connected; "
            "reported value is a lower bound"
        )
    if not is_deterministic_update(index, sigma, eps):
        warnings.append(
            "strategy is not deterministic-update; reported value is a lower bound"
        )
    return warnings
