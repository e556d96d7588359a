"""Independent validators: exhaustive enumeration, finite differences, playout.

Everything here deliberately avoids the layered sweep so it can serve as an
oracle for it: paths are enumerated one by one, gradients come from central
differences, and the playout estimator samples actual walks with detection
coins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evaluator import eval_term
from .graph import PatrollingGraph
from .strategy import Strategy, StrategyIndex

PATH_LIMIT = 10**7


class PathLimitError(RuntimeError):
    """Enumeration would exceed the path budget; never truncate silently."""


@dataclass
class PathEntry:
    """One eligible continuation walk ending at the target."""

    pairs: tuple[int, ...]
    slots: tuple[int, ...]
    probability: float
    visits: int
    total_time: int


@dataclass
class PathSet:
    """All eligible walks for one (slot, target) observation.

    Holds flat arrays for fast re-evaluation of the protection polynomial at
    perturbed strategies with the same support (the enumeration itself only
    depends on which slots are active).
    """

    entries: list[PathEntry]
    slot: int
    target: str
    alpha: float
    beta: float

    def __post_init__(self):
        # Each path contributes prod(sigma[slots]) * eval_term(visits); index
        # -1 points at a unit entry appended in protection(), padding empty
        # products so reduceat segments are never empty.
        n_paths = len(self.entries)
        ptr = [0]
        cat: list[int] = []
        weights = np.empty(n_paths)
        for i, e in enumerate(self.entries):
            cat.append(-1)
            cat.extend(e.slots)
            ptr.append(len(cat))
            weights[i] = eval_term(self.alpha, self.beta, e.visits)
        self._cat = np.array(cat, dtype=np.int64)
        self._ptr = np.array(ptr[:-1], dtype=np.int64)
        self._weights = weights

    def protection(self, sigma: Strategy) -> float:
        """Sum of probability * detection payoff over the stored walks."""
        if not self.entries:
            return 0.0
        vals = np.append(sigma.probs, 1.0)[self._cat]
        probs = np.multiply.reduceat(vals, self._ptr)
        return float(np.dot(probs, self._weights))

    def probability_sum(self) -> float:
        """Total mass of the detection-stopped walk measure, at most 1.

        Each path is weighted by the chance the walk both performs it and is
        stopped exactly at its end (detection succeeding on the final visit).
        Raw walk probabilities alone can exceed 1 because a path and its
        extensions are all enumerated.
        """
        return float(
            sum(
                e.probability * (1.0 - self.beta) ** (e.visits - 1) * self.beta
                for e in self.entries
            )
        )


def enumerate_paths(
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    slot: int,
    target: str,
    eps: float = 0.0,
    limit: int = PATH_LIMIT,
) -> PathSet:
    """Depth-first enumeration of eligible walks for one observation.

    The walk starts at the committed slot's destination pair with the slot's
    edge time already spent, extends only through slots with probability
    above eps, and records a path every time it stands on the target.  Paths
    beyond the time budget are pruned; exceeding `limit` recorded paths (or
    visited nodes) raises PathLimitError rather than truncating.
    """
    ti = g.target_index[target]
    tv = int(g.target_vertex[ti])
    budget = int(g.attack_time[ti])
    alpha = float(g.alpha[ti])
    beta = float(g.beta[ti])

    entries: list[PathEntry] = []
    start_pair = int(index.slot_dst[slot])
    start_time = int(index.slot_time[slot])
    counter = 0
    if start_time <= budget:
        pairs_trail: list[int] = [start_pair]
        slots_trail: list[int] = []

        def rec(pair: int, elapsed: int, prob: float, visits: int):
            nonlocal counter
            counter += 1
            if counter > limit:
                raise PathLimitError(
                    f"enumeration for slot {slot} target {target!r} exceeded {limit} nodes"
                )
            here_visits = visits + (1 if index.pair_vertex[pair] == tv else 0)
            if index.pair_vertex[pair] == tv:
                entries.append(
                    PathEntry(
                        pairs=tuple(pairs_trail),
                        slots=tuple(slots_trail),
                        probability=prob,
                        visits=here_visits,
                        total_time=elapsed,
                    )
                )
            lo, hi = int(index.row_ptr[pair]), int(index.row_ptr[pair + 1])
            for j in range(lo, hi):
                p = float(sigma.probs[j])
                if p <= eps:
                    continue
                t2 = elapsed + int(index.slot_time[j])
                if t2 > budget:
                    continue
                nxt = int(index.slot_dst[j])
                pairs_trail.append(nxt)
                slots_trail.append(j)
                rec(nxt, t2, prob * p, here_visits)
                pairs_trail.pop()
                slots_trail.pop()

        rec(start_pair, start_time, 1.0, 0)
    return PathSet(entries, slot, target, alpha, beta)


def brute_protection(
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    slot: int,
    target: str,
    limit: int = PATH_LIMIT,
) -> float:
    """Protection of one observation by explicit path enumeration."""
    ps = enumerate_paths(g, index, sigma, slot, target, eps=0.0, limit=limit)
    total = 0.0
    for e in ps.entries:
        total += e.probability * eval_term(ps.alpha, ps.beta, e.visits)
    return total


def fd_gradient(f: Callable[[Strategy], float], sigma: Strategy, h: float) -> np.ndarray:
    """Central finite differences of f over raw slot coordinates."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    n = sigma.probs.shape[0]
    out = np.empty(n)
    for j in range(n):
        plus = Strategy(sigma.probs.copy())
        plus.probs[j] += h
        minus = Strategy(sigma.probs.copy())
        minus.probs[j] -= h
        fp, fm = f(plus), f(minus)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite objective at coordinate {j}")
        out[j] = (fp - fm) / (2.0 * h)
    return out


def mc_protection(
    g: PatrollingGraph,
    index: StrategyIndex,
    sigma: Strategy,
    slot: int,
    target: str,
    n: int,
    seed,
) -> tuple[float, float]:
    """Monte-Carlo estimate of one observation's protection.

    Simulates n walks from the committed slot: every arrival at the target
    flips an independent detection coin with its detection probability; the
    defended cost is scored on the first success within the attack budget.
    Returns (sample mean, standard error).
    """
    if not n >= 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ti = g.target_index[target]
    tv = int(g.target_vertex[ti])
    budget = int(g.attack_time[ti])
    alpha = float(g.alpha[ti])
    beta = float(g.beta[ti])
    rng = np.random.default_rng(seed)

    widths = np.diff(index.row_ptr)
    wmax = int(widths.max())
    cdf = np.full((index.n_pairs, wmax), np.inf)
    nxt_pair = np.zeros((index.n_pairs, wmax), dtype=np.int64)
    step_time = np.zeros((index.n_pairs, wmax), dtype=np.int64)
    for r in range(index.n_pairs):
        lo, hi = int(index.row_ptr[r]), int(index.row_ptr[r + 1])
        cdf[r, : hi - lo] = np.cumsum(sigma.probs[lo:hi])
        nxt_pair[r, : hi - lo] = index.slot_dst[lo:hi]
        step_time[r, : hi - lo] = index.slot_time[lo:hi]

    pos = np.full(n, int(index.slot_dst[slot]), dtype=np.int64)
    elapsed = np.full(n, int(index.slot_time[slot]), dtype=np.int64)
    alive = elapsed <= budget
    value = np.zeros(n)

    while alive.any():
        at_target = alive & (index.pair_vertex[pos] == tv)
        coins = rng.random(n)
        detected = at_target & (coins < beta)
        value[detected] = alpha
        alive = alive & ~detected
        if not alive.any():
            break
        u = rng.random(n)
        local = (u[:, None] > cdf[pos]).sum(axis=1)
        local = np.minimum(local, widths[pos] - 1)
        elapsed = elapsed + step_time[pos, local]
        pos = nxt_pair[pos, local]
        alive = alive & (elapsed <= budget)

    mean = float(value.mean())
    stderr = float(value.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, stderr
