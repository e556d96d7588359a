"""Gradient-ascent strategy improvement and the multi-restart driver.

One improvement run alternates normalize -> evaluate -> step: the raw vector
is cropped and rescaled onto row simplices, the softened worst-case gradient
is pulled back through the normalization Jacobian, and the step size decays
as (1 - delta)^k.  The run stops once an iteration improves the value by at
most `threshold` (or at the iteration cap) and returns the best normalized
iterate seen, not the last one.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluator import SofteningConfig, rval_of, soft_eval
from .graph import PatrollingGraph
from .strategy import (
    Strategy,
    StrategyIndex,
    build_index,
    normalize_pivot,
    normalize_rows,
    normalize_vjp,
    random_strategy,
)


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of one improvement run.

    Defaults are calibrated on the office and point-cloud families: steps of
    step_scale * (1 - delta)^k on cost-scale gradients, decaying to the
    convergence threshold within a few hundred iterations.
    """

    delta: float = 0.003
    threshold: float = 1e-3
    max_iters: int = 2000
    softening: SofteningConfig = field(default_factory=SofteningConfig)
    normalization: str = "full"
    step_scale: float = 0.015

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (np.isfinite(self.threshold) and self.threshold > 0):
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if not self.max_iters >= 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.normalization not in ("full", "pivot"):
            raise ValueError(f"normalization must be 'full' or 'pivot', got {self.normalization}")
        if not (np.isfinite(self.step_scale) and self.step_scale > 0):
            raise ValueError(f"step_scale must be > 0, got {self.step_scale}")


@dataclass
class OptRun:
    """Trace and outcome of one improvement run."""

    final_strategy: Strategy
    final_value: float
    trace: list[tuple[int, float]]
    iterations: int
    wall_time: float
    heap_bound_ok: bool = True


@dataclass
class BestResult:
    """Outcome of a multi-restart invocation."""

    best: OptRun
    all_values: list[float]
    close_fraction: float
    all_iterations: list[int] = field(default_factory=list)
    all_wall_times: list[float] = field(default_factory=list)
    all_heap_bound_ok: list[bool] = field(default_factory=list)


def ascent_step(sigma: Strategy, xi: np.ndarray, k: int, cfg: OptimizerConfig) -> Strategy:
    """One scheduled update sigma + step_scale * (1 - delta)^k * xi, unnormalized."""
    xi = np.asarray(xi, dtype=np.float64)
    if not np.all(np.isfinite(xi)):
        raise ValueError("update direction contains non-finite entries")
    if k < 0:
        raise ValueError(f"iteration counter must be >= 0, got {k}")
    return Strategy(sigma.probs + cfg.step_scale * (1.0 - cfg.delta) ** k * xi)


def optimize(
    g: PatrollingGraph, index: StrategyIndex, sigma0: Strategy, cfg: OptimizerConfig
) -> OptRun:
    """Improve one strategy by normalized gradient ascent.

    sigma0 may be any real vector of slot dimension.  Values in the trace are
    of normalized iterates; the returned strategy is the best-valued iterate.
    """
    t0 = time.perf_counter()
    raw = Strategy(np.asarray(sigma0.probs, dtype=np.float64).copy())
    trace: list[tuple[int, float]] = []
    best_val = -np.inf
    best_probs: np.ndarray | None = None
    prev: float | None = None
    heap_ok = True
    k = 0
    while k < cfg.max_iters:
        if cfg.normalization == "pivot":
            normalized, jac = normalize_pivot(raw, index)
            y = normalized.probs
            pullback = jac.vjp
        else:
            y, sums, cd = normalize_rows(raw.probs, index.row_ptr)
            normalized = Strategy(y)
            pullback = lambda grad: normalize_vjp(y, sums, cd, grad, index.row_ptr)
        value, grad, stats, soft_value = soft_eval(g, index, normalized, cfg.softening)
        heap_ok = heap_ok and stats.heap_bound_ok
        trace.append((k, value))
        if value > best_val:
            best_val = value
            best_probs = y.copy()
        # Convergence test on the softened objective: the scheduled decay
        # shrinks the step until its change falls below the threshold.  The
        # hard value can sit on an unreachable worst case for long stretches
        # (and a signed test would abort on the first non-improving step),
        # so neither is usable here.
        stop = prev is not None and abs(soft_value - prev) <= cfg.threshold
        prev = soft_value
        if stop:
            k += 1
            break
        xi = pullback(grad)
        raw = ascent_step(normalized, xi, k, cfg)
        k += 1

    assert best_probs is not None
    final = Strategy(best_probs)
    # Recompute the retained iterate's value through the hard objective.
    final_value = rval_of(g, index, final, cfg.softening.eps_support)
    return OptRun(
        final_strategy=final,
        final_value=final_value,
        trace=trace,
        iterations=len(trace),
        wall_time=time.perf_counter() - t0,
        heap_bound_ok=heap_ok,
    )


def _run_restart(args) -> OptRun:
    g, index, seed_seq, cfg = args
    sigma0 = random_strategy(index, seed_seq)
    return optimize(g, index, sigma0, cfg)


def regstar(
    g: PatrollingGraph,
    mem: dict[str, int] | int,
    restarts: int,
    cfg: OptimizerConfig,
    seed,
    jobs: int = 1,
) -> BestResult:
    """Multi-restart driver: improve `restarts` random strategies, keep the best.

    Restart seeds are spawned from a single seed sequence, so results are
    identical for any `jobs`; ties on the best value resolve to the lowest
    restart index.
    """
    if not restarts >= 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    index = build_index(g, mem)
    children = np.random.SeedSequence(seed).spawn(restarts)
    tasks = [(g, index, child, cfg) for child in children]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_restart, tasks, chunksize=max(1, restarts // (4 * jobs))))
    else:
        runs = [_run_restart(t) for t in tasks]
    all_values = [r.final_value for r in runs]
    best_i = int(np.argmax(all_values))
    best = runs[best_i]
    close = sum(1 for v in all_values if v >= 0.9 * best.final_value)
    return BestResult(
        best=best,
        all_values=all_values,
        close_fraction=close / restarts,
        all_iterations=[r.iterations for r in runs],
        all_wall_times=[r.wall_time for r in runs],
        all_heap_bound_ok=[r.heap_bound_ok for r in runs],
    )


def default_config(**overrides) -> OptimizerConfig:
    """OptimizerConfig with per-field overrides, nested softening included."""
    soft_keys = {"margin", "temperature", "eps_support"}
    soft = {k: v for k, v in overrides.items() if k in soft_keys}
    rest = {k: v for k, v in overrides.items() if k not in soft_keys}
    cfg = OptimizerConfig(**rest)
    if soft:
        cfg = replace(cfg, softening=replace(cfg.softening, **soft))
    return cfg
