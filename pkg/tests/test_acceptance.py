"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v`; the [criterion N] lines print
straight to the terminal.  The heavy synthesis criteria (4b, 5) run last and
dominate the wall time.
"""

import time

import numpy as np
import pytest

from patrolkit import (
    GridSpec,
    SofteningConfig,
    Strategy,
    brute_protection,
    build_index,
    default_config,
    enumerate_paths,
    eval_term,
    fd_gradient,
    gen_grid,
    gen_office,
    gen_points_complete,
    hard_value,
    mc_protection,
    normalize_full,
    normalize_pivot,
    office_tour,
    protection_table,
    random_strategy,
    regstar,
    strategy_from_tour,
    synthetic_atm_points,
)

from conftest import make_k2
from corpus import sample_instance

N_CORPUS = 200


def _report(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}", flush=True)


# ---------------------------------------------------------------------------
# 1. oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_1_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    pairs = 0
    for seed in range(N_CORPUS):
        g, index, sigma = sample_instance(seed)
        table = protection_table(g, index, sigma, want_grads=False)
        for j in range(index.n_slots):
            for tid in g.target_ids:
                bv = brute_protection(g, index, sigma, j, tid)
                worst = max(worst, abs(bv - table.value(j, tid)))
                pairs += 1
    wall = time.perf_counter() - t0
    ok = worst <= 1e-9 and wall < 60.0
    _report(
        capsys, 1,
        ok,
        f"{N_CORPUS} instances, {pairs} (edge, target) pairs, "
        f"max |sweep - brute| = {worst:.2e} (tol 1e-9), {wall:.1f}s (< 60s)",
    )
    assert worst <= 1e-9
    assert wall < 60.0


# ---------------------------------------------------------------------------
# 2. gradient exactness
# ---------------------------------------------------------------------------


def _fd_jacobian(fn, x, h=1e-6):
    n = x.shape[0]
    J = np.zeros((n, n))
    for j in range(n):
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        J[:, j] = (fn(xp) - fn(xm)) / (2 * h)
    return J


def test_criterion_2_gradient_exactness(capsys):
    worst_rel = 0.0
    checked = 0
    for seed in range(N_CORPUS):
        g, index, sigma = sample_instance(seed)
        table = protection_table(g, index, sigma)
        rng = np.random.default_rng(10_000 + seed)
        for _ in range(2):
            j = int(rng.integers(0, index.n_slots))
            tid = g.target_ids[int(rng.integers(0, g.n_targets))]
            ps = enumerate_paths(g, index, sigma, j, tid, eps=0.0)
            fd = fd_gradient(lambda s: ps.protection(s), sigma, h=1e-6)
            an = table.grad(j, tid)
            scale = max(1.0, float(np.max(np.abs(an))))
            worst_rel = max(worst_rel, float(np.max(np.abs(fd - an))) / scale)
            checked += 1

    worst_jac = 0.0
    for seed in range(5):
        g, index, _ = sample_instance(seed)
        rng = np.random.default_rng(seed)
        for normalize in (normalize_full, normalize_pivot):
            x = None
            while x is None or np.any(np.abs(x) < 1e-3) or np.any(np.abs(x - 1) < 1e-3):
                x = rng.uniform(-0.3, 1.3, size=index.n_slots)
            _, jac = normalize(Strategy(x), index)
            fd = _fd_jacobian(lambda v: normalize(Strategy(v), index)[0].probs, x)
            worst_jac = max(worst_jac, float(np.max(np.abs(jac.dense(index.n_slots) - fd))))

    ok = worst_rel <= 1e-5 and worst_jac <= 1e-4
    _report(
        capsys, 2,
        ok,
        f"{checked} protection gradients, max rel err {worst_rel:.2e} (tol 1e-5); "
        f"normalization Jacobians max err {worst_jac:.2e} (tol 1e-4)",
    )
    assert worst_rel <= 1e-5
    assert worst_jac <= 1e-4


# ---------------------------------------------------------------------------
# 3. closed-form micro-cases
# ---------------------------------------------------------------------------


def test_criterion_3_micro_cases(capsys):
    results = {}
    g = make_k2(d=2)
    index = build_index(g, 1)
    sig = Strategy(np.array([1.0, 1.0]))
    results["d=2"] = hard_value(protection_table(g, index, sig), g, index, sig).value

    g1 = make_k2(d=1)
    results["d=1"] = hard_value(protection_table(g1, index, sig), g1, index, sig).value

    g4 = make_k2(d=4, beta_a=0.5)
    results["beta=.5,d=4"] = hard_value(protection_table(g4, index, sig), g4, index, sig).value

    first_visit = eval_term(100.0, 1.0, 1)
    ok = (
        results["d=2"] == 100.0
        and results["d=1"] == 0.0
        and abs(results["beta=.5,d=4"] - 75.0) < 1e-12
        and first_visit == 100.0
    )
    _report(
        capsys, 3,
        ok,
        f"K2 values {results['d=2']:.0f}/{results['d=1']:.0f}/{results['beta=.5,d=4']:.0f} "
        f"(expect 100/0/75), certain first-visit payoff {first_visit:.0f}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 4. perfect protection on the tight office instance
# ---------------------------------------------------------------------------


def test_criterion_4a_handcrafted_tour_is_perfect(capsys):
    g = gen_office(1, beta=1.0, attack_time=112)
    index, sigma = strategy_from_tour(g, office_tour())
    value = hard_value(protection_table(g, index, sigma, want_grads=False), g, index, sigma).value
    ok = abs(value - 100.0) <= 1e-9
    _report(capsys, "4a", ok, f"112-unit tour strategy evaluates to {value:.12f} (expect 100 +- 1e-9)")
    assert abs(value - 100.0) <= 1e-9


def test_criterion_4b_synthesis_reaches_perfect_protection(capsys):
    g = gen_office(1, beta=1.0, attack_time=112)
    t0 = time.perf_counter()
    result = regstar(g, 4, 500, default_config(), seed=2024)
    wall = time.perf_counter() - t0
    hits = sum(1 for v in result.all_values if v >= 100.0 - 1e-9)
    ok = hits >= 1 and wall <= 1800.0
    _report(
        capsys, "4b",
        ok,
        f"500 restarts at mem 4: {hits} perfect runs "
        f"(paper rate ~1.2%; need >= 1), best {result.best.final_value:.6f}, {wall:.0f}s (<= 1800s)",
    )
    assert hits >= 1
    assert wall <= 1800.0


# ---------------------------------------------------------------------------
# 5. memory trend
# ---------------------------------------------------------------------------


def test_criterion_5_memory_trend(capsys):
    g = gen_office(1)
    cfg1 = default_config()
    cfg4 = default_config(max_iters=500)
    best1, best4 = [], []
    for seed in range(5):
        best1.append(regstar(g, 1, 200, cfg1, seed=seed).best.final_value)
        best4.append(regstar(g, 4, 200, cfg4, seed=seed).best.final_value)
    med1, med4 = float(np.median(best1)), float(np.median(best4))

    ga = gen_points_complete(synthetic_atm_points(seed=2024, count=18, box=40), seed=5)
    atm1, atm2 = [], []
    for seed in range(3):
        atm1.append(regstar(ga, 1, 10, default_config(max_iters=400), seed=seed).best.final_value)
        atm2.append(regstar(ga, 2, 10, default_config(max_iters=400), seed=seed).best.final_value)
    amed1, amed2 = float(np.median(atm1)), float(np.median(atm2))

    ok = (med4 > med1) and (med4 - med1 >= 10.0) and (amed2 > amed1)
    _report(
        capsys, 5,
        ok,
        f"office medians over 5 driver seeds x 200 restarts: m=1 {med1:.1f}, m=4 {med4:.1f} "
        f"(gap {med4 - med1:.1f} >= 10); synthetic 18-point medians: m=1 {amed1:.1f}, m=2 {amed2:.1f}",
    )
    assert med4 > med1
    assert med4 - med1 >= 10.0
    assert amed2 > amed1


# ---------------------------------------------------------------------------
# 6. performance sanity and the aggregation bound
# ---------------------------------------------------------------------------


def test_criterion_6_grid_runtime_and_heap_bound(capsys):
    g = gen_grid(GridSpec(n=9, k=10, seed=11))
    t0 = time.perf_counter()
    result = regstar(g, 1, 50, default_config(), seed=0)
    wall = time.perf_counter() - t0
    heap_ok = all(result.all_heap_bound_ok)
    ok = wall <= 600.0 and heap_ok
    _report(
        capsys, 6,
        ok,
        f"9x9 grid, 10 targets, 50 restarts at mem 1: {wall:.1f}s (<= 600s); "
        f"heap items <= pairs * lambda on every evaluation: {heap_ok}",
    )
    assert wall <= 600.0
    assert heap_ok


# ---------------------------------------------------------------------------
# 7. playout consistency
# ---------------------------------------------------------------------------


def test_criterion_7_monte_carlo_consistency(capsys):
    trials = 0
    hits = 0

    g = make_k2(d=4, beta_a=0.5)
    index = build_index(g, 1)
    sig = Strategy(np.array([1.0, 1.0]))
    exact = brute_protection(g, index, sig, 0, "a")
    for seed in range(25):
        mean, stderr = mc_protection(g, index, sig, 0, "a", n=100_000, seed=seed)
        trials += 1
        if stderr > 0 and abs(mean - exact) <= 4 * stderr:
            hits += 1

    go = gen_office(1)
    for seed in range(25):
        rng = np.random.default_rng(50_000 + seed)
        idx = build_index(go, 1)
        sigma = random_strategy(idx, int(rng.integers(0, 2**31)))
        table = protection_table(go, idx, sigma, want_grads=False)
        while True:
            j = int(rng.integers(0, idx.n_slots))
            tid = go.target_ids[int(rng.integers(0, go.n_targets))]
            if sigma.probs[j] >= 1e-6 and table.value(j, tid) > 0.5:
                break
        mean, stderr = mc_protection(go, idx, sigma, j, tid, n=100_000, seed=seed)
        trials += 1
        if stderr > 0 and abs(mean - table.value(j, tid)) <= 4 * stderr:
            hits += 1

    ok = hits >= int(np.ceil(0.96 * trials))
    _report(
        capsys, 7,
        ok,
        f"{hits}/{trials} playout estimates within 4 standard errors (need >= 96%)",
    )
    assert hits >= int(np.ceil(0.96 * trials))
