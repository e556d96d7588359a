"""Benchmark the JIT kernels against the pure-numpy fallback.

Run as `python -m patrolkit.bench_kernels`.  Times the value sweep, the
adjoint sweep, and the gradient-table sweep on a mid-size office instance
under the current backend, then re-runs itself in a subprocess with
PATROLKIT_PURE_NUMPY=1 to measure the fallback and prints both.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time


def _measure(repeats: int = 5) -> dict:
    from . import _kernels
    from .evaluator import SofteningConfig, protection_table, soft_eval
    from .generators import gen_office
    from .strategy import build_index, random_strategy

    g = gen_office(2)
    index = build_index(g, 2)
    sigma = random_strategy(index, 0)
    cfg = SofteningConfig()

    # warm-up (triggers JIT compilation on the numba path)
    soft_eval(g, index, sigma, cfg)
    protection_table(g, index, sigma)

    t0 = time.perf_counter()
    for _ in range(repeats):
        soft_eval(g, index, sigma, cfg)
    t_eval = (time.perf_counter() - t0) / repeats

    t0 = time.perf_counter()
    for _ in range(repeats):
        protection_table(g, index, sigma)
    t_table = (time.perf_counter() - t0) / repeats

    return {
        "backend": _kernels.backend_name(),
        "n_pairs": index.n_pairs,
        "n_slots": index.n_slots,
        "soft_eval_ms": 1000 * t_eval,
        "table_ms": 1000 * t_table,
    }


def main() -> int:
    if "--inner" in sys.argv:
        print(json.dumps(_measure()))
        return 0
    mine = _measure()
    rows = [mine]
    if mine["backend"] == "numba":
        env = dict(os.environ, PATROLKIT_PURE_NUMPY="1")
        out = subprocess.run(
            [sys.executable, "-m", "patrolkit.bench_kernels", "--inner"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))
    print(f"office(2 floors), mem 2: {mine['n_pairs']} pairs, {mine['n_slots']} slots")
    print(f"{'backend':>8} | {'soft_eval':>12} | {'grad table':>12}")
    for r in rows:
        print(f"{r['backend']:>8} | {r['soft_eval_ms']:>10.2f}ms | {r['table_ms']:>10.2f}ms")
    if len(rows) == 2 and rows[1]["soft_eval_ms"] > 0:
        print(
            f"speedup: soft_eval x{rows[1]['soft_eval_ms'] / rows[0]['soft_eval_ms']:.1f}, "
            f"table x{rows[1]['table_ms'] / rows[0]['table_ms']:.1f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
