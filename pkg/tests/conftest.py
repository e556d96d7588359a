import numpy as np
import pytest

from patrolkit import PatrollingGraph, TargetSpec, build_index, Strategy


def make_k2(
    d: int = 2, beta_a: float = 1.0, beta_b: float = 1.0, alpha: float = 100.0
) -> PatrollingGraph:
    """Two-vertex cycle with unit edges, both vertices targets."""
    return PatrollingGraph(
        ["a", "b"],
        {
            "a": TargetSpec(alpha, d, beta_a),
            "b": TargetSpec(alpha, d, beta_b),
        },
        [("a", "b", 1), ("b", "a", 1)],
    )


@pytest.fixture
def k2_cycle():
    """K2 with d=2 plus the only normalized strategy (deterministic cycle)."""
    g = make_k2(d=2)
    index = build_index(g, 1)
    return g, index, Strategy(np.array([1.0, 1.0]))


@pytest.fixture
def k2_beta_half():
    """K2 with beta(a)=0.5 and d=4; protection at a is 75."""
    g = make_k2(d=4, beta_a=0.5)
    index = build_index(g, 1)
    return g, index, Strategy(np.array([1.0, 1.0]))
