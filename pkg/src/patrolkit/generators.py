"""Experiment instance families: lattice grids, point clouds, office buildings.

Grid and point-cloud instances are complete digraphs over 2-D integer points
with taxicab travel times; every vertex is a target.  Office buildings are
sparse corridor graphs where history matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import PatrollingGraph, TargetSpec
from .strategy import Strategy, StrategyIndex, build_index

COST_RANGE_DEFAULT = (180.0, 200.0)


@dataclass(frozen=True)
class GridSpec:
    """Parameters of one random lattice instance."""

    n: int
    k: int
    seed: int
    cost_range: tuple[float, float] = COST_RANGE_DEFAULT
    attack_time_rule: str = "standard"
    beta_rule: str = "perfect"

    def __post_init__(self):
        if self.k > self.n * self.n:
            raise ValueError(f"cannot place {self.k} targets on a {self.n}x{self.n} grid")
        if not 0 < self.cost_range[0] <= self.cost_range[1]:
            raise ValueError(f"cost_range must be positive and ordered: {self.cost_range}")
        if self.attack_time_rule not in ("standard", "extended"):
            raise ValueError(f"unknown attack_time_rule {self.attack_time_rule!r}")
        if self.beta_rule not in ("perfect", "uniform"):
            raise ValueError(f"unknown beta_rule {self.beta_rule!r}")


def _attack_time(rule: str, time_max: int, time_avg: float) -> int:
    if rule == "standard":
        d = time_max + time_avg + 3.0
    else:
        d = 2.0 * time_max + time_avg
    return max(1, int(round(d)))


def _complete_point_graph(
    points: list[tuple[int, int]],
    ids: list[str],
    rng: np.random.Generator,
    cost_range: tuple[float, float],
    attack_time_rule: str,
    beta_rule: str,
) -> PatrollingGraph:
    k = len(points)
    alphas = rng.uniform(cost_range[0], cost_range[1], size=k)
    betas = rng.uniform(0.8, 1.0, size=k) if beta_rule == "uniform" else np.ones(k)
    edges: list[tuple[str, str, int]] = []
    times: list[int] = []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            t = abs(points[i][0] - points[j][0]) + abs(points[i][1] - points[j][1])
            t = max(1, int(t))
            edges.append((ids[i], ids[j], t))
            times.append(t)
    d = _attack_time(attack_time_rule, max(times), float(np.mean(times)))
    targets = {
        ids[i]: TargetSpec(cost=float(alphas[i]), attack_time=d, detection=float(betas[i]))
        for i in range(k)
    }
    return PatrollingGraph(ids, targets, edges)


def gen_grid(spec: GridSpec) -> PatrollingGraph:
    """Complete digraph over k random distinct points of an n x n lattice.

    Edge time is the taxicab distance (at least 1).  Every vertex is a
    target; costs are uniform in cost_range, the attack time is shared by
    all targets and derived from the edge-time distribution by the chosen
    rule (rounded to the nearest integer), detection is 1 or uniform in
    (0.8, 1) by the beta rule.
    """
    rng = np.random.default_rng(spec.seed)
    cells = rng.choice(spec.n * spec.n, size=spec.k, replace=False)
    points = [(int(c) // spec.n, int(c) % spec.n) for c in cells]
    ids = [f"p{x}_{y}" for x, y in points]
    return _complete_point_graph(
        points, ids, rng, spec.cost_range, spec.attack_time_rule, spec.beta_rule
    )


def gen_points_complete(
    points: list[tuple[int, int]],
    seed: int = 0,
    cost_range: tuple[float, float] = COST_RANGE_DEFAULT,
    attack_time_rule: str = "extended",
    beta_rule: str = "uniform",
) -> PatrollingGraph:
    """Same construction as gen_grid on user-supplied 2-D integer points."""
    if len(points) < 2:
        raise ValueError("need at least 2 points")
    if len(set(map(tuple, points))) != len(points):
        raise ValueError("duplicate points not allowed")
    pts = [(int(x), int(y)) for x, y in points]
    ids = [f"p{x}_{y}" for x, y in pts]
    rng = np.random.default_rng(seed)
    return _complete_point_graph(pts, ids, rng, cost_range, attack_time_rule, beta_rule)


def synthetic_atm_points(seed: int = 2024, count: int = 18, box: int = 100) -> list[tuple[int, int]]:
    """Synthetic stand-in for a real ATM map: random distinct points in a box.

    Purely synthetic coordinates; no real-world geography implied.
    """
    rng = np.random.default_rng(seed)
    pts: set[tuple[int, int]] = set()
    while len(pts) < count:
        pts.add((int(rng.integers(0, box)), int(rng.integers(0, box))))
    return sorted(pts)


# Office buildings: per floor, four corridor circles c1..c4 (not targets),
# two offices off each circle, and one office at each corridor end.  Office
# access edges take 5, corridor segments 2, stairs 10.
ACCESS_TIME = 5
CORRIDOR_TIME = 2
STAIR_TIME = 10


def gen_office(
    floors: int, beta: float = 0.9, attack_time: int | None = None
) -> PatrollingGraph:
    """Office building with the given number of floors (1 to 3).

    Every office costs 100; detection defaults to 0.9; the attack time
    defaults to 100 per floor.  Overriding beta=1.0 and attack_time=112 on
    one floor yields the tight instance where a perfect tour exists.
    """
    if floors not in (1, 2, 3):
        raise ValueError(f"floors must be 1, 2, or 3, got {floors}")
    d = attack_time if attack_time is not None else 100 * floors
    vertices: list[str] = []
    targets: dict[str, TargetSpec] = {}
    und: list[tuple[str, str, int]] = []

    def office(name: str) -> str:
        targets[name] = TargetSpec(cost=100.0, attack_time=int(d), detection=float(beta))
        return name

    for f in range(1, floors + 1):
        p = f"f{f}_"
        vertices.append(office(p + "r0"))
        for i in range(1, 5):
            vertices.append(p + f"c{i}")
            vertices.append(office(p + f"o{i}u"))
            vertices.append(office(p + f"o{i}d"))
            und.append((p + f"c{i}", p + f"o{i}u", ACCESS_TIME))
            und.append((p + f"c{i}", p + f"o{i}d", ACCESS_TIME))
            if i > 1:
                und.append((p + f"c{i - 1}", p + f"c{i}", CORRIDOR_TIME))
        vertices.append(office(p + "r5"))
        und.append((p + "r0", p + "c1", ACCESS_TIME))
        und.append((p + "c4", p + "r5", ACCESS_TIME))
        if f > 1:
            und.append((f"f{f - 1}_c1", p + "c1", STAIR_TIME))
            und.append((f"f{f - 1}_c4", p + "c4", STAIR_TIME))

    edges: list[tuple[str, str, int]] = []
    for u, v, t in und:
        edges.append((u, v, t))
        edges.append((v, u, t))
    return PatrollingGraph(vertices, targets, edges)


def office_tour(floor: int = 1) -> list[str]:
    """Closed walk through a one-floor office visiting every target once.

    r0, then each circle with both of its offices, out to r5, and straight
    back along the corridor; total traversal time 112.
    """
    p = f"f{floor}_"
    tour = [p + "r0"]
    for i in range(1, 5):
        tour += [p + f"c{i}", p + f"o{i}u", p + f"c{i}", p + f"o{i}d", p + f"c{i}"]
    tour += [p + "r5", p + "c4", p + "c3", p + "c2", p + "c1"]
    return tour


def tour_time(g: PatrollingGraph, tour: list[str]) -> int:
    """Total traversal time of a closed walk given as a vertex cycle."""
    times = {(u, v): t for u, v, t in g.edges}
    total = 0
    for i, u in enumerate(tour):
        v = tour[(i + 1) % len(tour)]
        if (u, v) not in times:
            raise ValueError(f"tour uses missing edge {u!r}->{v!r}")
        total += times[(u, v)]
    return total


def strategy_from_tour(
    g: PatrollingGraph, tour: list[str]
) -> tuple[StrategyIndex, Strategy]:
    """Deterministic strategy walking a closed vertex tour.

    Each vertex gets one memory element per occurrence in the tour (at least
    one); the pair (v, occurrence) moves with probability one to the next
    tour position.  Pairs off the tour fall back to uniform rows so the
    whole vector is normalized.
    """
    occurrences: dict[str, int] = {}
    pair_of_pos: list[tuple[str, int]] = []
    for v in tour:
        occurrences[v] = occurrences.get(v, 0) + 1
        pair_of_pos.append((v, occurrences[v]))
    mem = {v: max(1, occurrences.get(v, 0)) for v in g.vertices}
    index = build_index(g, mem)

    probs = np.zeros(index.n_slots)
    on_tour = set()
    L = len(tour)
    for i in range(L):
        src = pair_of_pos[i]
        dst = pair_of_pos[(i + 1) % L]
        j = index.find_slot(src, dst)
        probs[j] = 1.0
        on_tour.add(index.pair_id[(g.vertex_index[src[0]], src[1])])
    for r in range(index.n_pairs):
        if r not in on_tour:
            sl = index.row_slice(r)
            probs[sl] = 1.0 / (sl.stop - sl.start)
    return index, Strategy(probs)
