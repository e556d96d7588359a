"""Patrolling graphs: vertices, timed edges, and attack targets.

A patrolling graph is a directed graph whose edges carry integer traversal
times.  A subset of vertices are targets; each target has a cost (what the
defender loses if an intrusion there completes), an attack time (how many
time units an intrusion needs), and a detection probability (chance that a
visit to the target discovers an ongoing intrusion).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed graph documents or invariant violations."""


@dataclass(frozen=True)
class TargetSpec:
    """Attack parameters of one target vertex."""

    cost: float
    attack_time: int
    detection: float


@dataclass(frozen=True)
class GraphStats:
    """Summary quantities of a patrolling graph."""

    alpha_max: float
    d_max: int
    time_max: int
    time_avg: float
    strongly_connected: bool
    n_vertices: int
    n_targets: int
    n_edges: int


class PatrollingGraph:
    """Directed graph with timed edges and a non-empty set of targets.

    Vertex ids are opaque strings externally; internally every vertex gets a
    dense integer index following the declaration order.  Instances are
    immutable after construction and safe to share across threads.

    Args:
        vertices: vertex ids in declaration order.
        targets: mapping vertex id -> TargetSpec for the target subset.
        edges: (from_id, to_id, time) triples, time a positive integer.
        validate: check all invariants (disable only for deliberately
            malformed fixtures, e.g. oracle edge-case tests).
    """

    def __init__(
        self,
        vertices: list[str],
        targets: dict[str, TargetSpec],
        edges: list[tuple[str, str, int]],
        validate: bool = True,
    ):
        self.vertices = list(vertices)
        self.vertex_index = {v: i for i, v in enumerate(self.vertices)}
        self.targets = dict(targets)
        self.edges = [(u, v, int(t)) for u, v, t in edges]
        if validate:
            self.validate()

        n = len(self.vertices)
        # Targets ordered by vertex declaration order.
        self.target_ids = [v for v in self.vertices if v in self.targets]
        self.target_index = {v: i for i, v in enumerate(self.target_ids)}
        self.target_vertex = np.array(
            [self.vertex_index[v] for v in self.target_ids], dtype=np.int64
        )
        self.alpha = np.array([self.targets[v].cost for v in self.target_ids], dtype=np.float64)
        self.attack_time = np.array(
            [self.targets[v].attack_time for v in self.target_ids], dtype=np.int64
        )
        self.beta = np.array(
            [self.targets[v].detection for v in self.target_ids], dtype=np.float64
        )

        self.edge_src = np.array([self.vertex_index[u] for u, _, _ in self.edges], dtype=np.int64)
        self.edge_dst = np.array([self.vertex_index[v] for _, v, _ in self.edges], dtype=np.int64)
        self.edge_time = np.array([t for _, _, t in self.edges], dtype=np.int64)
        self.out_edges: list[list[int]] = [[] for _ in range(n)]
        for k in range(len(self.edges)):
            self.out_edges[self.edge_src[k]].append(k)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate(self) -> None:
        """Raise GraphFormatError on any invariant violation."""
        if not self.vertices:
            raise GraphFormatError("graph has no vertices")
        if len(set(self.vertices)) != len(self.vertices):
            dup = next(v for v in self.vertices if self.vertices.count(v) > 1)
            raise GraphFormatError(f"duplicate vertex id {dup!r}")
        if not self.targets:
            raise GraphFormatError("graph has no targets")
        for v, spec in self.targets.items():
            if v not in self.vertex_index:
                raise GraphFormatError(f"unknown vertex {v!r} declared as target")
            if not spec.cost > 0:
                raise GraphFormatError(f"target {v!r}: cost must be positive, got {spec.cost}")
            if not (isinstance(spec.attack_time, (int, np.integer)) and spec.attack_time >= 1):
                raise GraphFormatError(
                    f"target {v!r}: attack_time must be a positive integer, got {spec.attack_time}"
                )
            if not 0 < spec.detection <= 1:
                raise GraphFormatError(f"target {v!r}: beta out of range (0,1]: {spec.detection}")
        seen = set()
        for u, v, t in self.edges:
            if u not in self.vertex_index:
                raise GraphFormatError(f"unknown vertex {u!r} in edge {u!r}->{v!r}")
            if v not in self.vertex_index:
                raise GraphFormatError(f"unknown vertex {v!r} in edge {u!r}->{v!r}")
            if u == v:
                raise GraphFormatError(f"self-loop on vertex {u!r} not allowed")
            if (u, v) in seen:
                raise GraphFormatError(f"duplicate edge {u!r}->{v!r}")
            seen.add((u, v))
            if not (isinstance(t, (int, np.integer)) and t >= 1):
                raise GraphFormatError(
                    f"edge {u!r}->{v!r}: time must be a positive integer, got {t}"
                )

    def is_target(self, v: str) -> bool:
        return v in self.targets

    def __repr__(self) -> str:
        return (
            f"PatrollingGraph(n_vertices={self.n_vertices}, "
            f"n_targets={self.n_targets}, n_edges={self.n_edges})"
        )


def _reachable(n: int, adj: list[list[int]], start: int) -> bool:
    """True iff every vertex is reachable from start over adj."""
    seen = [False] * n
    seen[start] = True
    stack = [start]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return all(seen)


def is_strongly_connected(g: PatrollingGraph) -> bool:
    """Strong connectivity of the directed edge relation.

    Single-source test: reachability of all vertices from vertex 0 in the
    graph and in its reverse.
    """
    n = g.n_vertices
    if n == 0:
        return False
    fwd: list[list[int]] = [[] for _ in range(n)]
    rev: list[list[int]] = [[] for _ in range(n)]
    for k in range(g.n_edges):
        u, v = int(g.edge_src[k]), int(g.edge_dst[k])
        fwd[u].append(v)
        rev[v].append(u)
    return _reachable(n, fwd, 0) and _reachable(n, rev, 0)


def graph_stats(g: PatrollingGraph) -> GraphStats:
    """Compute summary statistics of a valid patrolling graph."""
    return GraphStats(
        alpha_max=float(np.max(g.alpha)),
        d_max=int(np.max(g.attack_time)),
        time_max=int(np.max(g.edge_time)) if g.n_edges else 0,
        time_avg=float(np.mean(g.edge_time)) if g.n_edges else 0.0,
        strongly_connected=is_strongly_connected(g),
        n_vertices=g.n_vertices,
        n_targets=g.n_targets,
        n_edges=g.n_edges,
    )


def parse_graph(text: str | dict) -> PatrollingGraph:
    """Parse a graph JSON document.

    Schema::

        {"vertices": [{"id": str, "target": {"cost": num, "attack_time": int,
                                             "detection": num}}],
         "edges": [{"from": str, "to": str, "time": int}]}

    The "target" object is absent for non-target vertices.  Vertex order in
    the document defines the dense internal indices.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"malformed JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict) or "vertices" not in doc or "edges" not in doc:
        raise GraphFormatError("document must be an object with 'vertices' and 'edges'")

    vertices: list[str] = []
    targets: dict[str, TargetSpec] = {}
    for entry in doc["vertices"]:
        if not isinstance(entry, dict) or "id" not in entry:
            raise GraphFormatError(f"vertex entry missing 'id': {entry!r}")
        vid = entry["id"]
        if not isinstance(vid, str):
            raise GraphFormatError(f"vertex id must be a string, got {vid!r}")
        vertices.append(vid)
        tgt = entry.get("target")
        if tgt is not None:
            for key in ("cost", "attack_time", "detection"):
                if key not in tgt:
                    raise GraphFormatError(f"target {vid!r} missing field {key!r}")
            at = tgt["attack_time"]
            if not isinstance(at, int) or isinstance(at, bool):
                raise GraphFormatError(
                    f"target {vid!r}: attack_time must be an integer, got {at!r}"
                )
            targets[vid] = TargetSpec(
                cost=float(tgt["cost"]), attack_time=at, detection=float(tgt["detection"])
            )

    edges: list[tuple[str, str, int]] = []
    for entry in doc["edges"]:
        for key in ("from", "to", "time"):
            if key not in entry:
                raise GraphFormatError(f"edge entry missing field {key!r}: {entry!r}")
        t = entry["time"]
        if not isinstance(t, int) or isinstance(t, bool):
            raise GraphFormatError(
                f"edge {entry['from']!r}->{entry['to']!r}: time must be an integer, got {t!r}"
            )
        edges.append((entry["from"], entry["to"], t))

    return PatrollingGraph(vertices, targets, edges)


def serialize_graph(g: PatrollingGraph) -> str:
    """Serialize to the graph JSON schema; inverse of parse_graph."""
    vertices = []
    for v in g.vertices:
        entry: dict = {"id": v}
        if v in g.targets:
            spec = g.targets[v]
            entry["target"] = {
                "cost": spec.cost,
                "attack_time": int(spec.attack_time),
                "detection": spec.detection,
            }
        vertices.append(entry)
    edges = [{"from": u, "to": v, "time": int(t)} for u, v, t in g.edges]
    return json.dumps({"vertices": vertices, "edges": edges}, indent=1)


def load_graph(path: str) -> PatrollingGraph:
    """Read and parse a graph JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read())
