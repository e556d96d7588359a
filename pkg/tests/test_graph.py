import numpy as np
import pytest

from patrolkit import (
    GraphFormatError,
    PatrollingGraph,
    TargetSpec,
    graph_stats,
    is_strongly_connected,
    parse_graph,
    serialize_graph,
)
from patrolkit.generators import gen_office

from conftest import make_k2

TWO_VERTEX_DOC = """
{"vertices": [
   {"id": "a", "target": {"cost": 100, "attack_time": 2, "detection": 1.0}},
   {"id": "b", "target": {"cost": 100, "attack_time": 2, "detection": 1.0}}],
 "edges": [
   {"from": "a", "to": "b", "time": 1},
   {"from": "b", "to": "a", "time": 1}]}
"""


def test_parse_two_vertex_document():
    g = parse_graph(TWO_VERTEX_DOC)
    assert g.n_vertices == 2
    assert g.n_edges == 2
    assert g.n_targets == 2
    assert g.targets["a"].cost == 100


def test_parse_rejects_beta_out_of_range():
    doc = TWO_VERTEX_DOC.replace('"detection": 1.0}},', '"detection": 0.0}},', 1)
    with pytest.raises(GraphFormatError, match=r"beta out of range \(0,1\]"):
        parse_graph(doc)


def test_parse_rejects_unknown_vertex():
    doc = TWO_VERTEX_DOC.replace('{"from": "b", "to": "a"', '{"from": "b", "to": "c"')
    with pytest.raises(GraphFormatError, match="unknown vertex 'c'"):
        parse_graph(doc)


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d.replace('"time": 1},', '"time": 0},'), "positive integer"),
        (lambda d: d.replace('"cost": 100,', '"cost": -5,', 1), "cost must be positive"),
        (lambda d: d.replace('"attack_time": 2,', '"attack_time": 0,', 1), "attack_time"),
        (lambda d: d.replace('"to": "b"', '"to": "a"', 1), "self-loop"),
    ],
)
def test_parse_rejects_invalid_fields(mutate, match):
    with pytest.raises(GraphFormatError, match=match):
        parse_graph(mutate(TWO_VERTEX_DOC))


def test_parse_rejects_duplicate_edge():
    doc = """
    {"vertices": [{"id": "a", "target": {"cost": 1, "attack_time": 1, "detection": 1}},
                  {"id": "b"}],
     "edges": [{"from": "a", "to": "b", "time": 1}, {"from": "a", "to": "b", "time": 2}]}
    """
    with pytest.raises(GraphFormatError, match="duplicate edge"):
        parse_graph(doc)


def test_parse_rejects_malformed_json():
    with pytest.raises(GraphFormatError, match="malformed JSON"):
        parse_graph("{not json")


def test_round_trip_identity():
    for g in [make_k2(d=7, beta_a=0.25), gen_office(2), make_k2(alpha=123.456)]:
        g2 = parse_graph(serialize_graph(g))
        assert g2.vertices == g.vertices
        assert g2.edges == g.edges
        assert g2.targets == g.targets


def test_stats_two_vertex_cycle():
    st = graph_stats(make_k2(d=2))
    assert st.alpha_max == 100
    assert st.d_max == 2
    assert st.time_max == 1
    assert st.time_avg == 1
    assert st.strongly_connected


def test_stats_one_floor_office():
    st = graph_stats(gen_office(1))
    assert st.n_targets == 10
    assert st.alpha_max == 100
    assert st.d_max == 100
    assert st.time_max == 5
    assert st.strongly_connected


def test_stats_missing_back_edge_not_strongly_connected():
    g = PatrollingGraph(
        ["a", "b"], {"a": TargetSpec(1.0, 1, 1.0)}, [("a", "b", 1)]
    )
    assert not graph_stats(g).strongly_connected


def test_stats_invariant_under_edge_permutation():
    g = gen_office(1)
    perm = list(reversed(g.edges))
    g2 = PatrollingGraph(g.vertices, g.targets, perm)
    assert graph_stats(g2) == graph_stats(g)


def _brute_strong_connectivity(g: PatrollingGraph) -> bool:
    n = g.n_vertices
    adj = [[] for _ in range(n)]
    for k in range(g.n_edges):
        adj[int(g.edge_src[k])].append(int(g.edge_dst[k]))
    for s in range(n):
        seen = [False] * n
        seen[s] = True
        stack = [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        if not all(seen):
            return False
    return True


def test_strong_connectivity_matches_all_sources_dfs():
    rng = np.random.default_rng(0)
    for trial in range(60):
        n = int(rng.integers(2, 13))
        verts = [f"v{i}" for i in range(n)]
        edges = []
        seen = set()
        for _ in range(int(rng.integers(n, 3 * n))):
            i, j = rng.integers(0, n, size=2)
            if i != j and (i, j) not in seen:
                seen.add((i, j))
                edges.append((verts[i], verts[j], 1))
        if not edges:
            edges = [(verts[0], verts[-1], 1)]
        g = PatrollingGraph(verts, {verts[0]: TargetSpec(1.0, 1, 1.0)}, edges)
        assert is_strongly_connected(g) == _brute_strong_connectivity(g)
