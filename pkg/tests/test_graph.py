import json

import networkx as nx
import pytest
from hypothesis import given, settings

from conftest import connected_graphs, name_index, to_networkx
from tdmask.graph import (
    DisconnectedGraphError,
    GraphError,
    LabeledGraph,
    ParseError,
    components_after_removal,
    graph_metrics,
    graph_to_dict,
    graph_to_json,
    parse_graph_json,
    parse_penman,
    read_graphs,
)
from tdmask.samples import POST_THERE_PENMAN, post_there_amr


def test_penman_post_there():
    g = post_there_amr()
    assert g.n == 6 and len(g.edges) == 7
    assert g.labels[g.root] == "abide-01"
    you = g.labels.index("you")
    assert g.indegree()[you] == 3
    assert ("condition" in {lab for _, _, lab in g.edges})


def test_penman_single_concept():
    g = parse_penman("(x / thing)")
    assert g.n == 1 and g.edges == () and g.root == 0


def test_penman_undeclared_variable():
    with pytest.raises(ParseError, match="undeclared"):
        parse_penman("(a / a :r b)")


@pytest.mark.parametrize("text", ["", "   ", "(a / x", "(a / x))", "(a / x :r (a / y))"])
def test_penman_errors(text):
    with pytest.raises(GraphError):
        parse_penman(text)


def test_penman_keeps_labels_verbatim():
    g = parse_penman('(p / person-01 :name (n / name :op1 "Ann"))')
    assert set(g.labels) == {"person-01", "name", '"Ann"'}


def test_json_single_vertex():
    g = parse_graph_json('{"root":0,"vertices":[{"id":0,"label":"x"}],"edges":[]}')
    assert g.n == 1


def test_json_dangling_endpoint():
    doc = {"root": 0, "vertices": [{"id": 0, "label": "x"}, {"id": 1, "label": "y"}],
           "edges": [{"src": 0, "dst": 9, "label": "r"}]}
    with pytest.raises(GraphError):
        parse_graph_json(json.dumps(doc))


def test_json_missing_field():
    with pytest.raises(ParseError, match="edges"):
        parse_graph_json('{"root":0,"vertices":[{"id":0,"label":"x"}]}')


def test_disconnected_reports_fragments():
    with pytest.raises(DisconnectedGraphError) as info:
        LabeledGraph(("a", "b", "c"), ((0, 1, "r"),), 0)
    assert sorted(map(sorted, info.value.fragments)) == [[0, 1], [2]]


def test_self_loop_rejected():
    with pytest.raises(GraphError):
        LabeledGraph(("a", "b"), ((0, 1, "r"), (1, 1, "r")), 0)


def test_parallel_edges_kept():
    g = LabeledGraph(("a", "b"), ((0, 1, "r"), (0, 1, "s")), 0)
    assert len(g.edges) == 2 and g.skeleton_edges == ((0, 1),)


def test_metrics_post_there():
    m = graph_metrics(post_there_amr())
    assert m.reentrancy_count == 2
    assert (m.vertex_count, m.edge_count) == (6, 7)


def test_metrics_directed_path():
    g = LabeledGraph(tuple("abcd"), ((0, 1, "r"), (1, 2, "r"), (2, 3, "r")), 0)
    m = graph_metrics(g)
    assert (m.reentrancy_count, m.diameter) == (0, 3)


def test_diameters_of_sample_graphs(post_there, branching):
    # checked against networkx rather than by hand
    assert graph_metrics(post_there).diameter == nx.diameter(to_networkx(post_there)) == 4
    assert graph_metrics(branching).diameter == nx.diameter(to_networkx(branching)) == 4
    assert len(branching.skeleton_edges) == 8


def test_components_after_removal(branching):
    ix = name_index(branching)
    comps = components_after_removal(branching, {ix["a"]})
    named = [{branching.names[v] for v in c} for c in comps]
    assert named == [set("bdeg"), set("cf")]


def test_components_path_and_empty():
    g = LabeledGraph(tuple("uvw"), ((0, 1, "r"), (1, 2, "r")), 0)
    assert components_after_removal(g, {1}) == [frozenset({0}), frozenset({2})]
    assert components_after_removal(g, set()) == [frozenset({0, 1, 2})]
    assert components_after_removal(g, {0, 1, 2}) == []


def test_read_graphs_isolates_bad_records():
    good = graph_to_json(post_there_amr())
    items = read_graphs("\n".join([good, "{not json", good]), "jsonl")
    assert isinstance(items[0], LabeledGraph) and isinstance(items[2], LabeledGraph)
    assert isinstance(items[1], ParseError) and "line 2" in str(items[1])


def test_read_penman_blocks():
    text = f"# ::id one\n{POST_THERE_PENMAN}\n\n(x / thing)\n\n(a / a :r b)\n"
    items = read_graphs(text, "penman")
    assert [type(i).__name__ for i in items] == ["LabeledGraph", "LabeledGraph", "ParseError"]
    assert "line 6" in str(items[2])


@settings(max_examples=100, deadline=None)
@given(connected_graphs(max_n=8))
def test_json_round_trip(g):
    text = graph_to_json(g)
    h = parse_graph_json(text)
    assert h == g
    assert graph_to_json(h) == text


@settings(max_examples=100, deadline=None)
@given(connected_graphs(max_n=8))
def test_diameter_matches_networkx(g):
    assert graph_metrics(g).diameter == nx.diameter(to_networkx(g))


@settings(max_examples=100, deadline=None)
@given(connected_graphs(max_n=8))
def test_components_partition(g):
    removed = set(range(0, g.n, 2))
    comps = components_after_removal(g, removed)
    seen = set().union(*comps) if comps else set()
    assert seen | removed == set(g.vertices)
    assert sum(len(c) for c in comps) == len(seen)
    G = to_networkx(g).subgraph(set(g.vertices) - removed)
    assert sorted(map(sorted, comps)) == sorted(map(sorted, nx.connected_components(G)))
    assert [min(c) for c in comps] == sorted(min(c) for c in comps)


@settings(max_examples=100, deadline=None)
@given(connected_graphs(min_n=2, max_n=8))
def test_reentrancy_of_trees_and_one_extra_edge(g):
    # orient a BFS tree away from vertex 0: every vertex has indegree <= 1
    G = to_networkx(g)
    tree = [(u, v, "r") for u, v in nx.bfs_edges(G, 0)]
    t = LabeledGraph(g.labels, tuple(tree), 0)
    assert graph_metrics(t).reentrancy_count == 0
    target = tree[-1][1]
    source = next(v for v in t.vertices if v != target)  # may duplicate a tree edge; still one more in-edge
    extra = LabeledGraph(g.labels, tuple(tree) + ((source, target, "r"),), 0)
    assert graph_metrics(extra).reentrancy_count == 1


def test_export_document_shape():
    doc = graph_to_dict(post_there_amr())
    assert set(doc) == {"root", "vertices", "edges"}
    assert {"src", "dst", "label"} == set(doc["edges"][0])
