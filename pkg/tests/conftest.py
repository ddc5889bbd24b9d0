import networkx as nx
import pytest
from hypothesis import strategies as st

from tdmask.graph import LabeledGraph
from tdmask.randgraph import random_connected_graph
from tdmask.samples import branching_graph, named_bags, post_there_simplified, BRANCHING_BAGS_VALID
from tdmask.treedec import make_td


@st.composite
def connected_graphs(draw, min_n=1, max_n=7, max_edges=None):
    n = draw(st.integers(min_n, max_n))
    limit = n * (n - 1) // 2
    if max_edges is not None:
        limit = min(limit, max(max_edges, n - 1))
    m = draw(st.integers(n - 1, max(n - 1, limit)))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_connected_graph(n, m, seed)


def from_networkx(G, labels=None):
    """Directed LabeledGraph from an undirected networkx graph (edges point low -> high)."""
    nodes = sorted(G.nodes)
    ix = {v: i for i, v in enumerate(nodes)}
    edges = sorted((min(ix[u], ix[v]), max(ix[u], ix[v]), "rel") for u, v in G.edges)
    return LabeledGraph(tuple(str(v) for v in nodes), tuple(edges), 0)


def to_networkx(g):
    G = nx.Graph()
    G.add_nodes_from(g.vertices)
    G.add_edges_from((s, d) for s, d, _ in g.edges)
    return G


def name_index(g):
    return {name: i for i, name in enumerate(g.names)}


@pytest.fixture
def post_there():
    return post_there_simplified()


@pytest.fixture
def branching():
    return branching_graph()


@pytest.fixture
def branching_valid_td(branching):
    return make_td(branching, *named_bags(branching, BRANCHING_BAGS_VALID))
