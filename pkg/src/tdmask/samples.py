"""Small reference graphs used by the demos, the self-test and the test suite."""

from __future__ import annotations

from .graph import LabeledGraph, parse_penman

# "If you want to post there you abide by them."
POST_THERE_PENMAN = (
    "(a / abide-01 :arg0 (y / you) :arg1 (t / they) "
    ":condition (w / want-01 :arg0 y :arg1 (p / post-01 :arg0 y :arg2 (t2 / there))))"
)


def post_there_amr() -> LabeledGraph:
    return parse_penman(POST_THERE_PENMAN)


def post_there_simplified() -> LabeledGraph:
    """The same AMR with vertices ordered t, a, w, y, p, t2."""
    names = ("t", "a", "w", "y", "p", "t2")
    labels = ("they", "abide-01", "want-01", "you", "post-01", "there")
    ix = {v: i for i, v in enumerate(names)}
    edges = [
        ("a", "t", "arg1"),
        ("a", "w", "condition"),
        ("a", "y", "arg0"),
        ("w", "y", "arg0"),
        ("w", "p", "arg1"),
        ("p", "y", "arg0"),
        ("p", "t2", "arg2"),
    ]
    return LabeledGraph(labels, [(ix[s], ix[d], r) for s, d, r in edges], ix["a"], names=names)


# Bags of the width-2 path decomposition of post_there_simplified, root first.
POST_THERE_BAGS = (("t", "a"), ("a", "w", "y"), ("w", "y", "p"), ("p", "t2"))


def branching_graph() -> LabeledGraph:
    """Seven vertices a..g; a tree of depth three plus a b-d-g-e-b wheel."""
    names = tuple("abcdefg")
    ix = {v: i for i, v in enumerate(names)}
    pairs = ["ac", "cf", "ab", "bd", "dg", "be", "eg", "bg"]
    return LabeledGraph(names, [(ix[p[0]], ix[p[1]], "rel") for p in pairs], 0, names=names)


# Bags of the decomposition drawn alongside branching_graph, with the parent of
# each bag (None for the root).  As drawn, {b,d,g} and {b,e,g} are siblings
# under {a,b}, which breaks running intersection for g.
BRANCHING_BAGS_DRAWN = (
    (("a", "c"), None),
    (("a", "b"), 0),
    (("c", "f"), 0),
    (("b", "d", "g"), 1),
    (("b", "e", "g"), 1),
)

# The same bag set arranged as a valid decomposition: {b,e,g} hangs below {b,d,g}.
BRANCHING_BAGS_VALID = (
    (("a", "c"), None),
    (("a", "b"), 0),
    (("c", "f"), 0),
    (("b", "d", "g"), 1),
    (("b", "e", "g"), 3),
)


def named_bags(g: LabeledGraph, layout):
    """Translate ``((names...), parent)`` rows into (bags, parent) index lists."""
    ix = {name: i for i, name in enumerate(g.names)}
    bags = [frozenset(ix[v] for v in names) for names, _ in layout]
    parent = [i if p is None else p for i, (_, p) in enumerate(layout)]
    return bags, parent
