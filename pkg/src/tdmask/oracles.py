"""Brute-force reference answers for small graphs.

Nothing here shares code with the dynamic program in :mod:`tdmask.treedec`
beyond the graph type and the one-line arc penalty definition.
"""

from __future__ import annotations

from itertools import combinations, permutations

from .graph import LabeledGraph
from .treedec import arc_penalty

ORACLE_MAX_VERTICES = 9
ORACLE_MAX_EDGES = 7


def _neighbour_sets(g):
    adj = {v: set() for v in range(g.n)}
    for s, d, _ in g.edges:
        adj[s].add(d)
        adj[d].add(s)
    return adj


def oracle_treewidth(g: LabeledGraph) -> int:
    """Exact treewidth by trying every elimination ordering.

    Eliminating a vertex joins its remaining neighbours into a clique; the
    width of an ordering is the largest neighbourhood met on the way.
    """
    if g.n > ORACLE_MAX_VERTICES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_VERTICES} vertices")
    base = _neighbour_sets(g)
    best = g.n - 1
    for order in permutations(range(g.n)):
        adj = {v: set(ns) for v, ns in base.items()}
        width = 0
        for v in order:
            ns = adj.pop(v)
            width = max(width, len(ns))
            if width >= best:
                break
            for a in ns:
                adj[a].discard(v)
                adj[a].update(ns - {a})
        else:
            best = width
        if best == 0 or (best == 1 and g.n > 1):
            break
    return best


def _split(vertices, adj):
    """Connected pieces of ``vertices``, ordered by smallest member."""
    left = set(vertices)
    pieces = []
    while left:
        start = min(left)
        piece, frontier = {start}, [start]
        left.discard(start)
        while frontier:
            u = frontier.pop()
            for w in adj[u] & left:
                left.discard(w)
                piece.add(w)
                frontier.append(w)
        pieces.append(frozenset(piece))
    return sorted(pieces, key=min)


def enumerate_tds(g: LabeledGraph, k: int):
    """Yield every width-``k`` decomposition built by separator/component splitting.

    Each result is a list of ``(bag, parent_index)`` pairs, root first with
    parent ``None``.  No state is shared between branches.
    """
    adj = _neighbour_sets(g)

    def subtrees(nbrs, comp):
        if len(nbrs | comp) <= k + 1:
            yield [(nbrs | comp, None)]
            return
        for size in range(len(nbrs) + 1, k + 2):
            for bag in combinations(sorted(nbrs | comp), size):
                bag = frozenset(bag)
                if not nbrs < bag:
                    continue
                kids = _split(comp - bag, adj)
                fronts = [frozenset(v for v in bag if adj[v] & c) for c in kids]
                if any(f == bag for f in fronts):
                    continue
                yield from _attach(bag, [subtrees(f, c) for f, c in zip(fronts, kids)])

    def _attach(bag, child_iters):
        options = [list(it) for it in child_iters]
        for pick in _product(options):
            rows = [(bag, None)]
            for sub in pick:
                offset = len(rows)
                for b, p in sub:
                    rows.append((b, 0 if p is None else p + offset))
            yield rows

    yield from subtrees(frozenset(), frozenset(range(g.n)))


def _product(options):
    if not options:
        yield ()
        return
    for first in options[0]:
        for rest in _product(options[1:]):
            yield (first,) + rest


def _penalty(g, rows, scoring):
    depth = [0] * len(rows)
    for i, (_, p) in enumerate(rows):
        if p is not None:
            depth[i] = depth[p] + 1
    assigned = []
    for s, d, _ in g.edges:
        holders = [i for i, (b, _) in enumerate(rows) if s in b and d in b]
        assigned.append(min(holders, key=lambda i: (depth[i], i)))
    total = 0
    for j, (child, p) in enumerate(rows):
        if p is None:
            continue
        if scoring == "assigned":
            edges = [e for e, a in zip(g.edges, assigned) if a == j]
        else:
            edges = g.edges
        total += arc_penalty(rows[p][0], child, edges)
    return total


def oracle_best_td(g: LabeledGraph, k: int, scoring: str = "assigned"):
    """Minimum penalty over the enumerated width-``k`` decompositions (``None`` if none)."""
    if len(g.edges) > ORACLE_MAX_EDGES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_EDGES} edges")
    best = None
    for rows in enumerate_tds(g, k):
        p = _penalty(g, rows, scoring)
        if best is None or p < best:
            best = p
    return best
