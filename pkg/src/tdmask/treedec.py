"""Tree decompositions: recognition, enumeration, scoring and validation.

The core is a memoized recursion over (separator, component) states.  A state
``(N, C)`` is a connected component ``C`` of the graph minus some bag together
with ``N``, the vertices of that bag adjacent to ``C``.  Either ``N | C`` fits in
one bag (a leaf), or a new bag ``B`` with ``N < B <= N | C`` is chosen and the
components of ``C - B`` become child states.  Values are folded in an arbitrary
:mod:`semiring <tdmask.semiring>`.

Bags that would be a subset of a neighbouring bag are never generated: a
candidate ``B`` is skipped when one of its child components is adjacent to every
vertex of ``B``.  This does not change which widths are recognized (the child's
own bag can always be chosen in its place) and it keeps redundant bags, which
would otherwise win every penalty tie, out of the forest.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from .graph import LabeledGraph, components_after_removal
from .semiring import BOOLEAN, FOREST, Derivation, Semiring, ViterbiSemiring

DEFAULT_MAX_SUBSETS = 2_000_000
SCORING_MODES = ("assigned", "all")


class GraphTooLargeError(RuntimeError):
    """Separator enumeration would exceed the configured subset cap."""


class NoDecompositionError(ValueError):
    """The graph has no tree decomposition of the requested width."""


def max_subsets_cap(cap=None) -> int:
    if cap is not None:
        return int(cap)
    env = os.environ.get("TDMASK_MAX_SUBSETS")
    return int(env) if env else DEFAULT_MAX_SUBSETS


def check_size(n: int, k: int, cap=None):
    cap = max_subsets_cap(cap)
    count = math.comb(n, k + 1) if k + 1 <= n else 0
    if count > cap:
        raise GraphTooLargeError(
            f"{count} separators of size {k + 1} over {n} vertices exceeds the cap of {cap}"
        )


# --------------------------------------------------------------------------
# Decomposition type


@dataclass(frozen=True)
class TreeDecomposition:
    """A rooted tree of bags.

    ``parent[root] == root``.  ``edge_assignment[e]`` is the bag holding edge
    ``e`` of the graph (``None`` if unassigned).
    """

    bags: tuple[frozenset[int], ...]
    parent: tuple[int, ...]
    root: int
    edge_assignment: tuple[int | None, ...]
    width: int

    @property
    def size(self) -> int:
        return len(self.bags)

    def children(self) -> list[list[int]]:
        kids = [[] for _ in self.bags]
        for i, p in enumerate(self.parent):
            if i != self.root:
                kids[p].append(i)
        return kids

    def preorder(self) -> list[int]:
        kids = self.children()
        order, stack = [], [self.root]
        while stack:
            b = stack.pop()
            order.append(b)
            stack.extend(reversed(kids[b]))
        return order

    def postorder(self) -> list[int]:
        kids = self.children()
        order, stack = [], [(self.root, False)]
        while stack:
            b, done = stack.pop()
            if done:
                order.append(b)
                continue
            stack.append((b, True))
            stack.extend((c, False) for c in reversed(kids[b]))
        return order

    def root_distance(self) -> list[int]:
        dist = [0] * self.size
        for b in self.preorder():
            if b != self.root:
                dist[b] = dist[self.parent[b]] + 1
        return dist

    def leaf_depth(self) -> list[int]:
        """Distance from each bag to the deepest leaf below it."""
        kids = self.children()
        depth = [0] * self.size
        for b in self.postorder():
            if kids[b]:
                depth[b] = 1 + max(depth[c] for c in kids[b])
        return depth

    def home_bags(self, n: int) -> list[int]:
        """For each vertex, the bag containing it that is closest to the root."""
        dist = self.root_distance()
        home = [-1] * n
        for b in sorted(range(self.size), key=lambda i: (dist[i], i)):
            for v in self.bags[b]:
                if home[v] < 0:
                    home[v] = b
        return home


def assign_edges(g: LabeledGraph, bags, parent) -> tuple[int | None, ...]:
    """Give each edge to the bag nearest the root that holds both endpoints."""
    root = next(i for i, p in enumerate(parent) if i == p)
    dist = {root: 0}
    kids = [[] for _ in bags]
    for i, p in enumerate(parent):
        if i != root:
            kids[p].append(i)
    queue = deque([root])
    while queue:
        b = queue.popleft()
        for c in kids[b]:
            dist[c] = dist[b] + 1
            queue.append(c)
    order = sorted(dist, key=lambda i: (dist[i], i))
    out = []
    for s, d, _ in g.edges:
        out.append(next((b for b in order if s in bags[b] and d in bags[b]), None))
    return tuple(out)


def make_td(g: LabeledGraph, bags, parent) -> TreeDecomposition:
    bags = tuple(frozenset(b) for b in bags)
    parent = tuple(parent)
    root = next(i for i, p in enumerate(parent) if i == p)
    width = max(len(b) for b in bags) - 1
    return TreeDecomposition(bags, parent, root, assign_edges(g, bags, parent), width)


def td_to_dict(td: TreeDecomposition, penalty=None) -> dict:
    doc = {
        "bags": [sorted(b) for b in td.bags],
        "parent": list(td.parent),
        "root": td.root,
        "edge_assignment": list(td.edge_assignment),
        "width": td.width,
    }
    if penalty is not None:
        doc["penalty"] = penalty
    return doc


def td_from_dict(doc: dict) -> TreeDecomposition:
    return TreeDecomposition(
        tuple(frozenset(b) for b in doc["bags"]),
        tuple(doc["parent"]),
        doc["root"],
        tuple(doc["edge_assignment"]),
        doc["width"],
    )


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str  # structure | vertex-cover | edge-cover | running-intersection | width
    message: str
    vertex: int | None = None
    edge: int | None = None
    bag: int | None = None


@dataclass
class ValidityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(f"{v.kind}: {v.message}" for v in self.violations)


def validate_td(g: LabeledGraph, td: TreeDecomposition, k: int | None = None) -> ValidityReport:
    """Check a decomposition against its graph; every problem is reported."""
    report = ValidityReport()
    add = report.violations.append
    m = td.size

    if m == 0:
        add(Violation("structure", "decomposition has no bags"))
        return report
    if len(td.parent) != m:
        add(Violation("structure", f"parent has {len(td.parent)} entries for {m} bags"))
        return report
    roots = [i for i, p in enumerate(td.parent) if i == p]
    if roots != [td.root]:
        add(Violation("structure", f"expected exactly one root at {td.root}, found {roots}"))
        return report
    for i, p in enumerate(td.parent):
        if not 0 <= p < m:
            add(Violation("structure", f"bag {i} has parent {p} out of range", bag=i))
            return report
    for i in range(m):
        seen, b = set(), i
        while b != td.root:
            if b in seen:
                add(Violation("structure", f"bag {i} does not reach the root", bag=i))
                return report
            seen.add(b)
            b = td.parent[b]
    for i, bag in enumerate(td.bags):
        stray = sorted(v for v in bag if not 0 <= v < g.n)
        if stray:
            add(Violation("structure", f"bag {i} holds unknown vertices {stray}", bag=i))

    covered = set().union(*td.bags)
    for v in g.vertices:
        if v not in covered:
            add(Violation("vertex-cover", f"vertex {g.name(v)} is in no bag", vertex=v))

    if len(td.edge_assignment) != len(g.edges):
        add(Violation("edge-cover", f"{len(td.edge_assignment)} assignments for {len(g.edges)} edges"))
    for e, (s, d, _) in enumerate(g.edges):
        b = td.edge_assignment[e] if e < len(td.edge_assignment) else None
        if b is None or not 0 <= b < m:
            add(Violation("edge-cover", f"edge {e} ({g.name(s)}->{g.name(d)}) is not assigned to a bag", edge=e))
        elif s not in td.bags[b] or d not in td.bags[b]:
            add(Violation(
                "edge-cover",
                f"edge {e} ({g.name(s)}->{g.name(d)}) assigned to bag {b} which lacks an endpoint",
                edge=e, bag=b,
            ))

    # bags holding v are connected iff exactly one of them has a parent without v
    for v in covered:
        tops = [i for i, bag in enumerate(td.bags)
                if v in bag and (i == td.root or v not in td.bags[td.parent[i]])]
        if len(tops) > 1:
            add(Violation(
                "running-intersection",
                f"bags holding vertex {g.name(v) if 0 <= v < g.n else v} are disconnected (tops {tops})",
                vertex=v,
            ))

    actual = max(len(b) for b in td.bags) - 1
    if td.width != actual:
        add(Violation("width", f"declared width {td.width} but largest bag gives {actual}"))
    if k is not None and actual > k:
        add(Violation("width", f"width {actual} exceeds bound {k}"))
    return report


# --------------------------------------------------------------------------
# Separator dictionary


class SeparatorDictionary:
    """Map from separator vertex sets to the components left after removing them.

    Entries are filled on demand; :func:`build_separator_dictionary` fills every
    separator up to size ``k + 1`` eagerly.
    """

    def __init__(self, g: LabeledGraph, k: int):
        self.graph = g
        self.k = k
        self.entries: dict[frozenset[int], list[frozenset[int]]] = {}

    def __getitem__(self, sep) -> list[frozenset[int]]:
        sep = frozenset(sep)
        comps = self.entries.get(sep)
        if comps is None:
            comps = self.entries[sep] = components_after_removal(self.graph, sep)
        return comps

    def __contains__(self, sep):
        return frozenset(sep) in self.entries

    def __len__(self):
        return len(self.entries)

    def neighbours(self, sep, comp) -> frozenset[int]:
        adj = self.graph.adjacency
        return frozenset(v for v in sep if adj[v] & comp)


def build_separator_dictionary(g: LabeledGraph, k: int, max_subsets=None) -> SeparatorDictionary:
    if not 0 <= k:
        raise ValueError("width bound must be non-negative")
    check_size(g.n, k, max_subsets)
    table = SeparatorDictionary(g, k)
    table[()]
    for size in range(1, min(k + 1, g.n) + 1):
        for sep in combinations(g.vertices, size):
            table[sep]
    return table


# --------------------------------------------------------------------------
# Scoring


def arc_penalty(parent_bag, child_bag, edges) -> int:
    """Edges ``u -> v`` that run from the child bag up to a vertex only the parent has."""
    parent_only = set(parent_bag) - set(child_bag)
    child_bag = set(child_bag)
    return sum(1 for s, d, *_ in edges if s in child_bag and d in parent_only)


def td_penalty(g: LabeledGraph, td: TreeDecomposition, scoring: str = "assigned") -> int:
    """Sum of :func:`arc_penalty` over the arcs of ``td``."""
    if scoring not in SCORING_MODES:
        raise ValueError(f"unknown scoring mode {scoring!r}")
    total = 0
    for j, i in enumerate(td.parent):
        if j == td.root:
            continue
        if scoring == "assigned":
            edges = [e for n, e in enumerate(g.edges) if td.edge_assignment[n] == j]
        else:
            edges = g.edges
        total += arc_penalty(td.bags[i], td.bags[j], edges)
    return total


# --------------------------------------------------------------------------
# The dynamic program


def decompose(g: LabeledGraph, k: int, semiring: Semiring = BOOLEAN, scoring: str = "assigned",
              max_subsets=None, table: SeparatorDictionary | None = None):
    """Fold every width-``k`` decomposition of ``g`` in ``semiring``.

    ``scoring`` picks the arc weights passed to ``semiring.arc``: with
    ``"all"`` an arc counts every graph edge running from the shared vertices
    up into the parent-only part of the parent bag; with ``"assigned"`` only
    edges assigned to the child bag are counted, and since such an edge lies
    inside the child bag it can never reach a parent-only vertex, so every arc
    weighs zero.
    """
    if scoring not in SCORING_MODES:
        raise ValueError(f"unknown scoring mode {scoring!r}")
    if k < 0:
        raise ValueError("width bound must be non-negative")
    check_size(g.n, k, max_subsets)
    if table is None or table.graph is not g:
        table = SeparatorDictionary(g, k)
    adj = g.adjacency
    out_edges = [[] for _ in g.vertices]
    for s, d, _ in g.edges:
        out_edges[s].append(d)
    sr = semiring
    memo = {}

    def weight(bag, shared):
        if scoring == "assigned":
            return sr.arc(0)
        above = bag - shared
        return sr.arc(sum(1 for u in shared for v in out_edges[u] if v in above))

    def solve(nbrs, comp):
        key = (nbrs, comp)
        if key in memo:
            return memo[key]
        if len(nbrs) + len(comp) <= k + 1:
            memo[key] = value = sr.leaf(nbrs | comp)
            return value
        total = sr.zero
        pool = sorted(comp)
        for extra in range(1, k + 2 - len(nbrs)):
            for chosen in combinations(pool, extra):
                bag = nbrs.union(chosen)
                children = [c for c in table[bag] if c <= comp]
                shared = [frozenset(v for v in bag if adj[v] & c) for c in children]
                if any(s == bag for s in shared):
                    continue
                acc = sr.one
                for c, s in zip(children, shared):
                    acc = sr.times(acc, sr.times(weight(bag, s), solve(s, c)))
                    if acc == sr.zero:
                        break
                total = sr.plus(total, sr.node(bag, acc))
        memo[key] = total
        return total

    return solve(frozenset(), frozenset(g.vertices))


def derivation_to_td(g: LabeledGraph, root: Derivation) -> TreeDecomposition:
    """Number the bags of a derivation tree in preorder and assign edges."""
    bags, parent = [], []
    stack = [(root, None)]
    while stack:
        node, up = stack.pop()
        idx = len(bags)
        bags.append(node.bag)
        parent.append(idx if up is None else up)
        stack.extend((child, idx) for child in reversed(node.children))
    return make_td(g, bags, parent)


def forest_tds(g: LabeledGraph, k: int, max_subsets=None) -> list[TreeDecomposition]:
    """Every decomposition in the width-``k`` forest, in a deterministic order."""
    forest = decompose(g, k, FOREST, max_subsets=max_subsets)
    roots = sorted((seq[0] for seq in forest), key=_derivation_key)
    return [derivation_to_td(g, r) for r in roots]


def _derivation_key(node: Derivation):
    return (tuple(sorted(node.bag)), tuple(_derivation_key(c) for c in node.children))


def vertex_rank(g: LabeledGraph) -> list[int]:
    """Position of each vertex when sorted by (label, id).

    Ranking by label keeps tie-breaking independent of how an input format
    happens to number the vertices.
    """
    rank = [0] * g.n
    for r, v in enumerate(sorted(g.vertices, key=lambda v: (g.labels[v], v))):
        rank[v] = r
    return rank


def best_td(g: LabeledGraph, k: int, scoring: str = "assigned", max_subsets=None):
    """The least penalized width-``k`` decomposition and its penalty.

    Equal penalties go to the smallest sorted bag sequence under
    :func:`~tdmask.semiring.key_precedes`, with vertices compared by
    :func:`vertex_rank`; decompositions with the same bag multiset resolve to
    the candidate tried first.
    """
    sr = ViterbiSemiring(vertex_rank(g))
    cost, _, seq = decompose(g, k, sr, scoring=scoring, max_subsets=max_subsets)
    if cost == math.inf:
        raise NoDecompositionError(f"graph has no tree decomposition of width {k}")
    td = derivation_to_td(g, seq[0])
    penalty = td_penalty(g, td, scoring)
    assert penalty == cost, (penalty, cost)
    return td, penalty


def best_td_with_retry(g: LabeledGraph, k: int = 2, max_k: int = 5, scoring: str = "assigned",
                       max_subsets=None):
    """Try widths ``k, k+1, ... max_k``; return ``(td, penalty, width_bound)``."""
    for bound in range(k, max_k + 1):
        try:
            td, penalty = best_td(g, bound, scoring, max_subsets)
        except NoDecompositionError:
            continue
        return td, penalty, bound
    raise NoDecompositionError(f"graph has no tree decomposition of width <= {max_k}")


def treewidth(g: LabeledGraph, max_k: int | None = None, max_subsets=None) -> int:
    """Smallest ``k`` the recognizer accepts, searching upwards from 0."""
    upper = g.n - 1 if max_k is None else min(max_k, g.n - 1)
    for k in range(upper + 1):
        if decompose(g, k, BOOLEAN, max_subsets=max_subsets):
            return k
    raise NoDecompositionError(f"treewidth exceeds {upper}")
