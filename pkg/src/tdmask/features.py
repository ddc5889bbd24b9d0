"""Attention masks and bag-level features derived from a tree decomposition."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cache
from itertools import combinations, permutations

import numpy as np

from .graph import LabeledGraph
from .treedec import TreeDecomposition

REVERSE_SUFFIX = "⁻¹"
GLOBAL_LABEL = "global"
MAX_MOTIF_WIDTH = 5


# --------------------------------------------------------------------------
# Masks


def subtree_masks(td: TreeDecomposition, n: int) -> np.ndarray:
    """Bottom-up pass: each vertex ends up seeing the subtree of its home bag.

    Rows are rewritten every time a bag holding the vertex is visited; the
    last visit is the bag closest to the root.
    """
    A = np.zeros((n, n), dtype=bool)
    kids = td.children()
    for i in td.postorder():
        bag = sorted(td.bags[i])
        for v in bag:
            row = np.zeros(n, dtype=bool)
            row[bag] = True
            for j in kids[i]:
                for w in td.bags[j]:
                    row |= A[w]
            A[v] = row
    return A


def attention_mask(td: TreeDecomposition, n: int) -> np.ndarray:
    """Subtree, parent-bag and same-depth-bag vertices for every query row."""
    sub = subtree_masks(td, n)
    depth = td.leaf_depth()
    home = td.home_bags(n)
    by_depth: dict[int, set[int]] = {}
    for b, dep in enumerate(depth):
        by_depth.setdefault(dep, set()).update(td.bags[b])
    mask = sub.copy()
    for v in range(n):
        h = home[v]
        extra = set(td.bags[td.parent[h]]) | by_depth[depth[h]]
        mask[v, sorted(extra)] = True
    return mask


# --------------------------------------------------------------------------
# Motifs


def canonical_code(vertices, adjacency) -> tuple[int, str]:
    """Smallest upper-triangle adjacency bitstring over all vertex orderings."""
    vertices = list(vertices)
    s = len(vertices)
    pairs = list(combinations(range(s), 2))
    best = None
    for perm in permutations(vertices):
        bits = "".join("1" if perm[j] in adjacency[perm[i]] else "0" for i, j in pairs)
        if best is None or bits < best:
            best = bits
    return (s, best)


@dataclass(frozen=True)
class MotifTable:
    """Canonical unlabeled graph codes on 1..k+1 vertices mapped to ids from 1.

    Id 0 is the sentinel for pairs that share no bag.
    """

    k: int
    table: dict

    def __len__(self):
        return len(self.table)

    def motif_id(self, bag, adjacency) -> int:
        if len(bag) > self.k + 1:
            raise ValueError(f"bag of {len(bag)} vertices exceeds width bound {self.k}")
        return self.table[canonical_code(sorted(bag), adjacency)]


@cache
def motif_table(k: int) -> MotifTable:
    if not 0 <= k <= MAX_MOTIF_WIDTH:
        raise ValueError(f"motif tables are enumerated for widths 0..{MAX_MOTIF_WIDTH}, not {k}")
    codes = []
    for s in range(1, k + 2):
        bits = s * (s - 1) // 2
        codes.extend((s, format(c, f"0{bits}b") if bits else "") for c in _canonical_masks(s))
    return MotifTable(k, {code: i for i, code in enumerate(sorted(codes), 1)})


def _canonical_masks(s: int) -> list[int]:
    """Every canonical adjacency code on ``s`` vertices, as integers.

    Pair ``p`` sits at bit ``len(pairs) - 1 - p``, so integer order is the
    order of the bitstrings built by :func:`canonical_code`.
    """
    pairs = list(combinations(range(s), 2))
    if not pairs:
        return [0]
    pos = {pr: len(pairs) - 1 - p for p, pr in enumerate(pairs)}
    masks = np.arange(1 << len(pairs), dtype=np.int64)
    best = masks.copy()
    for perm in permutations(range(s)):
        # position pair (i, j) of the reordered graph reads pair (perm[i], perm[j])
        out = np.zeros_like(masks)
        for (i, j), dst in pos.items():
            src = pos[tuple(sorted((perm[i], perm[j])))]
            out |= ((masks >> src) & 1) << dst
        np.minimum(best, out, out=best)
    return sorted(set(best.tolist()))


def motif_id(bag, g: LabeledGraph, table: MotifTable) -> int:
    return table.motif_id(bag, g.adjacency)


# --------------------------------------------------------------------------
# Depths


@dataclass(frozen=True)
class DepthInfo:
    bag_depth: list[int]
    relation_depth: list[int]  # per graph edge
    vertex_depth: list[int]
    relative_depth: np.ndarray  # n x n


def _pair_bags(td: TreeDecomposition, n: int) -> np.ndarray:
    """For each ordered pair, the bag nearest the root holding both (-1 if none)."""
    dist = td.root_distance()
    out = np.full((n, n), -1, dtype=int)
    for b in sorted(range(td.size), key=lambda i: (dist[i], i)):
        idx = sorted(td.bags[b])
        block = out[np.ix_(idx, idx)]
        block[block < 0] = b
        out[np.ix_(idx, idx)] = block
    return out


def relative_depth_matrix(g: LabeledGraph, td: TreeDecomposition, mask=None) -> DepthInfo:
    n = g.n
    depth = td.leaf_depth()
    rel_depth = [depth[b] for b in td.edge_assignment]
    home = td.home_bags(n)
    vdepth = [depth[home[v]] for v in range(n)]
    touched = [False] * n
    for (s, d, _), a in zip(g.edges, rel_depth):
        for v in (s, d):
            vdepth[v] = a if not touched[v] else max(vdepth[v], a)
            touched[v] = True
    if mask is None:
        mask = attention_mask(td, n)
    pair = _pair_bags(td, n)
    A = np.zeros((n, n), dtype=int)
    for i in range(n):
        for j in range(n):
            if not mask[i, j]:
                continue
            b = pair[i, j] if pair[i, j] >= 0 else home[j]
            A[i, j] = abs(vdepth[i] - depth[b])
    return DepthInfo(depth, rel_depth, vdepth, A)


# --------------------------------------------------------------------------
# Relation paths


def relation_paths(g: LabeledGraph, global_vertex: bool = True) -> dict[tuple[int, int], list[str]]:
    """Label sequence of the shortest path for every ordered vertex pair.

    Edges are traversable backwards under a reversed label.  With
    ``global_vertex`` an extra vertex joined to and from every vertex caps all
    paths at length two.  Equal-length paths resolve to the smallest label
    sequence.  Unreachable pairs (only possible without the global vertex on a
    disconnected graph) are omitted.
    """
    n = g.n
    out = [[] for _ in range(n + 1)]
    for s, d, lab in g.edges:
        out[s].append((lab, d))
        out[d].append((lab + REVERSE_SUFFIX, s))
    if global_vertex:
        for v in range(n):
            out[n].append((GLOBAL_LABEL, v))
            out[v].append((GLOBAL_LABEL, n))
    paths = {}
    for i in range(n):
        best = {i: ()}
        frontier = [i]
        while frontier:
            layer = {}
            for u in frontier:
                for lab, w in out[u]:
                    if w in best:
                        continue
                    cand = best[u] + (lab,)
                    if w not in layer or cand < layer[w]:
                        layer[w] = cand
            best.update(layer)
            frontier = sorted(layer)
        for j in range(n):
            if j in best:
                paths[(i, j)] = list(best[j])
    return paths


# --------------------------------------------------------------------------
# Bundles


@dataclass(frozen=True)
class FeatureBundle:
    """Per-pair indices consumed by the relation encoder.

    ``group[i, j]`` is ``b + 1`` for the bag ``b`` nearest the root holding both
    vertices and 0 otherwise; ``motif`` uses the same bag.  ``bags`` lists the
    bag vertex sets in group order and ``edges`` the graph's ``(src, dst)``
    pairs, which together locate the relations inside each bag.
    """

    n: int
    mask: np.ndarray
    motif: np.ndarray
    group: np.ndarray
    rel_depth: np.ndarray
    paths: dict
    bags: tuple
    edges: tuple

    def __eq__(self, other):
        if not isinstance(other, FeatureBundle):
            return NotImplemented
        return (
            self.n == other.n
            and all(np.array_equal(getattr(self, f), getattr(other, f))
                    for f in ("mask", "motif", "group", "rel_depth"))
            and self.paths == other.paths
            and self.bags == other.bags
            and self.edges == other.edges
        )

    def bag_relations(self, b: int) -> list[tuple[int, int]]:
        """Edges whose nearest-to-root shared bag is ``b`` (zero-based)."""
        return [(s, d) for s, d in self.edges if self.group[s, d] == b + 1]


def build_features(g: LabeledGraph, td: TreeDecomposition, k: int | None = None) -> FeatureBundle:
    n = g.n
    table = motif_table(td.width if k is None else k)
    mask = attention_mask(td, n)
    pair = _pair_bags(td, n)
    bag_motif = [table.motif_id(b, g.adjacency) for b in td.bags]
    covered = (pair >= 0) & mask
    group = np.where(covered, pair + 1, 0)
    motif = np.where(covered, np.array(bag_motif)[np.maximum(pair, 0)], 0)
    depths = relative_depth_matrix(g, td, mask)
    paths = relation_paths(g)
    return FeatureBundle(
        n=n,
        mask=mask,
        motif=motif,
        group=group,
        rel_depth=depths.relative_depth,
        paths={key: paths[key] for key in paths if mask[key]},
        bags=tuple(tuple(sorted(b)) for b in td.bags),
        edges=tuple((s, d) for s, d, _ in g.edges),
    )


def export_features(g: LabeledGraph, td: TreeDecomposition, bundle: FeatureBundle) -> dict:
    n = bundle.n
    if n != g.n:
        raise ValueError(f"bundle has n={n} but graph has {g.n} vertices")
    for name in ("mask", "motif", "group", "rel_depth"):
        if getattr(bundle, name).shape != (n, n):
            raise ValueError(f"{name} is not {n}x{n}")
    if len(bundle.bags) != td.size:
        raise ValueError("bundle and decomposition disagree on the number of bags")
    return bundle_to_dict(bundle)


def bundle_to_dict(bundle: FeatureBundle) -> dict:
    return {
        "n": bundle.n,
        "mask": bundle.mask.astype(int).tolist(),
        "motif": bundle.motif.tolist(),
        "group": bundle.group.tolist(),
        "rel_depth": bundle.rel_depth.tolist(),
        "paths": {f"{i},{j}": labels for (i, j), labels in sorted(bundle.paths.items())},
        "bags": [list(b) for b in bundle.bags],
        "edges": [list(e) for e in bundle.edges],
    }


def bundle_from_dict(doc: dict) -> FeatureBundle:
    n = doc["n"]
    arr = lambda key, dtype: np.array(doc[key], dtype=dtype).reshape(n, n)  # noqa: E731
    paths = {}
    for key, labels in doc["paths"].items():
        i, j = key.split(",")
        paths[(int(i), int(j))] = list(labels)
    return FeatureBundle(
        n=n,
        mask=arr("mask", bool),
        motif=arr("motif", int),
        group=arr("group", int),
        rel_depth=arr("rel_depth", int),
        paths=paths,
        bags=tuple(tuple(b) for b in doc.get("bags", [])),
        edges=tuple(tuple(e) for e in doc.get("edges", [])),
    )


def bundle_to_json(bundle: FeatureBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), ensure_ascii=False)


def bundle_from_json(text: str) -> FeatureBundle:
    return bundle_from_dict(json.loads(text))
