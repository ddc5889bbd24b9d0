"""Seeded random connected graphs for property tests, self-tests and gradient-check points."""

from __future__ import annotations

import random

from .graph import LabeledGraph

LABELS = ("arg0", "arg1", "arg2", "mod")


def random_connected_graph(n: int, m: int | None = None, rng: random.Random | int = 0,
                           labels=LABELS) -> LabeledGraph:
    """A random spanning tree plus extra directed edges, ``m`` edges in total.

    Extra edges never repeat an undirected pair, so ``m`` is clipped to
    ``n (n - 1) / 2``.  Vertex ids are shuffled so the tree shape is not tied
    to the numbering.
    """
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    if n < 1:
        raise ValueError("need at least one vertex")
    order = list(range(n))
    rng.shuffle(order)
    pairs = set()
    edges = []
    for i in range(1, n):
        a, b = order[rng.randrange(i)], order[i]
        if rng.random() < 0.5:
            a, b = b, a
        pairs.add(frozenset((a, b)))
        edges.append((a, b, rng.choice(labels)))
    limit = n * (n - 1) // 2
    target = n - 1 if m is None else min(max(m, n - 1), limit)
    free = [(a, b) for a in range(n) for b in range(a + 1, n) if frozenset((a, b)) not in pairs]
    rng.shuffle(free)
    for a, b in free[:target - len(edges)]:
        if rng.random() < 0.5:
            a, b = b, a
        edges.append((a, b, rng.choice(labels)))
    return LabeledGraph(tuple(f"c{v}" for v in range(n)), tuple(edges), root=order[0])
