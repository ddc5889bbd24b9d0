"""Semirings for the separator/component dynamic program.

Every semiring supplies the usual ``plus``/``times``/``zero``/``one`` plus three
hooks the decomposition program calls:

``leaf(bag)``
    value of a component that fits in a single bag,
``node(bag, value)``
    wraps the product of a bag's child values (identity for scalar semirings),
``arc(penalty)``
    weight of the arc from a bag to one of its children.

A derivation is a nested ``Derivation(bag, children)`` tuple.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class Derivation(NamedTuple):
    bag: frozenset
    children: tuple


class Semiring:
    zero = None
    one = None

    def plus(self, a, b):
        raise NotImplementedError

    def times(self, a, b):
        raise NotImplementedError

    def leaf(self, bag):
        return self.one

    def node(self, bag, value):
        return value

    def arc(self, penalty):
        return self.one


class BooleanSemiring(Semiring):
    """(or, and): does a decomposition exist?"""

    name = "boolean"
    zero = False
    one = True

    def plus(self, a, b):
        return a or b

    def times(self, a, b):
        return a and b


class MinPlusSemiring(Semiring):
    """(min, +) over arc penalties: the least total penalty."""

    name = "min-plus"
    zero = math.inf
    one = 0

    def plus(self, a, b):
        return min(a, b)

    def times(self, a, b):
        return a + b

    def arc(self, penalty):
        return penalty


class ForestSemiring(Semiring):
    """(union, concatenation): the set of all derivations.

    Elements are frozensets of tuples of :class:`Derivation` nodes; a tuple
    holds the sibling subtrees produced so far.
    """

    name = "forest"
    zero = frozenset()
    one = frozenset({()})

    def plus(self, a, b):
        return a | b

    def times(self, a, b):
        return frozenset(x + y for x in a for y in b)

    def leaf(self, bag):
        return frozenset({(Derivation(bag, ()),)})

    def node(self, bag, value):
        return frozenset((Derivation(bag, seq),) for seq in value)


def bag_key(bag, rank=None) -> tuple:
    return tuple(sorted(bag if rank is None else (rank[v] for v in bag)))


def key_precedes(a: tuple, b: tuple) -> bool:
    """Strict order on sorted bag sequences, padded with a sentinel above every bag.

    Equivalently the sequence holding the smallest bag of the multiset
    difference comes first.  Unlike plain prefix-first order this survives
    adding the same bags to both sides, which the dynamic program relies on.
    """
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return len(a) > len(b)


def merge_keys(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


class ViterbiSemiring(Semiring):
    """(min, +) that also carries one optimal derivation (the backpointers).

    Values are ``(cost, key, derivations)`` where ``key`` is the sorted bag
    sequence, each bag written as the sorted ``rank`` of its vertices (the
    vertex ids themselves by default).  Equal costs go to the smaller key
    under :func:`key_precedes`; full ties keep the left operand, i.e. the
    candidate offered first.
    """

    name = "viterbi"
    zero = (math.inf, (), ())
    one = (0, (), ())

    def __init__(self, rank=None):
        self.rank = rank

    def plus(self, a, b):
        if b[0] < a[0] or (b[0] == a[0] and key_precedes(b[1], a[1])):
            return b
        return a

    def times(self, a, b):
        if a[0] == math.inf or b[0] == math.inf:
            return self.zero
        return (a[0] + b[0], merge_keys(a[1], b[1]), a[2] + b[2])

    def leaf(self, bag):
        return (0, (bag_key(bag, self.rank),), (Derivation(bag, ()),))

    def node(self, bag, value):
        if value[0] == math.inf:
            return self.zero
        return (value[0], merge_keys(value[1], (bag_key(bag, self.rank),)), (Derivation(bag, value[2]),))

    def arc(self, penalty):
        return (penalty, (), ())


BOOLEAN = BooleanSemiring()
MIN_PLUS = MinPlusSemiring()
FOREST = ForestSemiring()
VITERBI = ViterbiSemiring()
