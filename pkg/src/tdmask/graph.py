"""Rooted labeled digraphs (AMR-style), their parsers and complexity metrics."""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable


class GraphError(ValueError):
    """Raised for structurally invalid graphs."""


class DisconnectedGraphError(GraphError):
    def __init__(self, fragments):
        self.fragments = fragments
        super().__init__(
            "undirected skeleton is disconnected; fragments: "
            + "; ".join("{" + ",".join(map(str, sorted(f))) + "}" for f in fragments)
        )


class ParseError(GraphError):
    """Input text could not be read as a graph. ``offset`` is a character index."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


@dataclass(frozen=True)
class LabeledGraph:
    """A rooted directed multigraph with concept labels on vertices.

    Vertex ids are the dense indices ``0..n-1`` of ``labels``.  ``names`` holds
    optional display names (Penman variables); it does not take part in
    equality.
    """

    labels: tuple[str, ...]
    edges: tuple[tuple[int, int, str], ...]
    root: int = 0
    graph_id: str | None = field(default=None, compare=False)
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "edges", tuple((int(s), int(d), str(l)) for s, d, l in self.edges))
        n = len(self.labels)
        if n == 0:
            raise GraphError("graph has no vertices")
        if not 0 <= self.root < n:
            raise GraphError(f"root {self.root} is not a vertex id")
        for i, (s, d, _) in enumerate(self.edges):
            if not (0 <= s < n and 0 <= d < n):
                raise GraphError(f"edge {i} ({s}->{d}) has a dangling endpoint")
            if s == d:
                raise GraphError(f"edge {i} is a self-loop on vertex {s}")
        if self.names is not None and len(self.names) != n:
            raise GraphError("names must have one entry per vertex")
        parts = _components(range(n), self.adjacency)
        if len(parts) > 1:
            raise DisconnectedGraphError(parts)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def vertices(self) -> range:
        return range(len(self.labels))

    @cached_property
    def adjacency(self) -> tuple[frozenset[int], ...]:
        """Undirected simple skeleton: parallel and reverse edges collapse."""
        adj = [set() for _ in self.labels]
        for s, d, _ in self.edges:
            adj[s].add(d)
            adj[d].add(s)
        return tuple(frozenset(a) for a in adj)

    @cached_property
    def skeleton_edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted({(min(s, d), max(s, d)) for s, d, _ in self.edges}))

    def name(self, v: int) -> str:
        return self.names[v] if self.names else str(v)

    def indegree(self) -> list[int]:
        deg = [0] * self.n
        for _, d, _ in self.edges:
            deg[d] += 1
        return deg


def _components(vertices: Iterable[int], adjacency) -> list[frozenset[int]]:
    remaining = set(vertices)
    parts = []
    for start in sorted(remaining):
        if start not in remaining:
            continue
        remaining.discard(start)
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in adjacency[u]:
                if w in remaining:
                    remaining.discard(w)
                    comp.add(w)
                    queue.append(w)
        parts.append(frozenset(comp))
    return parts


def components_after_removal(g: LabeledGraph, removed: Iterable[int]) -> list[frozenset[int]]:
    """Connected components of the skeleton induced on ``V - removed``.

    Components come back ordered by their smallest vertex id.
    """
    removed = set(removed)
    return _components((v for v in g.vertices if v not in removed), g.adjacency)


def bfs_distances(g: LabeledGraph, source: int) -> list[int]:
    dist = [-1] * g.n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


@dataclass(frozen=True)
class GraphMetrics:
    reentrancy_count: int
    diameter: int
    vertex_count: int
    edge_count: int


def graph_metrics(g: LabeledGraph) -> GraphMetrics:
    reentrancy = sum(max(0, d - 1) for d in g.indegree())
    diameter = max(max(bfs_distances(g, v)) for v in g.vertices)
    return GraphMetrics(reentrancy, diameter, g.n, len(g.edges))


# --------------------------------------------------------------------------
# JSON interchange

def graph_to_dict(g: LabeledGraph) -> dict:
    doc = {
        "root": g.root,
        "vertices": [{"id": i, "label": lab} for i, lab in enumerate(g.labels)],
        "edges": [{"src": s, "dst": d, "label": lab} for s, d, lab in g.edges],
    }
    if g.graph_id is not None:
        doc["id"] = g.graph_id
    return doc


def graph_to_json(g: LabeledGraph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, ensure_ascii=False)


def graph_from_dict(doc: dict) -> LabeledGraph:
    try:
        root = doc["root"]
        vertices = doc["vertices"]
        edges = doc["edges"]
        ids = [v["id"] for v in vertices]
        labels = [v["label"] for v in vertices]
        edge_list = [(e["src"], e["dst"], e["label"]) for e in edges]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None
    except TypeError:
        raise ParseError("malformed graph document") from None
    if sorted(ids) != list(range(len(ids))):
        raise GraphError("vertex ids must be unique and dense 0..n-1")
    ordered = [None] * len(ids)
    for i, lab in zip(ids, labels):
        ordered[i] = lab
    return LabeledGraph(tuple(ordered), tuple(edge_list), root, graph_id=doc.get("id"))


def parse_graph_json(text: str) -> LabeledGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict):
        raise ParseError("graph document must be a JSON object")
    return graph_from_dict(doc)


# --------------------------------------------------------------------------
# Penman subset

_TOKEN = re.compile(r'\s*(?:(\()|(\))|(/)|(:[^\s()/:"]+)|("(?:[^"\\]|\\.)*"|[^\s()/:"]+))')
# Bare tokens of this shape are variable references; anything else that is not
# declared is a constant and becomes its own vertex.
_VARIABLE_SHAPE = re.compile(r"[a-z]\d*$")


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.end() == pos:
            break
        kind = m.lastindex
        if kind is None:
            break
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


def parse_penman(text: str) -> LabeledGraph:
    """Read one graph in the bracketed ``(var / concept :role ...)`` notation.

    Variables may be referenced before or after their declaration; a bare
    token that is never declared is a constant vertex unless it looks like a
    variable name, in which case it is an error.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 0)
    LP, RP, SLASH, ROLE, ATOM = 1, 2, 3, 4, 5

    labels: list[str] = []
    names: list[str] = []
    declared: dict[str, int] = {}
    raw_edges: list[tuple[int, object, str, int]] = []
    pos = 0

    def expect(kind, what):
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"unexpected end of input, expected {what}", len(text))
        tok = tokens[pos]
        if tok[0] != kind:
            raise ParseError(f"expected {what}, found {tok[1]!r}", tok[2])
        pos += 1
        return tok

    def node():
        nonlocal pos
        expect(LP, "'('")
        _, var, offset = expect(ATOM, "variable")
        if var in declared:
            raise ParseError(f"duplicate declaration of variable {var!r}", offset)
        expect(SLASH, "'/'")
        _, concept, _ = expect(ATOM, "concept label")
        vid = len(labels)
        declared[var] = vid
        labels.append(concept)
        names.append(var)
        while pos < len(tokens) and tokens[pos][0] == ROLE:
            role = tokens[pos][1][1:]
            pos += 1
            if pos >= len(tokens):
                raise ParseError(f"role :{role} has no target", len(text))
            kind, value, offset = tokens[pos]
            if kind == LP:
                raw_edges.append((vid, node(), role, offset))
            elif kind == ATOM:
                pos += 1
                raw_edges.append((vid, value, role, offset))
            else:
                raise ParseError(f"role :{role} has no target", offset)
        if pos >= len(tokens):
            raise ParseError("unbalanced parentheses: missing ')'", len(text))
        expect(RP, "')'")
        return vid

    node()
    if pos != len(tokens):
        kind, value, offset = tokens[pos]
        if kind == RP:
            raise ParseError("unbalanced parentheses: extra ')'", offset)
        raise ParseError(f"trailing content {value!r}", offset)

    edges = []
    for src, target, role, offset in raw_edges:
        if isinstance(target, int):
            edges.append((src, target, role))
        elif target in declared:
            edges.append((src, declared[target], role))
        elif _VARIABLE_SHAPE.match(target):
            raise ParseError(f"reference to undeclared variable {target!r}", offset)
        else:
            labels.append(target)
            names.append(target)
            edges.append((src, len(labels) - 1, role))
    return LabeledGraph(tuple(labels), tuple(edges), 0, names=tuple(names))


def read_graphs(text: str, fmt: str) -> list:
    """Split a file into per-graph results.

    Returns a list with one entry per graph: a :class:`LabeledGraph` or the
    :class:`GraphError` raised while reading it, so one bad record does not
    hide the others.
    """
    out = []
    if fmt == "json":
        try:
            out.append(parse_graph_json(text))
        except GraphError as exc:
            out.append(exc)
    elif fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                out.append(parse_graph_json(line))
            except GraphError as exc:
                exc.args = (f"line {lineno}: {exc}",)
                out.append(exc)
    elif fmt == "penman":
        for lineno, chunk in _penman_blocks(text):
            try:
                out.append(parse_penman(chunk))
            except GraphError as exc:
                exc.args = (f"line {lineno}: {exc}",)
                out.append(exc)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return out


def _penman_blocks(text):
    """Blank-line separated blocks; lines starting with '#' are comments."""
    block, start = [], None
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith("#"):
            continue
        if line.strip():
            if start is None:
                start = lineno
            block.append(line)
        elif block:
            yield start, "\n".join(block)
            block, start = [], None
    if block:
        yield start, "\n".join(block)
