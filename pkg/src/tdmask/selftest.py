"""Oracle agreement suites behind ``tdmask selftest``."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .attention import grad_check, random_point
from .features import motif_table
from .oracles import oracle_best_td, oracle_treewidth
from .randgraph import random_connected_graph
from .treedec import best_td, best_td_with_retry, treewidth, validate_td

GRADCHECK_TOL = 1e-4


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def to_dict(self):
        return {"suite": self.name, "ok": self.ok, "passed": self.passed, "total": self.total,
                "detail": self.detail}


def suite_treewidth(seed=0, count=60):
    rng = random.Random(seed)
    bad = []
    for i in range(count):
        n = rng.randint(1, 7)
        g = random_connected_graph(n, rng.randint(n - 1, n * (n - 1) // 2), rng)
        if treewidth(g) != oracle_treewidth(g):
            bad.append(i)
    return SuiteResult("treewidth", count - len(bad), count, f"mismatches at {bad}" if bad else "")


def suite_penalty(seed=0, count=40):
    rng = random.Random(seed + 1)
    bad = []
    for i in range(count):
        n = rng.randint(2, 7)
        g = random_connected_graph(n, rng.randint(n - 1, min(7, n * (n - 1) // 2)), rng)
        k = treewidth(g)
        for scoring in ("assigned", "all"):
            if best_td(g, k, scoring)[1] != oracle_best_td(g, k, scoring):
                bad.append((i, scoring))
    return SuiteResult("penalty", 2 * count - len(bad), 2 * count, f"mismatches at {bad}" if bad else "")


def suite_validity(seed=0, count=40):
    rng = random.Random(seed + 2)
    bad = []
    for i in range(count):
        n = rng.randint(1, 10)
        g = random_connected_graph(n, n - 1 + rng.randint(0, 4), rng)
        td, _, bound = best_td_with_retry(g, k=1, max_k=n)
        if not validate_td(g, td, bound).ok:
            bad.append(i)
    return SuiteResult("validity", count - len(bad), count, f"invalid at {bad}" if bad else "")


def suite_motifs(seed=0):
    expected = {1: 3, 2: 7, 3: 18}
    got = {k: len(motif_table(k)) for k in expected}
    passed = sum(got[k] == v for k, v in expected.items())
    return SuiteResult("motifs", passed, len(expected), f"sizes {got}")


def suite_gradcheck(seed=0, points=3, corrupt=None):
    errs = []
    for s in range(seed, seed + points):
        X, inputs, params = random_point(s)
        errs.append(grad_check(X, inputs, params, seed=s, corrupt=corrupt).max_rel_err)
    passed = sum(e <= GRADCHECK_TOL for e in errs)
    return SuiteResult("gradcheck", passed, points, f"max rel err {max(errs):.2e}")


SUITES = {
    "treewidth": suite_treewidth,
    "penalty": suite_penalty,
    "validity": suite_validity,
    "motifs": suite_motifs,
    "gradcheck": suite_gradcheck,
}


def run_suites(names=None, seed=0, inject_fault=False) -> list[SuiteResult]:
    results = []
    for name in names or list(SUITES):
        if name == "gradcheck":
            results.append(suite_gradcheck(seed, corrupt="F2" if inject_fault else None))
        else:
            results.append(SUITES[name](seed))
    return results
