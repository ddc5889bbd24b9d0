"""``tdmask`` command line.

Exit codes: 0 success, 1 failure, 2 partial (some graphs skipped), 3 bad
invocation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from .attention import grad_check, random_point
from .features import build_features, export_features
from .graph import GraphError, graph_metrics, read_graphs
from .selftest import GRADCHECK_TOL, SUITES, run_suites
from .treedec import (
    GraphTooLargeError,
    NoDecompositionError,
    best_td_with_retry,
    td_to_dict,
    treewidth,
)

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 3

REENTRANCY_BINS = ("0", "1-2", "3-4", "5-6", "7+")
DIAMETER_BINS = ("0", "1", "2", "3", "4", "5", "6", "7+")
TREEWIDTH_BINS = ("0", "1", "2", "3", "4")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="graph file (omit or '-' for stdin)")
    common.add_argument("--format", choices=("penman", "json", "jsonl"), default="jsonl")
    common.add_argument("--k", type=int, default=2, help="initial width bound")
    common.add_argument("--max-k", type=int, default=5, help="largest width bound tried")
    common.add_argument("--scoring", choices=("assigned", "all"), default="assigned")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for corpus commands")

    parser = _Parser(prog="tdmask", description="Tree decompositions and tree-structured attention masks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("decompose", parents=[common], help="least penalized tree decomposition per graph")
    sub.add_parser("features", parents=[common], help="mask, motif, group, depth and path features per graph")
    sub.add_parser("stats", parents=[common], help="corpus complexity metrics and histograms")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the encoder layer")
    gc.add_argument("--points", type=int, default=1)
    gc.add_argument("--corrupt", metavar="TENSOR", help="double one analytic partial of TENSOR")
    st = sub.add_parser("selftest", parents=[common], help="oracle agreement suites")
    st.add_argument("--suites", default=",".join(SUITES), help="comma separated subset of " + ",".join(SUITES))
    st.add_argument("--inject-fault", action="store_true", help="corrupt one gradient so gradcheck must fail")
    return parser


# --------------------------------------------------------------------------
# Per-graph workers (module level so a process pool can pickle them)


def _decompose_one(job):
    index, item, k, max_k, scoring = job
    if isinstance(item, Exception):
        return {"index": index, "status": "parse_error", "error": str(item)}
    try:
        td, penalty, bound = best_td_with_retry(item, k, max_k, scoring)
    except (NoDecompositionError, GraphTooLargeError) as exc:
        return {"index": index, "status": "skipped", "error": str(exc)}
    return {"index": index, "status": "ok", "graph": item, "td": td, "penalty": penalty, "k": bound}


def _features_one(job):
    res = _decompose_one(job)
    if res["status"] != "ok":
        return res
    g, td = res["graph"], res["td"]
    res["bundle"] = export_features(g, td, build_features(g, td, res["k"]))
    return res


def _stats_one(job):
    index, item, _, max_k, _ = job
    if isinstance(item, Exception):
        return {"index": index, "status": "parse_error", "error": str(item)}
    m = graph_metrics(item)
    row = {"index": index, "status": "ok", "id": item.graph_id, "vertices": m.vertex_count,
           "edges": m.edge_count, "reentrancies": m.reentrancy_count, "diameter": m.diameter}
    try:
        row["treewidth"] = treewidth(item, max_k)
    except (NoDecompositionError, GraphTooLargeError) as exc:
        row.update(status="skipped", treewidth=None, error=str(exc))
    return row


def _run_jobs(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------
# Binning


def reentrancy_bin(count: int) -> str:
    if count == 0:
        return "0"
    if count >= 7:
        return "7+"
    lo = count - (count + 1) % 2
    return f"{lo}-{lo + 1}"


def diameter_bin(d: int) -> str:
    return "7+" if d >= 7 else str(d)


def treewidth_bin(tw: int | None) -> str | None:
    return str(tw) if tw is not None and tw <= 4 else None


def histograms(rows) -> dict:
    hist = {
        "reentrancies": dict.fromkeys(REENTRANCY_BINS, 0),
        "diameter": dict.fromkeys(DIAMETER_BINS, 0),
        "treewidth": dict.fromkeys(TREEWIDTH_BINS, 0),
    }
    for r in rows:
        if r["status"] == "parse_error":
            continue
        hist["reentrancies"][reentrancy_bin(r["reentrancies"])] += 1
        hist["diameter"][diameter_bin(r["diameter"])] += 1
        b = treewidth_bin(r["treewidth"])
        if b is not None:
            hist["treewidth"][b] += 1
    return hist


def format_stats(rows, hist) -> str:
    lines = [f"{'#':>4} {'n':>4} {'|E|':>4} {'reent':>6} {'diam':>5} {'tw':>4}  status"]
    for r in rows:
        if r["status"] == "parse_error":
            lines.append(f"{r['index']:>4} {'-':>4} {'-':>4} {'-':>6} {'-':>5} {'-':>4}  parse_error")
            continue
        tw = "-" if r["treewidth"] is None else r["treewidth"]
        lines.append(f"{r['index']:>4} {r['vertices']:>4} {r['edges']:>4} {r['reentrancies']:>6} "
                     f"{r['diameter']:>5} {tw:>4}  {r['status']}")
    for name, bins in hist.items():
        lines.append("")
        lines.append(name)
        for label, count in bins.items():
            lines.append(f"  {label:>4}  {count:>6}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Commands


def _read_input(args):
    if args.input in (None, "-"):
        return sys.stdin.read()
    try:
        with open(args.input, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise UsageError(f"input file {args.input!r} not found") from None


def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(doc):
    return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def _report_errors(results):
    for r in results:
        if r["status"] != "ok":
            print(f"graph {r['index']}: {r['status']}: {r['error']}", file=sys.stderr)


def _corpus_exit(results):
    return EXIT_OK if all(r["status"] == "ok" for r in results) else EXIT_PARTIAL


def _jobs(args):
    items = read_graphs(_read_input(args), args.format)
    return [(i, item, args.k, args.max_k, args.scoring) for i, item in enumerate(items)]


def cmd_decompose(args) -> int:
    results = _run_jobs(_decompose_one, _jobs(args), args.jobs)
    lines = []
    for r in results:
        if r["status"] == "ok":
            doc = td_to_dict(r["td"], r["penalty"])
            doc.update(index=r["index"], k=r["k"], status="ok")
            if r["graph"].graph_id is not None:
                doc["id"] = r["graph"].graph_id
        else:
            doc = {key: r[key] for key in ("index", "status", "error")}
        lines.append(_dumps(doc) + "\n")
    _emit(args, "".join(lines))
    _report_errors(results)
    return _corpus_exit(results)


def cmd_features(args) -> int:
    results = _run_jobs(_features_one, _jobs(args), args.jobs)
    lines = []
    for r in results:
        if r["status"] == "ok":
            doc = dict(r["bundle"], index=r["index"])
        else:
            doc = {key: r[key] for key in ("index", "status", "error")}
        lines.append(_dumps(doc) + "\n")
    _emit(args, "".join(lines))
    _report_errors(results)
    return _corpus_exit(results)


def cmd_stats(args) -> int:
    rows = _run_jobs(_stats_one, _jobs(args), args.jobs)
    hist = histograms(rows)
    sys.stdout.write(format_stats(rows, hist))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(_dumps({"graphs": rows, "histograms": hist}) + "\n")
    _report_errors(rows)
    return _corpus_exit(rows)


def cmd_gradcheck(args) -> int:
    reports = []
    for s in range(args.seed, args.seed + args.points):
        X, inputs, params = random_point(s)
        if args.corrupt and args.corrupt not in params.tensors and args.corrupt != "X":
            raise UsageError(f"unknown tensor {args.corrupt!r}")
        reports.append(grad_check(X, inputs, params, seed=s, corrupt=args.corrupt).to_dict())
    text = "".join(_dumps(r) + "\n" for r in reports)
    _emit(args, text)
    worst = max(r["max_rel_err"] for r in reports)
    print(f"max relative error {worst:.3e} over {len(reports)} point(s)", file=sys.stderr)
    return EXIT_OK if worst <= GRADCHECK_TOL else EXIT_FAIL


def cmd_selftest(args) -> int:
    names = [s.strip() for s in args.suites.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown or not names:
        raise UsageError(f"unknown suites {unknown}; choose from {','.join(SUITES)}")
    results = run_suites(names, args.seed, args.inject_fault)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{r.name:<10} {status}  {r.passed}/{r.total}  {r.detail}".rstrip())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(_dumps([r.to_dict() for r in results]) + "\n")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


COMMANDS = {
    "decompose": cmd_decompose,
    "features": cmd_features,
    "stats": cmd_stats,
    "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.k < 0:
            raise UsageError("--k must be non-negative")
        if args.max_k < args.k:
            raise UsageError("--max-k must be at least --k")
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tdmask: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, UnicodeDecodeError, OSError) as exc:
        print(f"tdmask: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
