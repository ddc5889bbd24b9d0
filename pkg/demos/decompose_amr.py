"""Parse a small AMR, decompose it, and compare the two scoring modes.

Run: python demos/decompose_amr.py
"""

from tdmask.graph import graph_metrics, parse_penman
from tdmask.samples import POST_THERE_PENMAN, post_there_simplified
from tdmask.treedec import best_td, forest_tds, td_penalty, treewidth, validate_td


def show(g, td, title):
    print(title)
    for i, bag in enumerate(td.bags):
        up = "root" if td.parent[i] == i else f"under {td.parent[i]}"
        names = " ".join(sorted(g.names[v] if g.names else g.labels[v] for v in bag))
        print(f"  bag {i}: {{{names}}}  ({up})")


def main():
    full = parse_penman(POST_THERE_PENMAN)
    m = graph_metrics(full)
    print(f"full AMR: {m.vertex_count} vertices, {m.edge_count} edges, "
          f"{m.reentrancy_count} reentrancies, diameter {m.diameter}, treewidth {treewidth(full)}\n")

    g = post_there_simplified()
    td, penalty = best_td(g, 2)
    show(g, td, f"simplified AMR, width 2, penalty {penalty}:")
    print("  valid:", validate_td(g, td, 2).ok)

    # Assigned-edge scoring never penalizes anything; counting every edge
    # separates the candidates.
    forest = forest_tds(g, 2)
    scores = sorted(td_penalty(g, t, "all") for t in forest)
    print(f"\n{len(forest)} width-2 decompositions; all-edge penalties range {scores[0]}..{scores[-1]}")
    best_all, p_all = best_td(g, 2, "all")
    show(g, best_all, f"least penalized under all-edge scoring (penalty {p_all}):")


if __name__ == "__main__":
    main()
