"""Tree-structured attention masks and bag features on the seven-vertex example.

Run: python demos/attention_masks.py
"""

import numpy as np

from tdmask.features import build_features
from tdmask.samples import branching_graph
from tdmask.treedec import best_td


def main():
    g = branching_graph()
    td, _ = best_td(g, 2)
    bundle = build_features(g, td, 2)
    names = g.names

    print("bags:", ["".join(names[v] for v in sorted(b)) for b in td.bags])
    print("\nmask (row = query, column = key):")
    print("    " + " ".join(names))
    for i, row in enumerate(bundle.mask):
        print(f"  {names[i]} " + " ".join("1" if x else "." for x in row))

    print(f"\nmask density {bundle.mask.mean():.2f}")
    print("distinct motif ids:", sorted({int(x) for x in np.unique(bundle.motif) if x}))
    print("relative depth row a:", bundle.rel_depth[0].tolist())
    for pair in [(0, 5), (3, 4)]:
        if pair in bundle.paths:
            print(f"path {names[pair[0]]}->{names[pair[1]]}:", bundle.paths[pair])


if __name__ == "__main__":
    main()
