"""Run the toy encoder layer and check its hand-written gradients.

Run: python demos/encoder_gradcheck.py [points]
"""

import sys

from tdmask.attention import grad_check, random_point


def main(points=5):
    worst = 0.0
    for seed in range(points):
        X, inputs, params = random_point(seed)
        report = grad_check(X, inputs, params, seed=seed)
        top = max(report.per_tensor, key=report.per_tensor.get)
        print(f"point {seed}: max rel err {report.max_rel_err:.2e} (largest in {top})")
        worst = max(worst, report.max_rel_err)
    print(f"worst over {points} points: {worst:.2e}")

    X, inputs, params = random_point(0)
    broken = grad_check(X, inputs, params, corrupt="F2")
    print(f"with one F2 partial doubled: {broken.max_rel_err:.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
