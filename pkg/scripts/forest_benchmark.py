#!/usr/bin/env python3
"""Timing and accuracy probe for the regression forest.

    python3 scripts/forest_benchmark.py --n 16000 --trees 100 --threads 2
"""

import argparse
import time

import numpy as np

from orthoestim.forest import ForestConfig, fit_forest, predict


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=16000)
    parser.add_argument("--dims", type=int, default=5)
    parser.add_argument("--trees", type=int, default=100)
    parser.add_argument("--min-leaf", type=int, default=1)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.uniform(-1, 1, size=(args.n, args.dims))
    y = np.sin(np.pi * X[:, 0]) + X[:, 1] ** 2 + rng.normal(0, 0.3, args.n)
    X_test = rng.uniform(-1, 1, size=(4000, args.dims))
    y_test = np.sin(np.pi * X_test[:, 0]) + X_test[:, 1] ** 2

    config = ForestConfig(n_trees=args.trees, min_samples_split=10,
                          min_samples_leaf=args.min_leaf, seed=args.seed)
    start = time.perf_counter()
    model = fit_forest(X, y, config, n_threads=args.threads)
    fit_s = time.perf_counter() - start

    start = time.perf_counter()
    pred = predict(model, X_test)
    predict_s = time.perf_counter() - start
    r2 = 1 - np.sum((y_test - pred) ** 2) / np.sum((y_test - y_test.mean()) ** 2)

    nodes = np.mean([t.n_nodes for t in model.trees])
    depth = max(t.depth() for t in model.trees)
    print(f"fit: {fit_s:.2f}s  predict(4000): {predict_s:.3f}s")
    print(f"oos R2 (noiseless target): {r2:.4f}")
    print(f"mean nodes/tree: {nodes:.0f}  max depth: {depth}  "
          f"oob R2: {model.oob_score:.4f}")


if __name__ == "__main__":
    main()
