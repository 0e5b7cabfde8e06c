#!/usr/bin/env python3
"""Bias study: cross-fitted debiased estimator vs the naive difference in means.

Replicates the strong-confounding generator over many seeds and reports, per
seed, the debiased estimate, its standard error, the naive estimate, and the
infeasible (true-nuisance) benchmark. Use this to recalibrate generator
presets or learner sizes.

    python3 scripts/dml_benchmark.py --n 20000 --seeds 10 --trees 40
"""

import argparse
from dataclasses import replace

import numpy as np

from orthoestim.dml import DmlConfig, naive_alpha, run_dml
from orthoestim.forest import ForestConfig
from orthoestim.synth import dml_preset, generate_dml_data, infeasible_alpha


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="dml-strong-confounding")
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--k-folds", type=int, default=5)
    parser.add_argument("--trees", type=int, default=40)
    parser.add_argument("--min-leaf", type=int, default=10)
    parser.add_argument("--threads", type=int, default=2)
    args = parser.parse_args()

    learner = ForestConfig(n_trees=args.trees, min_samples_split=10,
                           min_samples_leaf=args.min_leaf, seed=0)
    print(f"{'seed':>4} {'debiased':>10} {'se':>8} {'covered':>8} "
          f"{'naive':>10} {'infeasible':>11}")
    rows = []
    for seed in range(args.seeds):
        spec = dml_preset(args.preset, args.n, seed)
        data, truth = generate_dml_data(spec)
        config = DmlConfig(
            outcome_learner=replace(learner, seed=seed * 2 + 1),
            policy_learner=replace(learner, seed=seed * 2 + 2),
            k_folds=args.k_folds,
            seed=seed,
        )
        est = run_dml(data, config, n_threads=args.threads)
        naive = naive_alpha(data)
        oracle = infeasible_alpha(data, truth)
        covered = abs(est.alpha - spec.alpha_true) < 3 * est.std_error
        rows.append((est.alpha, est.std_error, naive, oracle, covered))
        print(f"{seed:>4} {est.alpha:>10.4f} {est.std_error:>8.4f} "
              f"{str(covered):>8} {naive:>10.4f} {oracle:>11.4f}")

    alpha_true = dml_preset(args.preset, args.n, 0).alpha_true
    alphas = np.array([r[0] for r in rows])
    naives = np.array([r[2] for r in rows])
    print(f"\nplanted effect          : {alpha_true:+.4f}")
    print(f"debiased mean |bias|    : {np.mean(np.abs(alphas - alpha_true)):.4f}")
    print(f"naive mean |bias|       : {np.mean(np.abs(naives - alpha_true)):.4f}")
    print(f"coverage (|bias|<3se)   : {sum(r[4] for r in rows)}/{args.seeds}")


if __name__ == "__main__":
    main()
