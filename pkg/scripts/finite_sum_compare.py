"""Paired exact-vs-sub-sampled solver runs on a synthetic finite-sum problem.

Usage: python scripts/finite_sum_compare.py [tr|arc] [trials]
"""

import sys

from subnewton.harness import ExperimentConfig, compare_exact_vs_sampled


def main():
    solver = sys.argv[1] if len(sys.argv) > 1 else "tr"
    trials = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    config = ExperimentConfig(problem="biweight", solver=solver,
                              hessian="uniform_wor", n=1000, d=50,
                              k_max_target=1.0, data_seed=42, trials=trials,
                              x0_scale=0.5, max_iters=500, seed=0)
    _, report = compare_exact_vs_sampled(config)
    print(report)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
