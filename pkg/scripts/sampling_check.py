"""Monte-Carlo verification of the sub-sampling size prescriptions on a
synthetic bi-weight problem, including the deliberately undersized control.

Usage: python scripts/sampling_check.py [trials]
"""

import sys

from subnewton.harness import ExperimentConfig, format_verification, verify_bounds


def main():
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 400
    # The tightest point (eps=0.004) prescribes far more than n samples and
    # is capped at the exact full sample; its quartered negative control
    # sits right where sampling error genuinely exceeds eps.
    config = ExperimentConfig(problem="biweight", n=2000, d=20,
                              k_max_target=1.0, data_seed=3,
                              verify_eps="0.5,0.3,0.004", verify_delta="0.1",
                              verify_trials=trials, seed=0)
    rows, all_ok = verify_bounds(config)
    print(format_verification(rows))
    print(f"\nall expectations met: {all_ok}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
