#!/usr/bin/env python3
"""Estimate the family-wise error rate of the full per-arm testing pipeline
on freshly simulated static cohorts."""

import argparse
import json

from banditlab import simulate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-datasets", type=int, default=200)
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=12345)
    parser.add_argument("--n-perm", type=int, default=10_000)
    parser.add_argument("--cycle", type=int, default=40)
    parser.add_argument("--repeat", type=int, default=38)
    parser.add_argument("--sigma", type=float, default=1.0)
    parser.add_argument("--stratify", action="store_true")
    parser.add_argument("--n-jobs", type=int, default=1)
    args = parser.parse_args()

    model = simulate.UserModel(kind=simulate.STATIC, base_means=(5.0,) * 5, sigma=args.sigma)
    result = simulate.calibration_study(
        model,
        n_datasets=args.n_datasets,
        alpha=args.alpha,
        seed=args.seed,
        cohort=simulate.CohortSpec(counts={"cycle": args.cycle, "repeat": args.repeat}),
        n_perm=args.n_perm,
        stratify=args.stratify,
        n_jobs=args.n_jobs,
    )
    print(
        json.dumps(
            {
                "n_datasets": result.n_datasets,
                "alpha": result.alpha,
                "familywise_rate": result.familywise_rate,
                "per_arm_rate": result.per_arm_rate,
            },
            indent=2,
        )
    )


if __name__ == "__main__":
    main()
