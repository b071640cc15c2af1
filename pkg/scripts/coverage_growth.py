"""Coverage-growth demo: how each criterion saturates as a test suite grows.

Feeds the clean test set in slices, then the perturbed set, and reports the
cumulative coverage after each step for the bucketed surprise criteria and the
four activation criteria. Writes one growth table per criterion under --out.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from surprisal.coverage import (
    BucketConfig,
    cumulative_coverage,
    suggest_upper_bound,
    write_growth_csv,
)
from surprisal.dsa import build_class_index, dsa_batch
from surprisal.lsa import build_profile, fit_kde, lsa_batch
from surprisal.toynet import make_fixture
from surprisal.traces import TraceSet


def slices(array, pieces):
    bounds = np.linspace(0, len(array), pieces + 1).astype(int)
    return [array[a:b] for a, b in zip(bounds, bounds[1:])]


def parse_args(argv):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("growth_out"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-train", type=int, default=1000)
    parser.add_argument("--n-test", type=int, default=500)
    parser.add_argument("--pieces", type=int, default=5,
                        help="slices per test split")
    parser.add_argument("--buckets", type=int, default=1000)
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    bundle = make_fixture(out / "fixture", seed=args.seed,
                          n_train=args.n_train, n_test=args.n_test)
    profile = build_profile(bundle.train)
    models = fit_kde(bundle.train, profile)
    index = build_class_index(bundle.train)

    for kind in ("lsa", "dsa"):
        if kind == "lsa":
            clean = lsa_batch(models, bundle.test_clean, profile).clean_values()
            pert = lsa_batch(models, bundle.test_perturbed, profile).clean_values()
        else:
            clean = dsa_batch(index, bundle.test_clean).clean_values()
            pert = dsa_batch(index, bundle.test_perturbed).clean_values()
        upper = suggest_upper_bound(np.concatenate([clean, pert]))
        config = BucketConfig(upper, args.buckets)
        steps = slices(clean, args.pieces) + slices(pert, args.pieces)
        rows = cumulative_coverage(steps, "sc", bucket_config=config)
        write_growth_csv(rows, out / f"growth_{kind}_sc.csv")
        print(f"{kind} surprise coverage (U={upper:.2f}, n={args.buckets}):")
        for row in rows:
            print(f"  step {row.step}: {row.covered}/{row.total} = {row.ratio:.4f}")

    raw_profile = build_profile(bundle.train, t=-1.0)
    trace_steps = [
        TraceSet(values=chunk, layers=source.layers)
        for source in (bundle.test_clean, bundle.test_perturbed)
        for chunk in slices(source.values, args.pieces)
    ]

    for criterion in ("nc", "kmnc", "nbc", "snac"):
        rows = cumulative_coverage(trace_steps, criterion, profile=raw_profile)
        write_growth_csv(rows, out / f"growth_{criterion}.csv")
        final = rows[-1]
        print(f"{criterion}: final {final.covered}/{final.total} = {final.ratio:.4f}")

    print(f"artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
