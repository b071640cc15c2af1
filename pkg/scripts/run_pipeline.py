"""End-to-end demo: synthetic fixture, both surprise kinds, detection, ordering.

Generates a two-class toy fixture (or reuses one), scores the clean and
perturbed test sets with LSA and DSA, fits the misbehaviour detector on both,
and writes the retraining-order artifacts. Everything lands under --out.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from surprisal.detect import detection_experiment
from surprisal.dsa import build_class_index, dsa_batch
from surprisal.guide import four_range_plan, sa_order_curve, write_curve_csv, write_plan_json
from surprisal.lsa import build_profile, fit_kde, lsa_batch
from surprisal.toynet import make_fixture


def parse_args(argv):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("pipeline_out"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-train", type=int, default=1000)
    parser.add_argument("--n-test", type=int, default=500)
    parser.add_argument("--train-per-class", type=int, default=100,
                        help="detector training rows per side")
    parser.add_argument("--curve-steps", type=int, default=10)
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    print(f"building fixture (seed={args.seed}) ...")
    bundle = make_fixture(out / "fixture", seed=args.seed,
                          n_train=args.n_train, n_test=args.n_test)

    profile = build_profile(bundle.train)
    models = fit_kde(bundle.train, profile)
    index = build_class_index(bundle.train)

    reports = {
        ("lsa", "clean"): lsa_batch(models, bundle.test_clean, profile),
        ("lsa", "perturbed"): lsa_batch(models, bundle.test_perturbed, profile),
        ("dsa", "clean"): dsa_batch(index, bundle.test_clean),
        ("dsa", "perturbed"): dsa_batch(index, bundle.test_perturbed),
    }
    for (kind, split), report in reports.items():
        report.write_csv(out / f"{kind}_{split}.csv")
        mean = float(np.mean(report.clean_values()))
        print(f"  {kind:>3} {split:<9} mean {mean:9.4f}  rows {len(report.ids)}")

    print("detection:")
    detect_summary = {}
    for kind in ("lsa", "dsa"):
        result = detection_experiment(
            reports[(kind, "clean")].clean_values(),
            reports[(kind, "perturbed")].clean_values(),
            train_per_class=args.train_per_class,
            seed=args.seed,
        )
        detect_summary[kind] = result.summary()
        print(f"  {kind}: test auc {result.test_auc:.4f} "
              f"(summary {detect_summary[kind]})")
    (out / "detection.json").write_text(json.dumps(detect_summary, indent=2) + "\n")

    correctness = (bundle.test_clean.predicted == bundle.test_clean.ground_truth)
    correctness = correctness.astype(np.int64)
    for kind in ("lsa", "dsa"):
        report = reports[(kind, "clean")]
        for direction in ("ascending", "descending"):
            curve = sa_order_curve(report, correctness, direction=direction,
                                   steps=args.curve_steps, seed=args.seed)
            write_curve_csv(curve, out / f"curve_{kind}_{direction}.csv")
        print(f"  {kind} ordering curves written")

    # Range-based sampling needs a positive upper bound; the perturbed DSA
    # report always has one, clean LSA may not (scores can be negative).
    pert_dsa = reports[("dsa", "perturbed")]
    upper = float(np.max(pert_dsa.clean_values()))
    plan = four_range_plan(pert_dsa, upper_bound=upper, count=25, seed=args.seed)
    write_plan_json(plan, out / "plan_dsa_perturbed.json")
    for label in sorted(plan):
        entry = plan[label]
        flag = " (shortfall)" if entry.shortfall else ""
        print(f"  range {label}: {len(entry.ids)} sampled of "
              f"{entry.qualifying} qualifying{flag}")

    print(f"artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
