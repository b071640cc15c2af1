"""Command-line surface for the surprise-adequacy pipeline.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
input files, degenerate configurations). Per-input reports go to CSV with a
provenance comment; scalar summaries go to JSON. Identical arguments over
identical files produce byte-identical outputs; SURPRISAL_THREADS caps the
worker threads used for batch scoring.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import coverage as cov
from .detect import DEFAULT_TRAIN_PER_CLASS, detection_experiment
from .dsa import build_class_index, dsa_batch
from .errors import SurprisalError
from .guide import (
    DEFAULT_SAMPLE_COUNT,
    four_range_plan,
    sa_order_curve,
    write_curve_csv,
    write_plan_json,
)
from .lsa import DEFAULT_VARIANCE_THRESHOLD, build_profile, fit_kde, lsa_batch
from .report import read_report_csv
from .toynet import make_fixture
from .trace_io import load_traceset
from .traces import NeuronSelector, select_columns


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"usage error: {message}", file=sys.stderr)
        raise SystemExit(1)


class UsageError(Exception):
    """Flag combination that argparse alone cannot reject."""


def _workers() -> int | None:
    raw = os.environ.get("SURPRISAL_THREADS", "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise SurprisalError(f"SURPRISAL_THREADS must be an integer, got {raw!r}")
    return value if value > 1 else None


def _selector(args) -> NeuronSelector:
    if getattr(args, "layer", None):
        return NeuronSelector.single_layer(args.layer)
    if getattr(args, "columns", None):
        return NeuronSelector.explicit_columns(
            int(c) for c in args.columns.split(",") if c.strip() != ""
        )
    return NeuronSelector.all_neurons()


def _add_selector_flags(sub):
    group = sub.add_mutually_exclusive_group()
    group.add_argument("--layer", help="restrict to one named layer")
    group.add_argument("--columns", help="restrict to a comma-separated column list")


def _cmd_lsa(args) -> int:
    train = load_traceset(args.train)
    test = load_traceset(args.test)
    profile = build_profile(train, _selector(args), t=args.t)
    per_class = args.per_class != "off"
    label_source = args.per_class if per_class else "predicted"
    models = fit_kde(train, profile, per_class=per_class, label_source=label_source)
    report = lsa_batch(
        models,
        test,
        profile,
        class_of_query=label_source if per_class else "unconditioned",
        workers=_workers(),
    )
    report.write_csv(args.output)
    print(f"lsa: wrote {report.num_rows} rows to {args.output}")
    return 0


def _cmd_dsa(args) -> int:
    train = load_traceset(args.train)
    test = load_traceset(args.test)
    index = build_class_index(train, _selector(args), label_source=args.label_source)
    report = dsa_batch(
        index, test, label_source=args.label_source,
        exclude_self=args.exclude_self, workers=_workers(),
    )
    report.write_csv(args.output)
    print(f"dsa: wrote {report.num_rows} rows to {args.output}")
    return 0


def _load_sa_values(path: str) -> np.ndarray:
    return read_report_csv(path).clean_values()


def _cmd_coverage(args) -> int:
    criterion = {"lsc": "sc", "dsc": "sc"}.get(args.criterion, args.criterion)
    profile = None
    bucket_config = None
    if criterion == "sc":
        if args.sa_file is None:
            raise UsageError("criterion needs --sa-file with a surprise report")
        steps = [_load_sa_values(args.sa_file)] + [_load_sa_values(p) for p in args.add]
        ub = args.ub
        if ub is None and args.ub_from_report:
            ub = cov.suggest_upper_bound(
                _load_sa_values(args.ub_from_report), args.ub_percentile
            )
            print(f"coverage: suggested upper bound {ub!r} "
                  f"({args.ub_percentile}th percentile of {args.ub_from_report})")
        if ub is None:
            raise UsageError("bucketed coverage needs --ub (or --ub-from-report)")
        bucket_config = cov.BucketConfig(upper_bound=ub, bucket_count=args.n)
    else:
        if args.test is None:
            raise UsageError(f"criterion {args.criterion!r} needs --test manifests")
        steps = [load_traceset(args.test)] + [load_traceset(p) for p in args.add]
        sel = _selector(args)
        if criterion == "nc":
            if sel.mode != "all":
                steps = [select_columns(s, sel) for s in steps]
        else:
            if args.train is None:
                raise UsageError(f"criterion {args.criterion!r} needs --train for ranges")
            # t=-1 keeps every selected neuron: range criteria use no variance mask.
            profile = build_profile(load_traceset(args.train), sel, t=-1.0)

    rows = cov.cumulative_coverage(
        steps, criterion, bucket_config=bucket_config, profile=profile,
        threshold=args.th, scaling=args.scaling, k=args.k,
    )
    last = rows[-1]
    print(f"{args.criterion}: ratio {last.ratio!r} ({last.covered}/{last.total})")
    if args.output:
        cov.write_growth_csv(rows, args.output)
        print(f"coverage: wrote {len(rows)} step(s) to {args.output}")
    return 0


def _cmd_detect(args) -> int:
    result = detection_experiment(
        _load_sa_values(args.sa_file),
        _load_sa_values(args.sa_file_adv),
        train_per_class=args.train_per_class,
        seed=args.seed,
    )
    doc = result.summary()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"detect: auc {doc['auc']!r}, wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_sample(args) -> int:
    report = read_report_csv(args.report)
    ub = args.ub
    if ub is None:
        raise UsageError("sampling needs --ub, the surprise upper bound")
    plan = four_range_plan(report, ub, count=args.count, seed=args.seed)
    write_plan_json(plan, args.output)
    sizes = {label: len(result.ids) for label, result in plan.items()}
    print(f"sample: wrote {sizes} to {args.output}")
    return 0


def _cmd_curve(args) -> int:
    report = read_report_csv(args.report)
    test = load_traceset(args.test)
    correctness = (test.labels("predicted") == test.labels("ground_truth")).astype(np.int64)
    points = sa_order_curve(
        report, correctness, direction=args.direction, steps=args.steps, seed=args.seed
    )
    write_curve_csv(points, args.output)
    print(f"curve: wrote {len(points)} points to {args.output}")
    return 0


def _cmd_fixture(args) -> int:
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip() != "")
    bundle = make_fixture(
        args.out,
        seed=args.seed,
        n_train=args.n_train,
        n_test=args.n_test,
        n_classes=args.classes,
        d_in=args.d_in,
        hidden=hidden,
        perturbation=args.perturbation,
    )
    doc = {name: str(path) for name, path in bundle.paths.items()}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="surprisal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lsa", parents=[], help="likelihood-based surprise report")
    p.add_argument("--train", required=True, help="training manifest JSON")
    p.add_argument("--test", required=True, help="query manifest JSON")
    _add_selector_flags(p)
    p.add_argument("--t", type=float, default=DEFAULT_VARIANCE_THRESHOLD,
                   help="variance threshold for neuron filtering")
    p.add_argument("--per-class", default="predicted",
                   choices=["predicted", "ground_truth", "off"],
                   help="label source for class routing, or 'off' for one model")
    p.add_argument("-o", "--output", required=True, help="report CSV path")
    p.set_defaults(func=_cmd_lsa)

    p = sub.add_parser("dsa", help="distance-based surprise report")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    _add_selector_flags(p)
    p.add_argument("--label-source", default="predicted",
                   choices=["predicted", "ground_truth"])
    p.add_argument("--exclude-self", action="store_true",
                   help="queries are the training rows themselves; skip self-matches")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_dsa)

    p = sub.add_parser("coverage", help="surprise or activation coverage")
    p.add_argument("--criterion", required=True,
                   choices=["sc", "lsc", "dsc", "nc", "kmnc", "nbc", "snac"])
    p.add_argument("--sa-file", help="surprise report CSV (sc/lsc/dsc)")
    p.add_argument("--train", help="training manifest (kmnc/nbc/snac ranges)")
    p.add_argument("--test", help="trace manifest (nc/kmnc/nbc/snac)")
    p.add_argument("--add", action="append", default=[],
                   help="additional step (repeatable) for cumulative coverage")
    _add_selector_flags(p)
    p.add_argument("--n", type=int, default=1000, help="bucket count for sc")
    p.add_argument("--ub", type=float, help="surprise upper bound for sc")
    p.add_argument("--ub-from-report", help="derive --ub from this report's percentile")
    p.add_argument("--ub-percentile", type=float, default=99.0)
    p.add_argument("--k", type=int, default=cov.DEFAULT_SECTIONS, help="sections for kmnc")
    p.add_argument("--th", type=float, default=cov.DEFAULT_NC_THRESHOLD,
                   help="activation threshold for nc")
    p.add_argument("--scaling", default="minmax", choices=["minmax", "raw"])
    p.add_argument("-o", "--output", help="growth table CSV")
    p.set_defaults(func=_cmd_coverage)

    p = sub.add_parser("detect", help="adversarial detection from surprise reports")
    p.add_argument("--sa-file", required=True, help="report CSV for original inputs")
    p.add_argument("--sa-file-adv", required=True, help="report CSV for adversarial inputs")
    p.add_argument("--train-per-class", type=int, default=DEFAULT_TRAIN_PER_CLASS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="JSON summary path (stdout when omitted)")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("sample", help="nested-range sampling plan from a report")
    p.add_argument("--report", required=True, help="surprise report CSV")
    p.add_argument("--ub", type=float, help="surprise upper bound U")
    p.add_argument("--count", type=int, default=DEFAULT_SAMPLE_COUNT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="plan JSON path")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("curve", help="accuracy-versus-surprise order curve")
    p.add_argument("--report", required=True, help="surprise report CSV")
    p.add_argument("--test", required=True,
                   help="test manifest with both predicted and ground-truth labels")
    p.add_argument("--direction", default="ascending",
                   choices=["ascending", "descending", "random"])
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="curve CSV path")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("fixture", help="generate a deterministic end-to-end fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--d-in", type=int, default=12)
    p.add_argument("--hidden", default="10", help="comma-separated hidden sizes")
    p.add_argument("--perturbation", type=float, default=0.5,
                   help="shift toward another class center, in inter-center distances")
    p.set_defaults(func=_cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SurprisalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
