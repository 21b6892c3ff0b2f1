"""Command-line entry point: ``fapp run | compare | gen-reference | qp-check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .baseline import TimedReference
from .errors import ConfigError, MissingEpisode
from .config import ExperimentConfig
from .experiment import compare, generate_nominal_reference, load_metrics, run_episode, write_outputs
from .qp import run_qp_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EPISODE = 3


def _cmd_run(args):
    config = ExperimentConfig.load(args.config)
    if args.controller:
        config = replace(config, controller=args.controller)
    reference = TimedReference.from_csv(args.reference) if args.reference else None
    result = run_episode(config, reference)
    write_outputs(result, args.out)
    print(result.metrics.to_json())
    return EXIT_EPISODE if result.metrics.failed else EXIT_OK


def _cmd_compare(args):
    try:
        report = compare(load_metrics(args.a), load_metrics(args.b))
    except MissingEpisode as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EPISODE
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_gen_reference(args):
    config = ExperimentConfig.load(args.config)
    reference = generate_nominal_reference(config)
    reference.to_csv(args.out)
    print(f"wrote {len(reference)} reference samples to {args.out}")
    return EXIT_OK


def _cmd_qp_check(args):
    report = run_qp_check(instances=args.instances, seed=args.seed)
    print(f"{'PASS' if report.passed else 'FAIL'}: {report}")
    return EXIT_OK if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="fapp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one episode and write its outputs")
    run.add_argument("--config", required=True)
    run.add_argument("--controller", choices=("fapp", "baseline"))
    run.add_argument("--out", required=True)
    run.add_argument("--reference", help="nominal reference CSV for the baseline")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare the metrics of two episode directories")
    cmp_.add_argument("--a", required=True)
    cmp_.add_argument("--b", required=True)
    cmp_.set_defaults(func=_cmd_compare)

    gen = sub.add_parser("gen-reference", help="record the nominal FAPP reference")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_reference)

    qp = sub.add_parser("qp-check", help="check the QP solver against active-set enumeration")
    qp.add_argument("--instances", type=int, default=100)
    qp.add_argument("--seed", type=int, default=0)
    qp.set_defaults(func=_cmd_qp_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
