"""Command-line front end: ``ksdtest <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from ksdtest.errors import KSDTestError
from ksdtest.experiments import EXPERIMENTS, ExperimentConfig, run_experiment

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


def _bandwidth(text):
    if text == "median":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive float or 'median'") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return value


def _thin(text):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if value < 1:
        raise argparse.ArgumentTypeError("thin must be at least 1")
    return value


def _json_object(text):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksdtest",
        description="Kernel Stein discrepancy goodness-of-fit tests and experiments.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    add = parser.add_argument
    add("--config", help="JSON file with configuration keys; command-line flags take precedence")
    add("--target", help="target family: normal, student-t, mixture-posterior, standardized-residual")
    add("--target-params", type=_json_object, help="JSON object of extra target parameters")
    add("--kernel", choices=["rbf"])
    add("--bandwidth", type=_bandwidth, help="RBF bandwidth, or 'median' for the median heuristic")
    add("--an", dest="a_n", help="wild bootstrap flip probability (comma list for mcmc-student)")
    add("--replicates", "-D", type=int, help="number of bootstrap replicates")
    add("--alpha", type=float)
    add("--seed", type=int)
    add("--trials", type=int)
    add("--n", type=int, help="sample size per test")
    add("--d", help="dimension, or a comma list of dimensions")
    add("--dof", help="comma list of Student-t degrees of freedom (inf allowed)")
    add("--epsilons", help="comma list of austerity epsilons")
    add("--thin", type=_thin, help="thinning factor or 'auto'")
    add("--burn-in", type=float, help="fraction of each chain discarded")
    add("--proposal-sd", type=float)
    add("--input", help="sample file for the test experiment")
    add("--format", choices=["csv", "json"])
    add("--header", action="store_true", default=None, help="skip a header row in CSV input")
    add("--output", help="write the JSON report here instead of stdout")
    add("--dump-stein-matrix", metavar="PATH", help="write the Stein matrix as CSV (test only)")
    add("--fail-on-reject", action="store_true", help="exit with status 1 when the test rejects")
    add("--jobs", type=int, help="worker processes for independent trials")
    return parser


_NOT_CONFIG = {"config", "fail_on_reject"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise KSDTestError(f"{args.config}: configuration must be a JSON object")
        values.pop("experiment", None)
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        values[key] = value
    return ExperimentConfig.from_dict(values)


def _rejected(report) -> bool:
    return report["experiment"] == "test" and bool(report["results"]["reject"])


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_experiment(cfg)
        text = json.dumps(report, indent=2, allow_nan=False)
        if cfg.output:
            with open(cfg.output, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            sys.stdout.write(text + "\n")
    except (KSDTestError, OSError, ValueError, TypeError) as exc:
        print(f"ksdtest: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.fail_on_reject and _rejected(report):
        return EXIT_REJECT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
