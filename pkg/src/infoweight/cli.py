"""Command-line entry point for the experiment harness."""

import argparse
import sys

import numpy as np

from .channels import PrivacyBudget, RngStream, gauss_priv
from .covariates import FiniteSupport, LabelMechanism, moment_oracle, sample_dataset
from .errors import ConfigParseError, ConfigurationError, InfoWeightError
from .estimators import iw_regression_dp, simple_ldp_1d
from .harness import ExperimentConfig, fit_loglog_slope, run_sweep
from .infomatrix import solve_exact

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="infoweight",
        description="Information-weighted private regression experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve-info", "regress", "bandit", "sweep", "separation"):
        cmd = sub.add_parser(name, help=f"run a {name} experiment from a TOML config")
        cmd.add_argument("--config", required=True, help="path to the experiment TOML")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output CSV path")
        cmd.add_argument("--paper-constants", action="store_true",
                         help="use the manuscript-style Laplace scale in the 1-d estimator")
        cmd.add_argument("--threads", type=int, default=None, help="worker pool size")
    sub.add_parser("selftest", help="run a fast built-in correctness battery")
    return parser


def _run_experiment(args):
    config = ExperimentConfig.from_toml(args.config)
    if args.command != config.kind:
        raise ConfigParseError(
            f"config kind {config.kind!r} does not match subcommand {args.command!r}",
            field="kind",
        )
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.threads is not None:
        config.threads = args.threads
    if args.paper_constants:
        config.paper_constants = True
    rows = run_sweep(config)
    print(f"wrote {len(rows)} rows to {config.out}")
    if config.kind in ("sweep", "separation") and len(config.t_grid) >= 3:
        metrics = sorted({r.metric for r in rows})
        for metric in metrics:
            try:
                fit = fit_loglog_slope(rows, metric=metric)
            except ConfigParseError:
                continue
            print(f"{metric}: slope={fit.slope:.3f} r2={fit.r2:.3f}")
    return EXIT_OK


def _selftest():
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except AssertionError as exc:
            checks.append((name, False, str(exc)))

    def solver_fixed_point():
        oracle = moment_oracle(FiniteSupport(np.array([[1.0]]), np.array([1.0])))
        weight, _ = solve_exact("ldp", oracle, 0.5, tol=1e-10)
        assert abs(weight.matrix[0, 0] - 2.0 / 3.0) < 1e-8, "fixed point off"

    def channel_calibration():
        budget = PrivacyBudget(1.0, 0.05)
        draws = gauss_priv(np.zeros(40_000), 1.0, budget, RngStream(1))
        assert abs(np.std(draws) / budget.sigma - 1.0) < 0.03, "calibration off"

    def one_d_estimator():
        dist = FiniteSupport(np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))
        labels = LabelMechanism(np.array([0.5]), kind="rademacher")
        data = sample_dataset(dist, labels, 40_000, RngStream(2))
        report = simple_ldp_1d(data, 1.0, RngStream(3))
        assert abs(report.theta_hat[0] - 0.5) < 0.15, "1-d estimate off"

    def dp_regression():
        dist = FiniteSupport(np.eye(3), np.full(3, 1.0 / 3.0))
        labels = LabelMechanism(np.array([0.4, -0.2, 0.5]), kind="rademacher")
        data = sample_dataset(dist, labels, 20_000, RngStream(4))
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = iw_regression_dp(data, PrivacyBudget(1.0, 0.05), 0.05, RngStream(5))
        err = np.linalg.norm(report.theta_hat - labels.theta_star)
        assert err < 0.3, f"dp regression error {err:.3f}"

    check("exact-solver-fixed-point", solver_fixed_point)
    check("gaussian-channel-calibration", channel_calibration)
    check("one-dimensional-estimator", one_d_estimator)
    check("dp-iw-regression", dp_regression)

    failed = 0
    for name, ok, msg in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + msg if msg else ''}")
        failed += not ok
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return _selftest()
        return _run_experiment(args)
    except (ConfigParseError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfoWeightError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
