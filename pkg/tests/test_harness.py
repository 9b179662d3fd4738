import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from infoweight.channels import RngStream
from infoweight.covariates import FiniteSupport, SphereUniform, moment_oracle
from infoweight.errors import ConfigParseError
from infoweight.harness import (
    ExperimentConfig,
    build_distribution,
    estimate_moments_mc,
    fit_loglog_slope,
    read_rows,
    run_sweep,
)
from infoweight.infomatrix import apply_f_ldp


BASE = {
    "kind": "sweep",
    "seed": 3,
    "replications": 2,
    "grid": {"T": [64]},
    "distribution": {"kind": "finite", "atoms": [[1.0], [-1.0]], "probs": [0.5, 0.5]},
    "labels": {"kind": "rademacher", "theta_star": [0.5]},
    "algorithm": {"id": "simple_ldp_1d", "alpha": 1.0},
}


def make_config(tmp_path, **overrides):
    raw = json.loads(json.dumps(BASE))
    raw.update(overrides)
    raw["out"] = str(tmp_path / "out.csv")
    return ExperimentConfig.from_dict(raw)


def test_config_validation_errors():
    with pytest.raises(ConfigParseError) as err:
        ExperimentConfig.from_dict({"kind": "nope"})
    assert err.value.field == "kind"
    with pytest.raises(ConfigParseError) as err:
        ExperimentConfig.from_dict({"kind": "sweep", "grid": {"T": [10, 10]}})
    assert err.value.field == "grid.T"
    with pytest.raises(ConfigParseError):
        ExperimentConfig.from_dict({"kind": "sweep", "replications": 0})


def test_run_sweep_row_count_and_metrics(tmp_path):
    config = make_config(tmp_path, replications=1)
    rows = run_sweep(config)
    # one trivial instance -> one row per registered metric of this estimator
    metrics = {r.metric for r in rows}
    assert metrics == {"l2_err", "sigma_err", "l1_err"}
    assert len(rows) == 3


def test_run_sweep_deterministic_csv(tmp_path):
    config = make_config(tmp_path)
    run_sweep(config)
    first = (tmp_path / "out.csv").read_bytes()
    run_sweep(config)
    second = (tmp_path / "out.csv").read_bytes()
    assert first == second
    sidecar = json.loads((tmp_path / "out.csv.config.json").read_text())
    assert sidecar["config"]["seed"] == 3
    parsed = read_rows(tmp_path / "out.csv")
    assert len(parsed) == 6  # 2 replications x 3 metrics
    assert parsed[0].as_csv() in first.decode()


def test_run_sweep_ledger_sidecar_matches_declaration(tmp_path):
    config = make_config(
        tmp_path,
        replications=1,
        distribution={"kind": "finite", "atoms": [[1.0, 0.0], [0.0, 1.0]], "probs": [0.5, 0.5]},
        labels={"kind": "rademacher", "theta_star": [0.4, 0.2]},
        algorithm={"id": "iw_regression_dp", "alpha": 0.8, "beta": 0.1, "delta": 0.05},
        grid={"T": [512]},
    )
    run_sweep(config)
    sidecar = json.loads((tmp_path / "out.csv.config.json").read_text())
    declared = list(sidecar["ledgers"].values())[0]["declared"]
    assert declared[0] <= 0.8 + 1e-12
    assert declared[1] <= 0.1 + 1e-12


def test_fit_slope_synthetic_exact():
    rows = [(t, 1.0 / math.sqrt(t)) for t in (100, 1000, 10_000, 100_000)]
    fit = fit_loglog_slope(rows)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_slope_cuberoot():
    rows = [(t, 3.7 * t ** (-1.0 / 3.0)) for t in (10, 100, 1000)]
    fit = fit_loglog_slope(rows)
    assert fit.slope == pytest.approx(-1.0 / 3.0, abs=1e-12)


def test_fit_slope_excludes_nonpositive():
    rows = [(10, 1.0), (100, 0.5), (1000, 0.25), (1000, -1.0)]
    fit = fit_loglog_slope(rows)
    assert fit.excluded == 1


def test_fit_slope_needs_three_points():
    with pytest.raises(ConfigParseError):
        fit_loglog_slope([(10, 1.0), (100, 0.5)])


def test_moment_mc_matches_exact_oracle():
    dist = build_distribution({"kind": "simple", "eigenvalues": [0.3, 0.1], "bound": 1.0})
    exact = moment_oracle(dist)
    frozen = estimate_moments_mc(dist, 200_000, RngStream(5))
    u = np.diag([1.3, 0.7])
    a = apply_f_ldp(u, 0.2, exact)
    b = apply_f_ldp(u, 0.2, frozen)
    # 3-sigma Monte-Carlo band for 2e5 samples of bounded statistics
    assert np.max(np.abs(a - b)) <= 3.0 * 2.0 / math.sqrt(200_000) * 1.3**2


def test_moment_mc_requires_enough_samples():
    with pytest.raises(ConfigParseError):
        estimate_moments_mc(SphereUniform(2, 1.0), 100, RngStream(6))


def test_moment_mc_zero_support_gives_pure_regularizer():
    dist = FiniteSupport(np.zeros((1, 2)), np.array([1.0]))
    frozen = estimate_moments_mc(dist, 10_000, RngStream(7))
    u = np.eye(2) * 0.8
    out = apply_f_ldp(u, 0.25, frozen)
    assert np.allclose(out, 0.25 * u)


def test_moment_mc_frozen_measure_is_reused():
    dist = SphereUniform(3, 1.0)
    frozen = estimate_moments_mc(dist, 10_000, RngStream(8))
    u = np.eye(3)
    assert np.array_equal(frozen.ldp_term(u), frozen.ldp_term(u))
    again = estimate_moments_mc(dist, 10_000, RngStream(8))
    assert np.array_equal(frozen.ldp_term(u), again.ldp_term(u))


def test_run_sweep_parallel_matches_serial(tmp_path):
    config = make_config(tmp_path, replications=2, grid={"T": [32, 64]})
    serial = run_sweep(config)
    config.threads = 2
    parallel = run_sweep(config)
    assert [r.as_csv() for r in serial] == [r.as_csv() for r in parallel]


def test_bandit_kind_emits_regret_rows(tmp_path):
    config = ExperimentConfig.from_dict(
        {
            "kind": "bandit",
            "seed": 1,
            "replications": 2,
            "grid": {"T": [128, 256]},
            "out": str(tmp_path / "bandit.csv"),
            "algorithm": {"id": "elimination", "alpha": 1.0, "beta": 0.05},
            "bandit": {"env": "spread", "contexts": 6, "actions": 3, "dim": 3, "horizon": 256},
        }
    )
    rows = run_sweep(config)
    assert {r.metric for r in rows} == {"regret"}
    assert len(rows) == 4


def test_cli_selftest_and_sweep(tmp_path):
    conf = tmp_path / "exp.toml"
    conf.write_text(
        'kind = "sweep"\nseed = 5\nreplications = 1\nout = "%s"\n\n'
        "[grid]\nT = [64]\n\n"
        '[distribution]\nkind = "finite"\natoms = [[1.0], [-1.0]]\nprobs = [0.5, 0.5]\n\n'
        '[labels]\nkind = "rademacher"\ntheta_star = [0.5]\n\n'
        '[algorithm]\nid = "simple_ldp_1d"\nalpha = 1.0\n' % (tmp_path / "cli.csv")
    )
    proc = subprocess.run(
        [sys.executable, "-m", "infoweight.cli", "sweep", "--config", str(conf)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cli.csv").exists()

    bad = tmp_path / "bad.toml"
    bad.write_text('kind = "regress"\n')
    proc = subprocess.run(
        [sys.executable, "-m", "infoweight.cli", "sweep", "--config", str(bad)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2


def test_alg1_rate_sweep_runtime_budget(tmp_path):
    config = make_config(
        tmp_path,
        replications=200,
        grid={"T": [1000, 10000, 100000]},
    )
    started = time.monotonic()
    rows = run_sweep(config)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    fit = fit_loglog_slope(rows, metric="l2_err")
    assert -0.6 <= fit.slope <= -0.4


def test_moment_mc_sample_count_stability():
    from infoweight.covariates import ClippedGaussian
    from infoweight.infomatrix import solve_exact

    dist = ClippedGaussian(np.diag([0.3, 0.1, 0.05]), 1.0)
    small = estimate_moments_mc(dist, 10_000, RngStream(41))
    large = estimate_moments_mc(dist, 1_000_000, RngStream(42))
    lam = 0.2
    w_small, _ = solve_exact("ldp", small, lam, tol=1e-10)
    w_large, _ = solve_exact("ldp", large, lam, tol=1e-10)
    rel = np.linalg.norm(w_small.matrix - w_large.matrix, 2) / np.linalg.norm(
        w_large.matrix, 2
    )
    assert rel <= 0.05
