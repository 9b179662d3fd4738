"""Experiment runner: TOML configs, seeded worker pool, CSV/JSON persistence,
and log-log rate fitting."""

import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bandits, estimators
from .channels import PrivacyBudget, RngStream
from .covariates import (
    ClippedGaussian,
    FiniteSupport,
    LabelMechanism,
    MomentOracle,
    ProductRademacher,
    SphereUniform,
    make_perturbed_distribution,
    make_simple_distribution,
    moment_oracle,
)
from .errors import ConfigParseError
from .infomatrix import price_of_privacy, solve_exact

METRICS = (
    "l2_err",
    "sigma_err",
    "l1_err",
    "uinv_err",
    "winv_err",
    "regret",
    "residual",
    "pop_ratio",
    "slope",
)

CSV_HEADER = "run_id,seed,T,algo,metric,value,wall_ms"

KINDS = ("solve-info", "regress", "bandit", "sweep", "separation")


def _load_toml(path):
    try:
        import tomllib as toml_reader  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - version dependent
        import tomli as toml_reader
    with open(path, "rb") as fh:
        return toml_reader.load(fh)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    replications: int = 1
    out: str = "results.csv"
    t_grid: list = field(default_factory=lambda: [1000])
    distribution: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    algorithm: dict = field(default_factory=dict)
    bandit: dict = field(default_factory=dict)
    threads: int = 1
    paper_constants: bool = False
    record_walltime: bool = False
    schema_version: int = 1

    @classmethod
    def from_dict(cls, raw):
        if raw.get("schema_version", 1) != 1:
            raise ConfigParseError("unsupported schema_version", field="schema_version")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ConfigParseError(f"kind must be one of {KINDS}, got {kind!r}", field="kind")
        t_grid = [int(t) for t in raw.get("grid", {}).get("T", raw.get("T", [1000]))]
        if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
            raise ConfigParseError("T grid must be strictly increasing", field="grid.T")
        reps = int(raw.get("replications", 1))
        if reps < 1:
            raise ConfigParseError("replications must be at least 1", field="replications")
        return cls(
            kind=kind,
            seed=int(raw.get("seed", 0)),
            replications=reps,
            out=str(raw.get("out", "results.csv")),
            t_grid=t_grid,
            distribution=dict(raw.get("distribution", {})),
            labels=dict(raw.get("labels", {})),
            algorithm=dict(raw.get("algorithm", {})),
            bandit=dict(raw.get("bandit", {})),
            threads=int(raw.get("threads", 1)),
            paper_constants=bool(raw.get("paper_constants", False)),
            record_walltime=bool(raw.get("record_walltime", False)),
        )

    @classmethod
    def from_toml(cls, path):
        return cls.from_dict(_load_toml(path))

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "replications": self.replications,
            "out": self.out,
            "grid": {"T": list(self.t_grid)},
            "distribution": self.distribution,
            "labels": self.labels,
            "algorithm": self.algorithm,
            "bandit": self.bandit,
            "threads": self.threads,
            "paper_constants": self.paper_constants,
            "record_walltime": self.record_walltime,
        }


@dataclass
class ResultRow:
    run_id: str
    seed: int
    t: int
    algo: str
    metric: str
    value: float
    wall_ms: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigParseError(f"unknown metric {self.metric!r}", field="metric")

    def as_csv(self):
        return f"{self.run_id},{self.seed},{self.t},{self.algo},{self.metric},{self.value!r},{self.wall_ms}"


def build_distribution(spec):
    kind = spec.get("kind", "simple")
    dim = int(spec.get("dim", 1))
    bound = float(spec.get("bound", 1.0))
    if kind == "simple":
        eigenvalues = np.asarray(spec.get("eigenvalues", [1.0]), dtype=float)
        if "rho_scale" in spec:
            # convenience: eigenvalues rho / sqrt(T0) for hard-instance sweeps
            eigenvalues = eigenvalues * float(spec["rho_scale"])
        return make_simple_distribution(np.diag(eigenvalues), bound)
    if kind == "finite":
        atoms = np.asarray(spec["atoms"], dtype=float)
        probs = np.asarray(spec["probs"], dtype=float)
        return FiniteSupport(atoms, probs, bound=spec.get("bound"))
    if kind == "basis-spectrum":
        head = float(spec.get("head", 0.2))
        tail = 1.0 / np.arange(2, dim + 1, dtype=float) ** float(spec.get("tail_power", 1.0))
        probs = np.concatenate([[head], (1.0 - head) * tail / tail.sum()])
        return FiniteSupport(np.eye(dim), probs, bound=1.0)
    if kind == "perturbed-simple":
        base = make_simple_distribution(np.diag(spec.get("eigenvalues", [1.0])), bound)
        return make_perturbed_distribution(base, float(spec["rho"]))
    if kind == "clipped-gaussian":
        sigma_gen = np.diag(np.asarray(spec.get("eigenvalues", [1.0] * dim), dtype=float))
        return ClippedGaussian(sigma_gen, bound)
    if kind == "sphere":
        return SphereUniform(dim, bound)
    if kind == "rademacher":
        return ProductRademacher(dim, bound)
    raise ConfigParseError(f"unknown distribution kind {kind!r}", field="distribution.kind")


def build_theta(spec, dim):
    if "theta_star" in spec:
        theta = np.asarray(spec["theta_star"], dtype=float)
        if theta.shape != (dim,):
            raise ConfigParseError("theta_star has the wrong dimension", field="labels.theta_star")
        return theta
    preset = spec.get("preset", "uniform")
    scale = float(spec.get("scale", 0.5))
    if preset == "basis":
        theta = np.zeros(dim)
        theta[int(spec.get("index", 0))] = scale
        return theta
    if preset == "uniform":
        return scale * np.ones(dim) / math.sqrt(dim)
    if preset == "inverse-sqrt":
        v = 1.0 / np.sqrt(np.arange(1, dim + 1))
        return scale * v / np.linalg.norm(v)
    if preset == "random-direction":
        v = RngStream(int(spec.get("theta_seed", 7))).normal(size=dim)
        return scale * v / np.linalg.norm(v)
    raise ConfigParseError(f"unknown theta preset {preset!r}", field="labels.preset")


def build_labels(spec, dim):
    theta = build_theta(spec, dim)
    kind = spec.get("kind", "rademacher")
    link = None
    if kind == "glm":
        link_id = spec.get("link", "logistic-scaled")
        link = (
            estimators.GlmLink.identity()
            if link_id == "identity"
            else estimators.GlmLink.logistic_scaled(float(spec.get("link_bound", 1.0)))
        )
    return LabelMechanism(
        theta,
        kind=kind,
        noise_level=float(spec.get("noise_level", 0.5)),
        link=link,
    )


def estimate_moments_mc(dist, samples, rng):
    """Frozen empirical-measure oracle for distributions without finite support."""
    if samples < 10_000:
        raise ConfigParseError("Monte-Carlo moment estimation needs >= 1e4 samples")
    return MomentOracle.from_samples(dist.sample(int(samples), rng))


def oracle_for(dist, rng, mc_samples=100_000):
    if dist.finite_support:
        return moment_oracle(dist), "exact"
    return estimate_moments_mc(dist, mc_samples, rng), "frozen-empirical"


def _budget_from(algo):
    return PrivacyBudget(float(algo.get("alpha", 1.0)), float(algo.get("beta", 0.05)))


def run_estimator(algo, data, rng, oracle=None, paper_constants=False):
    """Dispatch one estimator run from its config block."""
    name = algo["id"]
    budget = _budget_from(algo)
    delta = float(algo.get("delta", 0.05))
    if name == "simple_ldp_1d":
        return estimators.simple_ldp_1d(
            data, budget.alpha, rng, paper_constants=paper_constants
        )
    if name == "ssp_ols":
        return estimators.ssp_ols(
            data, budget, tau=algo.get("tau"), rng=rng,
            lam=float(algo.get("ridge", 1.0)), per_sample=bool(algo.get("per_sample", False)),
        )
    if name == "iw_regression_ldp":
        return estimators.iw_regression_ldp(
            data, budget, delta, rng, lam=algo.get("lam"),
            k_epochs=algo.get("k_epochs"),
            stability_check=bool(algo.get("stability_check", True)),
        )
    if name == "iw_regression_ldp_fixed_p":
        return estimators.iw_regression_ldp_fixed_p(data, oracle, budget.alpha, rng)
    if name == "iw_regression_dp":
        return estimators.iw_regression_dp(
            data, budget, delta, rng, gamma=algo.get("gamma"), lam=algo.get("lam"),
            k_epochs=algo.get("k_epochs"), mode=algo.get("mode", "l2"),
        )
    if name == "iw_regression_dp_fixed_p":
        return estimators.iw_regression_dp_fixed_p(data, oracle, budget, rng)
    if name == "glm_iw_ldp":
        link = estimators.GlmLink.logistic_scaled(1.0) if algo.get("link") != "identity" else estimators.GlmLink.identity()
        return estimators.glm_iw_ldp(data, link, budget, delta, rng, lam=algo.get("lam"))
    if name == "glm_iw_dp":
        link = estimators.GlmLink.logistic_scaled(1.0) if algo.get("link") != "identity" else estimators.GlmLink.identity()
        return estimators.glm_iw_dp(
            data, link, budget, delta, rng, gamma=algo.get("gamma"), lam=algo.get("lam")
        )
    if name == "dp_sgd":
        return estimators.dp_sgd_improper(data, budget, eta=algo.get("eta"), delta=delta, rng=rng)
    if name == "ldp_clipped_sgd":
        return estimators.ldp_clipped_sgd(
            data, budget, k_epochs=algo.get("k_epochs"), delta=delta, rng=rng,
            eta=float(algo.get("eta", 1.0)), r=float(algo.get("clip_radius", 2.0)),
            k_constant=float(algo.get("k_constant", 0.25)),
        )
    raise ConfigParseError(f"unknown algorithm id {name!r}", field="algorithm.id")


def regression_metrics(report, theta_star, oracle):
    """Standard error metrics of one estimate against the generating model."""
    delta = report.theta_hat - theta_star
    sigma = oracle.covariance()
    out = {
        "l2_err": float(np.linalg.norm(delta)),
        "sigma_err": float(delta @ sigma @ delta),
        "l1_err": float(oracle.abs_mean(delta)),
    }
    if report.weight is not None:
        weighted = np.linalg.solve(report.weight.matrix, delta)
        key = "uinv_err" if report.weight.model == "ldp" else "winv_err"
        out[key] = float(np.linalg.norm(weighted))
    return out


def _bandit_env(bandit, seed):
    env_id = bandit.get("env", "spread")
    rng = RngStream(int(bandit.get("env_seed", 91)) + seed)
    n_ctx = int(bandit.get("contexts", 48))
    n_act = int(bandit.get("actions", 5))
    dim = int(bandit.get("dim", 3))
    if env_id == "spread":
        return bandits.make_spread_env(
            n_ctx, n_act, dim, rng,
            gap_low=float(bandit.get("gap_low", 0.05)),
            gap_high=float(bandit.get("gap_high", 1.5)),
            noise_level=float(bandit.get("noise_level", 0.25)),
            even_spread=bool(bandit.get("even_spread", True)),
        )
    if env_id == "gap":
        return bandits.make_gap_env(
            n_ctx, n_act, dim, rng,
            delta_min=float(bandit.get("delta_min", 0.3)),
            noise_level=float(bandit.get("noise_level", 0.25)),
        )
    if env_id == "single":
        return bandits.make_single_action_env(dim)
    raise ConfigParseError(f"unknown bandit env {env_id!r}", field="bandit.env")


def run_bandit_replication(config, seed):
    bandit = config.bandit
    algo = config.algorithm
    budget = _budget_from(algo)
    env = _bandit_env(bandit, seed)
    horizon = int(bandit.get("horizon", config.t_grid[-1]))
    rng = RngStream(config.seed * 1_000_003 + seed)
    algo_id = algo.get("id", "elimination")
    if algo_id == "elimination":
        trace = bandits.run_elimination_bandit(
            env, budget, horizon, bandit.get("privacy_model", "jdp"),
            delta=algo.get("delta"), rng=rng,
            lam_constant=float(algo.get("lam_constant", 1.0)),
            gamma_constant=float(algo.get("gamma_constant", 1.0)),
            min_fit_rounds=int(algo.get("min_fit_rounds", 64)),
            k_epochs_dp=int(algo.get("k_epochs_dp", 4)),
            k_epochs_ldp=int(algo.get("k_epochs_ldp", 2)),
        )
    elif algo_id == "square_cb":
        oracle_kwargs = {}
        if "oracle_eta" in algo:
            oracle_kwargs["eta"] = float(algo["oracle_eta"])
        if "oracle_k_constant" in algo:
            oracle_kwargs["k_constant"] = float(algo["oracle_k_constant"])
        trace = bandits.square_cb(
            env, algo.get("oracle", "dp_sgd"), budget, horizon,
            delta=algo.get("delta"), rng=rng,
            rate_constant=float(algo.get("rate_constant", 1.0)),
            oracle_kwargs=oracle_kwargs,
        )
    else:
        raise ConfigParseError(f"unknown bandit algorithm {algo_id!r}", field="algorithm.id")
    return env, trace


def _regress_task(config, t, rep):
    algo = config.algorithm
    seed_eff = config.seed * 1_000_003 + rep * 9_176 + t % 8_191
    data_rng = RngStream(seed_eff)
    algo_rng = RngStream(seed_eff + 500_000_011)
    dist = build_distribution(config.distribution)
    labels = build_labels(config.labels, dist.dim)
    oracle, oracle_kind = oracle_for(dist, RngStream(config.seed + 131))
    from .covariates import sample_dataset

    data = sample_dataset(dist, labels, t, data_rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_estimator(algo, data, algo_rng, oracle=oracle,
                               paper_constants=config.paper_constants)
    metrics = regression_metrics(report, labels.theta_star, oracle)
    declared = report.ledger.declared_guarantee()
    return metrics, declared, oracle_kind


def _separation_task(config, t, rep):
    seed_eff = config.seed * 1_000_003 + rep * 9_176 + t % 8_191
    dist = build_distribution(config.distribution)
    labels = build_labels(config.labels, dist.dim)
    oracle, _ = oracle_for(dist, RngStream(config.seed + 131))
    budget = _budget_from(config.algorithm)
    delta = float(config.algorithm.get("delta", 0.05))
    from .covariates import sample_dataset

    data = sample_dataset(dist, labels, t, RngStream(seed_eff))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        iw = estimators.iw_regression_ldp(data, budget, delta, RngStream(seed_eff + 1))
        sp = estimators.ssp_ols(data, budget, rng=RngStream(seed_eff + 2), per_sample=True)
    return {
        "iw_regression_ldp": float(oracle.abs_mean(iw.theta_hat - labels.theta_star)),
        "ssp_ols": float(oracle.abs_mean(sp.theta_hat - labels.theta_star)),
    }


def _solve_info_task(config, t, rep):
    algo = config.algorithm
    dist = build_distribution(config.distribution)
    oracle, _ = oracle_for(dist, RngStream(config.seed + 131))
    budget = _budget_from(algo)
    lam = float(algo.get("lam", 1.0 / math.sqrt(t)))
    gamma = float(algo.get("gamma", 0.0))
    model = algo.get("model", "ldp")
    weight, trace = solve_exact(model, oracle, lam, gamma=gamma)
    out = {"residual": float(trace.residual[-1])}
    if model == "dp":
        out["pop_ratio"] = price_of_privacy(oracle, t, budget)
    return out


def execute_task(config, t, rep):
    started = time.monotonic()
    oracle_kind = None
    if config.kind in ("regress", "sweep"):
        metrics, declared, oracle_kind = _regress_task(config, t, rep)
        algo = config.algorithm["id"]
        payload = [(algo, m, v) for m, v in metrics.items()]
    elif config.kind == "separation":
        metrics = _separation_task(config, t, rep)
        declared = None
        payload = [(algo, "l1_err", v) for algo, v in metrics.items()]
    elif config.kind == "solve-info":
        metrics = _solve_info_task(config, t, rep)
        declared = None
        payload = [(config.algorithm.get("model", "ldp"), m, v) for m, v in metrics.items()]
    elif config.kind == "bandit":
        _, trace = run_bandit_replication(config, rep)
        declared = trace.ledger.declared_guarantee()
        algo_id = config.algorithm.get("id", "elimination")
        payload = [(algo_id, "regret", trace.checkpoint(min(t, len(trace.t))))]
    else:  # pragma: no cover - guarded by config validation
        raise ConfigParseError(f"unhandled kind {config.kind}")
    wall_ms = int((time.monotonic() - started) * 1000)
    return payload, declared, wall_ms, oracle_kind


def _pool_entry(args):
    config_dict, t, rep = args
    config = ExperimentConfig.from_dict(config_dict)
    return execute_task(config, t, rep)


def run_sweep(config):
    """Run the full (T grid x replications) task matrix and persist results.

    Deterministic under (config, seed): rows are emitted in task order and
    wall-times are recorded only when the config opts in.
    """
    tasks = [(t, rep) for t in config.t_grid for rep in range(config.replications)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(
                pool.map(_pool_entry, [(config.to_dict(), t, rep) for t, rep in tasks])
            )
    else:
        outcomes = [execute_task(config, t, rep) for t, rep in tasks]

    rows = []
    ledger_log = {}
    for (t, rep), (payload, declared, wall_ms, oracle_kind) in zip(tasks, outcomes):
        run_id = f"{config.kind}-T{t}-r{rep}"
        for algo, metric, value in payload:
            rows.append(
                ResultRow(
                    run_id, config.seed, t, algo, metric, float(value),
                    wall_ms if config.record_walltime else 0,
                )
            )
        if declared is not None:
            entry = {"declared": list(declared)}
            if oracle_kind is not None:
                entry["moment_oracle"] = oracle_kind
            ledger_log[run_id] = entry

    out = config.out
    if out:
        write_rows(out, rows)
        sidecar = {
            "config": config.to_dict(),
            "ledgers": ledger_log,
            "rows": len(rows),
        }
        with open(out + ".config.json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
    return rows


def write_rows(path, rows):
    """Atomically write result rows as a schema-conformant CSV."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")
    os.replace(tmp, str(path))


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    excluded: int = 0


def fit_loglog_slope(rows, metric=None):
    """Least-squares slope of log(median value) against log T.

    Accepts ResultRow lists or (T, value) pairs; nonpositive values are
    excluded and counted.
    """
    if metric is not None:
        pairs = [(r.t, r.value) for r in rows if r.metric == metric]
    elif rows and isinstance(rows[0], ResultRow):
        pairs = [(r.t, r.value) for r in rows]
    else:
        pairs = [(t, v) for t, v in rows]
    excluded = sum(1 for _, v in pairs if v <= 0)
    pairs = [(t, v) for t, v in pairs if v > 0]
    by_t = {}
    for t, v in pairs:
        by_t.setdefault(t, []).append(v)
    if len(by_t) < 3:
        raise ConfigParseError("slope fitting needs at least 3 distinct T values")
    ts = np.array(sorted(by_t))
    meds = np.array([float(np.median(by_t[t])) for t in ts])
    x = np.log(ts)
    y = np.log(meds)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return SlopeFit(float(slope), float(intercept), r2, excluded)


def read_rows(path):
    """Parse a results CSV back into ResultRow objects."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ConfigParseError(f"unexpected CSV header {header!r}")
        for line in fh:
            run_id, seed, t, algo, metric, value, wall = line.strip().split(",")
            rows.append(ResultRow(run_id, int(seed), int(t), algo, metric, float(value), int(wall)))
    return rows
