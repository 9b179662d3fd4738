"""Contextual-bandit environments and the private bandit algorithms:
epoch-based action elimination over barycentric spanners (central and local
privacy) and inverse-gap-weighted exploration with private regression oracles.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import PrivacyLedger
from .errors import InfoWeightError
from .covariates import Dataset
from .estimators import dp_sgd_improper, iw_regression_dp, iw_regression_ldp, ldp_clipped_sgd


# ------------------------------------------------------------- environments


class BanditEnv:
    """Finite-context environment backed by feature and reward tables.

    features[c, a] is the feature vector of action a under context c; the mean
    reward is f_star[c, a] and realized rewards add symmetric bounded noise
    that keeps them inside [-1, 1].
    """

    def __init__(self, context_probs, features, theta_star, noise_level=0.25, link=None):
        self.context_probs = np.asarray(context_probs, dtype=float)
        self.features = np.asarray(features, dtype=float)
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.noise_level = float(noise_level)
        self.link = link
        raw = self.features @ self.theta_star
        self.f_star = link.evaluate(raw) if link is not None else raw
        if np.max(np.abs(self.f_star)) > 1.0 + 1e-9:
            raise ValueError("mean rewards must stay inside [-1, 1]")
        self.n_contexts, self.n_actions, self.dim = self.features.shape
        self.bound = float(np.max(np.linalg.norm(self.features, axis=2)))

    @property
    def d_action(self):
        """Largest per-context dimension of the action feature set."""
        return max(
            int(np.linalg.matrix_rank(self.features[c])) for c in range(self.n_contexts)
        )

    def optimal_values(self):
        return self.f_star.max(axis=1)

    def min_gap(self):
        """Smallest positive reward gap across contexts (inf if none)."""
        best = self.f_star.max(axis=1, keepdims=True)
        gaps = best - self.f_star
        positive = gaps[gaps > 1e-12]
        return float(positive.min()) if positive.size else math.inf

    def sample_contexts(self, n, rng):
        return rng.choice(self.n_contexts, size=n, p=self.context_probs)

    def sample_rewards(self, contexts, actions, rng):
        means = self.f_star[contexts, actions]
        radius = np.minimum(self.noise_level, 1.0 - np.abs(means))
        return means + rng.uniform(-1.0, 1.0, size=len(means)) * radius


def _embed_direction(c_val, d, rng, angle=None):
    """Unit vector with first coordinate c_val; the rest either points at a
    prescribed planar angle (d = 3) or in a random direction."""
    if angle is not None and d == 3:
        rest = np.array([math.cos(angle), math.sin(angle)])
    else:
        rest = rng.normal(size=d - 1)
        rest /= max(np.linalg.norm(rest), 1e-12)
    return np.concatenate([[c_val], math.sqrt(max(1.0 - c_val**2, 0.0)) * rest])


def make_spread_env(
    n_contexts,
    n_actions,
    dim,
    rng,
    gap_low=0.05,
    gap_high=1.5,
    signal=0.9,
    noise_level=0.25,
    even_spread=False,
):
    """Environment whose per-context best-arm gaps are log-uniform.

    The parameter is signal * e1, so the first feature coordinate carries the
    mean reward and the remaining coordinates spread the actions across all of
    R^dim for estimation.  even_spread=True places the residual coordinates at
    evenly spaced angles (dim = 3), which keeps every exploration covariance
    well conditioned.
    """
    theta = np.zeros(dim)
    theta[0] = signal
    top = 0.95
    g = rng.generator if hasattr(rng, "generator") else rng
    features = np.zeros((n_contexts, n_actions, dim))
    for c in range(n_contexts):
        best = int(g.integers(n_actions))
        gaps = np.exp(g.uniform(math.log(gap_low), math.log(gap_high), size=n_actions))
        gaps[best] = 0.0
        phase = float(g.uniform(0.0, 2.0 * math.pi))
        for a in range(n_actions):
            c_val = top - gaps[a] / signal
            c_val = max(c_val, -0.95)
            angle = phase + 2.0 * math.pi * a / n_actions if even_spread else None
            features[c, a] = _embed_direction(c_val, dim, g, angle=angle)
    probs = np.full(n_contexts, 1.0 / n_contexts)
    return BanditEnv(probs, features, theta, noise_level=noise_level)


def make_gap_env(n_contexts, n_actions, dim, rng, delta_min=0.3, signal=0.9, noise_level=0.25):
    """Environment with a certified minimum gap between best and other arms."""
    theta = np.zeros(dim)
    theta[0] = signal
    top = 0.95
    g = rng.generator if hasattr(rng, "generator") else rng
    features = np.zeros((n_contexts, n_actions, dim))
    for c in range(n_contexts):
        best = int(g.integers(n_actions))
        for a in range(n_actions):
            if a == best:
                gap = 0.0
            else:
                gap = delta_min * (1.0 + float(g.uniform(0.0, 2.0)))
            c_val = max(top - gap / signal, -0.95)
            features[c, a] = _embed_direction(c_val, dim, g)
    probs = np.full(n_contexts, 1.0 / n_contexts)
    env = BanditEnv(probs, features, theta, noise_level=noise_level)
    assert env.min_gap() >= delta_min - 1e-9
    return env


def make_single_action_env(dim=2):
    features = np.zeros((1, 1, dim))
    features[0, 0, 0] = 1.0
    return BanditEnv(np.array([1.0]), features, np.zeros(dim), noise_level=0.1)


# ------------------------------------------------------------------ spanner


def barycentric_spanner(vectors, c=2.0, max_sweeps=100):
    """Indices of an approximate barycentric spanner of the input vectors.

    Runs the iterative determinant-doubling construction inside the span of
    the inputs, so the result has at most rank-many elements and every input
    is a [-c, c]-combination of the selected vectors.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = vectors.shape[0]
    if n == 1:
        return [0]
    u, s, _ = np.linalg.svd(vectors.T, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    if rank == 0:
        return [0]
    basis = u[:, :rank]
    coords = vectors @ basis  # (n, rank)

    mat = np.eye(rank)
    chosen = [-1] * rank
    for i in range(rank):
        dets = np.empty(n)
        for j in range(n):
            trial = mat.copy()
            trial[:, i] = coords[j]
            dets[j] = abs(np.linalg.det(trial))
        best = int(np.argmax(dets))
        mat[:, i] = coords[best]
        chosen[i] = best

    for _ in range(max_sweeps):
        improved = False
        base = abs(np.linalg.det(mat))
        for i in range(rank):
            for j in range(n):
                if j in chosen:
                    continue
                trial = mat.copy()
                trial[:, i] = coords[j]
                if abs(np.linalg.det(trial)) > c * base:
                    mat[:, i] = coords[j]
                    chosen[i] = j
                    base = abs(np.linalg.det(mat))
                    improved = True
        if not improved:
            break
    return sorted(set(chosen))


def spanner_coefficients(vectors, indices):
    """Least-squares coefficients expressing every vector over the spanner."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    span = vectors[indices]
    coef, *_ = np.linalg.lstsq(span.T, vectors.T, rcond=None)
    residual = vectors.T - span.T @ coef
    return coef.T, float(np.max(np.abs(residual)))


# -------------------------------------------------------------- elimination


def eliminate(survivors, f_hat, ci, restrict_to_survivors=False):
    """One elimination round: keep survivors whose upper bound reaches the
    best lower bound; the surviving upper-bound argmax is never dropped."""
    survivors = np.asarray(survivors, dtype=bool)
    f_hat = np.asarray(f_hat, dtype=float)
    ci = np.asarray(ci, dtype=float)
    if not survivors.any():
        raise ValueError("survivor set must be nonempty")
    lower = f_hat - ci
    pool = survivors if restrict_to_survivors else np.ones_like(survivors)
    threshold = lower[pool].max()
    keep = survivors & (f_hat + ci >= threshold)
    if not keep.any():
        upper = np.where(survivors, f_hat + ci, -np.inf)
        keep = np.zeros_like(survivors)
        keep[int(np.argmax(upper))] = True
    return keep


@dataclass
class RegretTrace:
    """Per-round regret record of one bandit run."""

    t: np.ndarray
    actions: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    epoch: np.ndarray
    switches: np.ndarray
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)
    diagnostics: dict = field(default_factory=dict)

    def checkpoint(self, t):
        return float(self.cum_regret[t - 1])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,regret,cum_regret,epoch,switches\n")
            for i in range(len(self.t)):
                fh.write(
                    f"{int(self.t[i])},{float(self.inst_regret[i])!r},"
                    f"{float(self.cum_regret[i])!r},{int(self.epoch[i])},"
                    f"{int(self.switches[i])}\n"
                )


def doubling_schedule(horizon):
    """Epoch start times 2^(j+1) - 1, clipped to the horizon."""
    starts = [1]
    j = 1
    while starts[-1] < horizon + 1:
        starts.append(min(2 ** (j + 1) - 1, horizon + 1))
        j += 1
    return starts


def _plan_context(env, estimates, ctx, restrict_to_survivors):
    """Survivor mask, spanner support, and action probabilities for one context.

    Computed lazily per (epoch, context): only contexts actually drawn in an
    epoch are ever planned.
    """
    n_a = env.n_actions
    mask = np.ones(n_a, dtype=bool)
    for f_hat, ci in estimates:
        mask = eliminate(mask, f_hat[ctx], ci[ctx], restrict_to_survivors)
    idx = np.flatnonzero(mask)
    span_local = barycentric_spanner(env.features[ctx, idx])
    span = idx[span_local]
    probs = np.zeros(n_a)
    probs[span] = 1.0 / len(span)
    amplification = 0.0
    if estimates:
        ci_last = estimates[-1][1][ctx]
        mean_ci = float(ci_last[span].mean())
        if mean_ci > 0:
            amplification = float(ci_last[idx].max()) / (len(span) * mean_ci)
    return mask, probs, amplification


def _sample_from_rows(prob_rows, rng):
    """Sample one category per row of a stochastic matrix."""
    cdf = np.cumsum(prob_rows, axis=1)
    u = rng.uniform(size=prob_rows.shape[0])
    return (u[:, None] < cdf).argmax(axis=1)


def run_elimination_bandit(
    env,
    budget,
    horizon,
    privacy_model,
    delta=None,
    rng=None,
    schedule=None,
    lam_constant=1.0,
    gamma_constant=1.0,
    restrict_to_survivors=False,
    min_fit_rounds=64,
    k_epochs_dp=4,
    k_epochs_ldp=2,
    zero_noise=False,
):
    """Epoch-based private action elimination with spanner exploration.

    Per epoch: plan (lazily, per drawn context) by eliminating with all
    previous confidence estimates and playing uniformly on a barycentric
    spanner of the survivors; then fit the epoch's data with the
    information-weighted regression for the chosen privacy model and refresh
    (f_hat, ci).  Estimator failures carry the previous policy forward.
    zero_noise disables the privatization inside the estimators (non-private
    ablation baseline).
    """
    if privacy_model not in ("jdp", "ldp"):
        raise ValueError("privacy_model must be 'jdp' or 'ldp'")
    delta = 1.0 / horizon if delta is None else delta
    starts = schedule or doubling_schedule(horizon)
    d = env.dim
    d_act = env.d_action
    log_term = math.log(1.0 / delta)

    t_arr = np.arange(1, horizon + 1)
    actions = np.zeros(horizon, dtype=int)
    inst = np.zeros(horizon)
    epoch_of = np.zeros(horizon, dtype=int)
    switches = np.zeros(horizon, dtype=int)
    ledger = PrivacyLedger()
    optimal = env.optimal_values()
    best_arm = env.f_star.argmax(axis=1)

    estimates = []  # list of (f_hat table, ci table)
    fit_failures = 0
    amplification = 0.0
    switch_count = 0
    opt_survived = True
    estimates_dirty = True

    for j in range(len(starts) - 1):
        lo, hi = starts[j], min(starts[j + 1], horizon + 1)
        if lo > horizon:
            break
        n_j = hi - lo
        ctx = env.sample_contexts(n_j, rng.child(3 * j))
        uniq = np.unique(ctx)
        policy = np.zeros((env.n_contexts, env.n_actions))
        for c in uniq:
            mask, probs, amp = _plan_context(env, estimates, int(c), restrict_to_survivors)
            policy[c] = probs
            amplification = max(amplification, amp)
            if not mask[best_arm[c]]:
                opt_survived = False
        if estimates_dirty:
            switch_count += 1
            estimates_dirty = False

        acts = _sample_from_rows(policy[ctx], rng.child(3 * j + 1))
        rewards = env.sample_rewards(ctx, acts, rng.child(3 * j + 2))
        sl = slice(lo - 1, hi - 1)
        actions[sl] = acts
        inst[sl] = optimal[ctx] - env.f_star[ctx, acts]
        epoch_of[sl] = j
        switches[sl] = switch_count

        if n_j < min_fit_rounds:
            continue
        feats = env.features[ctx, acts]
        data = Dataset(feats, rewards, {"bound": env.bound})
        fit_rng = rng.child(1000 + j)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if privacy_model == "jdp":
                    lam_j = lam_constant * math.sqrt(d_act * log_term / n_j)
                    gamma_j = gamma_constant * (
                        budget.sigma * math.sqrt(d + log_term) + log_term
                    ) / (lam_j * n_j)
                    report = iw_regression_dp(
                        data, budget, delta, fit_rng, gamma=gamma_j, lam=lam_j,
                        k_epochs=k_epochs_dp, zero_noise=zero_noise,
                    )
                else:
                    lam_j = lam_constant * budget.sigma * env.bound * math.sqrt(
                        (d + log_term) / n_j
                    )
                    report = iw_regression_ldp(
                        data, budget, delta, fit_rng, lam=lam_j,
                        k_epochs=k_epochs_ldp, stability_check=False,
                        zero_noise=zero_noise,
                    )
        except (InfoWeightError, ValueError) as exc:
            fit_failures += 1
            ledger.record(f"epoch-{j}/failed:{type(exc).__name__}", 0.0, 0.0, 0.0, f"epoch-{j}")
            continue
        for entry in report.ledger.entries:
            ledger.record(
                entry.mechanism, entry.alpha, entry.beta, entry.sensitivity,
                f"epoch-{j}/{entry.scope}", entry.count,
            )
        theta_j = report.theta_hat
        w_mat = report.weight.matrix
        f_table = np.clip(env.features @ theta_j, -1.0, 1.0)
        ci_table = np.minimum(
            8.0 * report.lambda_used * np.linalg.norm(env.features @ w_mat, axis=2), 2.0
        )
        estimates.append((f_table, ci_table))
        estimates_dirty = True

    trace = RegretTrace(
        t=t_arr,
        actions=actions,
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        epoch=epoch_of,
        switches=switches,
        ledger=ledger,
        diagnostics={
            "fit_failures": float(fit_failures),
            "epochs": float(len(starts) - 1),
            "policy_switches": float(switch_count),
            "spanner_amplification": float(amplification),
            "optimal_arm_survived": float(opt_survived),
        },
    )
    return trace


def run_gap_instance(env, budget, horizon, privacy_model, delta=None, rng=None, **kwargs):
    """Elimination run on a gap-certified instance, with the clipped-radius
    diagnostic: the policy-weighted share of confidence radii still above
    delta_min / (8 d_A), which should decay across epochs."""
    gap = env.min_gap()
    if not math.isfinite(gap):
        raise ValueError("gap instance requires a positive certified gap")
    trace = run_elimination_bandit(
        env, budget, horizon, privacy_model, delta=delta, rng=rng, **kwargs
    )
    trace.diagnostics["delta_min"] = gap
    return trace


# ----------------------------------------------------------------- SquareCB


def inverse_gap_probs(f_row, gamma):
    """Action distribution 1 / (|A| + gamma * gap) off the greedy arm, with the
    leftover mass on the greedy arm."""
    f_row = np.asarray(f_row, dtype=float)
    n_a = f_row.shape[-1]
    best = int(np.argmax(f_row))
    gaps = f_row[best] - f_row
    probs = 1.0 / (n_a + gamma * gaps)
    probs[best] = 0.0
    probs[best] = 1.0 - probs.sum()
    return probs


def square_cb(
    env,
    oracle,
    budget,
    horizon,
    delta=None,
    rng=None,
    rate_constant=1.0,
    oracle_kwargs=None,
):
    """Inverse-gap-weighted exploration with a private regression oracle.

    oracle is "dp_sgd" or "ldp_clipped_sgd"; the learning rate of epoch j is
    sqrt(|A|) divided by the oracle's analytic error rate at the previous
    epoch length.
    """
    if oracle not in ("dp_sgd", "ldp_clipped_sgd"):
        raise ValueError("oracle must be 'dp_sgd' or 'ldp_clipped_sgd'")
    delta = 1.0 / horizon if delta is None else delta
    oracle_kwargs = oracle_kwargs or {}
    starts = [1]
    while starts[-1] <= horizon:
        starts.append(starts[-1] * 2)
    n_epochs = len(starts) - 1
    delta_prime = delta / (2.0 * max(n_epochs, 1) ** 2)
    sigma = budget.sigma

    def rate(n):
        if oracle == "dp_sgd":
            return rate_constant * (
                (math.log(1.0 / delta_prime) / n) ** 0.25
                + (sigma * math.sqrt(math.log(1.0 / delta_prime)) / n) ** (1.0 / 3.0)
            )
        return rate_constant * (sigma * math.log(n / delta_prime) / n) ** (1.0 / 6.0)

    n_a = env.n_actions
    t_arr = np.arange(1, horizon + 1)
    actions = np.zeros(horizon, dtype=int)
    inst = np.zeros(horizon)
    epoch_of = np.zeros(horizon, dtype=int)
    switches = np.zeros(horizon, dtype=int)
    ledger = PrivacyLedger()
    optimal = env.optimal_values()
    theta_hat = np.zeros(env.dim)
    fit_failures = 0
    switch_count = 0

    for j in range(n_epochs):
        lo, hi = starts[j], min(starts[j + 1], horizon + 1)
        if lo > horizon:
            break
        n_j = hi - lo
        gamma_j = 1.0 if j == 0 else math.sqrt(n_a) / rate(starts[j] - starts[j - 1])
        f_table = env.features @ theta_hat
        probs = np.apply_along_axis(inverse_gap_probs, 1, f_table, gamma_j)
        if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("action distribution left the simplex")
        switch_count += 1

        ctx = env.sample_contexts(n_j, rng.child(3 * j))
        acts = _sample_from_rows(probs[ctx], rng.child(3 * j + 1))
        rewards = env.sample_rewards(ctx, acts, rng.child(3 * j + 2))
        sl = slice(lo - 1, hi - 1)
        actions[sl] = acts
        inst[sl] = optimal[ctx] - env.f_star[ctx, acts]
        epoch_of[sl] = j
        switches[sl] = switch_count

        feats = env.features[ctx, acts]
        data = Dataset(feats, rewards, {"bound": env.bound})
        fit_rng = rng.child(1000 + j)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if oracle == "dp_sgd":
                    report = dp_sgd_improper(
                        data, budget, delta=delta_prime, rng=fit_rng, **oracle_kwargs
                    )
                else:
                    report = ldp_clipped_sgd(
                        data, budget, delta=delta_prime, rng=fit_rng, **oracle_kwargs
                    )
        except (InfoWeightError, ValueError):
            fit_failures += 1
            continue
        theta_hat = report.theta_hat
        for entry in report.ledger.entries:
            ledger.record(
                entry.mechanism, entry.alpha, entry.beta, entry.sensitivity,
                f"epoch-{j}/{entry.scope}", entry.count,
            )

    return RegretTrace(
        t=t_arr,
        actions=actions,
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        epoch=epoch_of,
        switches=switches,
        ledger=ledger,
        diagnostics={"fit_failures": float(fit_failures), "epochs": float(n_epochs)},
    )
