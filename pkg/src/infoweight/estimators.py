"""Private regression estimators.

Covers the one-dimensional sign-statistic estimator, sufficient-statistic
perturbation, information-weighted regression in the local and central models
(sample-based and distribution-specific), the GLM variants, and the two
dimension-free SGD procedures.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import PrivacyLedger, djw_l2_priv, gauss_priv, laplace_priv, sym_gauss_priv
from .errors import ConfigurationError, StabilityError
from .infomatrix import InfoWeight, solve_exact, spectral_iteration_dp, spectral_iteration_ldp
from .linalg import clip, constrained_lstsq, mat_power, project_ball, symmetrize


@dataclass
class EstimateReport:
    """Estimator output: point estimate, weight, confidence scale, ledger."""

    theta_hat: np.ndarray
    weight: InfoWeight = None
    lambda_used: float = 0.0
    gamma_used: float = 0.0
    ci_scale: float = None
    ledger: PrivacyLedger = field(default_factory=PrivacyLedger)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        if self.ci_scale is not None and self.ci_scale <= 0:
            raise ValueError("ci_scale must be positive when present")

    def ci(self, x):
        """Confidence radius c * ||weight @ x|| at a probe point."""
        if self.weight is None or self.ci_scale is None:
            raise ValueError("this estimator does not expose a confidence functional")
        return self.ci_scale * np.linalg.norm(self.weight.matrix @ np.asarray(x, dtype=float))

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "weight": None if self.weight is None else self.weight.to_dict(),
            "lambda": self.lambda_used,
            "gamma": self.gamma_used,
            "ci_scale": self.ci_scale,
            "ledger": self.ledger.to_dict(),
            "diagnostics": self.diagnostics,
        }


@dataclass
class GlmLink:
    """A strictly increasing link with a known curvature floor on [-B, B]."""

    id: str
    evaluate: object
    integral: object
    mu_lower: float

    def __post_init__(self):
        if self.mu_lower <= 0:
            raise ValueError("the link curvature floor must be positive")

    @classmethod
    def identity(cls):
        return cls("identity", lambda t: np.asarray(t, dtype=float), lambda t: 0.5 * np.square(t), 1.0)

    @classmethod
    def logistic_scaled(cls, b=1.0):
        """nu(t) = tanh(t / 2); slope floor attained at the interval edge."""
        mu = 0.5 / math.cosh(b / 2.0) ** 2
        return cls(
            "logistic-scaled",
            lambda t: np.tanh(np.asarray(t, dtype=float) / 2.0),
            lambda t: 2.0 * np.log(np.cosh(np.asarray(t, dtype=float) / 2.0)),
            mu,
        )

    @classmethod
    def tabulated(cls, grid, values, integrals, b=1.0):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        integrals = np.asarray(integrals, dtype=float)
        if np.any(np.diff(values) <= 0):
            raise ValueError("tabulated link values must be strictly increasing")
        slopes = np.diff(values) / np.diff(grid)
        inside = (grid[:-1] >= -b) & (grid[1:] <= b)
        mu = float(slopes[inside].min()) if np.any(inside) else float(slopes.min())
        return cls(
            "custom-tabulated",
            lambda t: np.interp(t, grid, values),
            lambda t: np.interp(t, grid, integrals),
            mu,
        )

    def verify_curvature(self, b, grid_points=512, tol=1e-6):
        """Finite-difference check that the slope stays above mu_lower on [-B, B]."""
        ts = np.linspace(-b, b, grid_points)
        h = 1e-5
        slopes = (self.evaluate(ts + h) - self.evaluate(ts - h)) / (2 * h)
        return bool(np.all(slopes >= self.mu_lower - tol))


def _as_xy(data):
    return np.atleast_2d(data.x), np.asarray(data.y, dtype=float)


def _bound_of(data):
    b = data.meta.get("bound")
    if b is None:
        b = float(np.max(np.linalg.norm(np.atleast_2d(data.x), axis=1), initial=1.0))
    return max(float(b), 1.0)


def simple_ldp_1d(data, alpha, rng, paper_constants=False, zero_noise=False):
    """One-dimensional locally private regression via sign statistics.

    Per sample, privatizes sign(x) * y and |x| with Laplace noise; the default
    splits the budget (scale 4 / alpha per statistic), `paper_constants`
    switches to scale 2 / alpha.
    """
    x, y = _as_xy(data)
    if x.shape[1] != 1:
        raise ValueError("this estimator is one-dimensional")
    x = x[:, 0]
    if np.max(np.abs(x), initial=0.0) > 1 + 1e-12 or np.max(np.abs(y), initial=0.0) > 1 + 1e-12:
        raise ValueError("inputs must satisfy |x| <= 1 and |y| <= 1")
    ledger = PrivacyLedger()
    eps = alpha if paper_constants else alpha / 2.0
    numer_raw = np.sign(x) * y
    denom_raw = np.abs(x)
    if zero_noise:
        numer, denom = numer_raw, denom_raw
    else:
        numer = laplace_priv(numer_raw, 2.0, eps, rng.child(0), ledger, "simple-1d/sign-stat", "sample", len(x))
        denom = laplace_priv(denom_raw, 2.0, eps, rng.child(1), ledger, "simple-1d/abs-stat", "sample", len(x))
    psi_hat = float(np.mean(numer))
    big_psi_hat = float(np.mean(denom))
    diagnostics = {"psi_hat": psi_hat, "big_psi_hat": big_psi_hat, "degenerate_denominator": 0.0}
    if big_psi_hat <= 0:
        theta = 0.0
        diagnostics["degenerate_denominator"] = 1.0
    else:
        theta = clip(psi_hat / big_psi_hat, 1.0)
    return EstimateReport(
        np.array([theta]),
        weight=None,
        lambda_used=0.0,
        ci_scale=None,
        ledger=ledger,
        diagnostics=diagnostics,
    )


def ssp_ols(data, budget, tau=None, rng=None, lam=1.0, per_sample=False):
    """Sufficient-statistic perturbation: ridge regression against a noisy
    sum of x*y, constrained to the unit ball.

    The default tau calibrates one central Gaussian release of sum(x*y); with
    per_sample=True every sample's contribution is privatized instead, which
    is the local-model flavor of the same statistic.
    """
    x, y = _as_xy(data)
    t, d = x.shape
    b = _bound_of(data)
    ledger = PrivacyLedger()
    if tau is None:
        tau = budget.sigma * b * (math.sqrt(t) if per_sample else 1.0)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    ssp = x.T @ y
    if tau > 0:
        ssp = ssp + rng.normal(scale=tau, size=d)
        if per_sample:
            ledger.record("ssp/per-sample", budget.alpha, budget.beta / 2.0, b, "sample", t)
        else:
            ledger.record("ssp/sum", budget.alpha, budget.beta / 2.0, b, "dataset")
    design = x.T @ x + lam * np.eye(d)
    theta = constrained_lstsq(design, ssp)
    return EstimateReport(
        theta,
        weight=None,
        lambda_used=lam,
        ledger=ledger,
        diagnostics={"tau": float(tau)},
    )


def _ldp_weighted_stats(x, y, u):
    """Per-sample (U x y / ||Ux||, U x x^T / ||Ux||) with the zero-x convention."""
    mapped = x @ u
    norms = np.linalg.norm(mapped, axis=1)
    keep = norms > 0
    inv = np.zeros_like(norms)
    inv[keep] = 1.0 / norms[keep]
    psi = mapped * (inv * y)[:, None]
    big_psi = np.einsum("ij,ik->ijk", mapped * inv[:, None], x)
    return psi, big_psi


def iw_regression_ldp(
    data,
    budget,
    delta,
    rng,
    lam=None,
    k_epochs=None,
    admissibility_c=1.0,
    strict=False,
    zero_noise=False,
    stability_check=True,
):
    """Locally private information-weighted regression.

    First half of the data learns the weight U; the second half privatizes the
    reweighted first- and second-order statistics per sample and solves the
    constrained normal equations.  The confidence functional is
    8 * lambda * ||U x||.
    """
    if len(data) < 2:
        raise ValueError("need at least two rows to split")
    first, second = data.halves()
    ledger = PrivacyLedger()
    weight, trace = spectral_iteration_ldp(
        first,
        budget,
        delta,
        k_epochs=k_epochs,
        lam=lam,
        rng=rng.child(0),
        ledger=ledger,
        admissibility_c=admissibility_c,
        strict=strict,
        zero_noise=zero_noise,
    )
    u = weight.matrix
    lam_used = weight.lam
    x, y = _as_xy(second)
    b = _bound_of(data)
    psi, big_psi = _ldp_weighted_stats(x, y, u)
    if not zero_noise:
        # One joint Gaussian release per sample: blocks at radii 2 and 2B keep
        # the stacked statistic within the per-sample budget.
        psi = gauss_priv(psi, 2.0, budget, rng.child(1), ledger=None)
        big_psi = gauss_priv(big_psi, 2.0 * b, budget, rng.child(2), ledger=None)
        ledger.record("iw-ldp/stats", budget.alpha, budget.beta / 2.0, math.hypot(2.0, 2.0 * b), "sample", len(x))
    psi_hat = psi.mean(axis=0)
    big_psi_hat = big_psi.mean(axis=0)
    system = big_psi_hat + lam_used * np.eye(data.dim)
    diagnostics = {"epochs": float(len(trace))}
    if stability_check:
        svals = np.linalg.svd(system @ u, compute_uv=False)
        diagnostics["system_smin"] = float(svals[-1])
        diagnostics["system_smax"] = float(svals[0])
        if svals[-1] < 0.25 - 1e-9 or svals[0] > 4.0 + 1e-9:
            raise StabilityError(
                f"weighted system conditioning [{svals[-1]:.3g}, {svals[0]:.3g}] "
                "left the certified window [0.25, 4]"
            )
    theta = constrained_lstsq(system, psi_hat)
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam_used,
        ci_scale=8.0 * lam_used,
        ledger=ledger,
        diagnostics=diagnostics,
    )


def iw_regression_ldp_fixed_p(data, oracle, alpha, rng, zero_noise=False, solver_tol=None):
    """Distribution-specific local-model variant under pure privacy.

    With the covariate law known, the weight is solved exactly and each sample
    releases only the reweighted response direction through the unbiased
    unit-ball channel; the estimate is U times the released mean.
    """
    x, y = _as_xy(data)
    t = len(data)
    lam = 1.0 / (alpha * math.sqrt(t))
    weight, _ = solve_exact("ldp", oracle, lam, tol=solver_tol or min(1e-10, lam * 1e-3))
    u = weight.matrix
    vals = np.linalg.eigvalsh(u)
    if weight.residual > min(lam * vals[0], 1.0):
        raise StabilityError("exact weight residual exceeds the required accuracy")
    ledger = PrivacyLedger()
    mapped = x @ u
    norms = np.linalg.norm(mapped, axis=1)
    keep = norms > 0
    inv = np.zeros_like(norms)
    inv[keep] = 1.0 / norms[keep]
    psi = mapped * (inv * y)[:, None]
    if not zero_noise:
        psi = djw_l2_priv(psi, alpha, rng.child(0), ledger=ledger, scope="sample", count=t)
    theta = u @ psi.mean(axis=0)
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam,
        ci_scale=8.0 * lam,
        ledger=ledger,
        diagnostics={"residual": float(weight.residual)},
    )


def iw_regression_dp(
    data,
    budget,
    delta,
    rng,
    gamma=None,
    lam=None,
    k_epochs=None,
    mode="l2",
    admissibility_c=1.0,
    strict=False,
    zero_noise=False,
):
    """Centrally private information-weighted regression.

    The weight W comes from the private spectral iteration on the first half;
    the second half forms the softly-reweighted normal equations, privatized
    by a single Gaussian release at sensitivity 2/(gamma T) (and 2B/(gamma T)
    for the design).  mode="l1" switches to the heavier regularization tuned
    for absolute-error guarantees.
    """
    if len(data) < 2:
        raise ValueError("need at least two rows to split")
    t = len(data)
    d = data.dim
    if lam is None:
        lam = math.sqrt(d * math.log(1.0 / delta) / t) if mode == "l1" else 1.0 / math.sqrt(t)
    first, second = data.halves()
    ledger = PrivacyLedger()
    weight, trace = spectral_iteration_dp(
        first,
        budget,
        delta,
        k_epochs=k_epochs,
        gamma=gamma,
        lam=lam,
        rng=rng.child(0),
        ledger=ledger,
        admissibility_c=admissibility_c,
        strict=strict,
        zero_noise=zero_noise,
    )
    w = weight.matrix
    gamma_used = weight.gamma
    x, y = _as_xy(second)
    b = _bound_of(data)
    mapped = x @ w
    norms = np.linalg.norm(mapped, axis=1)
    weights = 1.0 / (1.0 + gamma_used * norms)
    psi = (mapped * (weights * y)[:, None]).mean(axis=0)
    big_psi = np.einsum("i,ij,ik->jk", weights, mapped, x) / len(x)
    if not zero_noise:
        psi = gauss_priv(psi, 2.0 / (gamma_used * t), budget, rng.child(1), ledger=None)
        big_psi = gauss_priv(big_psi, 2.0 * b / (gamma_used * t), budget, rng.child(2), ledger=None)
        ledger.record(
            "iw-dp/stats",
            budget.alpha,
            budget.beta / 2.0,
            math.hypot(2.0 / (gamma_used * t), 2.0 * b / (gamma_used * t)),
            "regression-half",
        )
    system = big_psi + lam * np.eye(d)
    svals = np.linalg.svd(system, compute_uv=False)
    if svals[-1] <= 1e-12:
        raise StabilityError("regularized design is numerically singular")
    theta = np.linalg.solve(system, psi)
    # Misspecification contributes an extra sqrt(d) * eps_apx to the weighted
    # error budget; surface it next to the clean-model bound.
    eps_apx = float(data.meta.get("eps_apx", 0.0))
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam,
        gamma_used=gamma_used,
        ci_scale=8.0 * lam,
        ledger=ledger,
        diagnostics={
            "epochs": float(len(trace)),
            "system_smin": float(svals[-1]),
            "eps_apx": eps_apx,
            "weighted_error_budget": 8.0 * (lam + math.sqrt(d) * eps_apx),
        },
    )


def iw_regression_dp_fixed_p(data, oracle, budget, rng, zero_noise=False, solver_tol=None):
    """Distribution-specific central-model variant: one Gaussian release of the
    reweighted response mean, then multiply by the exact weight."""
    x, y = _as_xy(data)
    t = len(data)
    lam = 1.0 / math.sqrt(t)
    gamma = math.sqrt(math.log(1.0 / budget.beta) / (budget.alpha**2 * t))
    weight, _ = solve_exact("dp", oracle, lam, gamma=gamma, tol=solver_tol or min(1e-10, lam * 1e-3))
    w = weight.matrix
    vals = np.linalg.eigvalsh(w)
    if weight.residual > min(lam * vals[0], 1.0):
        raise StabilityError("exact weight residual exceeds the required accuracy")
    ledger = PrivacyLedger()
    mapped = x @ w
    norms = np.linalg.norm(mapped, axis=1)
    weights = 1.0 / (1.0 + gamma * norms)
    psi = (mapped * (weights * y)[:, None]).mean(axis=0)
    if not zero_noise:
        psi = gauss_priv(psi, 1.0 / (gamma * t), budget, rng.child(0), ledger=ledger, mechanism="iw-dp-fixed/psi")
    theta = w @ psi
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam,
        gamma_used=gamma,
        ci_scale=8.0 * lam,
        ledger=ledger,
        diagnostics={"residual": float(weight.residual)},
    )


def ldp_sgd_glm(x, y, link, u, lam, budget, rng, ledger=None, zero_noise=False):
    """Projected SGD on the reweighted integral loss in the transformed domain.

    One privatized gradient per sample, stepsize 2 / (mu * t), projection onto
    {w : ||Uw|| <= 1}; returns the final transformed iterate w_N.
    """
    n, d = x.shape
    mapped = x @ u
    norms = np.linalg.norm(mapped, axis=1)
    keep = norms > 0
    dirs = np.zeros_like(mapped)
    dirs[keep] = mapped[keep] / norms[keep, None]
    mu = link.mu_lower
    if zero_noise:
        noise = np.zeros((n, d))
    else:
        noise = rng.normal(scale=budget.sigma * 2.0, size=(n, d))
        if ledger is not None:
            ledger.record("glm-ldp/grad", budget.alpha, budget.beta / 2.0, 2.0, "sample", n)
    w_iter = np.zeros(d)
    for i in range(n):
        grad = (
            dirs[i] * (float(link.evaluate(mapped[i] @ w_iter)) - y[i])
            + lam * mu * (u @ w_iter)
            + noise[i]
        )
        w_iter = w_iter - (2.0 / (mu * (i + 1))) * grad
        uw_norm = np.linalg.norm(u @ w_iter)
        if uw_norm > 1.0:
            w_iter = w_iter / uw_norm
    return w_iter


def glm_iw_ldp(
    data,
    link,
    budget,
    delta,
    rng,
    lam=None,
    k_epochs=None,
    admissibility_c=1.0,
    zero_noise=False,
):
    """Locally private GLM regression: weight from the spectral iteration, then
    projected SGD on the reweighted integral loss in the transformed domain."""
    if len(data) < 2:
        raise ValueError("need at least two rows to split")
    first, second = data.halves()
    ledger = PrivacyLedger()
    weight, trace = spectral_iteration_ldp(
        first,
        budget,
        delta,
        k_epochs=k_epochs,
        lam=lam,
        rng=rng.child(0),
        ledger=ledger,
        admissibility_c=admissibility_c,
        zero_noise=zero_noise,
    )
    u = weight.matrix
    lam_used = weight.lam
    x, y = _as_xy(second)
    w_iter = ldp_sgd_glm(
        x, y, link, u, lam_used, budget, rng.child(1), ledger=ledger, zero_noise=zero_noise
    )
    theta = u @ w_iter
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam_used,
        ci_scale=8.0 * lam_used,
        ledger=ledger,
        diagnostics={"epochs": float(len(trace)), "sgd_steps": float(len(x))},
    )


def glm_iw_dp(
    data,
    link,
    budget,
    delta,
    rng,
    gamma=None,
    lam=None,
    k_epochs=None,
    admissibility_c=1.0,
    zero_noise=False,
    gd_max_iters=20_000,
):
    """Centrally private GLM regression via a privately corrected ERM.

    The empirical curvature matrix is released once; if the release fails the
    quarter-inverse verification gate the estimator returns zero.  Otherwise
    the corrected objective is minimized to a quarter of the release
    sensitivity and the minimizer itself is privatized.
    """
    if len(data) < 2:
        raise ValueError("need at least two rows to split")
    t = len(data)
    d = data.dim
    b = _bound_of(data)
    mu = link.mu_lower
    if lam is None:
        lam = 1.0 / math.sqrt(t)
    first, second = data.halves()
    ledger = PrivacyLedger()
    k_used = k_epochs or max(4, math.ceil(math.log(max(math.log(max(t, 3)), 2.0))))
    n_first = len(first) // k_used
    min_product = admissibility_c * (b + 1.0 / mu) * budget.sigma * math.sqrt(
        d + math.log(k_used / delta)
    ) / max(n_first, 1)
    if gamma is None:
        gamma = min_product / lam
    if gamma * lam < min_product * (1 - 1e-12):
        warnings.warn(
            f"glm_iw_dp: gamma * lambda = {gamma * lam:g} below the admissible minimum {min_product:g}",
            stacklevel=2,
        )
    weight, trace = spectral_iteration_dp(
        first,
        budget,
        delta,
        k_epochs=k_used,
        gamma=gamma,
        lam=lam,
        rng=rng.child(0),
        ledger=ledger,
        admissibility_c=0.0,
        zero_noise=zero_noise,
    )
    w = weight.matrix
    x, y = _as_xy(second)
    n = len(x)
    w_half = mat_power(w, 0.5)
    mapped = x @ w
    half_mapped = x @ w_half
    norms = np.linalg.norm(mapped, axis=1)
    soft = 1.0 / (1.0 + gamma * norms)
    h_mat = symmetrize(np.einsum("i,ij,ik->jk", soft, half_mapped, half_mapped) / n) + lam * np.eye(d)
    if zero_noise:
        h_tilde = h_mat
    else:
        # The doubled radius halves the effective alpha, so the curvature and
        # minimizer releases compose to the full (alpha, beta) on this half.
        h_tilde = symmetrize(
            sym_gauss_priv(h_mat, 2.0 * b / (gamma * n), budget, rng.child(1), ledger=None)
        )
        ledger.record(
            "glm-dp/curvature", budget.alpha / 2.0, budget.beta / 2.0,
            2.0 * b / (gamma * n), "regression-half",
        )
    w_inv = mat_power(w, -1.0)
    gate = np.linalg.eigvalsh(h_tilde - 0.25 * w_inv)[0]
    if gate < 0:
        return EstimateReport(
            np.zeros(d),
            weight=weight,
            lambda_used=lam,
            gamma_used=gamma,
            ci_scale=8.0 * lam,
            ledger=ledger,
            diagnostics={"gate_failed": 1.0, "gate_margin": float(gate)},
        )

    quad = symmetrize(mu * w_half @ (lam * np.eye(d) + (h_tilde - h_mat)) @ w_half)

    def objective(w_vec):
        vals = link.integral(mapped @ w_vec) - y * (mapped @ w_vec)
        return float((soft @ vals) / n + 0.5 * w_vec @ quad @ w_vec)

    def grad(w_vec):
        preds = link.evaluate(mapped @ w_vec)
        return ((soft * (preds - y)) @ mapped) / n + quad @ w_vec

    def project(w_vec):
        wn = np.linalg.norm(w @ w_vec)
        return w_vec / wn if wn > 1.0 else w_vec

    delta_n = 32.0 * (1.0 / mu + b) / (gamma * n)
    # The gate certifies mu/4-strong convexity, so a gradient-mapping norm of
    # (mu/4) * delta_n / 8 guarantees ||w - w_hat|| <= delta_n / 4.  Without
    # noise the release step adds nothing, so polish to numerical accuracy.
    target = 1e-10 if zero_noise else (mu / 4.0) * delta_n / 8.0
    w_vec = np.zeros(d)
    step = 1.0
    for _ in range(gd_max_iters):
        g = grad(w_vec)
        base = objective(w_vec)
        while step >= 1e-12:
            cand = project(w_vec - step * g)
            drop = base - objective(cand)
            agreed = float(g @ (w_vec - cand))
            if drop >= 0.25 * agreed and agreed >= 0:
                break
            step *= 0.5
        mapping = np.linalg.norm(w_vec - cand) / max(step, 1e-12)
        w_vec = cand
        step = min(step * 2.0, 1.0)
        if mapping <= target:
            break
    if not zero_noise:
        w_vec = gauss_priv(w_vec, 2.0 * delta_n, budget, rng.child(2), ledger=None)
        ledger.record(
            "glm-dp/minimizer", budget.alpha / 2.0, budget.beta / 2.0,
            2.0 * delta_n, "regression-half",
        )
    theta = w @ w_vec
    return EstimateReport(
        theta,
        weight=weight,
        lambda_used=lam,
        gamma_used=gamma,
        ci_scale=8.0 * lam,
        ledger=ledger,
        diagnostics={"gate_failed": 0.0, "gate_margin": float(gate), "epochs": float(len(trace))},
    )


def sgd_path_average(x, y, eta):
    """Average iterate of single-pass projected SGD on the square loss.

    Factored out so the sensitivity of the non-private average can be tested
    directly: the per-step map is a contraction, so one changed row moves the
    average by at most 4 * eta.
    """
    t, d = x.shape
    theta = np.zeros(d)
    total = np.zeros(d)
    for i in range(t):
        total += theta
        g = x[i] * (x[i] @ theta - y[i])
        theta = project_ball(theta - eta * g, 1.0)
    return total / t


def dp_sgd_improper(data, budget, eta=None, delta=0.05, rng=None, zero_noise=False):
    """Dimension-free centrally private regression: privatize the average
    iterate of projected SGD, whose sensitivity is 4 * eta."""
    x, y = _as_xy(data)
    t = len(x)
    if eta is None:
        eta = min(
            0.5 / math.sqrt(t),
            (1.0 / (budget.sigma**2 * t * math.log(1.0 / delta))) ** (1.0 / 3.0),
        )
    if not (0.0 < eta <= 0.5):
        raise ValueError(f"eta must lie in (0, 1/2], got {eta}")
    if np.max(np.linalg.norm(x, axis=1), initial=0.0) > 1 + 1e-9:
        raise ValueError("this estimator requires ||x|| <= 1")
    ledger = PrivacyLedger()
    theta_bar = sgd_path_average(x, y, eta)
    if not zero_noise:
        theta_hat = gauss_priv(
            theta_bar, 2.0 * eta, budget, rng.child(0), ledger=ledger, mechanism="dp-sgd/average"
        )
    else:
        theta_hat = theta_bar
    return EstimateReport(
        theta_hat,
        lambda_used=0.0,
        ledger=ledger,
        diagnostics={"eta": float(eta)},
    )


def clipped_sgd_admissibility(t, k_epochs, delta, eta=1.0, r=2.0):
    """Check R >= 1 + eta * (B_delta + 4 * eps_N) for the batched clipped SGD."""
    n = max(t // k_epochs, 1)
    base = (r + 1.0) * math.sqrt(k_epochs * math.log(k_epochs / delta) / n)
    b_delta = 6.0 * base
    eps_n = base
    return r >= 1.0 + eta * (b_delta + 4.0 * eps_n)


def ldp_clipped_sgd(
    data,
    budget,
    k_epochs=None,
    delta=0.05,
    rng=None,
    eta=1.0,
    r=2.0,
    k_constant=0.25,
    zero_noise=False,
):
    """Dimension-free locally private regression: batched SGD with clipped
    predictions, privatized gradients, and no projection."""
    x, y = _as_xy(data)
    t, d = x.shape
    if np.max(np.linalg.norm(x, axis=1), initial=0.0) > 1 + 1e-9:
        raise ValueError("this estimator requires ||x|| <= 1")
    if k_epochs is None:
        k_target = max(
            1,
            round(k_constant * (t / (budget.sigma**2 * math.log(t / delta))) ** (1.0 / 3.0)),
        )
        k_epochs = 0
        for k in range(k_target, 0, -1):
            if clipped_sgd_admissibility(t, k, delta, eta, r):
                k_epochs = k
                break
        if k_epochs == 0:
            raise ConfigurationError(
                "no epoch count satisfies the step-size admissibility check",
                admissible=0,
            )
    elif not clipped_sgd_admissibility(t, k_epochs, delta, eta, r):
        max_k = 0
        for k in range(k_epochs, 0, -1):
            if clipped_sgd_admissibility(t, k, delta, eta, r):
                max_k = k
                break
        raise ConfigurationError(
            f"(eta, R) admissibility fails at K = {k_epochs}; maximal admissible K is {max_k}",
            admissible=max_k,
        )
    n = t // k_epochs
    ledger = PrivacyLedger()
    theta = np.zeros(d)
    clip_events = 0
    for k in range(k_epochs):
        rows = x[k * n : (k + 1) * n]
        labels = y[k * n : (k + 1) * n]
        preds = rows @ theta
        clipped = np.clip(preds, -r, r)
        clip_events += int(np.sum(np.abs(preds) > r))
        grads = rows * (clipped - labels)[:, None]
        g_bar = grads.mean(axis=0)
        if not zero_noise:
            g_bar = g_bar + rng.child(k).normal(
                scale=budget.sigma * (r + 1.0) / math.sqrt(rows.shape[0]), size=d
            )
            ledger.record(
                "clipped-sgd/grad", budget.alpha, budget.beta / 2.0, r + 1.0,
                f"batch-{k}", rows.shape[0],
            )
        theta = theta - eta * g_bar
    return EstimateReport(
        theta,
        lambda_used=0.0,
        ledger=ledger,
        diagnostics={
            "epochs": float(k_epochs),
            "clip_fraction": clip_events / max(n * k_epochs, 1),
            "eta": float(eta),
            "clip_radius": float(r),
        },
    )
