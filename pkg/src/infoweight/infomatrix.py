"""Exact and privatized solvers for the information-matrix fixed-point
equations, plus spectral-trace diagnostics.

The local-model operator maps a positive weight U to
    E[U x x^T U / ||Ux||] + lambda * U,
the central-model operator maps W to
    E[W x x^T W / (1 + gamma ||Wx||)] + lambda * W,
and both are driven to the identity by the iteration
    F = op(U);  U <- sym_polar(F^(-1/2) U),
which contracts the log-spectrum of F by half per step.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import sym_gauss_priv
from .errors import ConfigurationError, ConvergenceError
from .linalg import (
    PsdCertificate,
    eig_sym,
    mat_power,
    min_eig,
    op_norm,
    sym_polar,
    symmetrize,
)


@dataclass
class SpectralTrace:
    """Per-iteration extreme eigenvalues and residual of the F matrices."""

    lam_min: list = field(default_factory=list)
    lam_max: list = field(default_factory=list)
    residual: list = field(default_factory=list)

    def append(self, f_mat):
        vals, _ = eig_sym(f_mat)
        self.lam_min.append(float(vals[-1]))
        self.lam_max.append(float(vals[0]))
        self.residual.append(float(max(abs(vals[0] - 1.0), abs(vals[-1] - 1.0))))

    def __len__(self):
        return len(self.residual)

    def to_dict(self):
        return {
            "lam_min": list(self.lam_min),
            "lam_max": list(self.lam_max),
            "residual": list(self.residual),
        }


@dataclass
class InfoWeight:
    """A certified positive-definite information weight.

    `residual` is the operator-norm distance of op(matrix) from the identity
    when an exact oracle was available, else None.
    """

    matrix: np.ndarray
    lam: float
    gamma: float = 0.0
    residual: float = None
    model: str = "ldp"

    def __post_init__(self):
        self.matrix = symmetrize(self.matrix)
        vals, _ = eig_sym(self.matrix)
        if vals[-1] <= 0:
            raise ValueError("information weight must be positive definite")
        self.certificate = PsdCertificate(self.matrix, float(vals[-1]), float(vals[0]))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def certified_sandwich(self, lo=0.5, hi=2.0):
        """True when the recorded residual certifies lo*I <= op(matrix) <= hi*I."""
        if self.residual is None:
            return False
        return 1.0 - self.residual >= lo - 1e-12 and 1.0 + self.residual <= hi + 1e-12

    def to_dict(self):
        vals, _ = eig_sym(self.matrix)
        return {
            "matrix": self.matrix.reshape(-1).tolist(),
            "dim": self.dim,
            "lambda": self.lam,
            "gamma": self.gamma,
            "residual": self.residual,
            "model": self.model,
            "eig_min": float(vals[-1]),
            "eig_max": float(vals[0]),
        }


def apply_f_ldp(u, lam, oracle):
    """Local-model operator E[U x x^T U / ||Ux||] + lambda U."""
    u = symmetrize(u)
    if min_eig(u) <= 0:
        raise ValueError("operator input must be positive definite")
    return oracle.ldp_term(u) + lam * u


def apply_f_dp(w, gamma, lam, oracle):
    """Central-model operator E[W x x^T W / (1 + gamma ||Wx||)] + lambda W."""
    w = symmetrize(w)
    if min_eig(w) <= 0:
        raise ValueError("operator input must be positive definite")
    return oracle.dp_term(w, gamma) + lam * w


def solve_exact(model, oracle, lam, gamma=0.0, max_iters=60, tol=1e-9, u0=None):
    """Drive op(U) to the identity by the half-log-spectrum iteration.

    Returns (InfoWeight, SpectralTrace); raises ConvergenceError (carrying the
    trace) if the residual does not reach `tol` within `max_iters`.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if model not in ("ldp", "dp"):
        raise ValueError(f"model must be 'ldp' or 'dp', got {model!r}")
    d = oracle.dim
    u = np.eye(d) if u0 is None else symmetrize(u0)
    trace = SpectralTrace()
    for _ in range(max_iters + 1):
        f_mat = apply_f_ldp(u, lam, oracle) if model == "ldp" else apply_f_dp(u, gamma, lam, oracle)
        trace.append(f_mat)
        if trace.residual[-1] <= tol:
            weight = InfoWeight(u, lam=lam, gamma=gamma, residual=trace.residual[-1], model=model)
            return weight, trace
        u = sym_polar(mat_power(f_mat, -0.5) @ u)
    raise ConvergenceError(
        f"residual {trace.residual[-1]:.3e} above tol {tol:g} after {max_iters} iterations",
        trace=trace,
    )


def _cap_spectrum(m, cap, floor=1e-12):
    """Clamp eigenvalues into [floor, cap]; non-binding on in-window iterates."""
    vals, vecs = eig_sym(m)
    if vals[0] <= cap and vals[-1] >= floor:
        return m
    return symmetrize((vecs * np.clip(vals, floor, cap)) @ vecs.T)


def _check_lambda_admissible(lam, k_epochs, bound, delta, n, strict, what):
    if lam < bound:
        message = (
            f"{what}: lambda = {lam:g} is below the admissible minimum {bound:g} "
            f"(K = {k_epochs}, N = {n}, delta = {delta:g})"
        )
        if strict:
            raise ConfigurationError(message, admissible=bound)
        warnings.warn(message, stacklevel=3)


def spectral_iteration_ldp(
    data,
    budget,
    delta,
    k_epochs=None,
    lam=None,
    rng=None,
    ledger=None,
    admissibility_c=1.0,
    strict=False,
    zero_noise=False,
):
    """Privately approximate the local-model information matrix from samples.

    Splits the data into K batches; each sample contributes one symmetric
    rank-one statistic privatized at radius B, and each batch mean drives one
    spectral update with the ramped regularizer (2k+1)/(2K+1) * lambda.
    Returns (InfoWeight, SpectralTrace); the weight's lam is the final ramp
    value (= lambda).
    """
    t = len(data)
    d = data.dim
    b = data.meta.get("bound", float(np.max(np.linalg.norm(data.x, axis=1), initial=1.0)))
    b = max(b, 1.0)
    if k_epochs is None:
        k_epochs = max(12, math.ceil(math.log(max(math.log(max(t, 3)), 3.0))))
    n = t // k_epochs
    if n < 1:
        raise ConfigurationError(f"dataset of {t} rows cannot fill {k_epochs} batches")
    min_lam = admissibility_c * k_epochs * b * budget.sigma * math.sqrt(
        (d + math.log(k_epochs / delta)) / n
    )
    if lam is None:
        lam = min_lam
    strict_bound = 4.0 * k_epochs * b * budget.sigma * math.sqrt((d + math.log(k_epochs / delta)) / n)
    _check_lambda_admissible(
        lam, k_epochs, strict_bound if strict else min_lam, delta, n, strict, "spectral_iteration_ldp"
    )
    lam0 = lam / (2 * k_epochs + 1)
    if lam0 > 0 and k_epochs < max(math.log(max(math.log(1.0 / min(lam0, 0.99)), 1.0)), 12):
        warnings.warn("epoch count is below the recommended floor", stacklevel=2)

    u = np.eye(d)
    trace = SpectralTrace()
    for k in range(k_epochs):
        rows = data.x[k * n : (k + 1) * n]
        u_half = mat_power(u, 0.5)
        mapped = rows @ u  # ||U x||
        half_mapped = rows @ u_half
        norms = np.linalg.norm(mapped, axis=1)
        keep = norms > 0
        stats = np.zeros((rows.shape[0], d, d))
        if np.any(keep):
            outer = np.einsum("ij,ik->ijk", half_mapped[keep], half_mapped[keep])
            stats[keep] = outer / norms[keep, None, None]
        if zero_noise:
            noisy = stats
        else:
            noisy = sym_gauss_priv(
                stats,
                b,
                budget,
                rng.child(k),
                ledger=ledger,
                mechanism="spectral-ldp/stat",
                scope=f"spectral-batch-{k}",
                count=rows.shape[0],
            )
        h_mat = symmetrize(noisy.mean(axis=0))
        lam_k = (2 * k + 1) / (2 * k_epochs + 1) * lam
        f_mat = symmetrize(u_half @ h_mat @ u_half) + lam_k * u
        trace.append(f_mat)
        u = sym_polar(mat_power(f_mat, -0.5) @ u)
        # Spectral guard: the clean iteration keeps lam^(k+1) U^(k+1) below
        # max(sqrt(lam_max(F^(k))), 1), so this cap only binds when the batch
        # noise has broken the contraction window.
        lam_next = (2 * min(k + 1, k_epochs - 1) + 1) / (2 * k_epochs + 1) * lam
        cap = 2.0 * max(math.sqrt(max(trace.lam_max[-1], 0.0)), 1.0) / lam_next
        u = _cap_spectrum(u, cap)
    weight = InfoWeight(u, lam=lam, gamma=0.0, residual=None, model="ldp")
    return weight, trace


def spectral_iteration_dp(
    data,
    budget,
    delta,
    k_epochs=None,
    gamma=None,
    lam=None,
    rng=None,
    ledger=None,
    admissibility_c=1.0,
    strict=False,
    zero_noise=False,
):
    """Central-model analogue: one privatized batch mean per epoch.

    Each epoch's statistic has Frobenius sensitivity B / (gamma N), so a single
    symmetric Gaussian release per epoch suffices; epochs compose in parallel
    across disjoint batches.
    """
    t = len(data)
    d = data.dim
    b = data.meta.get("bound", float(np.max(np.linalg.norm(data.x, axis=1), initial=1.0)))
    b = max(b, 1.0)
    if k_epochs is None:
        k_epochs = max(4, math.ceil(math.log(max(math.log(max(t, 3)), 2.0))))
    n = t // k_epochs
    if n < 1:
        raise ConfigurationError(f"dataset of {t} rows cannot fill {k_epochs} batches")
    if lam is None:
        lam = 1.0 / math.sqrt(t)
    bound = admissibility_c * budget.sigma * b * math.sqrt(d + math.log(k_epochs / delta)) / n
    if gamma is None:
        gamma = bound / lam
    if gamma <= 0:
        raise ConfigurationError("gamma must be positive in the central model")
    product_bound = (4.0 if strict else admissibility_c) * budget.sigma * b * math.sqrt(
        d + math.log(k_epochs / delta)
    ) / n
    if gamma * lam < product_bound * (1.0 - 1e-12):
        message = (
            f"spectral_iteration_dp: gamma * lambda = {gamma * lam:g} is below the "
            f"admissible minimum {product_bound:g} (K = {k_epochs}, N = {n})"
        )
        if strict:
            raise ConfigurationError(message, admissible=product_bound)
        warnings.warn(message, stacklevel=2)

    w = np.eye(d)
    trace = SpectralTrace()
    for k in range(k_epochs):
        rows = data.x[k * n : (k + 1) * n]
        w_half = mat_power(w, 0.5)
        mapped = rows @ w
        half_mapped = rows @ w_half
        norms = np.linalg.norm(mapped, axis=1)
        weights = 1.0 / (1.0 + gamma * norms)
        h_mat = symmetrize(
            np.einsum("i,ij,ik->jk", weights, half_mapped, half_mapped) / rows.shape[0]
        )
        if not zero_noise:
            h_mat = sym_gauss_priv(
                h_mat,
                b / (gamma * rows.shape[0]),
                budget,
                rng.child(k),
                ledger=ledger,
                mechanism="spectral-dp/batch-mean",
                scope=f"spectral-batch-{k}",
            )
            h_mat = symmetrize(h_mat)
        f_mat = symmetrize(w_half @ h_mat @ w_half) + lam * w
        trace.append(f_mat)
        w = sym_polar(mat_power(f_mat, -0.5) @ w)
        # Same spectral guard as the local model, with the constant regularizer.
        cap = 2.0 * max(math.sqrt(max(trace.lam_max[-1], 0.0)), 1.0) / lam
        w = _cap_spectrum(w, cap)
    weight = InfoWeight(w, lam=lam, gamma=gamma, residual=None, model="dp")
    return weight, trace


def attach_residual(weight, oracle):
    """Fill in the true operator residual of a (possibly private) weight."""
    if weight.model == "ldp":
        f_mat = apply_f_ldp(weight.matrix, weight.lam, oracle)
    else:
        f_mat = apply_f_dp(weight.matrix, weight.gamma, weight.lam, oracle)
    weight.residual = op_norm(f_mat - np.eye(weight.dim))
    return weight


def price_of_privacy(oracle, t, budget, tol=1e-11):
    """tr(Sigma W*^2) / d at the horizon-T calibration of (gamma, lambda).

    Compares the best private squared error against the non-private d/T rate.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    lam = 1.0 / math.sqrt(t)
    gamma = math.sqrt(math.log(1.0 / budget.beta) / (budget.alpha**2 * t))
    weight, _ = solve_exact("dp", oracle, lam, gamma=gamma, tol=tol)
    sigma = oracle.covariance()
    w2 = weight.matrix @ weight.matrix
    return float(np.trace(sigma @ w2)) / oracle.dim
