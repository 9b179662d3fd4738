"""Covariate distributions, label mechanisms, dataset generation, and exact
moment oracles for finite-support distributions."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedOracleError
from .linalg import eig_sym, symmetrize


class CovariateDistribution:
    """Base class: a covariate law on the ball of radius `bound` in R^dim."""

    kind = "abstract"

    def __init__(self, dim, bound):
        if bound < 1.0:
            raise ValueError(f"bound must be at least 1, got {bound}")
        self.dim = int(dim)
        self.bound = float(bound)

    def sample(self, n, rng):
        raise NotImplementedError

    def to_config(self):
        """Harness-config dict that rebuilds this distribution."""
        raise NotImplementedError

    @property
    def finite_support(self):
        return False


class FiniteSupport(CovariateDistribution):
    """Finitely many atoms with probabilities summing to one."""

    kind = "finite-support"

    def __init__(self, atoms, probs, bound=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        probs = np.asarray(probs, dtype=float)
        if atoms.shape[0] != probs.shape[0]:
            raise ValueError("atoms and probs must have matching lengths")
        if np.any(probs < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        norms = np.linalg.norm(atoms, axis=1)
        if bound is None:
            bound = max(1.0, float(norms.max()))
        if np.any(norms > bound + 1e-12):
            raise ValueError("an atom lies outside the stated bound")
        super().__init__(atoms.shape[1], bound)
        self.atoms = atoms
        self.probs = np.clip(probs, 0.0, None) / total

    @property
    def finite_support(self):
        return True

    def sample(self, n, rng):
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.atoms[idx]

    def covariance(self):
        return symmetrize(np.einsum("i,ij,ik->jk", self.probs, self.atoms, self.atoms))

    def to_config(self):
        return {
            "kind": "finite",
            "atoms": self.atoms.tolist(),
            "probs": self.probs.tolist(),
            "bound": self.bound,
        }


class ClippedGaussian(CovariateDistribution):
    """Gaussian draws projected back onto the ball of radius `bound`."""

    kind = "clipped-gaussian"

    def __init__(self, sigma_gen, bound):
        sigma_gen = symmetrize(sigma_gen)
        super().__init__(sigma_gen.shape[0], bound)
        vals, vecs = eig_sym(sigma_gen)
        self._chol_like = (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T
        self.sigma_gen = sigma_gen

    def sample(self, n, rng):
        x = rng.normal(size=(n, self.dim)) @ self._chol_like.T
        norms = np.linalg.norm(x, axis=1)
        over = norms > self.bound
        if np.any(over):
            x[over] *= (self.bound / norms[over])[:, None]
        return x

    def to_config(self):
        return {
            "kind": "clipped-gaussian",
            "dim": self.dim,
            "bound": self.bound,
            "eigenvalues": np.linalg.eigvalsh(self.sigma_gen).tolist(),
        }


class SphereUniform(CovariateDistribution):
    """Uniform on the sphere of radius `bound`."""

    kind = "sphere-uniform"

    def __init__(self, dim, bound=1.0):
        super().__init__(dim, bound)

    def sample(self, n, rng):
        x = rng.normal(size=(n, self.dim))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        return self.bound * x

    def to_config(self):
        return {"kind": "sphere", "dim": self.dim, "bound": self.bound}


class ProductRademacher(CovariateDistribution):
    """Independent +-(bound/sqrt(d)) coordinates, so every draw has norm `bound`."""

    kind = "product-rademacher"

    def __init__(self, dim, bound=1.0):
        super().__init__(dim, bound)
        self._scale = bound / math.sqrt(dim)

    def sample(self, n, rng):
        signs = rng.integers(0, 2, size=(n, self.dim)) * 2 - 1
        return self._scale * signs.astype(float)

    def to_config(self):
        return {"kind": "rademacher", "dim": self.dim, "bound": self.bound}


@dataclass
class LabelMechanism:
    """Conditional law of y given x, with |y| <= 1 always.

    kinds:
      rademacher    y in {-1, +1} with mean <x, theta*>
      bounded-noise y = <x, theta*> + symmetric uniform noise, never clipped
      glm           y in {-1, +1} with mean link(<x, theta*>)
    misspec, when set, shifts the conditional mean by a bounded function of
    <x, theta*>; its declared L2 size is `misspec_size`.
    """

    theta_star: np.ndarray
    kind: str = "bounded-noise"
    noise_level: float = 0.5
    link: object = None
    misspec: object = None
    misspec_size: float = 0.0

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if np.linalg.norm(self.theta_star) > 1.0 + 1e-12:
            raise ValueError("theta_star must lie in the unit ball")
        if self.kind not in ("rademacher", "bounded-noise", "glm"):
            raise ValueError(f"unknown label mechanism {self.kind!r}")
        if self.kind == "glm" and self.link is None:
            raise ValueError("glm labels need a link")

    def conditional_mean(self, x):
        m = np.asarray(x, dtype=float) @ self.theta_star
        if self.kind == "glm":
            m = self.link.evaluate(m)
        if self.misspec is not None:
            m = m + self.misspec(np.asarray(x, dtype=float) @ self.theta_star)
        return np.clip(m, -1.0, 1.0)

    def sample(self, x, rng):
        mean = self.conditional_mean(x)
        n = mean.shape[0]
        if self.kind in ("rademacher", "glm"):
            u = rng.uniform(size=n)
            return np.where(u < 0.5 * (1.0 + mean), 1.0, -1.0)
        # Bounded noise: symmetric uniform, radius shrunk so |y| <= 1 holds
        # exactly and the conditional mean is preserved.
        radius = np.minimum(self.noise_level, 1.0 - np.abs(mean))
        return mean + rng.uniform(-1.0, 1.0, size=n) * radius

    def validate_support(self, dist):
        """Rademacher labels need |<x, theta*>| <= 1 on every support point."""
        if self.kind == "rademacher" and dist.finite_support:
            margins = np.abs(dist.atoms @ self.theta_star)
            if np.any(margins > 1.0 + 1e-12):
                raise ValueError(
                    f"rademacher labels need |<x, theta*>| <= 1 on the support; max is {margins.max():g}"
                )


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float)

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def halves(self):
        n = len(self) // 2
        first = Dataset(self.x[:n], self.y[:n], dict(self.meta))
        second = Dataset(self.x[n:], self.y[n:], dict(self.meta))
        return first, second


def make_simple_distribution(cov_star, b):
    """Ill-conditioned finite-support law with covariance exactly `cov_star`.

    Puts mass rho_j / b^2 on b * e_j for each eigenpair (rho_j, e_j) and the
    remaining mass on the origin.
    """
    cov_star = symmetrize(cov_star)
    trace = float(np.trace(cov_star))
    if trace > b * b + 1e-12:
        raise ValueError(f"trace {trace:g} exceeds b^2 = {b * b:g}")
    vals, vecs = eig_sym(cov_star)
    vals = np.maximum(vals, 0.0)
    atoms = [b * vecs[:, j] for j in range(len(vals)) if vals[j] > 0]
    probs = [vals[j] / (b * b) for j in range(len(vals)) if vals[j] > 0]
    rest = 1.0 - sum(probs)
    atoms.append(np.zeros(cov_star.shape[0]))
    probs.append(max(rest, 0.0))
    return FiniteSupport(np.array(atoms), np.array(probs), bound=b)


def make_perturbed_distribution(p, rho, atol=1e-12):
    """Mix a finite-support law with a point mass: (1 - rho) p + rho delta_e.

    The unit direction e solves e^T Sigma e = rho^2; it is found by
    interpolating between the extreme eigenvectors of Sigma and bisecting.
    """
    if not p.finite_support:
        raise UnsupportedOracleError("perturbation requires a finite-support distribution")
    if rho == 0.0:
        warnings.warn("rho = 0 leaves the distribution unchanged", stacklevel=2)
        return p
    sigma = p.covariance()
    vals, vecs = eig_sym(sigma)
    lam_max, lam_min = float(vals[0]), float(vals[-1])
    if not (lam_min - atol <= rho <= lam_max + atol):
        raise ValueError(f"rho must lie in [{lam_min:g}, {lam_max:g}], got {rho:g}")
    target = rho * rho
    if not (lam_min - atol <= target <= lam_max + atol):
        lo, hi = math.sqrt(max(lam_min, 0.0)), math.sqrt(lam_max)
        raise ValueError(
            f"no unit vector attains e^T Sigma e = rho^2 = {target:g}; "
            f"feasible rho interval is [{max(lo, lam_min):g}, {min(hi, lam_max):g}]"
        )
    v_min, v_max = vecs[:, -1], vecs[:, 0]

    def quad(s):
        e = math.cos(s) * v_min + math.sin(s) * v_max
        return e @ sigma @ e

    lo_s, hi_s = 0.0, math.pi / 2.0
    for _ in range(200):
        mid = 0.5 * (lo_s + hi_s)
        if quad(mid) < target:
            lo_s = mid
        else:
            hi_s = mid
        if hi_s - lo_s < 1e-16:
            break
    s = 0.5 * (lo_s + hi_s)
    e = math.cos(s) * v_min + math.sin(s) * v_max
    e /= np.linalg.norm(e)
    # Deterministic sign: first non-tiny component positive.
    lead = np.flatnonzero(np.abs(e) > 1e-9)
    if lead.size and e[lead[0]] < 0:
        e = -e

    atoms = [a for a in p.atoms]
    probs = list(p.probs * (1.0 - rho))
    for i, a in enumerate(atoms):
        if np.linalg.norm(a - e) <= 1e-8:
            probs[i] += rho
            break
    else:
        atoms.append(e)
        probs.append(rho)
    return FiniteSupport(np.array(atoms), np.array(probs), bound=max(p.bound, 1.0))


def sample_dataset(dist, labels, t, rng):
    """Draw t i.i.d. rows (x, y); reproducible under a fixed RngStream."""
    if t < 1:
        raise ValueError("t must be at least 1")
    labels.validate_support(dist)
    x = dist.sample(t, rng.child(0))
    y = labels.sample(x, rng.child(1))
    meta = {
        "dist": dist.kind,
        "theta_star": labels.theta_star.tolist(),
        "seed": rng.seed,
        "eps_apx": labels.misspec_size,
    }
    return Dataset(x, y, meta)


class MomentOracle:
    """Exact weighted-moment sums over a finite-support distribution.

    The origin atom contributes zero to every ||Ux||-normalized expectation.
    """

    def __init__(self, atoms, probs):
        self.atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        self.probs = np.asarray(probs, dtype=float)
        self._norms = np.linalg.norm(self.atoms, axis=1)

    @classmethod
    def from_distribution(cls, dist):
        if not dist.finite_support:
            raise UnsupportedOracleError(
                "exact moments need finite support; use a frozen empirical measure instead"
            )
        return cls(dist.atoms, dist.probs)

    @classmethod
    def from_samples(cls, x):
        """Frozen empirical measure with uniform weights."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    @property
    def dim(self):
        return self.atoms.shape[1]

    def covariance(self):
        return symmetrize(np.einsum("i,ij,ik->jk", self.probs, self.atoms, self.atoms))

    def abs_mean(self, theta):
        return float(self.probs @ np.abs(self.atoms @ np.asarray(theta, dtype=float)))

    def _weighted_second_moment(self, mapped, weights):
        return symmetrize(np.einsum("i,ij,ik->jk", weights, mapped, mapped))

    def ldp_term(self, u):
        """E[U x x^T U / ||Ux||] over nonzero atoms."""
        mapped = self.atoms @ u
        norms = np.linalg.norm(mapped, axis=1)
        keep = norms > 0
        w = np.zeros_like(norms)
        w[keep] = self.probs[keep] / norms[keep]
        return self._weighted_second_moment(mapped, w)

    def dp_term(self, w_mat, gamma):
        """E[W x x^T W / (1 + gamma ||Wx||)]."""
        mapped = self.atoms @ w_mat
        norms = np.linalg.norm(mapped, axis=1)
        weights = self.probs / (1.0 + gamma * norms)
        return self._weighted_second_moment(mapped, weights)

    def ldp_design(self, u):
        """E[U x x^T / ||Ux||] (the regression design, one-sided weight)."""
        mapped = self.atoms @ u
        norms = np.linalg.norm(mapped, axis=1)
        keep = norms > 0
        w = np.zeros_like(norms)
        w[keep] = self.probs[keep] / norms[keep]
        return np.einsum("i,ij,ik->jk", w, mapped, self.atoms)

    def ldp_response(self, u, mean_fn):
        """E[U x m(x) / ||Ux||] for a conditional-mean function of the atom."""
        mapped = self.atoms @ u
        norms = np.linalg.norm(mapped, axis=1)
        keep = norms > 0
        w = np.zeros_like(norms)
        w[keep] = self.probs[keep] / norms[keep]
        means = np.asarray(mean_fn(self.atoms), dtype=float)
        return (w * means) @ mapped

    def dp_design(self, w_mat, gamma):
        mapped = self.atoms @ w_mat
        norms = np.linalg.norm(mapped, axis=1)
        weights = self.probs / (1.0 + gamma * norms)
        return np.einsum("i,ij,ik->jk", weights, mapped, self.atoms)

    def dp_response(self, w_mat, gamma, mean_fn):
        mapped = self.atoms @ w_mat
        norms = np.linalg.norm(mapped, axis=1)
        weights = self.probs / (1.0 + gamma * norms)
        means = np.asarray(mean_fn(self.atoms), dtype=float)
        return (weights * means) @ mapped


def moment_oracle(dist):
    """Exact-moment oracle for a finite-support distribution."""
    return MomentOracle.from_distribution(dist)


def kappa_p(dist, c=0.5, tol=1e-10):
    """Smallest truncation radius M (in Sigma-pseudo-norm) with
    E[x x^T 1{||x||_dagger <= M}] >= c * Sigma, scanned over atom radii.

    Returns inf when no atom radius satisfies the condition.
    """
    if not dist.finite_support:
        raise UnsupportedOracleError("kappa is computed on finite-support distributions")
    if not (0.0 < c <= 1.0):
        raise ValueError(f"c must lie in (0, 1], got {c}")
    oracle = MomentOracle.from_distribution(dist)
    sigma = oracle.covariance()
    vals, vecs = eig_sym(sigma)
    inv_vals = np.array([1.0 / v if v > tol else 0.0 for v in vals])
    pinv = (vecs * inv_vals) @ vecs.T
    radii = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", dist.atoms, pinv, dist.atoms), 0.0))
    for m in np.sort(np.unique(radii)):
        keep = radii <= m + tol
        partial = symmetrize(
            np.einsum("i,ij,ik->jk", dist.probs[keep], dist.atoms[keep], dist.atoms[keep])
        )
        gap_vals, _ = eig_sym(partial - c * sigma)
        if gap_vals[-1] >= -tol:
            return float(m)
    return math.inf
