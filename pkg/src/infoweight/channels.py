"""Randomized privatization primitives and the composition ledger.

Every channel takes an explicit RngStream so that reruns with the same
(seed, counter) reproduce outputs bit-exactly, and an optional PrivacyLedger
that records one entry per mechanism invocation.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PrivacyBudget:
    """An (alpha, beta) privacy target with the derived Gaussian noise multiplier."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")

    @property
    def sigma(self):
        """Noise multiplier 4 * sqrt(log(2.5 / beta)) / alpha."""
        return 4.0 * math.sqrt(math.log(2.5 / self.beta)) / self.alpha


@dataclass
class LedgerEntry:
    mechanism: str
    alpha: float
    beta: float
    sensitivity: float
    # Label of the disjoint data slice this mechanism touched ("sample", a
    # batch id, "dataset", ...).  Entries sharing a scope compose sequentially;
    # entries on disjoint scopes compose in parallel.
    scope: str = "dataset"
    count: int = 1


@dataclass
class PrivacyLedger:
    """Append-only record of privatization events."""

    entries: list = field(default_factory=list)

    def record(self, mechanism, alpha, beta, sensitivity, scope="dataset", count=1):
        self.entries.append(LedgerEntry(mechanism, alpha, beta, sensitivity, scope, count))

    def totals(self):
        """Raw sequential-composition totals (sum over entries, with multiplicity)."""
        a = sum(e.alpha * e.count for e in self.entries)
        b = sum(e.beta * e.count for e in self.entries)
        return a, b

    def declared_guarantee(self):
        """Per-record guarantee under disjoint-slice (parallel) composition.

        Entries on the same scope add up; the guarantee is the worst scope.
        Per-sample entries count once per record regardless of `count`.
        """
        per_scope = {}
        for e in self.entries:
            a, b = per_scope.get(e.scope, (0.0, 0.0))
            per_scope[e.scope] = (a + e.alpha, b + e.beta)
        if not per_scope:
            return 0.0, 0.0
        worst = max(per_scope.values(), key=lambda ab: (ab[0], ab[1]))
        return worst

    def to_dict(self):
        return {
            "entries": [
                {
                    "mechanism": e.mechanism,
                    "alpha": e.alpha,
                    "beta": e.beta,
                    "sensitivity": e.sensitivity,
                    "scope": e.scope,
                    "count": e.count,
                }
                for e in self.entries
            ],
            "totals": self.totals(),
            "declared": self.declared_guarantee(),
        }


class RngStream:
    """Counter-based random stream: identical (seed, counter) -> identical draws.

    Backed by the Philox bit generator.  `child(i)` derives independent streams
    by jumping the counter in its high bits, so per-task streams never overlap
    for any realistic draw volume.
    """

    def __init__(self, seed, counter=0):
        self.seed = int(seed)
        self.counter = int(counter)
        self._gen = np.random.Generator(
            np.random.Philox(key=self.seed & ((1 << 128) - 1), counter=self.counter << 64)
        )

    def child(self, index):
        return RngStream(self.seed, self.counter + 1 + int(index))

    @property
    def generator(self):
        return self._gen

    def normal(self, scale=1.0, size=None):
        return self._gen.normal(0.0, scale, size=size)

    def laplace(self, scale, size=None):
        return self._gen.laplace(0.0, scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n, size=None, p=None):
        return self._gen.choice(n, size=size, p=p)


def gauss_priv(v, delta, budget, rng, ledger=None, mechanism="gauss", scope="dataset", count=1):
    """Gaussian channel: v + N(0, (sigma * delta)^2) i.i.d. per coordinate.

    `delta` must upper-bound half the L2 diameter of the released statistic.
    Works on arrays of any shape.  Ledgered at (alpha, beta / 2).
    """
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    v = np.asarray(v, dtype=float)
    out = v + rng.normal(scale=budget.sigma * delta, size=v.shape)
    if ledger is not None:
        ledger.record(mechanism, budget.alpha, budget.beta / 2.0, delta, scope, count)
    return out


def sym_gauss_priv(m, delta, budget, rng, ledger=None, mechanism="sym-gauss", scope="dataset", count=1):
    """Symmetric Gaussian channel: adds Z with Z_ij = Z_ji ~ N(0, (sigma*delta)^2).

    Accepts a single (d, d) matrix or a batch shaped (n, d, d); each matrix in
    a batch gets an independent symmetric noise draw.
    """
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    m = np.asarray(m, dtype=float)
    batched = m.ndim == 3
    mats = m if batched else m[None]
    n, d, _ = mats.shape
    z = rng.normal(scale=budget.sigma * delta, size=(n, d, d))
    iu = np.triu_indices(d, k=1)
    z[:, iu[1], iu[0]] = z[:, iu[0], iu[1]]
    out = mats + z
    if ledger is not None:
        ledger.record(mechanism, budget.alpha, budget.beta / 2.0, delta, scope, count)
    return out if batched else out[0]


def laplace_priv(v, sensitivity, eps, rng, ledger=None, mechanism="laplace", scope="dataset", count=1):
    """Laplace mechanism: v + Laplace(scale = sensitivity / eps).

    Accepts scalars or arrays (per-entry independent noise).
    """
    if sensitivity < 0:
        raise ValueError(f"sensitivity must be nonnegative, got {sensitivity}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = np.asarray(v, dtype=float)
    scale = sensitivity / eps
    out = v + (rng.laplace(scale, size=v.shape) if scale > 0 else 0.0)
    if ledger is not None:
        ledger.record(mechanism, eps, 0.0, sensitivity, scope, count)
    return out if out.ndim else float(out)


def _hemisphere_mean_coeff(d):
    """E[<z, u>] for z uniform on the d-sphere conditioned on <z, u> > 0."""
    if d == 1:
        return 1.0
    # 2/(d-1) * Gamma(d/2) / (sqrt(pi) * Gamma((d-1)/2))
    return (
        2.0
        / (d - 1)
        * math.exp(math.lgamma(d / 2.0) - math.lgamma((d - 1) / 2.0))
        / math.sqrt(math.pi)
    )


def djw_l2_priv(v, alpha, rng, ledger=None, mechanism="djw-l2", scope="sample", count=1):
    """Pure (alpha, 0)-LDP unbiased release of a vector in the unit ball.

    Duchi-Jordan-Wainwright sphere mechanism: reflect v to a unit vector with
    mean v, flip it toward/away from a uniform sphere point with bias
    (e^a - 1)/(e^a + 1), and rescale so the released vector stays unbiased.
    Accepts one vector (d,) or a batch (n, d).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    v = np.asarray(v, dtype=float)
    batched = v.ndim == 2
    vecs = v if batched else v[None]
    n, d = vecs.shape
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms > 1.0 + 1e-9):
        raise ValueError(f"input norm {norms.max():g} exceeds the unit ball")

    # Step 1: unbiased reflection to the unit sphere.  Zero vectors get a
    # uniformly random direction (sign-symmetric, so still mean zero).
    directions = np.zeros((n, d))
    nz = norms > 0
    directions[nz] = vecs[nz] / norms[nz, None]
    raw = rng.normal(size=(n, d))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    directions[~nz] = raw[~nz]
    keep = rng.uniform(size=n) < 0.5 * (1.0 + norms)
    unit = np.where(keep[:, None], directions, -directions)

    # Step 2: biased hemisphere sampling around the reflected direction.
    sphere = rng.normal(size=(n, d))
    sphere /= np.linalg.norm(sphere, axis=1, keepdims=True)
    bias = math.exp(alpha) / (1.0 + math.exp(alpha))
    toward = rng.uniform(size=n) < bias
    dots = np.einsum("ij,ij->i", sphere, unit)
    flip = np.where(toward, dots < 0, dots >= 0)
    sphere[flip] *= -1.0

    scale_inv = _hemisphere_mean_coeff(d) * (math.exp(alpha) - 1.0) / (math.exp(alpha) + 1.0)
    out = sphere / scale_inv
    if ledger is not None:
        ledger.record(mechanism, alpha, 0.0, 1.0, scope, count)
    return out if batched else out[0]
