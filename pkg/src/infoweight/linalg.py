"""Dense symmetric/PSD matrix kernels shared by the solvers and estimators.

All matrices are plain numpy arrays.  Anything documented as symmetric is
symmetrized on entry with (A + A^T)/2 so that accumulated roundoff from the
callers cannot leak into the eigen-solvers.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EigenSolveError, SingularMatrixError

# Dense O(d^3) kernels only; refuse anything bigger than this.
MAX_DIM = 4096

# Eigenvalue floor applied by default when taking inverse powers.
DEFAULT_EIG_FLOOR = 1e-12


def symmetrize(a):
    """Return (A + A^T)/2 as a new array."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def eig_sym(m):
    """Eigen-decompose a symmetric matrix.

    Returns (eigenvalues in descending order, matching orthonormal columns).
    """
    m = np.asarray(m, dtype=float)
    if m.shape[0] > MAX_DIM:
        raise ValueError(f"matrix dimension {m.shape[0]} exceeds the configured cap {MAX_DIM}")
    m = symmetrize(m)
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"eigen-solver failed: {exc}", matrix=m) from exc
    return vals[::-1].copy(), vecs[:, ::-1].copy()


@dataclass(frozen=True)
class PsdCertificate:
    """Witness that a symmetric matrix is PSD up to a tolerance."""

    matrix: np.ndarray
    min_eig: float
    max_eig: float
    tol: float = 0.0

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.min_eig < -self.tol:
            raise ValueError(
                f"matrix is not PSD at tolerance {self.tol:g}: min eigenvalue {self.min_eig:g}"
            )
        if self.min_eig > self.max_eig:
            raise ValueError("min eigenvalue exceeds max eigenvalue")


def certify_psd(m, tol=0.0):
    """Eigen-check a matrix and return its PSD certificate (raises otherwise)."""
    vals, _ = eig_sym(m)
    return PsdCertificate(symmetrize(m), float(vals[-1]), float(vals[0]), tol)


def mat_power(m, p, floor=DEFAULT_EIG_FLOOR):
    """Spectral power m^p with eigenvalues clamped below at `floor`.

    With floor=0 and a negative power, a non-positive eigenvalue raises
    SingularMatrixError instead of silently producing inf.
    """
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    vals, vecs = eig_sym(m)
    clamped = np.maximum(vals, floor)
    if p < 0 and np.any(clamped <= 0):
        raise SingularMatrixError(
            f"matrix power {p} undefined: smallest clamped eigenvalue is {clamped.min():g}"
        )
    powered = clamped.astype(float) ** p
    return symmetrize((vecs * powered) @ vecs.T)


def sym_polar(a):
    """Symmetric polar factor (a^T a)^(1/2); PSD for any real square input."""
    a = np.asarray(a, dtype=float)
    gram = symmetrize(a.T @ a)
    vals, vecs = eig_sym(gram)
    # Gram matrices are PSD up to roundoff; tiny negatives are noise.
    root = np.sqrt(np.maximum(vals, 0.0))
    return symmetrize((vecs * root) @ vecs.T)


def clip(v, r):
    """Clamp a scalar to [-r, r]."""
    return max(min(v, r), -r)


def project_ball(v, r):
    """Euclidean projection onto the centered ball of radius r."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= r:
        return v.copy()
    return v * (r / norm)


def op_norm(m):
    """Spectral norm of a symmetric matrix."""
    vals, _ = eig_sym(m)
    return float(np.max(np.abs(vals)))


def min_eig(m):
    """Smallest eigenvalue of a symmetric matrix."""
    vals, _ = eig_sym(m)
    return float(vals[-1])


def is_psd(m, tol=0.0):
    """True when the smallest eigenvalue is at least -tol."""
    return min_eig(m) >= -tol


def constrained_lstsq(a, b, tol=1e-10, max_iters=200_000):
    """Minimize ||a @ theta - b|| over the unit ball.

    Solves unconstrained first; if the solution leaves the ball, runs projected
    gradient descent with fixed step 1/(2 s_max^2) until the gradient-mapping
    norm drops below `tol`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    theta, *_ = np.linalg.lstsq(a, b, rcond=None)
    if np.linalg.norm(theta) <= 1.0:
        return theta
    s_max = np.linalg.norm(a, 2)
    if s_max == 0.0:
        return np.zeros_like(theta)
    step = 1.0 / (2.0 * s_max**2)
    theta = project_ball(theta, 1.0)
    for _ in range(max_iters):
        grad = 2.0 * a.T @ (a @ theta - b)
        nxt = project_ball(theta - step * grad, 1.0)
        if np.linalg.norm(theta - nxt) / step <= tol:
            return nxt
        theta = nxt
    return theta
