import numpy as np
import pytest

from infoweight.errors import SingularMatrixError
from infoweight.linalg import (
    clip,
    constrained_lstsq,
    eig_sym,
    mat_power,
    project_ball,
    sym_polar,
)


def random_symmetric(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) * scale
    return 0.5 * (a + a.T)


def random_psd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) * scale
    return a @ a.T + 1e-3 * np.eye(d)


def random_orthogonal(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q


def test_eig_diagonal():
    vals, vecs = eig_sym(np.diag([3.0, 1.0]))
    assert np.allclose(vals, [3.0, 1.0])
    assert np.allclose(np.abs(vecs), np.eye(2))


def test_eig_two_by_two_analytic():
    vals, vecs = eig_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(vals, [1.0, -1.0])
    expected = np.array([1.0, 1.0]) / np.sqrt(2)
    assert np.allclose(np.abs(vecs[:, 0]), expected)


def test_eig_reconstruction_residual():
    rng = np.random.default_rng(0)
    m = random_symmetric(rng, 5)
    vals, vecs = eig_sym(m)
    recon = (vecs * vals) @ vecs.T
    op = np.abs(vals).max()
    assert np.max(np.abs(recon - m)) <= 1e-8 * (1.0 + op)
    assert np.max(np.abs(vecs.T @ vecs - np.eye(5))) <= 1e-10


def test_mat_power_square_root():
    out = mat_power(np.diag([4.0, 9.0]), 0.5, floor=0.0)
    assert np.allclose(out, np.diag([2.0, 3.0]))


def test_mat_power_inverse_root():
    out = mat_power(np.diag([4.0, 9.0]), -0.5, floor=0.0)
    assert np.allclose(out, np.diag([0.5, 1.0 / 3.0]))


def test_mat_power_clamps_before_powering():
    out = mat_power(np.diag([1e-20, 1.0]), -0.5, floor=1e-12)
    assert np.allclose(np.sort(np.diag(out)), [1.0, 1e6])


def test_mat_power_zero_floor_singular():
    with pytest.raises(SingularMatrixError):
        mat_power(np.diag([0.0, 1.0]), -1.0, floor=0.0)


def test_mat_power_semigroup():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = random_psd(rng, 4)
        a = mat_power(mat_power(m, 0.5, floor=0.0), -1.0, floor=0.0)
        b = mat_power(m, -0.5, floor=0.0)
        assert np.max(np.abs(a - b)) <= 1e-8 * (1 + np.abs(np.linalg.eigvalsh(b)).max())


def test_sym_polar_orthogonal_gives_identity():
    rng = np.random.default_rng(2)
    q = random_orthogonal(rng, 4)
    assert np.allclose(sym_polar(q), np.eye(4), atol=1e-10)


def test_sym_polar_diagonal_takes_abs():
    assert np.allclose(sym_polar(np.diag([2.0, -3.0])), np.diag([2.0, 3.0]))


def test_sym_polar_left_orthogonal_invariance():
    rng = np.random.default_rng(3)
    for _ in range(10):
        f = random_psd(rng, 3)
        u = random_psd(rng, 3)
        a = np.linalg.inv(sym_polar(f)) @ u  # some nonsymmetric square matrix
        q = random_orthogonal(rng, 3)
        lhs = sym_polar(q @ a)
        rhs = sym_polar(a)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.abs(rhs).max())
        assert np.min(np.linalg.eigvalsh(rhs)) >= -1e-12


def test_clip_values():
    assert clip(1.5, 1.0) == 1.0
    assert clip(-0.2, 1.0) == -0.2
    assert clip(-7.0, 2.0) == -2.0


def test_project_ball_cases():
    assert np.allclose(project_ball([3.0, 4.0], 5.0), [3.0, 4.0])
    assert np.allclose(project_ball([3.0, 4.0], 1.0), [0.6, 0.8])
    assert np.allclose(project_ball([0.0, 0.0], 1.0), [0.0, 0.0])


def test_project_ball_idempotent_and_nonexpansive():
    rng = np.random.default_rng(4)
    for _ in range(50):
        u = rng.normal(size=3) * 3
        v = rng.normal(size=3) * 3
        pu, pv = project_ball(u, 1.0), project_ball(v, 1.0)
        assert np.allclose(project_ball(pu, 1.0), pu)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12


def test_constrained_lstsq_interior_matches_lstsq():
    rng = np.random.default_rng(5)
    a = random_psd(rng, 3) + np.eye(3)
    theta_true = np.array([0.2, -0.1, 0.3])
    b = a @ theta_true
    theta = constrained_lstsq(a, b)
    assert np.allclose(theta, theta_true, atol=1e-8)


def test_constrained_lstsq_boundary_solution():
    a = np.eye(2)
    b = np.array([3.0, 0.0])
    theta = constrained_lstsq(a, b)
    assert np.linalg.norm(theta) <= 1.0 + 1e-9
    assert np.allclose(theta, [1.0, 0.0], atol=1e-6)


def test_psd_certificate_witness():
    from infoweight.linalg import MAX_DIM, certify_psd

    cert = certify_psd(np.diag([2.0, 0.5]))
    assert cert.min_eig == pytest.approx(0.5)
    assert cert.max_eig == pytest.approx(2.0)
    assert cert.min_eig <= cert.max_eig
    near = certify_psd(np.diag([1.0, -1e-12]), tol=1e-10)
    assert near.min_eig >= -near.tol
    with pytest.raises(ValueError):
        certify_psd(np.diag([1.0, -0.5]))
    assert MAX_DIM == 4096


def test_eig_rejects_oversized_matrix():
    big = np.zeros((4097, 4097))
    with pytest.raises(ValueError, match="4096"):
        eig_sym(big)
