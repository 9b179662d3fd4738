import math

import numpy as np
import pytest

from infoweight.channels import (
    PrivacyBudget,
    PrivacyLedger,
    RngStream,
    djw_l2_priv,
    gauss_priv,
    laplace_priv,
    sym_gauss_priv,
)


def test_budget_sigma_formula():
    budget = PrivacyBudget(1.0, 0.05)
    assert budget.sigma == pytest.approx(4.0 * math.sqrt(math.log(50.0)))
    assert budget.sigma == pytest.approx(7.9115, abs=5e-4)


def test_budget_validation():
    with pytest.raises(ValueError):
        PrivacyBudget(0.0, 0.5)
    with pytest.raises(ValueError):
        PrivacyBudget(0.5, 1.5)


def test_rng_stream_reproducible():
    a = RngStream(123, 7).normal(size=5)
    b = RngStream(123, 7).normal(size=5)
    assert np.array_equal(a, b)
    c = RngStream(123, 8).normal(size=5)
    assert not np.array_equal(a, c)


def test_rng_children_distinct():
    root = RngStream(9)
    a = root.child(0).normal(size=4)
    b = root.child(1).normal(size=4)
    assert not np.array_equal(a, b)


def test_gauss_priv_zero_delta_exact():
    budget = PrivacyBudget(0.5, 0.1)
    v = np.array([1.0, -2.0, 3.0])
    out = gauss_priv(v, 0.0, budget, RngStream(0))
    assert np.array_equal(out, v)


def test_gauss_priv_rejects_negative_delta():
    with pytest.raises(ValueError):
        gauss_priv(np.zeros(2), -1.0, PrivacyBudget(0.5, 0.1), RngStream(0))


def test_gauss_priv_calibration():
    budget = PrivacyBudget(0.5, 0.1)
    out = gauss_priv(np.zeros(100_000), 1.0, budget, RngStream(1))
    assert np.std(out) == pytest.approx(budget.sigma, rel=0.02)


def test_gauss_priv_ledger_records_half_beta():
    budget = PrivacyBudget(0.5, 0.1)
    ledger = PrivacyLedger()
    gauss_priv(np.zeros(3), 1.0, budget, RngStream(2), ledger=ledger)
    entry = ledger.entries[0]
    assert entry.alpha == 0.5
    assert entry.beta == 0.05


def test_sym_gauss_priv_symmetric_and_zero_delta():
    budget = PrivacyBudget(1.0, 0.1)
    m = np.array([[1.0, 0.3], [0.3, 2.0]])
    assert np.array_equal(sym_gauss_priv(m, 0.0, budget, RngStream(3)), m)
    out = sym_gauss_priv(m, 1.0, budget, RngStream(3))
    assert np.array_equal(out, out.T)


def test_sym_gauss_priv_calibration():
    budget = PrivacyBudget(1.0, 0.1)
    draws = sym_gauss_priv(np.zeros((100_000 // 4, 3, 3)), 1.0, budget, RngStream(4))
    offdiag = draws[:, 0, 1]
    diag = draws[:, 2, 2]
    assert np.std(offdiag) == pytest.approx(budget.sigma, rel=0.02)
    assert np.std(diag) == pytest.approx(budget.sigma, rel=0.02)
    assert np.array_equal(draws[:, 0, 1], draws[:, 1, 0])


def test_sym_gauss_priv_operator_norm_scaling():
    # Operator norms of d x d symmetric Gaussian noise concentrate at C sqrt(d).
    budget = PrivacyBudget(1.0, 0.05)
    d = 10
    draws = sym_gauss_priv(np.zeros((1000, d, d)), 1.0 / budget.sigma, budget, RngStream(5))
    norms = np.linalg.norm(draws, ord=2, axis=(1, 2))
    ratio = np.median(norms) / math.sqrt(d)
    assert 1.5 <= ratio <= 3.0


def test_laplace_priv_zero_sensitivity_exact():
    assert laplace_priv(2.5, 0.0, 1.0, RngStream(6)) == 2.5


def test_laplace_priv_invalid_eps():
    with pytest.raises(ValueError):
        laplace_priv(0.0, 1.0, 0.0, RngStream(6))


def test_laplace_priv_default_scale_is_four_over_alpha():
    # Sensitivity-2 statistic at per-statistic budget alpha/2 yields scale 4/alpha.
    alpha = 0.8
    scale = 2.0 / (alpha / 2.0)
    assert scale == pytest.approx(4.0 / alpha)


def test_laplace_priv_variance():
    draws = laplace_priv(np.zeros(100_000), 2.0, 0.5, RngStream(7))
    scale = 2.0 / 0.5
    assert np.var(draws) == pytest.approx(2.0 * scale**2, rel=0.03)


def test_djw_rejects_large_input():
    with pytest.raises(ValueError):
        djw_l2_priv(np.array([1.5, 0.0]), 1.0, RngStream(8))


def test_djw_unbiased_basis_vector():
    v = np.array([1.0, 0.0, 0.0])
    out = djw_l2_priv(np.tile(v, (100_000, 1)), 1.0, RngStream(9))
    assert np.max(np.abs(out.mean(axis=0) - v)) <= 0.02


def test_djw_zero_vector_mean_zero():
    out = djw_l2_priv(np.zeros((50_000, 3)), 1.0, RngStream(10))
    assert np.max(np.abs(out.mean(axis=0))) <= 0.05


def test_djw_second_moment_scaling():
    alpha, d = 1.0, 3
    v = np.array([0.3, -0.2, 0.1])
    out = djw_l2_priv(np.tile(v, (50_000, 1)), alpha, RngStream(11))
    measured_c = np.mean(np.sum((out - v) ** 2, axis=1)) * alpha**2 / d
    assert measured_c <= 10.0


def test_channel_determinism_bit_exact():
    budget = PrivacyBudget(0.7, 0.2)
    v = np.linspace(-1, 1, 11)
    a = gauss_priv(v, 1.0, budget, RngStream(55, 3))
    b = gauss_priv(v, 1.0, budget, RngStream(55, 3))
    assert np.array_equal(a, b)
    c = djw_l2_priv(np.array([0.5, 0.1]), 0.9, RngStream(56, 1))
    d = djw_l2_priv(np.array([0.5, 0.1]), 0.9, RngStream(56, 1))
    assert np.array_equal(c, d)


def test_ledger_totals_additive():
    ledger = PrivacyLedger()
    ledger.record("a", 0.5, 0.01, 1.0, "s1")
    ledger.record("b", 0.25, 0.02, 1.0, "s1")
    ledger.record("c", 1.0, 0.05, 1.0, "s2")
    assert ledger.totals() == (1.75, 0.08)
    assert ledger.declared_guarantee() == (1.0, 0.05)
