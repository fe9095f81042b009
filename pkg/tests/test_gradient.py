"""Backward-pass identities and the finite-difference certifications."""

import numpy as np
import pytest

from vattn import (
    Scores,
    SimplexDistribution,
    UtilityVector,
    ValueSet,
    advantage_gradient,
    chain_rule_gradient,
    envelope_check,
    finite_difference_gradient,
    finite_difference_hessian,
    fisher_matrix,
    lse,
    lse_hessian_check,
    marginal_utility,
    natural_gradient_identity_check,
    softmax,
    softmax_jacobian,
)
from vattn.core import NumericalFailure


def _sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _random_triple(rng):
    m = int(rng.integers(2, 17))
    s = Scores(rng.uniform(-5, 5, m))
    t = float(rng.uniform(0.25, 4.0))
    p = softmax(s, t).distribution
    u = UtilityVector(rng.uniform(-3, 3, m))
    return p, u, t


# ----------------------------------------------------------------- jacobian


def test_jacobian_uniform_two():
    jac = softmax_jacobian(SimplexDistribution([0.5, 0.5]), 1.0)
    assert _sup(jac.entries, [[0.25, -0.25], [-0.25, 0.25]]) < 1e-15


def test_jacobian_saturated_limit():
    eps = 1e-9
    jac = softmax_jacobian(SimplexDistribution([1.0 - eps, eps]), 1.0)
    assert float(np.max(np.abs(jac.entries))) < 10 * eps


def test_jacobian_ones_kernel():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p, _, t = _random_triple(rng)
        jac = softmax_jacobian(p, t)
        assert float(np.max(np.abs(jac.entries @ np.ones(len(p))))) < 1e-12


def test_jacobian_requires_interior_distribution():
    with pytest.raises(ValueError):
        softmax_jacobian(SimplexDistribution([1.0, 0.0]), 1.0)


def test_jacobian_matches_finite_differences_of_softmax():
    rng = np.random.default_rng(1)
    s = Scores(rng.uniform(-2, 2, 4))
    t = 1.3
    jac = softmax_jacobian(softmax(s, t).distribution, t)
    h = 1e-6
    for j in range(4):
        probe = np.zeros(4)
        probe[j] = h
        hi = softmax(Scores(s.values + probe), t).distribution.weights
        lo = softmax(Scores(s.values - probe), t).distribution.weights
        assert _sup((hi - lo) / (2 * h), jac.entries[:, j]) < 1e-8


# ----------------------------------------------------------- marginal utility


def test_marginal_utility_zero_gradient():
    u = marginal_utility([0.0, 0.0], ValueSet([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(u.values, [0.0, 0.0])


def test_marginal_utility_basis_case():
    u = marginal_utility([-1.0, 0.0], ValueSet([[1.0, 0.0], [0.0, 1.0]]))
    assert np.array_equal(u.values, [1.0, 0.0])


def test_marginal_utility_example():
    u = marginal_utility([1.0, -1.0], ValueSet([[2.0, 0.0], [0.0, 3.0]]))
    assert np.array_equal(u.values, [-2.0, 3.0])


def test_marginal_utility_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        marginal_utility([1.0, 2.0, 3.0], ValueSet([[1.0, 0.0], [0.0, 1.0]]))


# ------------------------------------------------------------ advantage form


def test_constant_utilities_give_zero_gradient():
    # dyadic weights sum to exactly 1, so the baseline cancels exactly
    p = SimplexDistribution([0.25, 0.25, 0.5])
    report = advantage_gradient(p, UtilityVector([2.0, 2.0, 2.0]), 1.0)
    assert np.array_equal(report.score_gradient, [0.0, 0.0, 0.0])
    assert report.expected_utility == 2.0


def test_advantage_uniform_example():
    report = advantage_gradient(SimplexDistribution([0.5, 0.5]), UtilityVector([1.0, 0.0]), 1.0)
    assert abs(report.expected_utility - 0.5) < 1e-15
    assert _sup(report.score_gradient, [-0.25, 0.25]) < 1e-15


def test_advantage_skewed_example():
    report = advantage_gradient(SimplexDistribution([0.9, 0.1]), UtilityVector([0.0, 1.0]), 2.0)
    assert abs(report.expected_utility - 0.1) < 1e-15
    assert _sup(report.score_gradient, [0.045, -0.045]) < 1e-15


def test_chain_rule_equals_advantage_form():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        p, u, t = _random_triple(rng)
        report = advantage_gradient(p, u, t)
        assert _sup(report.score_gradient, chain_rule_gradient(p, u, t)) < 1e-12
        assert abs(float(report.score_gradient.sum())) < 1e-10
        assert abs(float(p.weights @ report.advantage)) < 1e-10


def test_chain_rule_degenerate_single_key():
    p = SimplexDistribution([1.0])
    assert np.array_equal(chain_rule_gradient(p, UtilityVector([5.0]), 1.0), [0.0])


def test_advantage_sign_semantics():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p, u, t = _random_triple(rng)
        report = advantage_gradient(p, u, t)
        above = report.advantage > 0.0
        assert np.all(report.score_gradient[above] < 0.0)


# ------------------------------------------------------------------- fisher


def test_fisher_uniform_two():
    fim = fisher_matrix(SimplexDistribution([0.5, 0.5]), 1.0)
    assert _sup(fim.entries, [[0.25, -0.25], [-0.25, 0.25]]) < 1e-15


def test_fisher_is_jacobian_over_temperature():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p, _, t = _random_triple(rng)
        fim = fisher_matrix(p, t)
        jac = softmax_jacobian(p, t)
        assert _sup(fim.entries, jac.entries / t) < 1e-13


def test_fisher_uniform_three_eigenvalues():
    fim = fisher_matrix(SimplexDistribution([1 / 3, 1 / 3, 1 / 3]), 1.0)
    eigenvalues = np.linalg.eigvalsh(fim.entries)
    assert _sup(eigenvalues, [0.0, 1 / 3, 1 / 3]) < 1e-12


def test_fisher_psd_and_kernel():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, _, t = _random_triple(rng)
        fim = fisher_matrix(p, t)
        assert float(np.linalg.eigvalsh(fim.entries)[0]) >= -1e-10
        assert float(np.max(np.abs(fim.entries @ np.ones(len(p))))) < 1e-12


# ------------------------------------------------------- natural gradient


def test_natural_gradient_identity_random():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        p, u, t = _random_triple(rng)
        assert natural_gradient_identity_check(p, u, t) < 1e-12


def test_natural_gradient_constant_utilities_exact_zero():
    p = SimplexDistribution([0.25, 0.25, 0.5])
    assert natural_gradient_identity_check(p, UtilityVector([3.0, 3.0, 3.0]), 1.0) == 0.0


# -------------------------------------------------------- finite differences


def test_fd_gradient_linear_function():
    c = np.array([1.5, -2.0, 0.25])
    grad = finite_difference_gradient(lambda x: float(c @ x), np.array([0.3, 0.1, -0.7]), 1e-5)
    assert _sup(grad, c) < 1e-10


def test_fd_gradient_quadratic():
    x = np.array([0.5, -1.5, 2.0])
    grad = finite_difference_gradient(lambda v: 0.5 * float(v @ v), x, 1e-5)
    assert _sup(grad, x) < 1e-8


def test_fd_gradient_of_lse_is_softmax():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.uniform(-5, 5, 5)
        grad = finite_difference_gradient(lambda v: lse(Scores(v), 1.0), x, 1e-5)
        assert _sup(grad, softmax(Scores(x), 1.0).distribution.weights) < 1e-7


def test_fd_gradient_rejects_bad_step_and_nonfinite():
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda v: 0.0, np.zeros(2), 0.0)
    with pytest.raises(NumericalFailure):
        finite_difference_gradient(lambda v: float("nan"), np.zeros(2), 1e-5)


def test_fd_hessian_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    hess = finite_difference_hessian(
        lambda v: 0.5 * float(v @ A @ v), np.array([0.2, -0.4]), 1e-4
    )
    assert _sup(hess, A) < 1e-6


# ------------------------------------------------ derivative certifications


def test_lse_hessian_check_random():
    rng = np.random.default_rng(8)
    for _ in range(20):
        s = Scores(rng.uniform(-5, 5, 4))
        assert lse_hessian_check(s, 1.0, 1e-4) < 1e-6


def test_lse_hessian_zero_scores_closed_form():
    m, t = 4, 1.0
    s = Scores(np.zeros(m))
    numeric = finite_difference_hessian(lambda x: lse(Scores(x), t), s.values, 1e-4)
    closed = (np.eye(m) / m - np.ones((m, m)) / m**2) / t
    assert _sup(numeric, closed) < 1e-6


def test_envelope_check_random():
    rng = np.random.default_rng(9)
    for _ in range(20):
        s = Scores(rng.uniform(-5, 5, 5))
        assert envelope_check(s, 0.5, 1e-5) < 1e-7


def test_envelope_constant_scores():
    s = Scores(np.zeros(4))
    grad = finite_difference_gradient(lambda x: lse(Scores(x), 1.0), s.values, 1e-5)
    assert _sup(grad, np.full(4, 0.25)) < 1e-7
