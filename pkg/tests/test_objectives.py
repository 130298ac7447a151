#!/usr/bin/env python3
"""Tests for the least-squares and logistic objectives."""
import math

import numpy as np
import pytest

from foba_select.errors import DimensionMismatch, NonFiniteValue, ZeroCurvatureColumn
from foba_select.objectives import LeastSquaresProblem, LogisticL2Problem


def _labels(rng, n):
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


def _naive_squared_error(X, y, beta):
    n, d = X.shape
    total = []
    for i in range(n):
        fitted = math.fsum(float(X[i, j]) * float(beta[j]) for j in range(d))
        total.append((fitted - float(y[i])) ** 2)
    return 0.5 * math.fsum(total)


def _naive_logistic(X, y, beta, lam):
    n, d = X.shape
    losses = []
    for i in range(n):
        margin = float(y[i]) * math.fsum(float(X[i, j]) * float(beta[j]) for j in range(d))
        losses.append(math.log1p(math.exp(-margin)) if margin > -30 else -margin + math.log1p(math.exp(margin)))
    ridge = 0.5 * lam * math.fsum(float(b) ** 2 for b in beta)
    return math.fsum(losses) / n + ridge


@pytest.mark.unit
class TestLeastSquares:
    """Test cases for the half squared error objective."""

    def setup_method(self):
        """Set up test fixtures."""
        self.p = LeastSquaresProblem(np.eye(2), np.array([1.0, 0.0]))

    def test_value_examples(self):
        """Test that Q is half the squared residual norm."""
        assert self.p.value(np.zeros(2)) == 0.5, "Q(0) should be 1/2 ||y||^2"
        assert self.p.value(np.array([1.0, 0.0])) == 0.0, "Exact fit should give zero"

    def test_value_matches_naive_sum(self, rng):
        """Test that Q agrees with an explicit double loop over samples and features."""
        X = rng.standard_normal((20, 8))
        y = rng.standard_normal(20)
        p = LeastSquaresProblem(X, y)
        for _ in range(5):
            beta = rng.standard_normal(8)
            expected = _naive_squared_error(X, y, beta)
            assert p.value(beta) == pytest.approx(expected, rel=1e-12), (
                f"Q should be 1/2 sum of squared residuals, got {p.value(beta)!r} vs {expected!r}"
            )

    def test_gradient_example(self):
        """Test the gradient X^T (X beta - y) on the identity design."""
        assert self.p.gradient(np.zeros(2)).tolist() == [-1.0, 0.0], "Gradient at zero should be -y"

    def test_dimension_checks(self):
        """Test that wrong-length coefficients and mismatched data are rejected."""
        with pytest.raises(DimensionMismatch):
            self.p.value(np.zeros(3))
        with pytest.raises(DimensionMismatch):
            LeastSquaresProblem(np.eye(3), np.zeros(2))

    def test_rejects_non_finite_data(self):
        """Test that NaN in the design is refused at construction."""
        with pytest.raises(NonFiniteValue):
            LeastSquaresProblem(np.array([[np.nan]]), np.zeros(1))

    def test_exact_line_min_unit_column(self, rng):
        """Test that a unit column's line minimum decreases Q by g_j^2 / 2."""
        X = rng.standard_normal((20, 5))
        X /= np.linalg.norm(X, axis=0)
        p = LeastSquaresProblem(X, rng.standard_normal(20))
        beta = rng.standard_normal(5)
        g = p.gradient(beta)
        alpha, q = p.exact_line_min(beta, 2)
        assert p.value(beta) - q == pytest.approx(g[2] ** 2 / 2, rel=1e-10), "Decrease should be g_j^2 / 2"
        assert p.value(beta + alpha * np.eye(5)[2]) == pytest.approx(q, rel=1e-12), "Reported Q should match the step"

    def test_zero_column(self):
        """Test that a zero column has no line minimum."""
        p = LeastSquaresProblem(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones(2))
        with pytest.raises(ZeroCurvatureColumn):
            p.exact_line_min(np.zeros(2), 1)

    def test_restricted_hessian(self, rng):
        """Test that the restricted Hessian is the Gram block of the chosen columns."""
        X = rng.standard_normal((10, 4))
        p = LeastSquaresProblem(X, rng.standard_normal(10))
        idx = np.array([0, 3])
        assert np.allclose(p.restricted_hessian(np.zeros(4), idx), X[:, idx].T @ X[:, idx]), "Expected X_F^T X_F"

    def test_line_restriction_matches_value(self, rng):
        """Test that the coordinate line reproduces Q and its derivatives."""
        X = rng.standard_normal((10, 4))
        p = LeastSquaresProblem(X, rng.standard_normal(10))
        beta = rng.standard_normal(4)
        q, d1, d2 = p.line_restriction(beta, 1).derivatives(0.3)
        shifted = beta.copy()
        shifted[1] += 0.3
        assert q == pytest.approx(p.value(shifted), rel=1e-12), "Line value should match Q"
        assert d1 == pytest.approx(p.gradient(shifted)[1], rel=1e-10), "Line slope should match g_j"
        assert d2 == pytest.approx(X[:, 1] @ X[:, 1], rel=1e-12), "Line curvature should be ||x_j||^2"

    def test_convexity_spot_checks(self, rng):
        """Test Q along random chords lies below the chord."""
        X = rng.standard_normal((15, 6))
        p = LeastSquaresProblem(X, rng.standard_normal(15))
        for _ in range(20):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            t = rng.random()
            assert p.value(t * a + (1 - t) * b) <= t * p.value(a) + (1 - t) * p.value(b) + 1e-9, "Q should be convex"


@pytest.mark.unit
class TestLogistic:
    """Test cases for the ridge-regularized mean logistic loss."""

    def test_value_at_zero(self):
        """Test that the unregularized loss at zero is log 2."""
        p = LogisticL2Problem(np.array([[1.0], [2.0]]), np.array([1.0, -1.0]), lam=0.0)
        assert p.value(np.zeros(1)) == pytest.approx(np.log(2.0), abs=1e-15), "Q(0) should be log 2"

    @pytest.mark.parametrize("lam", [0.0, 0.01])
    def test_value_matches_compensated_sum(self, lam):
        """Test Q against a per-sample loop summed with compensated arithmetic."""
        rng = np.random.default_rng(5)
        X = rng.standard_normal((20, 8))
        y = _labels(rng, 20)
        p = LogisticL2Problem(X, y, lam)
        for _ in range(5):
            beta = rng.standard_normal(8)
            expected = _naive_logistic(X, y, beta, lam)
            assert p.value(beta) == pytest.approx(expected, rel=1e-12), (
                f"Q should be the mean loss plus ridge, got {p.value(beta)!r} vs {expected!r}"
            )

    def test_large_margins_do_not_overflow(self):
        """Test that huge coefficients give a finite value and gradient."""
        p = LogisticL2Problem(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]), lam=0.0)
        q = p.value(np.array([1000.0]))
        assert np.isfinite(q), "Loss should stay finite"
        assert q == pytest.approx(500.0, rel=1e-12), "One margin of -1000 should cost 1000 / 2"
        assert np.all(np.isfinite(p.gradient(np.array([1000.0])))), "Gradient should stay finite"

    def test_ridge_term(self):
        """Test the ridge contribution on an all-zero design."""
        p = LogisticL2Problem(np.zeros((3, 2)), np.ones(3), lam=0.5)
        beta = np.array([2.0, 0.0])
        assert p.value(beta) == pytest.approx(np.log(2.0) + 1.0), "Ridge should add lam/2 ||beta||^2"
        assert p.gradient(beta).tolist() == pytest.approx([1.0, 0.0]), "Ridge gradient should be lam * beta"

    def test_gradient_at_zero(self, rng):
        """Test that the gradient at zero is -(1/2n) sum y_i x_i."""
        X = rng.standard_normal((30, 6))
        y = _labels(rng, 30)
        p = LogisticL2Problem(X, y, lam=0.3)
        expected = -(X.T @ y) / (2 * 30)
        assert np.allclose(p.gradient(np.zeros(6)), expected, rtol=1e-12, atol=1e-15), (
            "Every sigmoid equals 1/2 at zero"
        )

    def test_ridge_gradient_difference(self, rng):
        """Test that adding ridge shifts the gradient by exactly lam * beta."""
        X = rng.standard_normal((30, 6))
        y = _labels(rng, 30)
        plain = LogisticL2Problem(X, y, lam=0.0)
        ridged = LogisticL2Problem(X, y, lam=0.25)
        beta = rng.standard_normal(6)
        assert np.allclose(ridged.gradient(beta) - plain.gradient(beta), 0.25 * beta, rtol=1e-10, atol=1e-14), (
            "Gradient difference should be lam * beta"
        )

    def test_convexity_midpoints(self, rng):
        """Test Q at chord midpoints lies below the chord."""
        X = rng.standard_normal((25, 6))
        p = LogisticL2Problem(X, _labels(rng, 25), lam=0.01)
        for k in range(20):
            a, b = 2 * rng.standard_normal(6), 2 * rng.standard_normal(6)
            mid = p.value((a + b) / 2)
            assert mid <= (p.value(a) + p.value(b)) / 2 + 1e-12, f"Midpoint {k} lies above the chord"

    def test_label_validation(self):
        """Test that labels outside {-1, +1} and negative lambda are rejected."""
        with pytest.raises(ValueError):
            LogisticL2Problem(np.eye(2), np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            LogisticL2Problem(np.eye(2), np.array([1.0, -1.0]), lam=-1.0)

    def test_restricted_hessian_matches_finite_difference(self, rng):
        """Test the restricted Hessian against differences of the gradient."""
        X = rng.standard_normal((25, 5))
        p = LogisticL2Problem(X, _labels(rng, 25), lam=0.01)
        beta = 0.3 * rng.standard_normal(5)
        idx = np.array([1, 4])
        H = p.restricted_hessian(beta, idx)
        h = 1e-6
        for a, j in enumerate(idx):
            shifted = beta.copy()
            shifted[j] += h
            column = (p.gradient(shifted) - p.gradient(beta))[idx] / h
            assert np.allclose(H[:, a], column, atol=1e-5), f"Hessian column {j} disagrees"

    def test_line_restriction_matches_value(self, rng):
        """Test that the coordinate line reproduces Q and its slope."""
        X = rng.standard_normal((25, 5))
        p = LogisticL2Problem(X, _labels(rng, 25), lam=0.1)
        beta = rng.standard_normal(5)
        line = p.line_restriction(beta, 3)
        shifted = beta.copy()
        shifted[3] -= 0.7
        q, d1, _ = line.derivatives(-0.7)
        assert q == pytest.approx(p.value(shifted), rel=1e-12), "Line value should match Q"
        assert d1 == pytest.approx(p.gradient(shifted)[3], rel=1e-9, abs=1e-12), "Line slope should match g_j"

    def test_predict_and_error_rate(self):
        """Test sign prediction with ties to +1 and the misclassification rate."""
        X = np.array([[1.0], [-1.0], [0.0], [2.0]])
        y = np.array([1.0, -1.0, 1.0, -1.0])
        p = LogisticL2Problem(X, y)
        assert p.predict(np.array([1.0])).tolist() == [1.0, -1.0, 1.0, 1.0], "Zero score should predict +1"
        assert p.error_rate(np.array([1.0])) == 0.25, "One of four samples is wrong"
        assert p.error_rate(np.array([1.0]), X[:2], y[:2]) == 0.0, "Held-out rows should be used when given"
