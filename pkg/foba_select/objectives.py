"""Objective contract Q(beta) and the least-squares and logistic instances."""
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
from scipy.special import expit

from foba_select.core import DenseVector
from foba_select.errors import DimensionMismatch, NonFiniteValue, ZeroCurvatureColumn


class CoordinateLine(ABC):
    """The one-dimensional slice alpha -> Q(beta + alpha * e_j)."""

    @abstractmethod
    def value(self, alpha: float) -> float: ...

    @abstractmethod
    def derivatives(self, alpha: float) -> tuple[float, float, float]:
        """Return (value, first derivative, second derivative) at ``alpha``."""


class ObjectiveProblem(ABC):
    """Smooth convex objective over R^d.

    Subclasses provide ``value`` and ``gradient``. The capability flags tell the
    solver which fast paths exist: ``has_exact_line_min`` for a closed-form
    coordinate minimizer and ``has_restricted_newton`` for an analytic Hessian
    block on a support.
    """

    kind = "objective"
    has_exact_line_min = False
    has_restricted_newton = False

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def value(self, beta: DenseVector) -> float: ...

    @abstractmethod
    def gradient(self, beta: DenseVector) -> DenseVector: ...

    def value_and_gradient(self, beta: DenseVector) -> tuple[float, DenseVector]:
        return self.value(beta), self.gradient(beta)

    @property
    def sparsifiable_mask(self) -> np.ndarray:
        """Coordinates the greedy engine may select or remove."""
        return np.ones(self.dimension, dtype=bool)

    def line_restriction(self, beta: DenseVector, j: int) -> CoordinateLine:
        return _GenericLine(self, self._check(beta), j)

    def exact_line_min(self, beta: DenseVector, j: int) -> tuple[float, float]:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form line minimizer")

    def restricted_hessian(self, beta: DenseVector, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic Hessian")

    def _check(self, beta: DenseVector) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.dimension,):
            raise DimensionMismatch("beta", self.dimension, beta.size)
        return beta


class _GenericLine(CoordinateLine):
    # curvature from a forward difference of the coordinate derivative
    def __init__(self, problem: ObjectiveProblem, beta: np.ndarray, j: int):
        self.problem = problem
        self.beta = beta
        self.j = j

    def _at(self, alpha: float) -> np.ndarray:
        b = self.beta.copy()
        b[self.j] += alpha
        return b

    def value(self, alpha: float) -> float:
        return self.problem.value(self._at(alpha))

    def derivatives(self, alpha: float) -> tuple[float, float, float]:
        q, g = self.problem.value_and_gradient(self._at(alpha))
        h = 1e-6 * (1.0 + abs(alpha))
        g_plus = self.problem.gradient(self._at(alpha + h))[self.j]
        return q, float(g[self.j]), float((g_plus - g[self.j]) / h)


def _design(X: np.ndarray, n_labels: int) -> np.ndarray:
    X = np.array(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design matrix must be 2-D and non-empty, got shape {X.shape}")
    if X.shape[0] != n_labels:
        raise DimensionMismatch("observations", X.shape[0], n_labels)
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue("design matrix contains NaN or Inf entries")
    X.setflags(write=False)
    return X


class LeastSquaresProblem(ObjectiveProblem):
    """Q(beta) = 1/2 ||X beta - y||^2."""

    kind = "least-squares"
    has_exact_line_min = True
    has_restricted_newton = True

    def __init__(self, X: np.ndarray, y: np.ndarray):
        y = np.array(y, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(y)):
            raise NonFiniteValue("observations contain NaN or Inf entries")
        self.X = _design(X, y.shape[0])
        y.setflags(write=False)
        self.y = y
        self.column_sq_norms = np.einsum("ij,ij->j", self.X, self.X)

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    def residual(self, beta: DenseVector) -> np.ndarray:
        return self.X @ self._check(beta) - self.y

    def value(self, beta: DenseVector) -> float:
        r = self.residual(beta)
        return 0.5 * float(r @ r)

    def gradient(self, beta: DenseVector) -> DenseVector:
        return self.X.T @ self.residual(beta)

    def value_and_gradient(self, beta: DenseVector) -> tuple[float, DenseVector]:
        r = self.residual(beta)
        return 0.5 * float(r @ r), self.X.T @ r

    def exact_line_min(self, beta: DenseVector, j: int) -> tuple[float, float]:
        """alpha* = -grad_j / ||X_j||^2 and the reduced objective."""
        c = self.column_sq_norms[j]
        if c == 0.0:
            raise ZeroCurvatureColumn(j)
        r = self.residual(beta)
        g_j = float(self.X[:, j] @ r)
        q = 0.5 * float(r @ r)
        return -g_j / c, q - g_j * g_j / (2.0 * c)

    def line_restriction(self, beta: DenseVector, j: int) -> CoordinateLine:
        return _LeastSquaresLine(self.residual(beta), self.X[:, j], self.column_sq_norms[j])

    def restricted_hessian(self, beta: DenseVector, idx: np.ndarray) -> np.ndarray:
        Xs = self.X[:, idx]
        return Xs.T @ Xs


class _LeastSquaresLine(CoordinateLine):
    def __init__(self, r: np.ndarray, x: np.ndarray, sq_norm: float):
        self.r, self.x, self.sq_norm = r, x, float(sq_norm)

    def value(self, alpha: float) -> float:
        r = self.r + alpha * self.x
        return 0.5 * float(r @ r)

    def derivatives(self, alpha: float) -> tuple[float, float, float]:
        r = self.r + alpha * self.x
        return 0.5 * float(r @ r), float(self.x @ r), self.sq_norm


class LogisticL2Problem(ObjectiveProblem):
    """Q(beta) = (1/n) sum_i log(1 + exp(-y_i X_i beta)) + lam/2 ||beta||^2.

    The loss is evaluated as ``logaddexp(0, -margin)`` and the sigmoid through
    ``expit``, so finite coefficients never overflow.
    """

    kind = "logistic"
    has_restricted_newton = True

    def __init__(self, X: np.ndarray, y: np.ndarray, lam: float = 0.0):
        y = np.array(y, dtype=np.float64).reshape(-1)
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("logistic labels must be exactly -1 or +1")
        if not lam >= 0.0:
            raise ValueError(f"lam must be nonnegative, got {lam}")
        self.X = _design(X, y.shape[0])
        y.setflags(write=False)
        self.y = y
        self.lam = float(lam)

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def margins(self, beta: DenseVector) -> np.ndarray:
        return self.y * (self.X @ self._check(beta))

    def value(self, beta: DenseVector) -> float:
        beta = self._check(beta)
        m = self.y * (self.X @ beta)
        return float(np.logaddexp(0.0, -m).mean()) + 0.5 * self.lam * float(beta @ beta)

    def gradient(self, beta: DenseVector) -> DenseVector:
        beta = self._check(beta)
        m = self.y * (self.X @ beta)
        return -(self.X.T @ (self.y * expit(-m))) / self.n_samples + self.lam * beta

    def value_and_gradient(self, beta: DenseVector) -> tuple[float, DenseVector]:
        beta = self._check(beta)
        m = self.y * (self.X @ beta)
        q = float(np.logaddexp(0.0, -m).mean()) + 0.5 * self.lam * float(beta @ beta)
        g = -(self.X.T @ (self.y * expit(-m))) / self.n_samples + self.lam * beta
        return q, g

    def restricted_hessian(self, beta: DenseVector, idx: np.ndarray) -> np.ndarray:
        m = self.margins(beta)
        w = expit(m) * expit(-m)
        Xs = self.X[:, idx]
        return (Xs.T * w) @ Xs / self.n_samples + self.lam * np.eye(len(idx))

    def line_restriction(self, beta: DenseVector, j: int) -> CoordinateLine:
        beta = self._check(beta)
        return _LogisticLine(self, self.X @ beta, j, float(beta @ beta), float(beta[j]))

    def predict(self, beta: DenseVector, X: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.X if X is None else np.asarray(X, dtype=np.float64)
        return np.where(X @ self._check(beta) >= 0.0, 1.0, -1.0)

    def error_rate(
        self, beta: DenseVector, X: Optional[np.ndarray] = None, y: Optional[np.ndarray] = None
    ) -> float:
        """Fraction of misclassified samples; defaults to the training data."""
        y = self.y if y is None else np.asarray(y, dtype=np.float64)
        return float(np.mean(self.predict(beta, X) != y))


class _LogisticLine(CoordinateLine):
    def __init__(self, p: LogisticL2Problem, z: np.ndarray, j: int, beta_sq: float, beta_j: float):
        self.y = p.y
        self.x = p.X[:, j]
        self.z = z
        self.lam = p.lam
        self.beta_sq = beta_sq
        self.beta_j = beta_j

    def _ridge(self, alpha: float) -> float:
        return 0.5 * self.lam * (self.beta_sq + 2.0 * alpha * self.beta_j + alpha * alpha)

    def value(self, alpha: float) -> float:
        m = self.y * (self.z + alpha * self.x)
        return float(np.logaddexp(0.0, -m).mean()) + self._ridge(alpha)

    def derivatives(self, alpha: float) -> tuple[float, float, float]:
        m = self.y * (self.z + alpha * self.x)
        s_neg = expit(-m)
        q = float(np.logaddexp(0.0, -m).mean()) + self._ridge(alpha)
        d1 = -float(np.mean(self.y * self.x * s_neg)) + self.lam * (self.beta_j + alpha)
        d2 = float(np.mean(self.x * self.x * expit(m) * s_neg)) + self.lam
        return q, d1, d2
