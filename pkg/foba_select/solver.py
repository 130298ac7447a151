"""Inner optimization: restricted minimization over a support and 1-D line minimization."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq
from scipy.optimize import approx_fprime, minimize

from foba_select.core import DenseVector, SupportSet, dense_vector, zeros
from foba_select.errors import ConfigError, NonConvergence
from foba_select.objectives import ObjectiveProblem

logger = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps

RestrictedFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-8
    max_iter: int = 500
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    newton_max_support: int = 64
    ridge: float = 1e-10

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ConfigError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if not 0.0 < self.shrink < 1.0:
            raise ConfigError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ConfigError(f"sufficient_decrease must lie in (0, 1), got {self.sufficient_decrease}")


def restricted_minimize(
    p: ObjectiveProblem,
    F: SupportSet,
    warm: DenseVector,
    cfg: Optional[SolverConfig] = None,
) -> DenseVector:
    """Minimize Q over vectors supported on ``F``, starting from ``warm``.

    Problems with an analytic Hessian block and a support of at most
    ``cfg.newton_max_support`` coordinates use damped Newton steps; everything
    else goes through BFGS on the restricted coordinates, polished with
    finite-difference Newton if BFGS stalls above the tolerance.

    Raises:
        NonConvergence: If the restricted gradient is still above
            ``cfg.grad_tol`` when the iteration budget runs out
    """
    cfg = cfg or SolverConfig()
    d = p.dimension
    warm = dense_vector(warm, d)
    if F.dimension != d:
        raise ValueError(f"support dimension {F.dimension} does not match problem dimension {d}")
    off = ~F.mask()
    if np.any(warm[off] != 0.0):
        raise ValueError("warm start has nonzero entries outside the support")
    if F.size() == 0:
        return zeros(d)

    idx = F.to_array()

    def embed(x: np.ndarray) -> np.ndarray:
        beta = np.zeros(d)
        beta[idx] = x
        return beta

    def fun(x: np.ndarray) -> tuple[float, np.ndarray]:
        q, g = p.value_and_gradient(embed(x))
        return q, g[idx]

    x0 = warm[idx].copy()
    if p.has_restricted_newton and len(idx) <= cfg.newton_max_support:
        x, g, iterations = _newton(fun, lambda x: p.restricted_hessian(embed(x), idx), x0, cfg)
    else:
        x, g, iterations = _quasi_newton(fun, x0, cfg)

    grad_norm = float(np.max(np.abs(g)))
    if grad_norm > cfg.grad_tol:
        raise NonConvergence(dense_vector(embed(x), d), grad_norm, iterations)
    return dense_vector(embed(x), d)


def _newton_direction(H: np.ndarray, g: np.ndarray, ridge: float) -> np.ndarray:
    try:
        return -cho_solve(cho_factor(H), g)
    except LinAlgError:
        pass
    try:
        return -cho_solve(cho_factor(H + ridge * np.eye(H.shape[0])), g)
    except LinAlgError:
        logger.warning("Restricted Hessian not positive definite after ridge; using least squares step")
        return -lstsq(H, g)[0]


def _newton(
    fun: RestrictedFn,
    hessian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    cfg: SolverConfig,
    budget: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    x = x0
    q, g = fun(x)
    budget = cfg.max_iter if budget is None else budget
    for it in range(budget):
        g_norm = float(np.max(np.abs(g)))
        if g_norm <= cfg.grad_tol:
            return x, g, it
        step = _newton_direction(hessian(x), g, cfg.ridge)
        slope = float(g @ step)
        if not slope < 0.0:
            step, slope = -g, -float(g @ g)

        t = 1.0
        for _ in range(60):
            x_new = x + t * step
            q_new, g_new = fun(x_new)
            if q_new <= q + cfg.sufficient_decrease * t * slope:
                break
            # near the optimum the decrease drowns in rounding; accept if the gradient still shrinks
            if abs(q_new - q) <= 4.0 * _EPS * max(1.0, abs(q)) and np.max(np.abs(g_new)) < g_norm:
                break
            t *= cfg.shrink
        else:
            logger.debug("Newton line search failed at |g|=%.3e", g_norm)
            return x, g, it
        x, q, g = x_new, q_new, g_new
    return x, g, budget


def _quasi_newton(fun: RestrictedFn, x0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray, int]:
    res = minimize(
        fun,
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": cfg.grad_tol, "maxiter": cfg.max_iter, "norm": np.inf},
    )
    x = np.asarray(res.x, dtype=np.float64)
    _, g = fun(x)
    iterations = int(res.nit)
    if np.max(np.abs(g)) <= cfg.grad_tol:
        return x, g, iterations

    logger.debug("BFGS stopped at |g|=%.3e (%s); polishing with Newton", np.max(np.abs(g)), res.message)

    def fd_hessian(z: np.ndarray) -> np.ndarray:
        step = np.sqrt(_EPS) * (1.0 + np.abs(z))
        H = np.atleast_2d(approx_fprime(z, lambda w: fun(w)[1], step))
        return 0.5 * (H + H.T)

    x, g, polish = _newton(fun, fd_hessian, x, cfg, budget=max(1, cfg.max_iter - iterations))
    return x, g, iterations + polish


def line_minimize(
    p: ObjectiveProblem, beta: DenseVector, j: int, tol: float = 1e-10, max_iter: int = 100
) -> tuple[float, float]:
    """Minimize alpha -> Q(beta + alpha e_j).

    Returns:
        ``(alpha_star, Q(beta + alpha_star e_j))``; ``(0, Q(beta))`` when no step improves

    Raises:
        ZeroCurvatureColumn: From the closed-form least-squares path
    """
    if not 0 <= j < p.dimension:
        raise IndexError(f"coordinate {j} outside [0, {p.dimension})")
    if p.has_exact_line_min:
        return p.exact_line_min(beta, j)

    line = p.line_restriction(beta, j)
    q0, d0, c0 = line.derivatives(0.0)
    if abs(d0) <= tol:
        return 0.0, q0

    # march downhill until the derivative changes sign
    direction = -np.sign(d0)
    inner = 0.0
    step = abs(d0) / c0 if c0 > 0 else 1.0
    outer = direction * step
    for _ in range(80):
        q, d1, _ = line.derivatives(outer)
        if abs(d1) <= tol:
            return _settle(line, outer, q, q0)
        if np.sign(d1) != np.sign(d0):
            break
        inner = outer
        outer *= 2.0
    else:
        logger.debug("No sign change along coordinate %d up to alpha=%.3e", j, outer)
        return _settle(line, outer, line.value(outer), q0)

    # safeguarded Newton inside [inner, outer]
    x = 0.5 * (inner + outer)
    q = line.value(x)
    for _ in range(max_iter):
        q, d1, d2 = line.derivatives(x)
        if abs(d1) <= tol:
            break
        if np.sign(d1) == np.sign(d0):
            inner = x
        else:
            outer = x
        lo, hi = min(inner, outer), max(inner, outer)
        candidate = x - d1 / d2 if d2 > 0 else np.nan
        x = candidate if lo < candidate < hi else 0.5 * (lo + hi)
        if hi - lo <= 4.0 * _EPS * max(1.0, abs(x)):
            q = line.value(x)
            break
    else:
        q = line.value(x)
    return _settle(line, x, q, q0)


def _settle(line, alpha: float, q: float, q0: float) -> tuple[float, float]:
    if q > q0:
        return 0.0, q0
    return float(alpha), float(q)
