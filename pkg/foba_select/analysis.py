"""Selection metrics, restricted curvature constants and the error-bound checks."""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum, unique
from typing import Mapping, Optional

import numpy as np

from foba_select.core import DenseVector, Rng, SupportSet, set_difference, zeros
from foba_select.errors import (
    BothEmpty,
    GuardViolation,
    NoValidSample,
    UnmappedFeature,
    ZeroCurvatureColumn,
    ZeroTruth,
)
from foba_select.foba import GoodnessMeasure, Threshold, dense_support
from foba_select.objectives import ObjectiveProblem
from foba_select.solver import SolverConfig, line_minimize, restricted_minimize

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 10**6
_BATCH = 20_000
_MAX_HALVINGS = 60
_DRAWS_PER_TRIAL = 20
_REMAINDER_FLOOR = 1e-6


@unique
class RsccMethod(Enum):
    EXHAUSTIVE = "exhaustive"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class RsccEstimate:
    s: int
    rho_minus: float
    rho_plus: float
    method: RsccMethod
    trials: Optional[int] = None

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.rho_minus > self.rho_plus:
            raise ValueError(f"rho_minus {self.rho_minus} exceeds rho_plus {self.rho_plus}")

    @property
    def kappa(self) -> float:
        if self.rho_minus <= 0.0:
            return math.inf
        return self.rho_plus / self.rho_minus


@dataclass(frozen=True)
class ErrorBounds:
    gamma: float
    delta_bar: int
    estimation_bound: float
    objective_bound: float
    selection_bound: float
    false_selection_bound: float


@dataclass(frozen=True)
class BoundCheck:
    estimation_error_sq: float
    objective_gap: float
    missed: int
    extra: int
    bounds: ErrorBounds
    tol: float

    @property
    def estimation_ok(self) -> bool:
        return self.estimation_error_sq <= self.bounds.estimation_bound + self.tol

    @property
    def objective_ok(self) -> bool:
        return self.objective_gap <= self.bounds.objective_bound + self.tol

    @property
    def selection_ok(self) -> bool:
        return self.missed <= self.bounds.selection_bound and self.extra <= self.bounds.false_selection_bound + self.tol

    @property
    def passed(self) -> bool:
        return self.estimation_ok and self.objective_ok and self.selection_ok


def f_measure(F: SupportSet, F_true: SupportSet) -> float:
    """2|F & F_true| / (|F| + |F_true|)."""
    total = F.size() + F_true.size()
    if total == 0:
        raise BothEmpty("F-measure is undefined when both supports are empty")
    return 2.0 * F.intersection(F_true).size() / total


def estimation_error(beta: DenseVector, beta_true: DenseVector) -> float:
    """Relative L2 error ||beta - beta_true|| / ||beta_true||."""
    norm = float(np.linalg.norm(beta_true))
    if norm == 0.0:
        raise ZeroTruth("relative error needs a nonzero reference vector")
    return float(np.linalg.norm(np.asarray(beta) - np.asarray(beta_true))) / norm


def _snap(rho_minus: float, rho_plus: float, s: int) -> float:
    # eigvalsh leaves rounding noise on singular blocks
    if rho_minus <= 16.0 * s * np.finfo(np.float64).eps * max(rho_plus, 1.0):
        return 0.0
    return rho_minus


def rscc_exhaustive_quadratic(X: np.ndarray, s: int) -> RsccEstimate:
    """Extreme eigenvalues of X^T X over every principal block of size min(s, d).

    Smaller blocks are covered by eigenvalue interlacing.

    Raises:
        GuardViolation: If more than ``EXHAUSTIVE_LIMIT`` blocks would be enumerated
    """
    X = np.asarray(X, dtype=np.float64)
    if s < 1:
        raise ValueError(f"s must be positive, got {s}")
    d = X.shape[1]
    size = min(s, d)
    count = math.comb(d, size)
    if count > EXHAUSTIVE_LIMIT:
        raise GuardViolation(f"C({d},{size})={count} supports exceeds {EXHAUSTIVE_LIMIT}")

    G = X.T @ X
    lo, hi = np.inf, -np.inf
    combos = itertools.combinations(range(d), size)
    while True:
        batch = np.array(list(itertools.islice(combos, _BATCH)), dtype=np.intp)
        if batch.size == 0:
            break
        blocks = G[batch[:, :, None], batch[:, None, :]]
        eig = np.linalg.eigvalsh(blocks)
        lo = min(lo, float(eig[:, 0].min()))
        hi = max(hi, float(eig[:, -1].max()))

    hi = max(hi, 0.0)
    lo = min(max(lo, 0.0), hi)
    return RsccEstimate(s, _snap(lo, hi, size), hi, RsccMethod.EXHAUSTIVE)


def _sampled_ratio(p: ObjectiveProblem, d: int, size: int, q0: float, rng: Rng) -> Optional[float]:
    """One curvature ratio, or None when the pair is unusable."""
    support = rng.choice(d, size)
    beta = np.zeros(d)
    t = np.zeros(d)
    beta[support] = rng.normal(size)
    t[support] = rng.normal(size)
    for _ in range(_MAX_HALVINGS):
        if p.value(beta) <= q0 and p.value(beta + t) <= q0:
            break
        beta *= 0.5
        t *= 0.5
    else:
        return None
    q, g = p.value_and_gradient(beta)
    q_t = p.value(beta + t)
    remainder = q_t - q - float(g @ t)
    # below this the remainder is mostly rounding error in Q
    floor = _REMAINDER_FLOOR * max(1.0, abs(q))
    if abs(q_t - q) <= floor or abs(remainder) <= floor:
        return None
    return 2.0 * remainder / float(t @ t)


def rscc_sampled(p: ObjectiveProblem, s: int, trials: int, rng: Rng) -> RsccEstimate:
    """Empirical curvature ratios 2[Q(b+t) - Q(b) - <grad Q(b), t>] / ||t||^2.

    Each draw picks a support of size min(s, d) and Gaussian b, b+t on it, halved
    until both lie in the sublevel set {Q <= Q(0)}. Draws that never get there,
    or whose second-order remainder is lost in rounding, are rejected and
    redrawn, up to ``_DRAWS_PER_TRIAL * trials`` draws. Sampling only ever sees
    interior ratios, so the result is an inner bound on rho_plus and an outer
    bound on rho_minus.

    Raises:
        NoValidSample: If no draw produced a usable pair
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    d = p.dimension
    size = min(s, d)
    q0 = p.value(zeros(d))
    budget = _DRAWS_PER_TRIAL * trials
    ratios = []
    draws = 0
    while len(ratios) < trials and draws < budget:
        draws += 1
        ratio = _sampled_ratio(p, d, size, q0, rng)
        if ratio is not None:
            ratios.append(ratio)
    if not ratios:
        raise NoValidSample(draws)
    if draws > len(ratios):
        logger.debug("rscc_sampled: rejected %d of %d draws", draws - len(ratios), draws)
    lo, hi = min(ratios), max(ratios)
    return RsccEstimate(s, max(lo, 0.0), max(hi, 0.0), RsccMethod.SAMPLED, len(ratios))


def theorem_bounds(
    measure: GoodnessMeasure,
    threshold: float,
    rho1_plus: float,
    rho_s_minus: float,
    beta_true: DenseVector,
    F_out: SupportSet,
) -> ErrorBounds:
    """Right-hand sides of the estimation, objective and selection error bounds.

    ``threshold`` is delta under objective reduction and epsilon under
    gradient magnitude.
    """
    if not rho_s_minus > 0:
        raise ValueError(f"rho_minus(s) must be positive, got {rho_s_minus}")
    beta_true = np.asarray(beta_true, dtype=np.float64)
    F_true = SupportSet(tuple(int(i) for i in np.flatnonzero(beta_true)), beta_true.shape[0])

    if measure is GoodnessMeasure.OBJECTIVE_REDUCTION:
        gamma = 4.0 * math.sqrt(rho1_plus * threshold) / rho_s_minus
    else:
        gamma = 2.0 * math.sqrt(2.0) * threshold / rho_s_minus

    missed = set_difference(F_true, F_out)
    delta_bar = sum(1 for j in missed if abs(beta_true[j]) < gamma)

    if measure is GoodnessMeasure.OBJECTIVE_REDUCTION:
        estimation = 16.0 * rho1_plus**2 * threshold / rho_s_minus**2 * delta_bar
        objective = 2.0 * rho1_plus * threshold / rho_s_minus * delta_bar
    else:
        estimation = 8.0 * threshold**2 / rho_s_minus**2 * delta_bar
        objective = threshold**2 / rho_s_minus * delta_bar

    false_selection = 8.0 * rho1_plus**2 / rho_s_minus**2 * missed.size()
    return ErrorBounds(gamma, delta_bar, estimation, objective, 2.0 * delta_bar, false_selection)


def theorem_threshold(
    measure: GoodnessMeasure,
    rho1_plus: float,
    rho_s_minus: float,
    grad_inf_norm: float,
    margin: float = 1.01,
) -> float:
    """``margin`` times the smallest delta or epsilon the termination results admit."""
    if not rho_s_minus > 0:
        raise ValueError(f"rho_minus(s) must be positive, got {rho_s_minus}")
    if measure is GoodnessMeasure.OBJECTIVE_REDUCTION:
        return margin * 4.0 * rho1_plus * grad_inf_norm**2 / rho_s_minus**2
    return margin * 2.0 * math.sqrt(2.0) * rho1_plus * grad_inf_norm / rho_s_minus


def termination_condition(s: int, k_bar: int, rho_s_plus: float, rho_s_minus: float, rho1_plus: float) -> bool:
    """Whether ``s`` is large enough for the termination guarantee to apply."""
    if rho_s_minus <= 0:
        return False
    factor = (math.sqrt(rho_s_plus / rho_s_minus) + 1.0) * 2.0 * rho1_plus / rho_s_minus
    return (s - k_bar) > (k_bar + 1) * factor**2


def truth_solution(
    p: ObjectiveProblem, F_true: SupportSet, cfg: Optional[SolverConfig] = None
) -> DenseVector:
    """The restricted minimizer over the true support (plus any dense block)."""
    return restricted_minimize(p, F_true.union(dense_support(p)), zeros(p.dimension), cfg)


def threshold_from_truth(
    p: ObjectiveProblem,
    F_true: SupportSet,
    measure: GoodnessMeasure,
    cfg: Optional[SolverConfig] = None,
) -> float:
    """delta = Q(b) - min over j outside F_true of min_a Q(b + a e_j), or epsilon = ||grad Q(b)||_inf."""
    if F_true.size() == 0 and measure is GoodnessMeasure.OBJECTIVE_REDUCTION:
        raise ValueError("an objective-reduction threshold needs a nonempty true support")
    beta_bar = truth_solution(p, F_true, cfg)
    if measure is GoodnessMeasure.GRADIENT_MAGNITUDE:
        return float(np.max(np.abs(p.gradient(beta_bar))))

    q_bar = p.value(beta_bar)
    selectable = np.asarray(p.sparsifiable_mask, dtype=bool) & ~F_true.mask()
    best = 0.0
    for j in np.flatnonzero(selectable):
        try:
            _, q_new = line_minimize(p, beta_bar, int(j))
        except ZeroCurvatureColumn:
            continue
        best = max(best, q_bar - q_new)
    return best


def truth_threshold_rule(
    p: ObjectiveProblem,
    F_true: SupportSet,
    measure: GoodnessMeasure,
    cfg: Optional[SolverConfig] = None,
) -> Threshold:
    """A threshold from the true support, floored just above the solver tolerance.

    A zero truth gradient is only known up to ``grad_tol``, and thresholds must
    be positive.
    """
    cfg = cfg or SolverConfig()
    value = threshold_from_truth(p, F_true, measure, cfg)
    if measure is GoodnessMeasure.GRADIENT_MAGNITUDE:
        return Threshold.epsilon(max(value, 10.0 * cfg.grad_tol))
    return Threshold.delta(max(value, (10.0 * cfg.grad_tol) ** 2))


def check_bounds(
    bounds: ErrorBounds,
    beta_out: DenseVector,
    F_out: SupportSet,
    beta_bar: DenseVector,
    F_true: SupportSet,
    p: ObjectiveProblem,
    tol: float = 1e-10,
) -> BoundCheck:
    """Measure the run's errors against ``bounds``, allowing ``tol`` for solver accuracy."""
    diff = np.asarray(beta_out) - np.asarray(beta_bar)
    return BoundCheck(
        estimation_error_sq=float(diff @ diff),
        objective_gap=p.value(beta_out) - p.value(beta_bar),
        missed=set_difference(F_true, F_out).size(),
        extra=set_difference(F_out, F_true).size(),
        bounds=bounds,
        tol=tol,
    )


def sensor_groups(F: SupportSet, groups: Mapping[int, int]) -> SupportSet:
    """Groups touched by at least one selected feature.

    Raises:
        UnmappedFeature: If a selected feature has no group
    """
    n_groups = max(groups.values(), default=-1) + 1
    touched = set()
    for j in F:
        if j not in groups:
            raise UnmappedFeature(j)
        touched.add(groups[j])
    return SupportSet.of(touched, n_groups)


def feature_groups(n_features: int, group_size: int) -> dict[int, int]:
    """Consecutive blocks of ``group_size`` features, numbered from 0."""
    if group_size < 1:
        raise ValueError(f"group_size must be positive, got {group_size}")
    return {j: j // group_size for j in range(n_features)}
