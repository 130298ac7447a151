"""Forward-backward greedy selection engine and its forward-only baselines.

The engine keeps one ``FobaState`` per run. Every forward acceptance pushes the
objective decrease it bought onto ``delta_stack``; the backward sweep removes a
feature only while the cheapest removal costs less than half of the decrease at
the current level, popping one entry per removal.

Coordinates outside the problem's ``sparsifiable_mask`` form a dense block: they
take part in every restricted solve but are never candidates, never removed and
never counted in ``k``.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import NamedTuple, Optional, Union

import numpy as np

from foba_select.core import DenseVector, SupportSet, zeros
from foba_select.errors import MismatchedRule, NoCandidate, NonFiniteValue, ZeroCurvatureColumn
from foba_select.objectives import ObjectiveProblem
from foba_select.solver import SolverConfig, line_minimize, restricted_minimize

logger = logging.getLogger(__name__)


@unique
class GoodnessMeasure(Enum):
    OBJECTIVE_REDUCTION = "obj"
    GRADIENT_MAGNITUDE = "gdt"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Threshold:
    """Stop once the best goodness (delta) or the gradient sup-norm (epsilon) drops below ``value``."""

    value: float
    measure: GoodnessMeasure

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"threshold must be positive, got {self.value}")

    @classmethod
    def delta(cls, value: float) -> "Threshold":
        return cls(value, GoodnessMeasure.OBJECTIVE_REDUCTION)

    @classmethod
    def epsilon(cls, value: float) -> "Threshold":
        return cls(value, GoodnessMeasure.GRADIENT_MAGNITUDE)


@dataclass(frozen=True)
class SparsityLevel:
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"sparsity level must be positive, got {self.K}")


@dataclass(frozen=True)
class ExhaustAll:
    pass


StoppingRule = Union[Threshold, SparsityLevel, ExhaustAll]


@unique
class StepKind(Enum):
    FORWARD = "forward"
    BACKWARD = "backward-removal"
    STOP = "stop"


@unique
class StopReason(Enum):
    THRESHOLD = "threshold"
    SPARSITY = "sparsity"
    EXHAUSTED = "exhausted"
    GUARD = "guard"


@dataclass(frozen=True)
class TraceRecord:
    kind: StepKind
    iteration: int
    feature: Optional[int]
    goodness: float
    delta_level: float
    q_before: float
    q_after: float
    support_size: int
    wall_micros: int
    stop_reason: Optional[StopReason] = None

    def __post_init__(self):
        if not (np.isfinite(self.q_before) and np.isfinite(self.q_after)):
            raise NonFiniteValue(f"trace record at iteration {self.iteration} has a non-finite objective")


@dataclass
class FobaState:
    beta: DenseVector
    support: SupportSet
    q: float
    dense: SupportSet
    delta_stack: list[float] = field(default_factory=list)
    trace: list[TraceRecord] = field(default_factory=list)
    iteration: int = 0
    started_ns: int = field(default_factory=time.perf_counter_ns)

    @property
    def k(self) -> int:
        return self.support.size()

    @property
    def active(self) -> SupportSet:
        return self.support.union(self.dense)

    def elapsed_micros(self) -> int:
        return (time.perf_counter_ns() - self.started_ns) // 1000

    def record(self, kind: StepKind, feature: Optional[int], goodness: float, delta_level: float,
               q_before: float, stop_reason: Optional[StopReason] = None) -> None:
        self.trace.append(
            TraceRecord(kind, self.iteration, feature, float(goodness), float(delta_level),
                        float(q_before), float(self.q), self.k, self.elapsed_micros(), stop_reason)
        )


class FobaResult(NamedTuple):
    beta: DenseVector
    support: SupportSet
    trace: list[TraceRecord]
    stop_reason: StopReason
    objective: float


def dense_support(p: ObjectiveProblem) -> SupportSet:
    """Coordinates that are always in the model."""
    mask = np.asarray(p.sparsifiable_mask, dtype=bool)
    return SupportSet(tuple(int(i) for i in np.flatnonzero(~mask)), p.dimension)


def initial_state(p: ObjectiveProblem, cfg: Optional[SolverConfig] = None) -> FobaState:
    dense = dense_support(p)
    beta = restricted_minimize(p, dense, zeros(p.dimension), cfg) if dense.size() else zeros(p.dimension)
    return FobaState(beta=beta, support=SupportSet.empty(p.dimension), q=p.value(beta), dense=dense)


def _candidates(p: ObjectiveProblem, state: FobaState) -> np.ndarray:
    mask = np.asarray(p.sparsifiable_mask, dtype=bool) & ~state.support.mask()
    return np.flatnonzero(mask)


def _check_pairing(measure: GoodnessMeasure, rule: StoppingRule) -> None:
    if isinstance(rule, Threshold) and rule.measure is not measure:
        raise MismatchedRule(
            f"a {rule.measure.value} threshold cannot stop a {measure.value} run"
        )


def forward_candidate(
    p: ObjectiveProblem,
    state: FobaState,
    measure: GoodnessMeasure,
    gradient: Optional[np.ndarray] = None,
) -> tuple[int, float]:
    """Best feature outside the support and its goodness; lowest index wins ties.

    Raises:
        NoCandidate: If every selectable feature is already in the support
    """
    candidates = _candidates(p, state)
    if candidates.size == 0:
        raise NoCandidate("every selectable feature is already in the support")

    if measure is GoodnessMeasure.GRADIENT_MAGNITUDE:
        g = p.gradient(state.beta) if gradient is None else gradient
        scores = np.abs(g[candidates])
        best = int(np.argmax(scores))
        return int(candidates[best]), float(scores[best])

    best_i, best_goodness = int(candidates[0]), -np.inf
    for i in candidates:
        try:
            _, q_new = line_minimize(p, state.beta, int(i))
            goodness = state.q - q_new
        except ZeroCurvatureColumn:
            goodness = 0.0
        if goodness > best_goodness:
            best_i, best_goodness = int(i), goodness
    return best_i, float(max(best_goodness, 0.0))


def _stop_decision(
    p: ObjectiveProblem, state: FobaState, measure: GoodnessMeasure, rule: StoppingRule
) -> tuple[Optional[StopReason], Optional[tuple[int, float]], float]:
    """Return (stop reason or None, forward candidate if computed, stopping statistic)."""
    _check_pairing(measure, rule)
    if isinstance(rule, SparsityLevel) and state.k >= rule.K:
        return StopReason.SPARSITY, None, float(state.k)
    if _candidates(p, state).size == 0:
        return StopReason.EXHAUSTED, None, float(state.k)

    if measure is GoodnessMeasure.GRADIENT_MAGNITUDE:
        g = p.gradient(state.beta)
        statistic = float(np.max(np.abs(g)))
        candidate = forward_candidate(p, state, measure, gradient=g)
    else:
        candidate = forward_candidate(p, state, measure)
        statistic = candidate[1]

    if isinstance(rule, Threshold) and statistic < rule.value:
        return StopReason.THRESHOLD, candidate, statistic
    return None, candidate, statistic


def stop_check(p: ObjectiveProblem, state: FobaState, measure: GoodnessMeasure, rule: StoppingRule) -> bool:
    """True when the run should stop before the next forward step.

    Raises:
        MismatchedRule: If a threshold is paired with the other goodness measure
    """
    return _stop_decision(p, state, measure, rule)[0] is not None


def forward_step(
    p: ObjectiveProblem,
    state: FobaState,
    measure: GoodnessMeasure,
    cfg: Optional[SolverConfig] = None,
    candidate: Optional[tuple[int, float]] = None,
) -> FobaState:
    """Add the best candidate and re-solve; ``state`` is untouched if the solve raises."""
    i, goodness = candidate or forward_candidate(p, state, measure)
    q_before = state.q
    support = state.support.add(i)
    beta = restricted_minimize(p, support.union(state.dense), state.beta, cfg)
    state.support = support
    state.beta = beta
    state.q = p.value(beta)
    delta = q_before - state.q
    state.delta_stack.append(delta)
    state.iteration += 1
    state.record(StepKind.FORWARD, i, goodness, delta, q_before)
    logger.debug("forward +%d goodness=%.6g delta=%.6g k=%d", i, goodness, delta, state.k)
    return state


def backward_sweep(p: ObjectiveProblem, state: FobaState, cfg: Optional[SolverConfig] = None) -> FobaState:
    """Remove features while the cheapest removal damages Q by less than half the current delta."""
    while state.k > 0:
        beta = state.beta
        best_i, best_q = -1, np.inf
        for i in state.support:
            trial = beta.copy()
            trial[i] = 0.0
            q_i = p.value(trial)
            if q_i < best_q:
                best_i, best_q = i, q_i
        damage = best_q - state.q
        level = state.delta_stack[-1]
        if damage >= level / 2.0:
            break

        q_before = state.q
        support = state.support.remove(best_i)
        warm = beta.copy()
        warm[best_i] = 0.0
        state.beta = restricted_minimize(p, support.union(state.dense), warm, cfg)
        state.support = support
        state.delta_stack.pop()
        state.q = p.value(state.beta)
        state.iteration += 1
        state.record(StepKind.BACKWARD, best_i, damage, level, q_before)
        logger.debug("backward -%d damage=%.6g level=%.6g k=%d", best_i, damage, level, state.k)
    return state


def run_foba(
    p: ObjectiveProblem,
    measure: GoodnessMeasure,
    rule: StoppingRule,
    cfg: Optional[SolverConfig] = None,
    backward: bool = True,
) -> FobaResult:
    """Alternate stop check, forward step and backward sweep until a stopping rule fires.

    At most ``p.dimension`` forward acceptances are made; tripping that guard
    ends the run with ``StopReason.GUARD``.
    """
    _check_pairing(measure, rule)
    state = initial_state(p, cfg)
    guard = p.dimension
    forward_count = 0

    while True:
        reason, candidate, statistic = _stop_decision(p, state, measure, rule)
        if reason is not None:
            break
        if forward_count >= guard:
            reason = StopReason.GUARD
            logger.warning("forward guard tripped after %d acceptances", forward_count)
            break
        forward_step(p, state, measure, cfg, candidate)
        forward_count += 1
        if backward:
            backward_sweep(p, state, cfg)

    level = state.delta_stack[-1] if state.delta_stack else 0.0
    state.record(StepKind.STOP, None, statistic, level, state.q, reason)
    logger.debug("stopped (%s) with k=%d Q=%.10g", reason.value, state.k, state.q)
    return FobaResult(state.beta, state.support, state.trace, reason, state.q)


def run_forward(
    p: ObjectiveProblem,
    measure: GoodnessMeasure,
    rule: StoppingRule,
    cfg: Optional[SolverConfig] = None,
) -> FobaResult:
    """The forward greedy baseline: run_foba without backward sweeps."""
    return run_foba(p, measure, rule, cfg, backward=False)


def audit_trace(trace: list[TraceRecord]) -> list[str]:
    """Violations of the removal rule or of strict forward decrease, as messages."""
    problems = []
    for rec in trace:
        if rec.kind is StepKind.BACKWARD and not rec.goodness < rec.delta_level / 2.0:
            problems.append(
                f"iteration {rec.iteration}: removed {rec.feature} with damage {rec.goodness!r} "
                f">= half of delta {rec.delta_level!r}"
            )
        if rec.kind is StepKind.FORWARD and rec.goodness > 0 and not rec.q_after < rec.q_before:
            problems.append(
                f"iteration {rec.iteration}: adding {rec.feature} did not decrease Q "
                f"({rec.q_before!r} -> {rec.q_after!r})"
            )
    return problems
