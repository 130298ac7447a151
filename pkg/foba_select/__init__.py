"""Forward-backward greedy sparse feature selection over smooth convex objectives."""
from foba_select.algorithms import Algorithm, lookup_algorithm
from foba_select.core import Rng, SupportSet, dense_vector, set_difference, sparsify
from foba_select.crf import ChainCrfProblem, ChainDataset, ChainSequence, CrfFeatureSpace
from foba_select.foba import (
    ExhaustAll,
    FobaResult,
    GoodnessMeasure,
    SparsityLevel,
    StopReason,
    Threshold,
    run_foba,
    run_forward,
)
from foba_select.objectives import LeastSquaresProblem, LogisticL2Problem, ObjectiveProblem
from foba_select.solver import SolverConfig, line_minimize, restricted_minimize

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ChainCrfProblem",
    "ChainDataset",
    "ChainSequence",
    "CrfFeatureSpace",
    "ExhaustAll",
    "FobaResult",
    "GoodnessMeasure",
    "LeastSquaresProblem",
    "LogisticL2Problem",
    "ObjectiveProblem",
    "Rng",
    "SolverConfig",
    "SparsityLevel",
    "StopReason",
    "SupportSet",
    "Threshold",
    "dense_vector",
    "line_minimize",
    "lookup_algorithm",
    "restricted_minimize",
    "run_foba",
    "run_forward",
    "set_difference",
    "sparsify",
]
