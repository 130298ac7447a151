"""Experiment configuration: command defaults, a key=value file, then command-line overrides."""
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Union

from dotenv import dotenv_values

from foba_select.algorithms import Algorithm, lookup_algorithm
from foba_select.errors import ConfigError
from foba_select.foba import ExhaustAll, GoodnessMeasure, SparsityLevel, StoppingRule, Threshold
from foba_select.solver import SolverConfig

logger = logging.getLogger(__name__)

COMMANDS = ("logistic-synthetic", "crf-synthetic", "dataset", "select")
STOP_MODES = ("threshold", "truth", "sparsity", "exhaust")
OBJECTIVES = ("logistic", "least-squares")


def parse_sweep(text: Union[str, int]) -> tuple[int, ...]:
    """``"5..14"``, ``"10,15,20"`` or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            values = tuple(range(lo, hi + 1))
        else:
            values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"sweep must look like 5..14 or 10,15,20, got {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError(f"sweep values must be positive integers, got {text!r}")
    return values


def _algorithms(text: Union[str, tuple]) -> tuple[Algorithm, ...]:
    if isinstance(text, tuple):
        return text
    names = [name for name in str(text).split(",") if name.strip()]
    if not names:
        raise ConfigError("at least one algorithm is required")
    return tuple(lookup_algorithm(name) for name in names)


def _bool(text: Union[str, bool]) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _optional(convert: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def wrapped(value):
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return convert(value)

    return wrapped


def _choice(options: tuple[str, ...]) -> Callable[[Any], str]:
    def wrapped(value):
        value = str(value).strip().lower()
        if value not in options:
            raise ConfigError(f"expected one of {list(options)}, got {value!r}")
        return value

    return wrapped


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    algorithms: tuple[Algorithm, ...] = tuple(Algorithm)
    stop: str = "truth"
    delta: Optional[float] = None
    eps: Optional[float] = None
    sparsity: Optional[int] = None
    sweep: tuple[int, ...] = tuple(range(5, 15))
    trials: int = 50
    seed: int = 0
    jobs: int = 1
    out: Path = Path("results")
    one_based: bool = False
    n: int = 100
    d: Optional[int] = 500
    lam: float = 0.01
    sigma: float = 0.0
    beta_norm: float = 5.0
    T: int = 800
    D: int = 4
    S: int = 5
    L: int = 4
    transition_strength: float = 2.0
    emission_strength: float = 2.0
    grad_tol: float = 1e-8
    max_iter: int = 500
    objective: str = "logistic"
    group_size: Optional[int] = None
    test_path: Optional[Path] = None
    timing: bool = True

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {list(COMMANDS)}")
        if self.stop not in STOP_MODES:
            raise ConfigError(f"stop must be one of {list(STOP_MODES)}, got {self.stop!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {list(OBJECTIVES)}, got {self.objective!r}")
        for name in ("trials", "jobs", "n", "T", "D", "S", "L", "max_iter"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.d is not None and self.d < 1:
            raise ConfigError(f"d must be at least 1, got {self.d}")
        if self.lam < 0 or self.sigma < 0:
            raise ConfigError("lam and sigma must be nonnegative")
        if not self.grad_tol > 0:
            raise ConfigError(f"grad_tol must be positive, got {self.grad_tol}")
        for name in ("delta", "eps"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.sparsity is not None and self.sparsity < 1:
            raise ConfigError(f"sparsity must be at least 1, got {self.sparsity}")
        if self.group_size is not None and self.group_size < 1:
            raise ConfigError(f"group_size must be at least 1, got {self.group_size}")

        if self.stop == "threshold":
            for algorithm in self.algorithms:
                if algorithm.measure is GoodnessMeasure.OBJECTIVE_REDUCTION and self.delta is None:
                    raise ConfigError(f"{algorithm} stops on a threshold and needs delta")
                if algorithm.measure is GoodnessMeasure.GRADIENT_MAGNITUDE and self.eps is None:
                    raise ConfigError(f"{algorithm} stops on a threshold and needs eps")
        if self.stop == "truth" and self.command != "logistic-synthetic":
            raise ConfigError(f"stop=truth needs a planted model; {self.command} has none")
        if self.command == "select" and len(self.algorithms) != 1:
            raise ConfigError("select runs exactly one algorithm")
        if self.command == "select" and self.trials != 1:
            raise ConfigError(f"select runs a single selection; trials must be 1, got {self.trials}")
        if self.stop == "sparsity" and self.command == "select" and self.sparsity is None:
            raise ConfigError("stop=sparsity needs sparsity")

    @classmethod
    def from_sources(
        cls,
        command: str,
        config_file: Optional[Path] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "ExperimentConfig":
        """Layer command defaults, the key=value file and non-None overrides, in that order.

        Raises:
            ConfigError: On unknown keys, unparsable values or inconsistent settings
        """
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; expected one of {list(COMMANDS)}")
        values: dict[str, Any] = dict(COMMAND_DEFAULTS[command])
        if config_file is not None:
            if not Path(config_file).is_file():
                raise ConfigError(f"config file not found: {config_file}")
            file_values = dotenv_values(config_file)
            _reject_unknown(file_values, f"config file {config_file}")
            values.update({k: v for k, v in file_values.items() if v is not None})
            logger.debug("Loaded %d keys from %s", len(file_values), config_file)
        if overrides:
            _reject_unknown(overrides, "command line")
            values.update({k: v for k, v in overrides.items() if v is not None})

        converted = {}
        for key, value in values.items():
            try:
                converted[key] = _CONVERTERS[key](value)
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from None
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: cannot parse {value!r}") from None
        return cls(command=command, **converted)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(grad_tol=self.grad_tol, max_iter=self.max_iter)

    def stopping_rule(self, algorithm: Algorithm, level: Optional[int] = None) -> StoppingRule:
        """The rule for ``algorithm``; ``level`` is the swept sparsity where one applies.

        stop=truth is resolved per trial by the caller, since it needs the planted support.
        """
        if self.stop == "threshold":
            if algorithm.measure is GoodnessMeasure.OBJECTIVE_REDUCTION:
                return Threshold.delta(self.delta)
            return Threshold.epsilon(self.eps)
        if self.stop == "sparsity":
            K = self.sparsity if self.sparsity is not None else level
            if K is None:
                raise ConfigError("stop=sparsity needs sparsity")
            return SparsityLevel(K)
        if self.stop == "exhaust":
            return ExhaustAll()
        raise ConfigError("stop=truth is resolved from the planted support")


_CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "algorithms": _algorithms,
    "stop": _choice(STOP_MODES),
    "delta": _optional(float),
    "eps": _optional(float),
    "sparsity": _optional(int),
    "sweep": lambda v: v if isinstance(v, tuple) else parse_sweep(v),
    "trials": int,
    "seed": int,
    "jobs": int,
    "out": Path,
    "one_based": _bool,
    "n": int,
    "d": _optional(int),
    "lam": float,
    "sigma": float,
    "beta_norm": float,
    "T": int,
    "D": int,
    "S": int,
    "L": int,
    "transition_strength": float,
    "emission_strength": float,
    "grad_tol": float,
    "max_iter": int,
    "objective": _choice(OBJECTIVES),
    "group_size": _optional(int),
    "test_path": _optional(Path),
    "timing": _bool,
}

CONFIG_KEYS = frozenset(f.name for f in fields(ExperimentConfig)) - {"command"}


def _reject_unknown(values: Mapping[str, Any], where: str) -> None:
    unknown = sorted(set(values) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}; known keys: {sorted(CONFIG_KEYS)}")


COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "logistic-synthetic": {},
    "crf-synthetic": {
        "stop": "sparsity",
        "sweep": (10, 15, 20, 25, 30),
        "trials": 1,
        "grad_tol": 1e-6,
    },
    "dataset": {
        "stop": "sparsity",
        "sweep": (10, 20, 30, 40, 50, 60, 70),
        "trials": 1,
        "d": None,
        "lam": 1e-4,
    },
    "select": {
        "algorithms": (Algorithm.FOBA_GDT,),
        "stop": "threshold",
        "trials": 1,
        "d": None,
        "lam": 1e-4,
    },
}
