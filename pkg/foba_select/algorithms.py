"""Engine variants and name lookup."""
from enum import Enum, unique
from typing import List, Optional

from foba_select.errors import ConfigError
from foba_select.foba import FobaResult, GoodnessMeasure, StoppingRule, run_foba
from foba_select.objectives import ObjectiveProblem
from foba_select.solver import SolverConfig


@unique
class Algorithm(Enum):
    """The four greedy selectors: {forward-backward, forward-only} x {objective, gradient} goodness."""

    FOBA_OBJ = "foba-obj"
    FOBA_GDT = "foba-gdt"
    FORWARD_OBJ = "forward-obj"
    FORWARD_GDT = "forward-gdt"

    @property
    def measure(self) -> GoodnessMeasure:
        if self.value.endswith("-obj"):
            return GoodnessMeasure.OBJECTIVE_REDUCTION
        return GoodnessMeasure.GRADIENT_MAGNITUDE

    @property
    def backward(self) -> bool:
        return self.value.startswith("foba-")

    @classmethod
    def from_string(cls, name: str) -> Optional["Algorithm"]:
        for algorithm in cls:
            if algorithm.value == name:
                return algorithm
        return None

    @classmethod
    def from_common_name(cls, name: str) -> Optional["Algorithm"]:
        """Resolve loose spellings such as ``FoBa_gdt`` or ``forward``."""
        name_lower = name.lower().replace("_", "-")
        if name_lower == "foba":
            return cls.FOBA_GDT
        elif name_lower == "forward":
            return cls.FORWARD_GDT
        return cls.from_string(name_lower)

    @classmethod
    def lookup_any(cls, name: str) -> Optional["Algorithm"]:
        return cls.from_string(name) or cls.from_common_name(name)

    @classmethod
    def list_all_ids(cls) -> List[str]:
        return [algorithm.value for algorithm in cls]

    def run(self, p: ObjectiveProblem, rule: StoppingRule, cfg: Optional[SolverConfig] = None) -> FobaResult:
        return run_foba(p, self.measure, rule, cfg, backward=self.backward)

    def __str__(self) -> str:
        return self.value


def lookup_algorithm(name: str) -> Algorithm:
    algorithm = Algorithm.lookup_any(name.strip())
    if algorithm:
        return algorithm
    available = Algorithm.list_all_ids() + ["foba", "forward"]
    raise ConfigError(f"Unknown algorithm: {name}. Available algorithms: {available}")

