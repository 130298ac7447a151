"""Shared domain types: dense vectors, support sets and the seeded random source."""
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import numpy.typing as npt

from foba_select.errors import DimensionMismatch, NonFiniteValue

DenseVector = npt.NDArray[np.float64]


def dense_vector(values: Iterable[float] | np.ndarray, length: Optional[int] = None) -> DenseVector:
    """Validate and copy ``values`` into a read-only float64 vector.

    Args:
        values: Entries of the vector
        length: Required length, if any

    Returns:
        A read-only 1-D float64 array

    Raises:
        DimensionMismatch: If the length differs from ``length``
        NonFiniteValue: If any entry is NaN or infinite
    """
    vec = np.array(values, dtype=np.float64).reshape(-1)
    if length is not None and vec.shape[0] != length:
        raise DimensionMismatch("vector", length, vec.shape[0])
    if not np.all(np.isfinite(vec)):
        raise NonFiniteValue("vector contains NaN or Inf entries")
    vec.setflags(write=False)
    return vec


def zeros(length: int) -> DenseVector:
    return dense_vector(np.zeros(length), length)


def basis_vector(length: int, j: int) -> DenseVector:
    e = np.zeros(length)
    e[j] = 1.0
    return dense_vector(e, length)


@dataclass(frozen=True)
class SupportSet:
    """Strictly increasing feature indices over a fixed dimension."""

    indices: tuple[int, ...]
    dimension: int

    def __post_init__(self):
        prev = -1
        for i in self.indices:
            if i <= prev:
                raise ValueError(f"support indices must be strictly increasing: {self.indices}")
            prev = i
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dimension):
            raise ValueError(f"support indices out of range [0, {self.dimension})")

    @classmethod
    def of(cls, indices: Iterable[int], dimension: int) -> "SupportSet":
        return cls(tuple(sorted({int(i) for i in indices})), dimension)

    @classmethod
    def empty(cls, dimension: int) -> "SupportSet":
        return cls((), dimension)

    @classmethod
    def full(cls, dimension: int) -> "SupportSet":
        return cls(tuple(range(dimension)), dimension)

    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, i: object) -> bool:
        return i in self.indices

    def add(self, i: int) -> "SupportSet":
        return SupportSet.of((*self.indices, i), self.dimension)

    def remove(self, i: int) -> "SupportSet":
        return SupportSet(tuple(j for j in self.indices if j != i), self.dimension)

    def union(self, other: "SupportSet") -> "SupportSet":
        return SupportSet.of((*self.indices, *other.indices), self.dimension)

    def intersection(self, other: "SupportSet") -> "SupportSet":
        keep = set(other.indices)
        return SupportSet(tuple(i for i in self.indices if i in keep), self.dimension)

    def to_array(self) -> npt.NDArray[np.intp]:
        return np.array(self.indices, dtype=np.intp)

    def mask(self) -> npt.NDArray[np.bool_]:
        m = np.zeros(self.dimension, dtype=bool)
        m[list(self.indices)] = True
        return m

    def one_based(self) -> list[int]:
        return [i + 1 for i in self.indices]


def sparsify(v: DenseVector, tol: float = 0.0) -> SupportSet:
    """Indices of entries with magnitude strictly above ``tol``."""
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    v = np.asarray(v)
    return SupportSet(tuple(int(i) for i in np.flatnonzero(np.abs(v) > tol)), v.shape[0])


def set_difference(a: SupportSet, b: SupportSet) -> SupportSet:
    """Elements of ``a`` not in ``b``, in ``a``'s order."""
    if a.dimension != b.dimension:
        raise DimensionMismatch("support dimension", a.dimension, b.dimension)
    drop = set(b.indices)
    return SupportSet(tuple(i for i in a.indices if i not in drop), a.dimension)


class Rng:
    """Seeded random source backed by numpy's PCG64 bit generator.

    PCG64 has a fixed, documented output stream, so a seed reproduces the same
    draws on every platform numpy supports. Child streams are derived from the
    seed and a key through ``SeedSequence`` and never share state.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self._seq = np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def child(self, *key: int) -> "Rng":
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._seq = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        child.generator = np.random.Generator(np.random.PCG64(child._seq))
        return child

    def normal(self, size: int | Sequence[int]) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low: float, high: float, size: int | Sequence[int]) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``."""
        return self.generator.choice(n, size=k, replace=False)

    def signs(self, size: int) -> np.ndarray:
        return np.where(self.generator.random(size) < 0.5, -1.0, 1.0)


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit seed for the stream identified by ``(seed, *key)``."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))
