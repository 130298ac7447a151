"""Synthetic instance generators and the sparse/chain text formats.

Sparse classification files hold one sample per line: a label followed by
``index:value`` pairs with 1-based indices. Chain files hold one or more blocks
separated by blank lines; each block is a ``T D S L`` header, T rows of D
observation states, and one row of T labels, all 0-based.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from foba_select.core import DenseVector, Rng, SupportSet, dense_vector
from foba_select.crf import ChainDataset, ChainSequence
from foba_select.errors import IndexOutOfDeclaredRange, MalformedLine
from foba_select.objectives import LeastSquaresProblem, LogisticL2Problem

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LogisticSyntheticSpec:
    n: int = 100
    d: int = 500
    k_bar: int = 5
    beta_norm: float = 5.0
    lam: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"n must be a positive even number, got {self.n}")
        if not 1 <= self.k_bar <= self.d:
            raise ValueError(f"k_bar must lie in [1, d={self.d}], got {self.k_bar}")
        if not self.beta_norm > 0:
            raise ValueError(f"beta_norm must be positive, got {self.beta_norm}")


@dataclass(frozen=True)
class LeastSquaresSyntheticSpec:
    n: int = 128
    d: int = 256
    k_bar: int = 8
    noise_sigma: float = 0.0
    normalize_columns: bool = True
    seed: int = 0
    min_magnitude: float = 1.0
    max_magnitude: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 1 <= self.k_bar <= self.d:
            raise ValueError(f"k_bar must lie in [1, d={self.d}], got {self.k_bar}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        if not 0 < self.min_magnitude <= self.max_magnitude:
            raise ValueError("magnitudes must satisfy 0 < min_magnitude <= max_magnitude")


def _planted_support(rng: Rng, d: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(d, k))


def gen_logistic(spec: LogisticSyntheticSpec) -> tuple[LogisticL2Problem, DenseVector, SupportSet]:
    """Two equal Gaussian classes N(beta*, I) labeled +1 and N(-beta*, I) labeled -1."""
    rng = Rng(spec.seed)
    support = _planted_support(rng, spec.d, spec.k_bar)
    values = rng.uniform(0.0, 1.0, spec.k_bar)
    beta = np.zeros(spec.d)
    beta[support] = values * (spec.beta_norm / np.linalg.norm(values))

    half = spec.n // 2
    X = rng.normal((spec.n, spec.d))
    X[:half] += beta
    X[half:] -= beta
    y = np.ones(spec.n)
    y[half:] = -1.0
    return LogisticL2Problem(X, y, spec.lam), dense_vector(beta), SupportSet.of(support, spec.d)


def gen_least_squares(spec: LeastSquaresSyntheticSpec) -> tuple[LeastSquaresProblem, DenseVector, SupportSet]:
    """y = X beta* + sigma * noise with Gaussian X, optionally unit-norm columns."""
    rng = Rng(spec.seed)
    X = rng.normal((spec.n, spec.d))
    if spec.normalize_columns:
        X /= np.linalg.norm(X, axis=0)
    support = _planted_support(rng, spec.d, spec.k_bar)
    beta = np.zeros(spec.d)
    beta[support] = rng.uniform(spec.min_magnitude, spec.max_magnitude, spec.k_bar) * rng.signs(spec.k_bar)
    beta = dense_vector(beta)
    y = X @ beta
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * rng.normal(spec.n)
    return LeastSquaresProblem(X, y), beta, SupportSet.of(support, spec.d)


def gen_chain(
    T: int = 800,
    D: int = 4,
    S: int = 5,
    L: int = 4,
    transition_strength: float = 2.0,
    emission_strength: float = 2.0,
    seed: int = 0,
    n_sequences: int = 1,
) -> ChainDataset:
    """Sample label chains from a sticky Markov chain and per-channel observations.

    Label transitions weight staying put by ``exp(transition_strength)`` against
    1 for every other label. On each channel every label prefers one state
    (distinct across labels while L <= S), weighted by ``exp(emission_strength)``
    against 1 for the rest. All sequences share the sampled emission layout.
    """
    if min(T, D, S, L, n_sequences) < 1:
        raise ValueError("T, D, S, L and n_sequences must be positive")
    rng = Rng(seed)

    trans = np.ones((L, L)) + (np.exp(transition_strength) - 1.0) * np.eye(L)
    trans_cdf = np.cumsum(trans / trans.sum(axis=1, keepdims=True), axis=1)

    emission = np.ones((D, L, S))
    layout = rng.child(0)
    for c in range(D):
        preferred = layout.generator.permutation(S)
        for label in range(L):
            emission[c, label, preferred[label % S]] = np.exp(emission_strength)
    emission_cdf = np.cumsum(emission / emission.sum(axis=2, keepdims=True), axis=2)

    sequences = []
    for i in range(n_sequences):
        draws = rng.child(1, i)
        u_labels = draws.uniform(0.0, 1.0, T)
        u_obs = draws.uniform(0.0, 1.0, (T, D))
        labels = np.empty(T, dtype=np.intp)
        labels[0] = min(int(u_labels[0] * L), L - 1)
        for t in range(1, T):
            labels[t] = _draw(trans_cdf[labels[t - 1]], u_labels[t])
        obs = np.empty((T, D), dtype=np.intp)
        for c in range(D):
            cdf = emission_cdf[c, labels]
            obs[:, c] = np.minimum((cdf < u_obs[:, c : c + 1]).sum(axis=1), S - 1)
        sequences.append(ChainSequence(obs, labels))
    return ChainDataset(tuple(sequences), S, L, D)


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.shape[0] - 1)


def _parse_response(token: str, path: Optional[Path], line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(path, line_no, f"response {token!r} is not a number") from None
    if not np.isfinite(value):
        raise MalformedLine(path, line_no, f"response {token!r} is not finite")
    return value


def _parse_label(token: str, path: Optional[Path], line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(path, line_no, f"label {token!r} is not a number") from None
    if value == 1.0:
        return 1.0
    if value in (0.0, -1.0):
        return -1.0
    raise MalformedLine(path, line_no, f"label {token!r} is not one of +1, -1, 0")


def parse_sparse_classification(
    path: PathLike, dimension: Optional[int] = None, real_labels: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Read ``label index:value ...`` lines into a dense design matrix and +/-1 labels.

    Args:
        path: File to read
        dimension: Declared feature count; inferred from the largest index if omitted
        real_labels: Keep labels as real responses instead of mapping them to +/-1

    Raises:
        MalformedLine: On a bad label, pair, or repeated index
        IndexOutOfDeclaredRange: On an index above ``dimension``
    """
    path = Path(path)
    labels: list[float] = []
    rows: list[list[tuple[int, float]]] = []
    width = 0
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        parse = _parse_response if real_labels else _parse_label
        labels.append(parse(tokens[0], path, line_no))
        entries = []
        seen = set()
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            try:
                if not sep:
                    raise ValueError
                index, value = int(index_text), float(value_text)
            except ValueError:
                raise MalformedLine(path, line_no, f"bad feature pair {token!r}") from None
            if index < 1:
                raise MalformedLine(path, line_no, f"feature index {index} is not 1-based")
            if dimension is not None and index > dimension:
                raise IndexOutOfDeclaredRange(path, line_no, f"feature index {index} exceeds dimension {dimension}")
            if index in seen:
                raise MalformedLine(path, line_no, f"feature index {index} repeated")
            seen.add(index)
            entries.append((index - 1, value))
            width = max(width, index)
        rows.append(entries)

    d = dimension if dimension is not None else width
    X = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, value in entries:
            X[r, j] = value
    logger.info("Parsed %s: n=%d d=%d", path, X.shape[0], d)
    return X, np.array(labels)


def write_sparse_classification(X: np.ndarray, y: np.ndarray, path: PathLike) -> None:
    """Write the sparse format with 1-based indices, omitting zero entries."""
    lines = []
    for row, label in zip(np.asarray(X), np.asarray(y)):
        pairs = " ".join(f"{j + 1}:{float(row[j])!r}" for j in np.flatnonzero(row))
        head = {1.0: "+1", -1.0: "-1"}.get(float(label), repr(float(label)))
        lines.append(f"{head} {pairs}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_chain_dataset(path: PathLike) -> ChainDataset:
    """Read blank-line separated ``T D S L`` blocks into one dataset.

    Raises:
        MalformedLine: On a bad header, row width, value, or a block whose D, S, L disagree
    """
    path = Path(path)
    blocks: list[list[tuple[int, str]]] = [[]]
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if raw.strip():
            blocks[-1].append((line_no, raw))
        elif blocks[-1]:
            blocks.append([])
    blocks = [b for b in blocks if b]
    if not blocks:
        raise MalformedLine(path, 1, "no chain blocks found")

    sequences = []
    shape = None
    for block in blocks:
        head_no, head = block[0]
        header = _ints(head, path, head_no)
        if len(header) != 4 or min(header) < 1:
            raise MalformedLine(path, head_no, "header must be four positive integers T D S L")
        T, D, S, L = header
        if shape is None:
            shape = (D, S, L)
        elif shape != (D, S, L):
            raise MalformedLine(path, head_no, f"block declares D S L = {D} {S} {L}, expected {shape}")
        if len(block) != T + 2:
            raise MalformedLine(path, head_no, f"block needs {T + 2} lines, found {len(block)}")

        obs = np.empty((T, D), dtype=np.intp)
        for t, (line_no, raw) in enumerate(block[1 : T + 1]):
            row = _ints(raw, path, line_no)
            if len(row) != D or min(row) < 0 or max(row) >= S:
                raise MalformedLine(path, line_no, f"expected {D} states in [0, {S})")
            obs[t] = row
        line_no, raw = block[T + 1]
        labels = _ints(raw, path, line_no)
        if len(labels) != T or min(labels) < 0 or max(labels) >= L:
            raise MalformedLine(path, line_no, f"expected {T} labels in [0, {L})")
        sequences.append(ChainSequence(obs, np.array(labels, dtype=np.intp)))

    D, S, L = shape
    return ChainDataset(tuple(sequences), S, L, D)


def _ints(line: str, path: Path, line_no: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise MalformedLine(path, line_no, "expected integers") from None


def write_chain_dataset(data: ChainDataset, path: PathLike) -> None:
    blocks = []
    for seq in data.sequences:
        lines = [f"{seq.length} {data.n_channels} {data.n_states} {data.n_labels}"]
        lines += [" ".join(str(int(v)) for v in row) for row in seq.observations]
        lines.append(" ".join(str(int(v)) for v in seq.labels))
        blocks.append("\n".join(lines))
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
