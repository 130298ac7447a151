"""Linear-chain CRF negative log-likelihood with sum-product inference.

Every quantity is computed in natural-log space with ``logsumexp``. Position 0
carries unary (observation) features only; transition features apply from
position 1 on.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from foba_select.core import DenseVector
from foba_select.errors import GuardViolation
from foba_select.objectives import ObjectiveProblem

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class ChainSequence:
    observations: np.ndarray  # T x D, entries in [0, S)
    labels: np.ndarray  # T, entries in [0, L)

    @property
    def length(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class ChainDataset:
    sequences: tuple[ChainSequence, ...]
    n_states: int
    n_labels: int
    n_channels: int

    def __post_init__(self):
        if self.n_states < 1 or self.n_labels < 1 or self.n_channels < 1:
            raise ValueError("S, L and D must be positive")
        for k, seq in enumerate(self.sequences):
            obs, labels = seq.observations, seq.labels
            if labels.ndim != 1 or labels.shape[0] < 1:
                raise ValueError(f"sequence {k}: needs at least one position")
            if obs.shape != (labels.shape[0], self.n_channels):
                raise ValueError(
                    f"sequence {k}: observations shape {obs.shape}, "
                    f"expected ({labels.shape[0]}, {self.n_channels})"
                )
            if obs.min() < 0 or obs.max() >= self.n_states:
                raise ValueError(f"sequence {k}: observation state outside [0, {self.n_states})")
            if labels.min() < 0 or labels.max() >= self.n_labels:
                raise ValueError(f"sequence {k}: label outside [0, {self.n_labels})")

    @property
    def n_positions(self) -> int:
        return sum(seq.length for seq in self.sequences)

    def subset(self, indices: Sequence[int]) -> "ChainDataset":
        return ChainDataset(
            tuple(self.sequences[i] for i in indices), self.n_states, self.n_labels, self.n_channels
        )


@dataclass(frozen=True)
class CrfFeatureSpace:
    """Parameter layout: observation block first, then the dense L x L transitions.

    Observation feature (label, channel, state) fires when position t has label
    ``label`` and channel ``channel`` reads ``state``.
    """

    n_labels: int
    n_channels: int
    n_states: int

    @classmethod
    def for_dataset(cls, data: ChainDataset) -> "CrfFeatureSpace":
        return cls(data.n_labels, data.n_channels, data.n_states)

    @property
    def n_observation(self) -> int:
        return self.n_labels * self.n_channels * self.n_states

    @property
    def n_transition(self) -> int:
        return self.n_labels * self.n_labels

    @property
    def size(self) -> int:
        return self.n_observation + self.n_transition

    def observation_index(self, label: int, channel: int, state: int) -> int:
        return (label * self.n_channels + channel) * self.n_states + state

    def transition_index(self, prev: int, label: int) -> int:
        return self.n_observation + prev * self.n_labels + label

    @property
    def sparsifiable_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[: self.n_observation] = True
        return mask

    def channel_of(self, m: int) -> Optional[int]:
        if m >= self.n_observation:
            return None
        return (m // self.n_states) % self.n_channels


def channel_groups(features: CrfFeatureSpace) -> dict[int, int]:
    """Map each observation feature to the channel (sensor) it reads."""
    return {m: features.channel_of(m) for m in range(features.n_observation)}


class ChainCrfProblem(ObjectiveProblem):
    """Q(beta) = sum_i [log Z(X^i) - score(y^i, X^i; beta)] over a chain dataset."""

    kind = "crf"

    def __init__(self, data: ChainDataset, features: Optional[CrfFeatureSpace] = None):
        self.data = data
        self.features = features or CrfFeatureSpace.for_dataset(data)
        f = self.features
        if (f.n_labels, f.n_channels, f.n_states) != (data.n_labels, data.n_channels, data.n_states):
            raise ValueError("feature space does not match the dataset's L, D, S")

        L, D = f.n_labels, f.n_channels
        label_offsets = (np.arange(L)[:, None] * D + np.arange(D)[None, :]) * f.n_states
        self._obs_idx = []
        self._observed = np.zeros(f.size)
        for seq in data.sequences:
            # obs_idx[t, l, c]: parameter firing for label l at position t on channel c
            idx = label_offsets[None, :, :] + seq.observations[:, None, :]
            self._obs_idx.append(idx)
            T = seq.length
            fired = idx[np.arange(T), seq.labels, :].ravel()
            self._observed += np.bincount(fired, minlength=f.size)
            if T > 1:
                trans = f.n_observation + seq.labels[:-1] * L + seq.labels[1:]
                self._observed += np.bincount(trans, minlength=f.size)

    @property
    def dimension(self) -> int:
        return self.features.size

    @property
    def sparsifiable_mask(self) -> np.ndarray:
        return self.features.sparsifiable_mask

    def with_data(self, data: ChainDataset) -> "ChainCrfProblem":
        return ChainCrfProblem(data, self.features)

    def potentials(self, beta: DenseVector, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Unary log-potentials (T x L) and the transition log-potentials (L x L)."""
        beta = self._check(beta)
        L = self.features.n_labels
        unary = beta[self._obs_idx[i]].sum(axis=2)
        trans = beta[self.features.n_observation :].reshape(L, L)
        return unary, trans

    @staticmethod
    def _forward(unary: np.ndarray, trans: np.ndarray) -> np.ndarray:
        alpha = np.empty_like(unary)
        alpha[0] = unary[0]
        for t in range(1, unary.shape[0]):
            alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + unary[t]
        return alpha

    @staticmethod
    def _backward(unary: np.ndarray, trans: np.ndarray) -> np.ndarray:
        back = np.zeros_like(unary)
        for t in range(unary.shape[0] - 2, -1, -1):
            back[t] = logsumexp(trans + (unary[t + 1] + back[t + 1])[None, :], axis=1)
        return back

    def log_partition(self, beta: DenseVector, i: int) -> float:
        unary, trans = self.potentials(beta, i)
        return float(logsumexp(self._forward(unary, trans)[-1]))

    def score(self, beta: DenseVector, i: int) -> float:
        unary, trans = self.potentials(beta, i)
        y = self.data.sequences[i].labels
        return float(unary[np.arange(y.shape[0]), y].sum() + trans[y[:-1], y[1:]].sum())

    def _enumerate(self, beta: DenseVector, i: int) -> tuple[np.ndarray, np.ndarray]:
        unary, trans = self.potentials(beta, i)
        T, L = unary.shape
        if L**T > BRUTE_FORCE_LIMIT:
            raise GuardViolation(f"brute force needs L^T={L}^{T} > {BRUTE_FORCE_LIMIT} paths")
        paths = np.array(list(itertools.product(range(L), repeat=T)), dtype=np.intp)
        scores = unary[np.arange(T)[None, :], paths].sum(axis=1)
        if T > 1:
            scores += trans[paths[:, :-1], paths[:, 1:]].sum(axis=1)
        return paths, scores

    def brute_force_log_partition(self, beta: DenseVector, i: int) -> float:
        """log Z by enumerating every label sequence (test oracle)."""
        _, scores = self._enumerate(beta, i)
        return float(logsumexp(scores))

    def brute_force_marginals(self, beta: DenseVector, i: int) -> np.ndarray:
        paths, scores = self._enumerate(beta, i)
        probs = np.exp(scores - logsumexp(scores))
        T, L = paths.shape[1], self.features.n_labels
        return np.stack([np.bincount(paths[:, t], weights=probs, minlength=L) for t in range(T)])

    def marginals(self, beta: DenseVector, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior unary (T x L) and pairwise ((T-1) x L x L) marginals."""
        unary, trans = self.potentials(beta, i)
        return self._marginals(unary, trans)[1:]

    def _marginals(self, unary: np.ndarray, trans: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        alpha = self._forward(unary, trans)
        back = self._backward(unary, trans)
        log_z = float(logsumexp(alpha[-1]))
        node = np.exp(alpha + back - log_z)
        edge = np.exp(
            alpha[:-1, :, None]
            + trans[None, :, :]
            + (unary[1:] + back[1:])[:, None, :]
            - log_z
        )
        return log_z, node, edge

    def value(self, beta: DenseVector) -> float:
        beta = self._check(beta)
        total = 0.0
        for i in range(len(self.data.sequences)):
            unary, trans = self.potentials(beta, i)
            total += float(logsumexp(self._forward(unary, trans)[-1]))
        return total - float(self._observed @ beta)

    def gradient(self, beta: DenseVector) -> DenseVector:
        return self.value_and_gradient(beta)[1]

    def value_and_gradient(self, beta: DenseVector) -> tuple[float, DenseVector]:
        beta = self._check(beta)
        f = self.features
        expected = np.zeros(f.size)
        total = 0.0
        # fixed sequence order keeps the reduction deterministic
        for i in range(len(self.data.sequences)):
            unary, trans = self.potentials(beta, i)
            log_z, node, edge = self._marginals(unary, trans)
            total += log_z
            idx = self._obs_idx[i]
            weights = np.broadcast_to(node[:, :, None], idx.shape)
            expected += np.bincount(idx.ravel(), weights=weights.ravel(), minlength=f.size)
            expected[f.n_observation :] += edge.sum(axis=0).ravel()
        return total - float(self._observed @ beta), expected - self._observed

    def viterbi_decode(self, beta: DenseVector, i: int) -> np.ndarray:
        unary, trans = self.potentials(beta, i)
        T, L = unary.shape
        best = unary[0].copy()
        pointers = np.zeros((T, L), dtype=np.intp)
        for t in range(1, T):
            cand = best[:, None] + trans
            pointers[t] = np.argmax(cand, axis=0)
            best = cand[pointers[t], np.arange(L)] + unary[t]
        labels = np.empty(T, dtype=np.intp)
        labels[-1] = int(np.argmax(best))
        for t in range(T - 1, 0, -1):
            labels[t - 1] = pointers[t, labels[t]]
        return labels

    def error_rate(self, beta: DenseVector) -> float:
        """Fraction of positions whose Viterbi label differs from the truth."""
        wrong = sum(
            int(np.sum(self.viterbi_decode(beta, i) != seq.labels))
            for i, seq in enumerate(self.data.sequences)
        )
        return wrong / self.data.n_positions
