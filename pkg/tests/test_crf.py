#!/usr/bin/env python3
"""Tests for the linear-chain CRF objective and its inference routines."""
import numpy as np
import pytest

from foba_select.crf import ChainCrfProblem, ChainDataset, ChainSequence, CrfFeatureSpace, channel_groups
from foba_select.datagen import gen_chain
from foba_select.errors import GuardViolation


def _chain(T, D, S, L, seed):
    rng = np.random.default_rng(seed)
    seq = ChainSequence(rng.integers(0, S, (T, D)), rng.integers(0, L, T))
    return ChainDataset((seq,), S, L, D)


@pytest.mark.unit
class TestFeatureSpace:
    """Test cases for the CRF parameter layout."""

    def test_layout_is_a_bijection(self):
        """Test that observation and transition indices tile the parameter vector."""
        f = CrfFeatureSpace(n_labels=3, n_channels=2, n_states=4)
        obs = {f.observation_index(l, c, s) for l in range(3) for c in range(2) for s in range(4)}
        trans = {f.transition_index(a, b) for a in range(3) for b in range(3)}
        assert obs == set(range(f.n_observation)), "Observation indices should fill the first block"
        assert trans == set(range(f.n_observation, f.size)), "Transition indices should fill the tail"

    def test_mask_covers_observation_block(self):
        """Test that only observation weights are selectable."""
        f = CrfFeatureSpace(4, 4, 5)
        mask = f.sparsifiable_mask
        assert mask.sum() == 80, f"Expected 80 selectable weights, got {mask.sum()}"
        assert not mask[80:].any(), "Transition weights must not be selectable"
        assert f.size == 96, f"Expected 96 parameters, got {f.size}"

    def test_channel_groups(self):
        """Test that observation weights map to their channel and transitions to none."""
        f = CrfFeatureSpace(2, 3, 2)
        groups = channel_groups(f)
        assert len(groups) == f.n_observation, "Every observation weight needs a group"
        assert groups[f.observation_index(1, 2, 1)] == 2, "Weight should belong to channel 2"
        assert f.channel_of(f.transition_index(0, 1)) is None, "Transitions have no channel"


@pytest.mark.unit
class TestDatasetValidation:
    """Test cases for chain dataset validation."""

    def test_rejects_out_of_range_state(self):
        """Test that an observation state past S is refused."""
        seq = ChainSequence(np.array([[3]]), np.array([0]))
        with pytest.raises(ValueError):
            ChainDataset((seq,), 3, 2, 1)

    def test_rejects_empty_sequence(self):
        """Test that a zero-length sequence is refused."""
        seq = ChainSequence(np.zeros((0, 1), dtype=int), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            ChainDataset((seq,), 3, 2, 1)


@pytest.mark.unit
class TestPartition:
    """Test cases for the forward-algorithm log partition."""

    def test_uniform_potentials(self):
        """Test that zero weights give T log L."""
        p = ChainCrfProblem(_chain(5, 2, 3, 3, seed=0))
        assert p.log_partition(np.zeros(p.dimension), 0) == pytest.approx(5 * np.log(3), abs=1e-12), (
            "Uniform chain should count L^T paths"
        )

    def test_brute_force_small_uniform(self):
        """Test the enumeration reference on a tiny uniform chain."""
        p = ChainCrfProblem(_chain(3, 1, 2, 2, seed=1))
        assert p.brute_force_log_partition(np.zeros(p.dimension), 0) == pytest.approx(3 * np.log(2), abs=1e-12), (
            "Eight equal paths should give 3 log 2"
        )

    def test_single_position_has_no_transitions(self, rng):
        """Test that a one-position chain reduces to a softmax over labels."""
        p = ChainCrfProblem(_chain(1, 2, 3, 4, seed=2))
        beta = rng.standard_normal(p.dimension)
        unary, _ = p.potentials(beta, 0)
        expected = np.log(np.exp(unary[0]).sum())
        assert p.log_partition(beta, 0) == pytest.approx(expected, abs=1e-12), "Forward pass should be a log-sum-exp"
        assert p.brute_force_log_partition(beta, 0) == pytest.approx(expected, abs=1e-12), "Enumeration should agree"

    def test_single_label_has_zero_nll(self, rng):
        """Test that one label leaves nothing to predict."""
        p = ChainCrfProblem(_chain(6, 2, 3, 1, seed=3))
        beta = rng.standard_normal(p.dimension)
        assert p.value(beta) == pytest.approx(0.0, abs=1e-12), "Only one path exists"
        assert np.allclose(p.gradient(beta), 0.0, atol=1e-12), "Gradient should vanish"

    def test_matches_brute_force(self, rng):
        """Test the forward pass against enumeration on 20 small chains."""
        for seed in range(20):
            T = 2 + seed % 7
            p = ChainCrfProblem(_chain(T, 2, 3, 4, seed=100 + seed))
            beta = rng.standard_normal(p.dimension)
            assert abs(p.log_partition(beta, 0) - p.brute_force_log_partition(beta, 0)) < 1e-9, (
                f"Chain {seed} (T={T}): forward pass disagrees with enumeration"
            )

    def test_brute_force_guard(self):
        """Test that enumeration refuses chains with too many paths."""
        p = ChainCrfProblem(_chain(11, 1, 2, 4, seed=4))
        with pytest.raises(GuardViolation):
            p.brute_force_log_partition(np.zeros(p.dimension), 0)

    def test_large_weights_stay_finite(self, rng):
        """Test that large weights do not overflow the value or gradient."""
        p = ChainCrfProblem(gen_chain(T=200, D=4, S=5, L=4, seed=5))
        beta = 50.0 * np.sign(rng.standard_normal(p.dimension))
        q, g = p.value_and_gradient(beta)
        assert np.isfinite(q), "Value should stay finite"
        assert np.all(np.isfinite(g)), "Gradient should stay finite"


@pytest.mark.unit
class TestValueAndGradient:
    """Test cases for the negative log-likelihood and its gradient."""

    def test_value_at_zero(self):
        """Test that zero weights give total length times log L."""
        data = gen_chain(T=7, D=2, S=3, L=3, seed=6, n_sequences=2)
        p = ChainCrfProblem(data)
        assert p.value(np.zeros(p.dimension)) == pytest.approx(14 * np.log(3), rel=1e-12), "Expected 14 log 3"

    def test_value_matches_brute_force_nll(self, rng):
        """Test the NLL against enumerated partition minus path score."""
        p = ChainCrfProblem(_chain(5, 2, 3, 3, seed=7))
        beta = rng.standard_normal(p.dimension)
        expected = p.brute_force_log_partition(beta, 0) - p.score(beta, 0)
        assert p.value(beta) == pytest.approx(expected, abs=1e-9), "NLL should be log Z minus the gold score"

    def test_transition_gradient_at_zero(self):
        """Test that transition gradients at zero are expected minus observed counts."""
        data = _chain(6, 2, 3, 3, seed=8)
        p = ChainCrfProblem(data)
        g = p.gradient(np.zeros(p.dimension))
        labels = data.sequences[0].labels
        f = p.features
        for a in range(3):
            for b in range(3):
                count = int(np.sum((labels[:-1] == a) & (labels[1:] == b)))
                assert g[f.transition_index(a, b)] == pytest.approx(-count + 5 / 9, abs=1e-12), (
                    f"Transition {a}->{b}: expected {5 / 9 - count}"
                )


@pytest.mark.unit
class TestMarginals:
    """Test cases for forward-backward marginals."""

    def test_uniform_at_zero(self):
        """Test that zero weights give uniform marginals."""
        p = ChainCrfProblem(_chain(4, 2, 3, 3, seed=9))
        unary, pairwise = p.marginals(np.zeros(p.dimension), 0)
        assert np.allclose(unary, 1 / 3, atol=1e-12), "Each label should have probability 1/3"
        assert pairwise.shape == (3, 3, 3), f"Unexpected pairwise shape {pairwise.shape}"

    def test_consistency(self, rng):
        """Test normalization and agreement between unary and pairwise marginals."""
        p = ChainCrfProblem(_chain(6, 2, 3, 4, seed=10))
        beta = rng.standard_normal(p.dimension)
        unary, pairwise = p.marginals(beta, 0)
        assert np.allclose(unary.sum(axis=1), 1.0, atol=1e-10), "Unary rows should sum to 1"
        assert np.allclose(pairwise.sum(axis=(1, 2)), 1.0, atol=1e-10), "Pairwise tables should sum to 1"
        assert np.allclose(pairwise.sum(axis=2), unary[:-1], atol=1e-9), "Row sums should give the left marginal"
        assert np.allclose(pairwise.sum(axis=1), unary[1:], atol=1e-9), "Column sums should give the right marginal"

    def test_match_brute_force(self, rng):
        """Test unary marginals against enumeration on 20 small chains."""
        for seed in range(20):
            T = 2 + seed % 7
            p = ChainCrfProblem(_chain(T, 2, 3, 4, seed=200 + seed))
            beta = rng.standard_normal(p.dimension)
            unary, _ = p.marginals(beta, 0)
            assert np.allclose(unary, p.brute_force_marginals(beta, 0), atol=1e-10), (
                f"Chain {seed} (T={T}): marginals disagree with enumeration"
            )


@pytest.mark.unit
class TestDecoding:
    """Test cases for Viterbi decoding and derived problems."""

    def test_viterbi_matches_enumeration(self, rng):
        """Test that Viterbi returns the highest-scoring enumerated path."""
        p = ChainCrfProblem(_chain(5, 2, 3, 3, seed=11))
        beta = rng.standard_normal(p.dimension)
        best = p.viterbi_decode(beta, 0)
        paths, scores = p._enumerate(beta, 0)
        assert best.tolist() == paths[int(np.argmax(scores))].tolist(), "Viterbi should find the best path"

    def test_error_rate_single_label(self):
        """Test that a one-label chain is always decoded correctly."""
        p = ChainCrfProblem(_chain(8, 2, 3, 1, seed=12))
        assert p.error_rate(np.zeros(p.dimension)) == 0.0, "Only one label can be predicted"

    def test_with_data_shares_features(self):
        """Test that a held-out problem reuses the training layout."""
        data = gen_chain(T=10, D=2, S=3, L=2, seed=13, n_sequences=2)
        train = ChainCrfProblem(data.subset([0]))
        test = train.with_data(data.subset([1]))
        assert test.features == train.features, "Feature spaces should match"
        assert test.dimension == train.dimension, "Dimensions should match"
