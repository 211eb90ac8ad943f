"""Depth classifier, selection strategies, copy-through, stack equivalence."""

import numpy as np
import pytest

import adaslstm.tensor as ts
from adaslstm import adaptive, slstm
from adaslstm.tensor import Tape, Tensor, backward, grad_check

HID = 6
XDIM = 8
L = 4


def make_slstm_params(seed=42):
    return slstm.SLSTMParams.init(np.random.default_rng(seed), HID, XDIM, np.float64)


def make_depth_params(seed=43, max_layers=L):
    return adaptive.DepthClassifierParams.init(
        np.random.default_rng(seed), HID, 5, max_layers, np.float64)


def make_assignment(depths, max_layers=L, inner_dim=5):
    depths = np.asarray(depths, dtype=np.int64)
    mask = depths > 0
    b, n = depths.shape
    probs = np.zeros((b, n, max_layers))
    probs[mask, np.clip(depths[mask] - 1, 0, max_layers - 1)] = 1.0
    d_max = np.where(mask.any(axis=1), depths.max(axis=1), 1)
    inner = Tensor(np.zeros((b, n, inner_dim)))
    return adaptive.DepthAssignment(depths=depths, d_max=d_max, probs=probs,
                                    inner=inner, max_layers=max_layers)


class TestSelection:
    def test_hard_is_argmax_one_based(self):
        probs = np.array([[0.1, 0.7, 0.2], [0.5, 0.3, 0.2]])
        np.testing.assert_array_equal(adaptive.select_hard(probs), [2, 1])

    def test_hard_tie_takes_smallest_depth(self):
        probs = np.array([[0.4, 0.4, 0.2]])
        np.testing.assert_array_equal(adaptive.select_hard(probs), [1])

    def test_soft_one_hot_recovers_depth(self):
        probs = np.zeros((1, 5))
        probs[0, 2] = 1.0
        np.testing.assert_array_equal(adaptive.select_soft(probs), [3])

    def test_soft_uniform_nine_depths(self):
        """Uniform over 1..9 has expectation 5, floor 5."""
        probs = np.full((1, 9), 1.0 / 9.0)
        np.testing.assert_array_equal(adaptive.select_soft(probs), [5])

    def test_soft_half_half(self):
        """Even split over depths 1 and 2 floors to 1."""
        probs = np.array([[0.5, 0.5]])
        np.testing.assert_array_equal(adaptive.select_soft(probs), [1])

    def test_soft_clamped_to_valid_range(self):
        probs = np.zeros((1, 3))
        probs[0, 2] = 1.0  # expectation 3.0, floor 3 = max depth
        assert adaptive.select_soft(probs)[0] == 3

    def test_gumbel_matches_softmax_frequencies(self):
        """Gumbel-max samples land on each depth with softmax probability."""
        rng = np.random.default_rng(42)
        logits = np.array([0.5, -0.3, 1.2, 0.0, -1.0])
        target = np.exp(logits) / np.exp(logits).sum()
        draws, _ = adaptive.select_gumbel(np.tile(logits, (40000, 1)), 0.001, rng)
        freq = np.bincount(draws - 1, minlength=5) / 40000
        np.testing.assert_allclose(freq, target, atol=0.012)

    def test_gumbel_argmax_independent_of_tau(self):
        rng_state = np.random.default_rng(7)
        noise = adaptive.sample_gumbel(rng_state, (100, 6))
        logits = np.random.default_rng(8).standard_normal((100, 6))
        d1 = np.argmax((logits + noise) / 0.001, axis=-1)
        d2 = np.argmax((logits + noise) / 10.0, axis=-1)
        np.testing.assert_array_equal(d1, d2)

    def test_gumbel_perturbed_softmax_near_one_hot(self):
        """At tau = 0.001 the perturbed softmax is numerically one-hot."""
        rng = np.random.default_rng(42)
        logits = np.random.default_rng(1).standard_normal((50, 9))
        _, perturbed = adaptive.select_gumbel(logits, 0.001, rng)
        assert (perturbed.max(axis=-1) > 1.0 - 1e-6).all()

    def test_noise_never_touches_values(self):
        """Selection noise changes depths only; logits stay untouched."""
        logits = np.ones((3, 4))
        before = logits.copy()
        adaptive.select_gumbel(logits, 0.001, np.random.default_rng(0))
        np.testing.assert_array_equal(logits, before)


class TestAssignment:
    def test_padding_depth_zero_and_probs_zeroed(self):
        dp = make_depth_params()
        h = Tensor(np.random.default_rng(2).standard_normal((2, 3, HID)))
        mask = np.array([[True, True, False], [True, False, False]])
        a = adaptive.compute_assignment(h, dp, "hard", mask)
        assert (a.depths[~mask] == 0).all()
        assert (a.depths[mask] >= 1).all() and (a.depths[mask] <= L).all()
        np.testing.assert_array_equal(a.probs[~mask], 0.0)
        np.testing.assert_allclose(a.probs[mask].sum(axis=-1), 1.0, atol=1e-9)

    def test_identical_states_identical_depths(self):
        dp = make_depth_params()
        row = np.random.default_rng(3).standard_normal(HID)
        h = Tensor(np.tile(row, (1, 4, 1)))
        mask = np.ones((1, 4), dtype=bool)
        a = adaptive.compute_assignment(h, dp, "hard", mask)
        assert len(set(a.depths[0])) == 1

    def test_d_max_per_sentence(self):
        a = make_assignment([[2, 3, 0], [1, 1, 1]])
        np.testing.assert_array_equal(a.d_max, [3, 1])

    def test_mean_depth(self):
        a = make_assignment([[2, 4, 0]])
        assert a.mean_depth == 3.0

    def test_deterministic_given_seed(self):
        dp = make_depth_params()
        h = Tensor(np.random.default_rng(4).standard_normal((2, 5, HID)))
        mask = np.ones((2, 5), dtype=bool)
        a1 = adaptive.compute_assignment(h, dp, "gumbel", mask, rng=np.random.default_rng(9))
        a2 = adaptive.compute_assignment(h, dp, "gumbel", mask, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a1.depths, a2.depths)

    def test_near_uniform_depths_at_init(self):
        """A freshly initialized classifier spreads depth mass almost evenly."""
        dp = make_depth_params(max_layers=9)
        h = Tensor(np.random.default_rng(5).standard_normal((4, 50, HID)))
        mask = np.ones((4, 50), dtype=bool)
        a = adaptive.compute_assignment(h, dp, "hard", mask)
        spread = a.probs[mask].max(axis=-1) - a.probs[mask].min(axis=-1)
        assert spread.max() < 0.02


class TestAdaptiveStack:
    def test_all_max_depth_equals_full_stack_bitwise(self):
        """Depth L everywhere reproduces the conventional stack bit for bit."""
        rng = np.random.default_rng(42)
        p = make_slstm_params()
        mask = np.array([[True] * 5, [True, True, True, False, False]])
        x = Tensor(rng.standard_normal((2, 5, XDIM)))
        h0 = Tensor(rng.standard_normal((2, 5, HID)))
        depths = np.where(mask, L, 0)
        a = make_assignment(depths)
        full = slstm.full_stack(x, p, L, mask, h0=h0)
        adapt = adaptive.adaptive_stack(x, p, a, mask, h0=h0)
        assert np.array_equal(full.h.data, adapt.h.data)
        assert np.array_equal(full.c.data, adapt.c.data)
        assert np.array_equal(full.g.data, adapt.g.data)
        assert np.array_equal(full.c_g.data, adapt.c_g.data)

    def test_copy_through_bit_identical(self):
        """Beyond its depth a word's state is the layer-d state, bit for bit."""
        rng = np.random.default_rng(42)
        p = make_slstm_params()
        depths = np.array([[1, 3, 2, 4, 1]])
        mask = depths > 0
        x = Tensor(rng.standard_normal((1, 5, XDIM)))
        a = make_assignment(depths)
        state = adaptive.adaptive_stack(x, p, a, mask, collect_layers=True)
        assert state.layer == 4
        for i, d in enumerate(depths[0]):
            settled = state.layer_h[d - 1][0, i]
            for later in range(d, 4):
                assert np.array_equal(state.layer_h[later][0, i], settled)
            assert np.array_equal(state.h.data[0, i + 1], settled)

    def test_word_counter_is_sum_of_depths(self):
        rng = np.random.default_rng(42)
        p = make_slstm_params()
        depths = np.array([[1, 3, 2, 4, 1], [2, 2, 0, 0, 0]])
        mask = depths > 0
        a = make_assignment(depths)
        x = Tensor(rng.standard_normal((2, 5, XDIM)))
        for threshold in (0.0, 0.5, 1.1):
            state = adaptive.adaptive_stack(x, p, a, mask, compact_threshold=threshold)
            assert state.word_transitions == depths.sum()
        assert state.global_transitions == a.d_max.sum()

    def test_compact_and_masked_paths_agree(self):
        """Gather-compute-scatter matches the masked full computation."""
        rng = np.random.default_rng(42)
        p = make_slstm_params()
        depths = np.array([[1, 3, 2, 4, 1], [2, 1, 1, 0, 0]])
        mask = depths > 0
        a = make_assignment(depths)
        x = Tensor(rng.standard_normal((2, 5, XDIM)))
        masked = adaptive.adaptive_stack(x, p, a, mask, compact_threshold=0.0)
        compact = adaptive.adaptive_stack(x, p, a, mask, compact_threshold=1.1)
        np.testing.assert_allclose(masked.h.data, compact.h.data, atol=1e-12)
        np.testing.assert_allclose(masked.g.data, compact.g.data, atol=1e-12)

    def test_sentence_node_halts_at_sentence_max(self):
        """A sentence whose words are done stops updating its global state."""
        rng = np.random.default_rng(42)
        p = make_slstm_params()
        depths = np.array([[4, 4, 4], [1, 1, 1]])
        mask = depths > 0
        a = make_assignment(depths)
        x = Tensor(rng.standard_normal((2, 3, XDIM)))
        state = adaptive.adaptive_stack(x, p, a, mask)
        solo = adaptive.adaptive_stack(
            ts.slice_axis(x, 0, 1, 2), p, make_assignment(depths[1:2]), mask[1:2])
        np.testing.assert_allclose(state.g.data[1], solo.g.data[0], atol=1e-12)

    def test_rejects_bad_depths(self):
        p = make_slstm_params()
        mask = np.ones((1, 3), dtype=bool)
        x = Tensor(np.zeros((1, 3, XDIM)))
        with pytest.raises(ValueError, match="max_layers"):
            adaptive.adaptive_stack(x, p, make_assignment([[1, 2, 9]]), mask)
        with pytest.raises(ValueError, match="padding"):
            bad = make_assignment([[1, 2, 2]])
            pad_mask = np.array([[True, True, False]])
            adaptive.adaptive_stack(x, p, bad, pad_mask)


class TestDepthClassifier:
    def test_logits_shapes(self):
        dp = make_depth_params()
        h = Tensor(np.zeros((2, 3, HID)))
        logits, inner = adaptive.depth_logits(h, dp)
        assert logits.shape == (2, 3, L)
        assert inner.shape == (2, 3, 5)

    def test_probs_simplex(self):
        dp = make_depth_params()
        h = Tensor(np.random.default_rng(0).standard_normal((2, 3, HID)))
        logits, _ = adaptive.depth_logits(h, dp)
        probs = adaptive.depth_probs(logits)
        np.testing.assert_allclose(probs.data.sum(-1), 1.0, atol=1e-9)

    def test_gradients(self):
        dp = make_depth_params()
        h = Tensor(np.random.default_rng(1).standard_normal((2, 3, HID)), requires_grad=True)

        def f(h, w1, b1, w2, b2):
            params = adaptive.DepthClassifierParams(w1=w1, b1=b1, w2=w2, b2=b2,
                                                    h0_proj=dp.h0_proj)
            logits, inner = adaptive.depth_logits(h, params)
            return ts.add(ts.sum_(ts.mul(logits, logits)), ts.sum_(inner))

        assert grad_check(f, [h, dp.w1, dp.b1, dp.w2, dp.b2]) < 1e-6

    def test_h0_path_reaches_classifier_weights(self):
        """Loss gradient flows into w1 through the layer-0 state map."""
        dp = make_depth_params()
        p = make_slstm_params()
        rng = np.random.default_rng(6)
        h_seq = Tensor(rng.standard_normal((1, 3, HID)))
        x = Tensor(rng.standard_normal((1, 3, XDIM)))
        mask = np.ones((1, 3), dtype=bool)
        with Tape() as tape:
            a = adaptive.compute_assignment(h_seq, dp, "hard", mask)
            h0 = adaptive.init_h0(a, dp)
            state = adaptive.adaptive_stack(x, p, a, mask, h0=h0)
            backward(tape, ts.sum_(ts.mul(state.g, state.g)))
        assert dp.w1.grad is not None and np.abs(dp.w1.grad).max() > 0
        assert dp.h0_proj.grad is not None and np.abs(dp.h0_proj.grad).max() > 0
