"""Pair featurization, MLP head, dropout, cosine probe."""

import numpy as np
import pytest

from treeattn.classifier import (MlpParams, classify, cosine_similarity,
                                 featurize_pair, init_mlp_params, make_dropout_mask)
from treeattn.tensor import ShapeError, Tensor, cross_entropy, finite_difference_check


class TestFeaturizePair:
    def test_hand_value(self):
        f = featurize_pair(Tensor([1.0, 2.0]), Tensor([1.0, 2.0]))
        assert f.data.tolist() == [1, 2, 1, 2, 0, 0, 1, 4]

    def test_zero_inputs(self):
        f = featurize_pair(Tensor([0.0, 0.0]), Tensor([0.0, 0.0]))
        assert f.shape == (8,) and not f.data.any()

    def test_swap_changes_only_first_two_blocks(self):
        rng = np.random.default_rng(0)
        s1, s2 = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
        ab = featurize_pair(s1, s2).data
        ba = featurize_pair(s2, s1).data
        assert (ab[6:] == ba[6:]).all()
        assert (ab[:3] == ba[3:6]).all() and (ab[3:6] == ba[:3]).all()

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError, match="featurize_pair"):
            featurize_pair(Tensor([1.0]), Tensor([1.0, 2.0]))


class TestClassify:
    def test_zero_weights_yield_bias(self):
        params = MlpParams(Tensor(np.zeros((4, 3))), Tensor(np.zeros(4)),
                           Tensor(np.zeros((2, 4))), Tensor([0.7, -0.2]))
        logits = classify(Tensor([1.0, 2.0, 3.0]), params)
        assert logits.data.tolist() == [0.7, -0.2]

    def test_keep_probability_one_matches_inference(self):
        rng = np.random.default_rng(1)
        params = init_mlp_params(rng, 6, 5, 3)
        x = Tensor(rng.normal(size=6))
        masks = (make_dropout_mask(rng, 6, 1.0), make_dropout_mask(rng, 5, 1.0))
        assert (classify(x, params, masks).data == classify(x, params).data).all()

    def test_fixed_mask_is_deterministic(self):
        rng = np.random.default_rng(2)
        params = init_mlp_params(rng, 6, 5, 3)
        x = Tensor(rng.normal(size=6))
        masks = (make_dropout_mask(rng, 6, 0.5), make_dropout_mask(rng, 5, 0.5))
        a = classify(x, params, masks).data
        b = classify(x, params, masks).data
        assert (a == b).all()

    def test_mask_values_are_inverted_scale(self):
        mask = make_dropout_mask(np.random.default_rng(3), 1000, 0.8)
        assert set(np.round(np.unique(mask), 12)) <= {0.0, round(1 / 0.8, 12)}
        assert 0.7 < (mask > 0).mean() < 0.9
        with pytest.raises(ValueError):
            make_dropout_mask(np.random.default_rng(0), 4, 0.0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        params = init_mlp_params(rng, 6, 5, 3)
        x = Tensor(rng.normal(size=6), requires_grad=True)
        masks = (make_dropout_mask(rng, 6, 0.7), make_dropout_mask(rng, 5, 0.7))

        def loss(_t):
            return cross_entropy(classify(x, params, masks), 1)

        for name, tensor in {"x": x, "w1": params.hidden_weight,
                             "b1": params.hidden_bias, "w2": params.out_weight,
                             "b2": params.out_bias}.items():
            err = finite_difference_check(loss, tensor, 1e-5)
            assert err < 1e-6, f"{name}: {err}"

    def test_uniform_logits_loss_is_log_k(self):
        rng = np.random.default_rng(5)
        for k in (2, 3, 5):
            params = MlpParams(Tensor(np.zeros((4, 6))), Tensor(np.zeros(4)),
                               Tensor(np.zeros((k, 4))), Tensor(np.zeros(k)))
            logits = classify(Tensor(rng.normal(size=6)), params)
            loss = cross_entropy(logits, 0)
            assert loss.item() == pytest.approx(np.log(k), abs=1e-12)


class TestCosineSimilarity:
    def test_identical_vectors(self):
        assert cosine_similarity(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_opposite_vectors(self):
        assert cosine_similarity([1.0, 0.0], [-2.0, 0.0]) == pytest.approx(-1.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero vector"):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a, b = rng.normal(size=4), rng.normal(size=4)
            s = cosine_similarity(a, b)
            assert s == cosine_similarity(b, a)
            assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
