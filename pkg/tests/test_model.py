"""Model tests: kernel inflation against a 2D-conv oracle, weight-shared
encoding, consensus arithmetic, softmax identities, fusion, prediction."""

import numpy as np
import pytest

from motionscore import autodiff as ad
from motionscore.autodiff import Tensor
from motionscore.errors import ConfigError, ContractError, InputError
from motionscore.model import (DEFAULT_STAGES, EncoderConfig, SnippetOutput, StageSpec,
                               class_probs, consensus, consensus_unweighted,
                               encode_snippet, fuse_modalities, inflate_kernel,
                               init_params, predict_video, weighted_mean)
from motionscore.sampling import AugmentConfig, SamplerConfig, Snippet

from helpers import naive_conv2d

SMALL_CFG = EncoderConfig(
    stages=(StageSpec(4, (3, 3, 3), (1, 2, 2)), StageSpec(6, (3, 3, 3), (2, 2, 2))),
    num_classes=3, dropout=0.0)


def _params(cfg=SMALL_CFG, in_ch=2, seed=0):
    return init_params(cfg, in_ch, np.random.default_rng(seed))


def _out(scores, lam):
    return SnippetOutput(
        features=Tensor(np.zeros(4, np.float32), check=False),
        class_scores=Tensor(np.asarray(scores, np.float32), check=False),
        attention=Tensor(np.float32(lam), check=False))


class TestInflation:
    def test_depth_one_is_identity(self):
        k = np.random.default_rng(0).standard_normal((2, 3, 3, 3)).astype(np.float32)
        out = inflate_kernel(k, 1)
        assert out.shape == (2, 3, 1, 3, 3)
        np.testing.assert_array_equal(out.data[:, :, 0], k)

    def test_constant_input_reproduces_2d_response(self):
        rng = np.random.default_rng(1)
        k2d = rng.standard_normal((2, 2, 3, 3))
        x2d = rng.standard_normal((2, 6, 6))
        ref = naive_conv2d(x2d, k2d)
        k3d = inflate_kernel(k2d, 3)
        x3d = np.repeat(x2d[:, None, :, :], 5, axis=1)  # constant in time
        # valid temporal conv: every output step sees all 3 replicated taps
        y = ad.conv3d(Tensor(x3d), Tensor(k3d.data), (1, 1, 1), (0, 0, 0))
        for t in range(y.shape[1]):
            np.testing.assert_allclose(y.data[:, t], ref, rtol=1e-6, atol=1e-9)

    def test_temporal_sum_recovers_2d_weights(self):
        rng = np.random.default_rng(2)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        for depth in (1, 2, 4):
            # power-of-two depths: division and re-summation are exact in fp
            out = inflate_kernel(k, depth)
            np.testing.assert_array_equal(out.data.sum(axis=2, dtype=np.float64), k)
        out = inflate_kernel(k, 3)
        np.testing.assert_allclose(out.data.sum(axis=2, dtype=np.float64), k, rtol=1e-6)

    def test_depth_zero_rejected(self):
        with pytest.raises(ConfigError):
            inflate_kernel(np.zeros((1, 1, 3, 3), np.float32), 0)


class TestEncode:
    def test_identical_snippets_identical_outputs(self):
        params = _params()
        x = np.random.default_rng(3).random((2, 8, 12, 12)).astype(np.float32)
        a = encode_snippet(Tensor(x), params, SMALL_CFG)
        b = encode_snippet(Tensor(x), params, SMALL_CFG)
        np.testing.assert_array_equal(a.class_scores.data, b.class_scores.data)
        np.testing.assert_array_equal(a.attention.data, b.attention.data)

    def test_zero_input_zero_bias_gives_half_attention(self):
        params = _params()
        x = np.zeros((2, 8, 12, 12), np.float32)
        out = encode_snippet(Tensor(x), params, SMALL_CFG)
        np.testing.assert_array_equal(out.features.data, np.zeros(6, np.float32))
        assert float(out.attention.data) == 0.5  # sigmoid(0)
        np.testing.assert_array_equal(out.class_scores.data, np.zeros(3, np.float32))

    def test_three_class_scores_by_default(self):
        cfg = EncoderConfig(stages=SMALL_CFG.stages, dropout=0.0)
        params = init_params(cfg, 2, np.random.default_rng(0))
        out = encode_snippet(Tensor(np.random.default_rng(1).random((2, 8, 12, 12)).astype(np.float32)),
                             params, cfg)
        assert out.class_scores.shape == (3,)

    def test_modality_channel_mismatch_rejected(self):
        params = _params()
        snip = Snippet(modality="rgb", frames=Tensor(np.zeros((2, 4, 8, 8), np.float32)),
                       source_segment=0, clip_id="c", subject_id="s", start=0)
        with pytest.raises(InputError, match="rgb"):
            encode_snippet(snip, params, SMALL_CFG)

    def test_attention_in_unit_interval_on_random_inputs(self):
        params = _params(seed=5)
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.standard_normal((2, 6, 10, 10)).astype(np.float32) * 3
            out = encode_snippet(Tensor(x), params, SMALL_CFG)
            assert 0.0 <= float(out.attention.data) <= 1.0

    def test_default_architecture(self):
        cfg = EncoderConfig()
        assert cfg.feature_dim == 64
        assert cfg.hidden_dim == 32
        assert [s.channels for s in DEFAULT_STAGES] == [8, 16, 32, 64]
        params = init_params(cfg, 3, np.random.default_rng(0))
        assert params["enc.conv0.w"].shape == (8, 3, 3, 3, 3)


class TestConsensus:
    def test_single_snippet_identity(self):
        F = consensus([_out([1.0, 2.0, 3.0], 1.0)])
        np.testing.assert_array_equal(F.data, [1.0, 2.0, 3.0])

    def test_zero_attention_gives_zero(self):
        F = consensus([_out([1, 2, 3], 0.0), _out([4, 5, 6], 0.0)])
        np.testing.assert_array_equal(F.data, np.zeros(3, np.float32))

    def test_hand_evaluated_case(self):
        F = consensus([_out([1, 0, 0], 1.0), _out([0, 1, 0], 0.5)])
        np.testing.assert_allclose(F.data, [0.5, 0.25, 0.0], rtol=1e-7)

    def test_unit_weights_equal_plain_mean(self):
        rng = np.random.default_rng(7)
        outs = [_out(rng.standard_normal(3), 1.0) for _ in range(4)]
        F = consensus(outs)
        mean = np.mean(np.stack([o.class_scores.data for o in outs]),
                       axis=0, dtype=np.float64).astype(np.float32)
        np.testing.assert_array_equal(F.data, mean)
        np.testing.assert_array_equal(consensus_unweighted(outs).data, mean)

    def test_permutation_symmetric(self):
        rng = np.random.default_rng(8)
        outs = [_out(rng.standard_normal(3), float(rng.random())) for _ in range(5)]
        F1 = consensus(outs)
        for perm_seed in range(5):
            perm = np.random.default_rng(perm_seed).permutation(5)
            F2 = consensus([outs[i] for i in perm])
            np.testing.assert_array_equal(F1.data, F2.data)

    def test_linear_in_scores_with_coefficient_lambda_over_k(self):
        lam = 0.7
        base = consensus([_out([1, 0, 0], lam), _out([0, 0, 0], 0.3)])
        scaled = consensus([_out([2, 0, 0], lam), _out([0, 0, 0], 0.3)])
        np.testing.assert_allclose(scaled.data - base.data, [lam / 2, 0, 0], rtol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            consensus([])

    def test_gradients_flow_to_scores_and_attention(self):
        s = Tensor(np.array([1.0, 2.0], np.float64), requires_grad=True)
        lam = Tensor(np.float64(0.5), requires_grad=True)
        F = weighted_mean([lam], [s])
        ad.backward(ad.sum_all(F))
        np.testing.assert_allclose(s.grad, [0.5, 0.5])
        np.testing.assert_allclose(lam.grad, 3.0)


class TestClassProbs:
    def test_uniform_for_zero_scores(self):
        p = class_probs(np.zeros(3, np.float32))
        np.testing.assert_allclose(p.data, [1 / 3] * 3, rtol=1e-6)

    def test_shift_invariance(self):
        f = np.array([0.3, -1.2, 2.0], np.float32)
        p1 = class_probs(f)
        p2 = class_probs(f + 7.5)
        np.testing.assert_allclose(p1.data, p2.data, atol=1e-7)

    def test_log_two_case(self):
        p = class_probs(np.array([np.log(2.0), 0.0, 0.0], np.float32))
        np.testing.assert_allclose(p.data, [0.5, 0.25, 0.25], rtol=1e-6)

    def test_sums_to_one(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            p = class_probs(rng.standard_normal(3).astype(np.float32) * 10)
            assert abs(float(p.data.sum(dtype=np.float64)) - 1.0) <= 1e-6


class TestFusion:
    def test_single_modality_unchanged(self):
        v = np.array([0.2, 0.5, 0.3], np.float32)
        np.testing.assert_array_equal(fuse_modalities([v]), v)

    def test_identical_vectors_unchanged(self):
        v = np.array([0.2, 0.5, 0.3], np.float32)
        np.testing.assert_allclose(fuse_modalities([v, v]), v, rtol=1e-7)

    def test_mean_of_two(self):
        a = np.array([1.0, 0.0, 0.0], np.float32)
        b = np.array([0.0, 1.0, 0.0], np.float32)
        np.testing.assert_allclose(fuse_modalities([a, b]), [0.5, 0.5, 0.0], rtol=1e-7)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError, match="mismatch"):
            fuse_modalities([np.zeros(3, np.float32), np.zeros(4, np.float32)])


class TestPredict:
    def _models(self):
        params = _params()
        return {"mb": (params, SMALL_CFG)}

    def test_prediction_shape_and_determinism(self):
        arr = np.random.default_rng(10).random((2, 40, 12, 12)).astype(np.float32)
        cfg = SamplerConfig(test_snippets=8, test_len=4)
        p1 = predict_video({"mb": arr}, self._models(), cfg)
        p2 = predict_video({"mb": arr}, self._models(), cfg)
        assert p1.class_index == p2.class_index
        np.testing.assert_array_equal(p1.probs, p2.probs)
        assert p1.probs.shape == (3,)
        assert abs(float(p1.probs.sum(dtype=np.float64)) - 1.0) < 1e-6

    def test_tie_break_smallest_index(self):
        fused = fuse_modalities([np.array([0.6, 0.4, 0.0], np.float32),
                                 np.array([0.4, 0.6, 0.0], np.float32)])
        np.testing.assert_allclose(fused, [0.5, 0.5, 0.0], rtol=1e-7)
        assert int(np.argmax(fused)) == 0

    def test_missing_modality_params_rejected(self):
        arr = np.zeros((2, 20, 12, 12), np.float32)
        with pytest.raises(ConfigError, match="flow"):
            predict_video({"flow": arr}, self._models(), SamplerConfig(test_snippets=4, test_len=4))

    def test_positive_scaling_never_changes_argmax(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            f = rng.standard_normal(3).astype(np.float32)
            p1 = class_probs(f)
            p2 = class_probs(f * 3.7)
            assert int(np.argmax(p1.data)) == int(np.argmax(p2.data))


class TestEndToEndGradient:
    def test_finite_difference_through_full_head(self):
        # encoder -> attention -> consensus -> softmax -> focal-style loss
        from helpers import check_grads
        cfg = EncoderConfig(stages=(StageSpec(3, (3, 3, 3), (1, 2, 2)),),
                            num_classes=3, dropout=0.0)
        rng = np.random.default_rng(12)
        snippets = [rng.standard_normal((2, 4, 6, 6)) * 0.5 for _ in range(2)]

        def run(param_arrays):
            params = ad.ParamSet()
            for (name, _), arr in zip(template.items(), param_arrays):
                params.add(name, Tensor(arr.copy(), check=False))
            outs = [encode_snippet(Tensor(s), params, cfg) for s in snippets]
            F = consensus(outs)
            p = class_probs(F)
            py = ad.clip_min(ad.index(p, 1), 1e-12)
            loss = -(ad.pow_const(1.0 - py, 2.0) * ad.log(py)) * 0.5
            return loss, params

        template = init_params(cfg, 2, np.random.default_rng(13))
        arrays = [t.data.astype(np.float64) for _, t in template.items()]

        loss, params = run(arrays)
        ad.backward(loss, params)
        grads = [t.grad for _, t in params.items()]

        def f(xs):
            value, _ = run(xs)
            return value.item()

        check_grads(f, arrays, grads, rng, n_probes=100)
