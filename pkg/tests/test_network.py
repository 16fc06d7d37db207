import dataclasses

import numpy as np
import pytest
import torch

from conftest import tiny_config
from tganet.attributes import load_attribute_embeddings
from tganet.errors import (
    CheckpointVersionMismatch,
    DimensionMismatch,
    InvalidConfig,
    NonFiniteFeatures,
    ShapeMismatch,
)
from tganet.model import (
    ChannelAttention,
    DecoderBlock,
    FeatureEnhancement,
    FeatureProjection,
    MultiScaleAggregation,
    NetworkConfig,
    SpatialAttention,
    TGANet,
    VARIANT_ORDER,
    ablation_config,
    load_checkpoint,
    model_from_checkpoint,
    parameter_count,
    save_checkpoint,
)

GOLDEN_DEFAULT_PARAMETER_COUNT = 17_827_344


def tiny_model(**config_overrides) -> TGANet:
    cfg = tiny_config(**config_overrides)
    return TGANet(cfg, embeddings=load_attribute_embeddings(42, cfg.embedding_k))


class TestNetworkConfig:
    def test_defaults_are_valid(self):
        cfg = NetworkConfig()
        assert cfg.encoder_channels == (64, 256, 512, 1024)
        assert cfg.encoder_strides == (2, 4, 8, 16)
        assert cfg.dilation_rates == (1, 6, 12, 18)

    def test_stride_ladder_enforced(self):
        with pytest.raises(InvalidConfig):
            NetworkConfig(encoder_strides=(1, 2, 4, 8))

    def test_dilation_rates_fixed_when_fem_on(self):
        with pytest.raises(InvalidConfig):
            NetworkConfig(dilation_rates=(1, 2, 3, 4))
        NetworkConfig(dilation_rates=(1, 2, 3, 4), use_fem=False)  # free once ablated

    def test_label_attention_requires_classifiers(self):
        with pytest.raises(InvalidConfig):
            NetworkConfig(use_label_attention=True, use_classifiers=False)

    def test_input_size_divisibility(self):
        with pytest.raises(InvalidConfig):
            NetworkConfig(input_size=100)

    def test_roundtrips_through_dict(self):
        cfg = tiny_config(use_msfa=False)
        assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


class TestEncode:
    def test_default_shapes_at_256(self):
        model = TGANet(NetworkConfig())
        model.eval()
        with torch.no_grad():
            e1, e2, e3, e4 = model.encode(torch.rand(2, 3, 256, 256))
        assert tuple(e1.shape) == (2, 64, 128, 128)
        assert tuple(e2.shape) == (2, 256, 64, 64)
        assert tuple(e3.shape) == (2, 512, 32, 32)
        assert tuple(e4.shape) == (2, 1024, 16, 16)

    def test_spatial_dims_follow_input(self, tiny_embeddings):
        model = tiny_model()
        model.eval()
        with torch.no_grad():
            features = model.encode(torch.rand(1, 3, 128, 128))
        for feature, stride in zip(features, model.config.encoder_strides):
            assert feature.shape[-1] == 128 // stride

    def test_shape_mismatch_on_bad_input(self):
        model = tiny_model()
        with pytest.raises(ShapeMismatch):
            model.encode(torch.rand(1, 1, 32, 32))
        with pytest.raises(ShapeMismatch):
            model.encode(torch.rand(1, 3, 30, 30))

    def test_nan_propagates_unless_debug(self):
        image = torch.rand(1, 3, 32, 32)
        image[0, 0, 3, 3] = float("nan")
        model = tiny_model()
        model.eval()
        with torch.no_grad():
            features = model.encode(image)  # no ShapeMismatch, NaN flows through
        assert not torch.isfinite(features[0]).all()

        debug_model = tiny_model()
        debug_model.debug = True
        debug_model.eval()
        with torch.no_grad(), pytest.raises(NonFiniteFeatures):
            debug_model.encode(image)


class TestClassifyAttributes:
    def test_zero_features_give_uniform_softmax(self):
        model = tiny_model()
        logits = model.classify_attributes(torch.zeros(2, 1024, 2, 2))
        assert torch.all(logits.count_logits == 0)
        assert torch.all(logits.size_logits == 0)
        probs = logits.probabilities()
        np.testing.assert_allclose(probs[:, :2].detach().numpy(), 0.5, atol=1e-7)
        np.testing.assert_allclose(probs[:, 2:].detach().numpy(), 1 / 3, atol=1e-7)

    def test_batch_shapes(self):
        model = tiny_model()
        logits = model.classify_attributes(torch.rand(4, 1024, 2, 2))
        assert tuple(logits.count_logits.shape) == (4, 2)
        assert tuple(logits.size_logits.shape) == (4, 3)

    def test_softmax_rows_sum_to_one(self, rng):
        model = tiny_model()
        logits = model.classify_attributes(torch.from_numpy(rng.normal(size=(8, 1024, 2, 2))).float())
        probs = logits.probabilities().detach().numpy()
        np.testing.assert_allclose(probs[:, :2].sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(probs[:, 2:].sum(axis=1), 1.0, atol=1e-6)


class TestFeatureEnhancement:
    def test_output_shape(self):
        fem = FeatureEnhancement(256, 64)
        fem.eval()
        with torch.no_grad():
            out = fem(torch.rand(1, 256, 64, 64))
        assert tuple(out.shape) == (1, 64, 64, 64)

    def test_ablated_projection_same_shape(self):
        stub = FeatureProjection(256, 64)
        stub.eval()
        with torch.no_grad():
            out = stub(torch.rand(1, 256, 64, 64))
        assert tuple(out.shape) == (1, 64, 64, 64)

    def test_attention_gates_live_in_unit_interval(self, rng):
        x = torch.from_numpy(rng.normal(size=(2, 32, 8, 8))).float()
        with torch.no_grad():
            channel_gate = ChannelAttention(32).gate(x)
            spatial_gate = SpatialAttention().gate(x)
        for gate in (channel_gate, spatial_gate):
            assert float(gate.min()) >= 0.0
            assert float(gate.max()) <= 1.0


class TestLabelFeatures:
    def test_zero_fusion_zero_bias_gives_zero(self):
        model = tiny_model()
        out = model.compute_label_features(torch.zeros(2, 5, 8))
        assert torch.all(out == 0)  # biases are zero-initialized

    def test_batch_shape(self):
        model = tiny_model()
        out = model.compute_label_features(torch.rand(3, 5, 8))
        assert tuple(out.shape) == (3, model.config.label_feature_dim)

    def test_dimension_mismatch(self):
        model = tiny_model()
        with pytest.raises(DimensionMismatch):
            model.compute_label_features(torch.rand(1, 5, 16))

    def test_positive_homogeneity_on_positive_weights(self):
        model = tiny_model()
        with torch.no_grad():
            for layer in model.label_mlp:
                if isinstance(layer, torch.nn.Linear):
                    layer.weight.abs_()
                    layer.bias.zero_()
        fusion = torch.rand(2, 5, 8) + 0.1  # positive input -> positive pre-activations
        one = model.compute_label_features(fusion)
        two = model.compute_label_features(2 * fusion)
        np.testing.assert_allclose(two.detach().numpy(), 2 * one.detach().numpy(), rtol=1e-5)


class TestDecoderBlock:
    def test_output_shape(self):
        block = DecoderBlock(64, 64, 256, gate_in_dim=64)
        block.eval()
        with torch.no_grad():
            out = block(torch.rand(1, 64, 16, 16), torch.rand(1, 64, 32, 32), torch.rand(1, 64))
        assert tuple(out.shape) == (1, 256, 32, 32)

    def test_shape_mismatch_on_bad_skip(self):
        block = DecoderBlock(64, 64, 128, gate_in_dim=64)
        with pytest.raises(ShapeMismatch):
            block(torch.rand(1, 64, 16, 16), torch.rand(1, 64, 48, 48), torch.rand(1, 64))

    @staticmethod
    def _force_gate_bias(block, value):
        final = block.gate_proj[-1]
        with torch.no_grad():
            final.weight.zero_()
            final.bias.fill_(value)

    def _cbam_reference(self, block, deep, skip):
        gate_proj = block.gate_proj
        block.gate_proj = None
        with torch.no_grad():
            reference = block(deep, skip)
        block.gate_proj = gate_proj
        return reference

    def test_unit_gate_returns_cbam_features_exactly(self):
        torch.manual_seed(3)
        block = DecoderBlock(16, 16, 32, gate_in_dim=8)
        block.eval()
        self._force_gate_bias(block, 1000.0)  # sigmoid saturates to exactly 1.0
        deep, skip, lf = torch.rand(1, 16, 8, 8), torch.rand(1, 16, 16, 16), torch.rand(1, 8)
        with torch.no_grad():
            gated = block(deep, skip, lf)
        assert torch.equal(gated, self._cbam_reference(block, deep, skip))

    def test_zero_gate_annihilates_output(self):
        torch.manual_seed(4)
        block = DecoderBlock(16, 16, 32, gate_in_dim=8)
        block.eval()
        self._force_gate_bias(block, -1000.0)  # sigmoid underflows to exactly 0.0
        with torch.no_grad():
            gated = block(torch.rand(1, 16, 8, 8), torch.rand(1, 16, 16, 16), torch.rand(1, 8))
        assert torch.all(gated == 0)

    def test_channelwise_gate_algebra(self):
        torch.manual_seed(5)
        block = DecoderBlock(16, 16, 32, gate_in_dim=8)
        block.eval()
        deep, skip, lf = torch.rand(1, 16, 8, 8), torch.rand(1, 16, 16, 16), torch.rand(1, 8)
        reference = self._cbam_reference(block, deep, skip)
        with torch.no_grad():
            gated = block(deep, skip, lf)
            gate = torch.sigmoid(block.gate_proj(lf))
        assert torch.equal(gated, reference * gate[:, :, None, None])


class TestMultiScaleAggregation:
    def test_output_shape(self):
        msfa = MultiScaleAggregation((256, 128, 64), 64)
        msfa.eval()
        with torch.no_grad():
            out = msfa(torch.rand(1, 256, 32, 32), torch.rand(1, 128, 64, 64), torch.rand(1, 64, 128, 128))
        assert tuple(out.shape) == (1, 64, 128, 128)

    def test_resolution_order_enforced(self):
        msfa = MultiScaleAggregation((64, 64, 64), 64)
        with pytest.raises(ShapeMismatch):
            msfa(torch.rand(1, 64, 32, 32), torch.rand(1, 64, 32, 32), torch.rand(1, 64, 64, 64))

    def test_msfa_off_passes_d3_through(self, tiny_embeddings):
        model = tiny_model(use_msfa=False)
        d3 = torch.rand(1, 64, 16, 16)
        assert model.aggregate_multiscale(torch.rand(1, 256, 4, 4), torch.rand(1, 128, 8, 8), d3) is d3

    def test_zero_inputs_zero_output(self):
        msfa = MultiScaleAggregation((32, 16, 8), 8)
        msfa.eval()
        with torch.no_grad():
            out = msfa(torch.zeros(1, 32, 4, 4), torch.zeros(1, 16, 8, 8), torch.zeros(1, 8, 16, 16))
        assert torch.all(out == 0)


class TestForwardFull:
    def test_end_to_end_shapes_and_range(self):
        model = tiny_model()
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(2, 3, 32, 32))
        assert tuple(out.mask_prob.shape) == (2, 1, 32, 32)
        assert float(out.mask_prob.min()) >= 0.0
        assert float(out.mask_prob.max()) <= 1.0
        assert tuple(out.logits.count_logits.shape) == (2, 2)
        assert tuple(out.logits.size_logits.shape) == (2, 3)

    def test_shape_closure_on_other_sizes(self):
        model = tiny_model()
        model.eval()
        for size in (32, 64, 96):
            with torch.no_grad():
                out = model(torch.rand(1, 3, size, size))
            assert tuple(out.mask_prob.shape) == (1, 1, size, size)

    def test_no_label_classifier_variant_emits_no_logits(self):
        model = tiny_model(use_label_attention=False, use_classifiers=False)
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 32, 32))
        assert out.logits is None
        assert tuple(out.mask_prob.shape) == (1, 1, 32, 32)

    def test_all_variants_construct_and_run(self):
        for variant in VARIANT_ORDER:
            cfg = ablation_config(tiny_config(), variant)
            model = TGANet(cfg, embeddings=load_attribute_embeddings(42, cfg.embedding_k))
            model.eval()
            with torch.no_grad():
                out = model(torch.rand(1, 3, 32, 32))
            assert tuple(out.mask_prob.shape) == (1, 1, 32, 32)

    def test_chained_gate_variant_runs(self):
        model = tiny_model(label_gate_chain=True)
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 32, 32))
        assert tuple(out.mask_prob.shape) == (1, 1, 32, 32)

    def test_batch_independence_in_eval_mode(self):
        # float64 so batch-size-dependent kernel accumulation noise cannot
        # mask the per-sample independence being checked.
        model = tiny_model().double()
        model.eval()
        image = torch.rand(1, 3, 32, 32, dtype=torch.float64)
        pair = torch.cat([image, image], dim=0)
        with torch.no_grad():
            single = model(image)
            double = model(pair)
        np.testing.assert_allclose(
            double.mask_prob[0].numpy(), single.mask_prob[0].numpy(), atol=1e-6
        )
        np.testing.assert_allclose(
            double.mask_prob[1].numpy(), single.mask_prob[0].numpy(), atol=1e-6
        )

    def test_forward_is_deterministic(self):
        model = tiny_model()
        model.eval()
        image = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            a = model(image).mask_prob
            b = model(image).mask_prob
        assert torch.allclose(a, b, atol=1e-7)


class TestParameterCount:
    def test_golden_default_count(self):
        assert parameter_count(NetworkConfig()) == GOLDEN_DEFAULT_PARAMETER_COUNT

    def test_within_published_band(self):
        count = parameter_count(NetworkConfig())
        assert abs(count - 19.84e6) / 19.84e6 <= 0.15

    def test_ablation_monotonicity(self):
        base = NetworkConfig()
        counts = {v: parameter_count(ablation_config(base, v)) for v in VARIANT_ORDER}
        assert counts["full"] == GOLDEN_DEFAULT_PARAMETER_COUNT
        for single in ("no-label-classifier", "no-msfa", "no-fem"):
            assert counts["baseline"] < counts[single] < counts["full"]

    def test_wider_fem_has_more_parameters(self):
        base = tiny_config()
        wider = dataclasses.replace(base, fem_width=2 * base.fem_width)
        assert parameter_count(wider) > parameter_count(base)


class TestCheckpoint:
    def test_roundtrip_preserves_outputs(self, tmp_path):
        model = tiny_model()
        model.eval()
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model, epoch=3, best_metric=0.5)
        payload = load_checkpoint(path)
        assert payload["epoch"] == 3
        assert payload["best_metric"] == 0.5
        restored = model_from_checkpoint(payload)
        restored.eval()
        image = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            np.testing.assert_allclose(
                restored(image).mask_prob.numpy(), model(image).mask_prob.numpy(), atol=0
            )

    def test_parameter_names_are_stable(self, tmp_path):
        a = tiny_model()
        torch.manual_seed(99)
        b = tiny_model()
        assert list(a.state_dict()) == list(b.state_dict())

    def test_version_mismatch_rejected(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model)
        payload = torch.load(path, weights_only=True)
        payload["format_version"] = 999
        torch.save(payload, path)
        with pytest.raises(CheckpointVersionMismatch):
            load_checkpoint(path)

    def test_pretrained_flag_does_not_refetch_on_load(self, tmp_path):
        # Reconstruction must come entirely from the stored parameters, even
        # for checkpoints whose config asked for pretrained weights (offline).
        model = tiny_model()
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model)
        payload = torch.load(path, weights_only=True)
        payload["net_config"]["pretrained_backbone"] = True
        restored = model_from_checkpoint(payload)
        assert restored.config.pretrained_backbone is True
        image = torch.rand(1, 3, 32, 32)
        model.eval()
        restored.eval()
        with torch.no_grad():
            assert torch.equal(restored(image).mask_prob, model(image).mask_prob)

    def test_embeddings_travel_with_checkpoint(self, tmp_path):
        embeddings = load_attribute_embeddings(7, 8)
        model = TGANet(tiny_config(), embeddings=embeddings)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model)
        restored = model_from_checkpoint(load_checkpoint(path))
        np.testing.assert_allclose(
            restored.attribute_embeddings.numpy(), model.attribute_embeddings.numpy(), atol=0
        )
        assert float(np.abs(restored.attribute_embeddings.numpy()).sum()) > 0
