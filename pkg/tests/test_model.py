"""
Tests for the segmentation network.
"""

import numpy as np
import pytest

from anchordiff.core import ops
from anchordiff.core.model import (
    AdNetParams, FrameEmbedding, ModelConfig, Mode, Variant, build_model, parse_variant
)
from anchordiff.core.tensor import Tensor
from anchordiff.exceptions import ConfigurationError, ShapeError, ValidationError, ErrorCodes


def embedding(matrix, h, w):
    return FrameEmbedding(Tensor(np.asarray(matrix, dtype=np.float64)), h, w)


class TestModelConfig:
    """Test suite for ModelConfig."""

    def test_defaults(self):
        """Test default architecture values."""
        config = ModelConfig()
        assert config.variant is Variant.ADNET
        assert config.stride == 8
        assert config.branches == ("skip", "diffusion", "intra")

    def test_variant_from_string(self):
        """Test string variants are accepted."""
        assert ModelConfig(variant="anchor-diffusion").variant is Variant.ANCHOR_DIFFUSION

    def test_unknown_variant(self):
        """Test an unknown variant raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            parse_variant("transformer")

    @pytest.mark.parametrize("kwargs", [
        {"embed_dim": 0},
        {"encoder_kernel": 2},
        {"dropout_rate": 1.0},
        {"leaky_slope": -0.1},
        {"hidden_channels": (4, 0)},
    ])
    def test_invalid_values(self, kwargs):
        """Test invalid settings are rejected."""
        with pytest.raises(ConfigurationError):
            ModelConfig(**kwargs)

    def test_fusion_width_per_variant(self):
        """Test the fusion input grows with the number of branches."""
        widths = {v: ModelConfig(embed_dim=4, variant=v).layer_shapes()["fusion.weight"][1] for v in Variant}
        assert widths[Variant.BASELINE] == 4
        assert widths[Variant.INTRA] == widths[Variant.ANCHOR] == widths[Variant.ANCHOR_DIFFUSION] == 8
        assert widths[Variant.ADNET] == 12


class TestParams:
    """Test suite for AdNetParams."""

    def test_initialize_is_seeded(self, tiny_config):
        """Test the same seed gives the same weights."""
        a = AdNetParams.initialize(tiny_config)
        b = AdNetParams.initialize(tiny_config)
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_biases_start_at_zero(self, tiny_config):
        """Test bias tensors are zero-initialised."""
        params = AdNetParams.initialize(tiny_config)
        for name, tensor in params.items():
            if name.endswith(".bias"):
                assert not tensor.data.any()

    def test_shape_checked_on_assignment(self, tiny_config):
        """Test replacing a parameter with a wrong shape raises ShapeError."""
        params = AdNetParams.initialize(tiny_config)
        with pytest.raises(ShapeError):
            params["fusion.bias"] = Tensor(np.zeros(3))
        with pytest.raises(ValidationError):
            params["missing"] = Tensor(np.zeros(3))

    def test_copy_is_independent(self, tiny_config):
        """Test copies do not share arrays."""
        params = AdNetParams.initialize(tiny_config)
        clone = params.copy()
        clone["classifier.bias"].data[0] = 5.0
        assert params["classifier.bias"].data[0] == 0.0


class TestTransitionMatrix:
    """Properties of the anchor-to-current transition matrix."""

    def test_rows_sum_to_one(self, tiny_model, rng):
        """Test rows of P sum to 1."""
        x0 = embedding(rng.normal(size=(12, 4)), 3, 4)
        xt = embedding(rng.normal(size=(12, 4)), 3, 4)
        p = tiny_model.transition_matrix(x0, xt)
        np.testing.assert_allclose(p.row_sums(), 1.0, atol=1e-9)

    def test_uniform_embeddings(self, tiny_model):
        """Test identical pixel embeddings give an exactly uniform P."""
        x = embedding(np.tile([0.3, -1.2, 0.7, 2.0], (6, 1)), 2, 3)
        p = tiny_model.transition_matrix(x, x)
        assert np.all(p.matrix.data == 1.0 / 6.0)

    def test_two_pixel_closed_form(self):
        """Test the 2-pixel, 1-channel case against the logistic function."""
        net = build_model(ModelConfig(embed_dim=1, fusion_dim=2, hidden_channels=(2,), dropout_rate=0.0))
        x = embedding([[1.0], [0.0]], 1, 2)
        p = net.transition_matrix(x, x).matrix.data
        assert p[0, 0] == pytest.approx(0.73105858, abs=1e-8)
        assert p[0, 1] == pytest.approx(1 - 0.73105858, abs=1e-8)
        np.testing.assert_allclose(p[1], [0.5, 0.5], atol=1e-12)

    def test_diffusion_is_convex(self, tiny_model, rng):
        """Test every diffused embedding lies within the column range of Xt."""
        xt = embedding(rng.normal(size=(16, 4)), 4, 4)
        x0 = embedding(rng.normal(size=(16, 4)), 4, 4)
        out = tiny_model.anchor_diffuse(tiny_model.transition_matrix(x0, xt), xt).matrix.data
        lo, hi = xt.matrix.data.min(axis=0), xt.matrix.data.max(axis=0)
        assert np.all(out >= lo - 1e-12)
        assert np.all(out <= hi + 1e-12)

    def test_anchor_permutation_permutes_output(self, tiny_model, rng):
        """Test permuting anchor pixels permutes the diffused rows the same way."""
        x0 = rng.normal(size=(9, 4))
        xt = embedding(rng.normal(size=(9, 4)), 3, 3)
        perm = rng.permutation(9)
        out = tiny_model.anchor_diffuse(tiny_model.transition_matrix(embedding(x0, 3, 3), xt), xt).matrix.data
        permuted = tiny_model.anchor_diffuse(
            tiny_model.transition_matrix(embedding(x0[perm], 3, 3), xt), xt).matrix.data
        np.testing.assert_allclose(permuted, out[perm], atol=1e-12)

    def test_intra_frame_of_constant_embedding(self, tiny_model):
        """Test self-attention over identical pixels returns the same pixels."""
        x = embedding(np.tile([0.5, -0.25, 1.0, 0.0], (6, 1)), 2, 3)
        out = tiny_model.intra_frame(x)
        assert (out.h, out.w) == (2, 3)
        np.testing.assert_allclose(out.matrix.data, x.matrix.data, atol=1e-12)

    def test_intra_frame_is_convex(self, tiny_model, rng):
        """Test intra-frame outputs stay within the column range of the frame's own embedding."""
        xt = embedding(rng.normal(size=(12, 4)), 3, 4)
        out = tiny_model.intra_frame(xt).matrix.data
        assert np.all(out >= xt.matrix.data.min(axis=0) - 1e-12)
        assert np.all(out <= xt.matrix.data.max(axis=0) + 1e-12)

    def test_size_mismatch(self, tiny_model, rng):
        """Test embeddings of different sizes raise ShapeError."""
        with pytest.raises(ShapeError):
            tiny_model.transition_matrix(embedding(rng.normal(size=(4, 4)), 2, 2),
                                         embedding(rng.normal(size=(6, 4)), 2, 3))


class TestForward:
    """Test suite for the full network."""

    def test_encode_shape(self, tiny_model, rng):
        """Test embeddings live on the stride-reduced grid."""
        emb = tiny_model.encode(rng.random((3, 16, 12)))
        assert (emb.h, emb.w, emb.c) == (8, 6, 4)

    def test_forward_is_probability_map(self, tiny_model, rng):
        """Test forward returns an h x w map in (0, 1)."""
        out = tiny_model.forward(rng.random((3, 16, 16)), rng.random((3, 16, 16))).data
        assert out.shape == (8, 8)
        assert np.all((out > 0) & (out < 1))

    def test_forward_is_sigmoid_of_logits(self, tiny_model, rng):
        """Test the heatmap is the sigmoid of the logits the trainer optimises."""
        anchor, current = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        logits = tiny_model.forward_logits(anchor, current).data
        np.testing.assert_allclose(tiny_model.forward(anchor, current).data, 1.0 / (1.0 + np.exp(-logits)),
                                   atol=1e-12)

    def test_encode_ignores_global_brightness(self, tiny_model, rng):
        """Test a per-channel gain and offset on the frame barely moves the embedding."""
        frame = rng.random((3, 16, 16))
        gain, offset = np.array([0.5, 0.8, 0.6])[:, None, None], np.array([0.2, 0.05, 0.1])[:, None, None]
        plain = tiny_model.encode(frame).matrix.data
        shifted = tiny_model.encode(gain * frame + offset).matrix.data
        np.testing.assert_allclose(shifted, plain, atol=1e-3 * np.abs(plain).max())

    def test_fuse_and_classify(self, tiny_model, rng):
        """Test fusion of three branches gives an h x w probability map."""
        xt = embedding(rng.normal(size=(12, 4)), 3, 4)
        out = tiny_model.fuse_and_classify([xt, xt, xt]).data
        assert out.shape == (3, 4)
        assert np.all((out > 0) & (out < 1))

    def test_fuse_rejects_mismatched_branches(self, tiny_model, rng):
        """Test branches on different grids raise ShapeError."""
        a = embedding(rng.normal(size=(12, 4)), 3, 4)
        b = embedding(rng.normal(size=(12, 4)), 4, 3)
        with pytest.raises(ShapeError):
            tiny_model.fuse_and_classify([a, b, a])

    def test_stride_indivisible(self, tiny_model, rng):
        """Test frames the stride does not divide raise ShapeError."""
        with pytest.raises(ShapeError) as exc:
            tiny_model.encode(rng.random((3, 15, 16)))
        assert exc.value.error_code == ErrorCodes.STRIDE_INDIVISIBLE
        assert "pad" in str(exc.value)

    def test_frame_size_mismatch(self, tiny_model, rng):
        """Test anchor and current must match in size."""
        with pytest.raises(ShapeError):
            tiny_model.forward(rng.random((3, 16, 16)), rng.random((3, 8, 16)))

    def test_baseline_ignores_anchor(self, tiny_config, rng):
        """Test the baseline variant does not look at the anchor frame."""
        net = build_model(ModelConfig(**{**tiny_config.__dict__, "variant": Variant.BASELINE}))
        current = rng.random((3, 16, 16))
        a = net.forward(rng.random((3, 16, 16)), current).data
        b = net.forward(rng.random((3, 16, 16)), current).data
        np.testing.assert_array_equal(a, b)

    def test_anchor_diffusion_uses_anchor(self, tiny_model, rng):
        """Test the full network output depends on the anchor."""
        current = rng.random((3, 16, 16))
        a = tiny_model.forward(rng.random((3, 16, 16)), current).data
        b = tiny_model.forward(rng.random((3, 16, 16)), current).data
        assert not np.array_equal(a, b)

    def test_precomputed_anchor_embedding(self, tiny_model, rng):
        """Test passing the anchor embedding gives the same result."""
        anchor, current = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        direct = tiny_model.forward(anchor, current).data
        cached = tiny_model.forward(anchor, current, anchor_embedding=tiny_model.encode(anchor)).data
        np.testing.assert_array_equal(direct, cached)

    def test_train_mode_needs_rng(self, rng):
        """Test training with dropout but no generator raises ConfigurationError."""
        net = build_model(ModelConfig(embed_dim=4, fusion_dim=8, hidden_channels=(4,), dropout_rate=0.5))
        frame = rng.random((3, 8, 8))
        with pytest.raises(ConfigurationError):
            net.forward(frame, frame, mode=Mode.TRAIN)
        out = net.forward(frame, frame, mode="train", rng=np.random.default_rng(0))
        assert out.shape == (4, 4)

    def test_eval_mode_is_deterministic(self, rng):
        """Test eval mode ignores dropout."""
        net = build_model(ModelConfig(embed_dim=4, fusion_dim=8, hidden_channels=(4,), dropout_rate=0.5))
        frame = rng.random((3, 8, 8))
        np.testing.assert_array_equal(net.forward(frame, frame).data, net.forward(frame, frame).data)

    def test_pointwise_encoder_is_permutation_equivariant(self, rng):
        """Test the fused embedding permutes with the pixels for a 1x1, stride-1 encoder."""
        net = build_model(ModelConfig(embed_dim=3, fusion_dim=4, hidden_channels=(3,), encoder_kernel=1,
                                      downsample=False, dropout_rate=0.0))
        anchor, current = rng.random((3, 4, 4)), rng.random((3, 4, 4))
        perm = rng.permutation(16)

        def shuffle(frame):
            return frame.reshape(3, 16)[:, perm].reshape(3, 4, 4)

        fused = net.pre_classifier(net.branch_embeddings(net.encode(anchor), net.encode(current))).data
        fused_perm = net.pre_classifier(
            net.branch_embeddings(net.encode(shuffle(anchor)), net.encode(shuffle(current)))).data
        np.testing.assert_allclose(fused_perm, fused[perm], atol=1e-12)

    def test_correspondence_map(self, tiny_model, rng):
        """Test the correspondence map is a distribution over anchor pixels."""
        cmap = tiny_model.correspondence_map(rng.random((3, 16, 16)), rng.random((3, 16, 16)), (2, 5))
        assert cmap.shape == (8, 8)
        assert cmap.sum() == pytest.approx(1.0)
        with pytest.raises(ValidationError):
            tiny_model.correspondence_map(rng.random((3, 16, 16)), rng.random((3, 16, 16)), (8, 0))

    def test_get_info(self, tiny_model):
        """Test model info reports variant and parameter count."""
        info = tiny_model.get_info()
        assert info["variant"] == "adnet"
        assert info["stride"] == 2
        assert info["num_parameters"] == tiny_model.params.num_parameters

    def test_gradient_reaches_every_parameter(self, tiny_model, rng):
        """Test a loss backward pass populates all parameter gradients."""
        out = tiny_model.forward(rng.random((3, 16, 16)), rng.random((3, 16, 16)))
        ops.binary_cross_entropy(out, (rng.random((8, 8)) > 0.5).astype(float)).backward()
        for name, tensor in tiny_model.params.items():
            assert tensor.grad is not None, name
