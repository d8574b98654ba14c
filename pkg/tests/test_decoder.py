"""解码器测试：上采样、金字塔融合、可变形注意力"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skupatch.autograd import Tensor, gradcheck, ops
from skupatch.common.errors import DimensionError
from skupatch.model import (
    Decoder,
    DecoderLayer,
    DeformableAttention,
    Encoder,
    FusionLayer,
    grid_centers,
    pyramid_fuse,
    upsample_2x,
    upsample_matrix,
)
from skupatch.nn import ImageTokens, ObjectTokens, PatchTokens, cross_attention
from skupatch.training.selftest import tiny_config


def grid_tokens(rng, rows, cols, dim=8, level=1, requires_grad=False):
    return ImageTokens(Tensor(rng.normal(size=(rows * cols, dim)), requires_grad=requires_grad), grid=(rows, cols), level=level)


# ==================== 上采样 ====================

class TestUpsample:

    def test_interpolation_weights(self):
        expected = np.array([
            [1.0, 0.0],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.0, 1.0],
        ])
        # 单行网格只沿列插值，两行输出相同
        matrix = upsample_matrix(1, 2)
        assert matrix.shape == (8, 2)
        assert_array_equal(matrix[:4], expected)
        assert_array_equal(matrix[4:], expected)

    @pytest.mark.parametrize("rows,cols", [(1, 1), (2, 3), (4, 4)])
    def test_rows_sum_to_one(self, rows, cols):
        assert_allclose(upsample_matrix(rows, cols).sum(axis=1), 1.0, atol=1e-15)

    def test_constant_map_stays_constant(self):
        tokens = ImageTokens(Tensor(np.full((9, 4), 2.5)), grid=(3, 3), level=2)
        up = upsample_2x(tokens)
        assert up.grid == (6, 6) and up.level == 1
        assert_allclose(up.tokens.data, 2.5, atol=1e-14)


# ==================== 金字塔融合 ====================

class TestPyramidFuse:

    def test_fresh_layers_add_upsampled_levels(self, rng):
        layers = [FusionLayer(4, rng) for _ in range(2)]
        pyramid = [
            ImageTokens(Tensor(np.full((g * g, 4), value)), grid=(g, g), level=i + 1)
            for i, (g, value) in enumerate([(8, 1.0), (4, 2.0), (2, 4.0)])
        ]
        fused = pyramid_fuse(pyramid, layers)
        assert [f.grid for f in fused] == [(8, 8), (4, 4), (2, 2)]
        assert fused[-1] is pyramid[-1]
        assert_allclose(fused[1].tokens.data, 6.0, atol=1e-12)
        assert_allclose(fused[0].tokens.data, 7.0, atol=1e-12)

    def test_coarsest_level_reaches_finest(self, rng):
        layers = [FusionLayer(8, rng) for _ in range(2)]
        pyramid = [grid_tokens(rng, g, g, level=i + 1) for i, g in enumerate([8, 4, 2])]
        before = pyramid_fuse(pyramid, layers)[0].tokens.data
        pyramid[2] = pyramid[2].with_tokens(Tensor(pyramid[2].tokens.data + 1.0))
        after = pyramid_fuse(pyramid, layers)[0].tokens.data
        assert not np.allclose(before, after)

    def test_broken_chain(self, rng):
        pyramid = [grid_tokens(rng, 8, 8), grid_tokens(rng, 3, 3)]
        with pytest.raises(DimensionError):
            pyramid_fuse(pyramid, [FusionLayer(8, rng)])

    def test_layer_count(self, rng):
        pyramid = [grid_tokens(rng, 4, 4), grid_tokens(rng, 2, 2)]
        with pytest.raises(DimensionError):
            pyramid_fuse(pyramid, [])


# ==================== 可变形注意力 ====================

class TestDeformableAttention:

    def test_grid_centers_order(self):
        assert_array_equal(grid_centers(2, 2), [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])

    def test_single_point_takes_that_value(self, rng):
        deform = DeformableAttention(8, 2, 1, rng)
        image = grid_tokens(rng, 4, 4)
        queries = Tensor(rng.normal(size=(3, 8)))
        centers = grid_centers(4, 4)
        locations = np.broadcast_to(centers[5], (3, 2, 1, 2)).copy()
        out, weights = deform(queries, image, locations=locations, return_weights=True)

        proj = deform.attn.projections
        value = image.tokens.data[5] @ proj.value.weight.data + proj.value.bias.data
        expected = value @ deform.attn.output.weight.data + deform.attn.output.bias.data
        assert_array_equal(weights.data, np.ones((2, 3, 1)))
        assert_allclose(out.data, np.repeat(expected[None], 3, axis=0), atol=1e-12)

    def test_weights_sum_to_one(self, rng):
        deform = DeformableAttention(8, 2, 4, rng)
        deform.weights.weight.data = rng.normal(size=deform.weights.weight.shape)
        out, weights = deform(Tensor(rng.normal(size=(5, 8))), grid_tokens(rng, 4, 4), return_weights=True)
        assert out.shape == (5, 8)
        assert weights.shape == (2, 5, 4)
        assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_initial_offsets_spread_along_head_direction(self, rng):
        deform = DeformableAttention(8, 2, 3, rng)
        loc = deform.sampling_locations(Tensor(rng.normal(size=(2, 8))), (4, 4)).data
        for p in range(3):
            assert_allclose(loc[:, 0, p] - loc[:, 0, 0], np.tile([p * 0.5 / 4, 0.0], (2, 1)), atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_all_tokens_sampled_equals_dense(self, seed):
        rng = np.random.default_rng(seed)
        deform = DeformableAttention(8, 2, 4, rng, logits="dot")
        image = grid_tokens(rng, 4, 4)
        queries = ObjectTokens(Tensor(rng.normal(size=(3, 8))))
        locations = np.broadcast_to(grid_centers(4, 4), (3, 2, 16, 2)).copy()
        sparse = deform(queries.tokens, image, locations=locations)
        dense = cross_attention(queries, image, deform.attn).tokens
        assert_allclose(sparse.data, dense.data, atol=1e-8)

    def test_predicted_weights_need_matching_point_count(self, rng):
        deform = DeformableAttention(8, 2, 2, rng)
        locations = np.full((3, 2, 5, 2), 0.5)
        with pytest.raises(DimensionError):
            deform(Tensor(rng.normal(size=(3, 8))), grid_tokens(rng, 4, 4), locations=locations)

    def test_needs_grid(self, rng):
        deform = DeformableAttention(8, 2, 2, rng)
        flat = ImageTokens(Tensor(rng.normal(size=(16, 8))))
        with pytest.raises(DimensionError):
            deform(Tensor(rng.normal(size=(3, 8))), flat)


# ==================== 解码层与解码器 ====================

def small_config(**overrides):
    base = dict(dim=8, heads=2, ffn_hidden=16, window=2, queries=3, image_size=16, sampling_points=2)
    base.update(overrides)
    return tiny_config(**base)


class TestDecoder:

    def encoded(self, rng, config):
        grid = config.token_grid
        image = ImageTokens(Tensor(rng.normal(size=(grid * grid, config.dim))), grid=(grid, grid))
        patch = PatchTokens(Tensor(rng.normal(size=(16, config.dim))), grid=(4, 4))
        objects = ObjectTokens(Tensor(rng.normal(scale=0.02, size=(config.queries, config.dim))))
        return Encoder(config, rng)(image, patch, objects)

    def test_output_shape(self, rng, toy_config):
        decoder = Decoder(toy_config, rng)
        out = decoder(self.encoded(rng, toy_config))
        assert out.tokens.shape == (toy_config.queries, toy_config.dim)

    def test_intermediate_outputs(self, rng, toy_config):
        decoder = Decoder(toy_config, rng)
        encoded = self.encoded(rng, toy_config)
        steps = decoder(encoded, return_intermediate=True)
        assert len(steps) == toy_config.layers
        assert_array_equal(steps[-1].tokens.data, decoder(encoded).tokens.data)

    @pytest.mark.parametrize("overrides", [
        {"use_fuse": False},
        {"use_patch_cross": False},
        {"use_deformable": False},
        {"deformable_logits": "dot"},
    ])
    def test_ablations_run(self, rng, overrides):
        config = tiny_config(**overrides)
        out = Decoder(config, rng)(self.encoded(rng, config))
        assert out.tokens.shape == (config.queries, config.dim)
        assert np.isfinite(out.tokens.data).all()

    def test_level_count_must_match(self, rng, toy_config):
        decoder = Decoder(tiny_config(layers=3), rng)
        with pytest.raises(DimensionError):
            decoder(self.encoded(rng, toy_config))

    def test_layer_gradients(self, rng):
        config = small_config()
        layer = DecoderLayer(config, rng)
        objects = ObjectTokens(Tensor(rng.normal(size=(3, 8)), requires_grad=True))
        image = grid_tokens(rng, 4, 4, requires_grad=True)
        patches = PatchTokens(Tensor(rng.normal(size=(4, 8)), requires_grad=True), grid=(2, 2))
        w = Tensor(rng.normal(size=(3, 8)))

        def loss():
            return ops.sum(ops.multiply(layer(objects, image, patches).tokens, w))

        inputs = [
            objects.tokens,
            image.tokens,
            patches.tokens,
            layer.deformable.reference.weight,
            layer.deformable.offsets.weight,
        ]
        report = gradcheck(loss, inputs, max_entries=12)
        assert report.ok, report.max_error
