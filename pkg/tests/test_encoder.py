"""补丁-图像相关编码器测试"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skupatch.autograd import Tensor, gradcheck, ops
from skupatch.common.errors import ConfigError, DimensionError
from skupatch.model import Encoder, EncoderLayer, merge_grid, pool_patch_pairs
from skupatch.nn import ImageTokens, Linear, ObjectTokens, PatchTokens
from skupatch.training.selftest import tiny_config


def make_inputs(rng, config, patch_tokens=16, requires_grad=False):
    grid = config.token_grid
    d = config.dim
    image = ImageTokens(Tensor(rng.normal(size=(grid * grid, d)), requires_grad=requires_grad), grid=(grid, grid))
    side = int(np.sqrt(patch_tokens))
    patch_grid = (side, side) if side * side == patch_tokens else None
    patch = PatchTokens(Tensor(rng.normal(size=(patch_tokens, d)), requires_grad=requires_grad), grid=patch_grid)
    objects = ObjectTokens(Tensor(rng.normal(scale=0.02, size=(config.queries, d))))
    return image, patch, objects


# ==================== 合并与池化 ====================

class TestMerge:

    def test_merge_matches_pooling_oracle(self, rng):
        merge = Linear(4, 4, rng)
        merge.bias.data = rng.normal(size=4)
        x = rng.normal(size=(4, 4, 4))
        tokens = ImageTokens(Tensor(x.reshape(16, 4)), grid=(4, 4), level=2)
        merged = merge_grid(tokens, merge)

        pooled = np.stack([
            x[2 * r:2 * r + 2, 2 * c:2 * c + 2].reshape(4, 4).mean(axis=0)
            for r in range(2) for c in range(2)
        ])
        assert merged.grid == (2, 2) and merged.level == 3
        assert_allclose(merged.tokens.data, pooled @ merge.weight.data + merge.bias.data, atol=1e-12)

    def test_odd_grid_cannot_merge(self, rng):
        tokens = ImageTokens(Tensor(rng.normal(size=(6, 4))), grid=(3, 2))
        with pytest.raises(ConfigError):
            merge_grid(tokens, Linear(4, 4, rng))

    def test_patch_pairs_are_averaged(self, rng):
        x = rng.normal(size=(4, 3))
        pooled = pool_patch_pairs(PatchTokens(Tensor(x), grid=(2, 2)))
        assert_allclose(pooled.tokens.data, [(x[0] + x[1]) / 2, (x[2] + x[3]) / 2], atol=1e-15)
        assert pooled.grid == (2, 1) and pooled.level == 2

    def test_odd_patch_count_passes_through(self, rng):
        tokens = PatchTokens(Tensor(rng.normal(size=(5, 3))))
        pooled = pool_patch_pairs(tokens)
        assert pooled.tokens is tokens.tokens
        assert pooled.level == 2


# ==================== 单层 ====================

class TestEncoderLayer:

    def test_disabled_guidance_ignores_patch(self, rng):
        config = tiny_config(use_patch_guidance=False)
        layer = EncoderLayer(config, rng, last=True)
        image, patch, objects = make_inputs(rng, config)
        _, other_patch, _ = make_inputs(rng, config)
        out = layer(image, patch, objects)
        assert_array_equal(out.image.tokens.data, layer.image_self_block(image).tokens.data)
        assert_array_equal(out.image.tokens.data, layer(image, other_patch, objects).image.tokens.data)

    def test_guidance_makes_image_depend_on_patch(self, rng, toy_config):
        layer = EncoderLayer(toy_config, rng, last=True)
        image, patch, objects = make_inputs(rng, toy_config)
        _, other_patch, _ = make_inputs(rng, toy_config)
        a = layer(image, patch, objects).image.tokens.data
        b = layer(image, other_patch, objects).image.tokens.data
        assert not np.allclose(a, b)

    def test_intermediate_layer_shrinks(self, rng, toy_config):
        layer = EncoderLayer(toy_config, rng, last=False)
        image, patch, objects = make_inputs(rng, toy_config)
        out = layer(image, patch, objects)
        assert out.image.grid == (8, 8)
        assert out.next_image.grid == (4, 4) and out.next_image.level == 2
        assert out.next_patch.count == 8
        assert out.objects.tokens.shape == (toy_config.queries, toy_config.dim)

    def test_width_mismatch(self, rng, toy_config):
        layer = EncoderLayer(toy_config, rng, last=True)
        image, _, objects = make_inputs(rng, toy_config)
        narrow = PatchTokens(Tensor(rng.normal(size=(16, 8))))
        with pytest.raises(DimensionError):
            layer(image, narrow, objects)

    def test_gradients(self, rng):
        config = tiny_config(dim=8, heads=2, ffn_hidden=16, window=2, queries=3, image_size=16)
        layer = EncoderLayer(config, rng, last=False)
        image, patch, objects = make_inputs(rng, config, patch_tokens=4, requires_grad=True)
        w_image = Tensor(rng.normal(size=(4, 8)))
        w_patch = Tensor(rng.normal(size=(2, 8)))
        w_object = Tensor(rng.normal(size=(3, 8)))

        def loss():
            out = layer(image, patch, objects)
            return ops.add(
                ops.add(
                    ops.sum(ops.multiply(out.next_image.tokens, w_image)),
                    ops.sum(ops.multiply(out.next_patch.tokens, w_patch)),
                ),
                ops.sum(ops.multiply(out.objects.tokens, w_object)),
            )

        inputs = [image.tokens, patch.tokens, layer.merge.weight, layer.patch_to_image.projections.key.weight]
        report = gradcheck(loss, inputs, max_entries=12)
        assert report.ok, report.max_error


# ==================== 整个编码器 ====================

class TestEncoder:

    def test_tiny_pyramid(self, rng, toy_config):
        encoder = Encoder(toy_config, rng)
        out = encoder(*make_inputs(rng, toy_config))
        assert out.levels == 2
        assert [p.grid for p in out.pyramid] == [(8, 8), (4, 4)]
        assert [p.level for p in out.pyramid] == [1, 2]
        assert [p.count for p in out.patches] == [16, 8]
        assert out.objects.tokens.shape == (toy_config.queries, toy_config.dim)

    def test_four_level_pyramid(self, rng):
        config = tiny_config(dim=8, heads=2, ffn_hidden=16, queries=4, image_size=64, layers=4)
        out = Encoder(config, rng)(*make_inputs(rng, config))
        assert [p.grid for p in out.pyramid] == [(16, 16), (8, 8), (4, 4), (2, 2)]
        assert [p.count for p in out.patches] == [16, 8, 4, 2]
        assert all(t.width == 8 for t in out.pyramid)

    def test_grid_cannot_be_halved_enough(self, rng):
        with pytest.raises(ConfigError):
            Encoder(tiny_config(layers=5), rng)

    def test_different_patches_give_different_pyramids(self, rng, toy_config):
        encoder = Encoder(toy_config, rng)
        image, _, objects = make_inputs(rng, toy_config)
        finest = set()
        for _ in range(10):
            _, patch, _ = make_inputs(rng, toy_config)
            finest.add(encoder(image, patch, objects).pyramid[0].tokens.data.tobytes())
        assert len(finest) == 10

    def test_deterministic_for_seed(self, toy_config):
        inputs = make_inputs(np.random.default_rng(7), toy_config)
        a = Encoder(toy_config, np.random.default_rng(3))(*inputs)
        b = Encoder(toy_config, np.random.default_rng(3))(*inputs)
        for x, y in zip(a.pyramid, b.pyramid):
            assert_array_equal(x.tokens.data, y.tokens.data)
        assert_array_equal(a.objects.tokens.data, b.objects.tokens.data)
