"""掩码向量编解码与任务头测试"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skupatch.autograd import Tensor
from skupatch.common.errors import ConfigError, DimensionError
from skupatch.model import NUM_CLASSES, DctBasis, MaskCodec, SkuPatchNet, TaskHeads, zigzag_order
from skupatch.nn import ObjectTokens
from skupatch.training.selftest import tiny_config


# ==================== DCT 编解码 ====================

class TestMaskCodec:

    @pytest.mark.parametrize("m", [1, 4, 8, 32])
    def test_basis_is_orthonormal(self, m):
        a = DctBasis(m).matrix
        assert_allclose(a @ a.T, np.eye(m), atol=1e-10)

    def test_empty_mask_encodes_to_zero(self):
        vec = MaskCodec(8, 16).encode(np.zeros((8, 8)))
        assert_array_equal(vec.coefficients, np.zeros(16))
        assert len(vec) == 16 and vec.grid == 8

    def test_full_mask_has_only_dc(self):
        vec = MaskCodec(4, 16).encode(np.ones((4, 4)))
        assert vec.coefficients[0] == pytest.approx(4.0, abs=1e-12)
        assert_allclose(vec.coefficients[1:], 0.0, atol=1e-12)

    def test_round_trip_with_all_coefficients(self, rng):
        codec = MaskCodec(8, 64)
        mask = rng.random((8, 8))
        assert_allclose(codec.decode(codec.encode(mask)), mask, atol=1e-9)

    def test_energy_is_preserved(self, rng):
        mask = rng.random((8, 8))
        vec = MaskCodec(8, 64).encode(mask)
        assert np.sum(vec.coefficients ** 2) == pytest.approx(np.sum(mask ** 2), abs=1e-8)

    def test_linear(self, rng):
        codec = MaskCodec(8, 20)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        combined = codec.encode(2.0 * a - 0.5 * b).coefficients
        assert_allclose(combined, 2.0 * codec.encode(a).coefficients - 0.5 * codec.encode(b).coefficients, atol=1e-12)

    def test_error_shrinks_with_more_coefficients(self, rng):
        for _ in range(100):
            mask = (rng.random((8, 8)) > 0.5).astype(np.float64)
            errors = []
            for n_c in (1, 4, 16, 32, 64):
                codec = MaskCodec(8, n_c)
                errors.append(np.linalg.norm(codec.decode(codec.encode(mask)) - mask))
            assert all(later <= earlier + 1e-12 for earlier, later in zip(errors, errors[1:]))

    def test_raster_round_trip_at_grid_size(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:11, 5:14] = True
        codec = MaskCodec(16, 256)
        assert_array_equal(codec.decode_raster(codec.encode_raster(mask), (16, 16)), mask)

    def test_decoded_zero_vector_is_empty(self):
        codec = MaskCodec(8, 10)
        assert not codec.decode_raster(np.zeros(10), (20, 12)).any()

    def test_wrong_mask_size(self):
        with pytest.raises(DimensionError):
            MaskCodec(8, 16).encode(np.zeros((8, 9)))

    def test_wrong_vector_length(self):
        with pytest.raises(DimensionError):
            MaskCodec(8, 16).decode(np.zeros(15))

    def test_too_many_coefficients(self):
        with pytest.raises(ConfigError):
            MaskCodec(4, 17)


class TestZigzag:

    def test_first_entries(self):
        assert zigzag_order(3).tolist() == [0, 1, 3, 6, 4, 2, 5, 7, 8]

    def test_is_a_permutation(self):
        for m in range(1, 65):
            assert_array_equal(np.sort(zigzag_order(m)), np.arange(m * m))

    def test_low_frequencies_first(self):
        order = zigzag_order(8)
        diagonals = [i // 8 + i % 8 for i in order]
        assert diagonals == sorted(diagonals)


# ==================== 任务头 ====================

class TestTaskHeads:

    def test_output_shapes(self, rng, toy_config):
        heads = TaskHeads(toy_config, rng)
        out = heads(ObjectTokens(Tensor(rng.normal(size=(200, toy_config.dim)))))
        assert out.queries == 200
        assert out.class_logits.shape == (200, NUM_CLASSES)
        assert out.boxes.shape == (200, 4)
        assert out.mask_vectors.shape == (200, toy_config.mask_coeffs)
        assert len(out.to_predictions(toy_config.mask_grid)) == 200

    def test_zero_box_head_centers_boxes(self, rng, toy_config):
        heads = TaskHeads(toy_config, rng)
        for _, p in heads.box_head.named_parameters():
            p.data = np.zeros_like(p.data)
        out = heads(ObjectTokens(Tensor(rng.normal(size=(5, toy_config.dim)))))
        assert_array_equal(out.boxes.data, np.full((5, 4), 0.5))

    def test_heads_are_independent(self, rng, toy_config):
        heads = TaskHeads(toy_config, rng)
        tokens = ObjectTokens(Tensor(rng.normal(size=(6, toy_config.dim))))
        before = heads(tokens)
        for _, p in heads.class_head.named_parameters():
            p.data = p.data + rng.normal(size=p.shape)
        after = heads(tokens)
        assert not np.allclose(before.class_logits.data, after.class_logits.data)
        assert_array_equal(before.boxes.data, after.boxes.data)
        assert_array_equal(before.mask_vectors.data, after.mask_vectors.data)

    def test_boxes_stay_in_unit_square(self, rng, toy_config):
        heads = TaskHeads(toy_config, rng)
        out = heads(ObjectTokens(Tensor(rng.normal(scale=50.0, size=(20, toy_config.dim)))))
        assert ((out.boxes.data >= 0.0) & (out.boxes.data <= 1.0)).all()

    def test_width_mismatch(self, rng, toy_config):
        with pytest.raises(DimensionError):
            TaskHeads(toy_config, rng)(ObjectTokens(Tensor(rng.normal(size=(3, 8)))))


# ==================== 整网 ====================

class TestSkuPatchNet:

    def test_prediction_per_query(self, rng, toy_config):
        net = SkuPatchNet(toy_config, seed=0)
        image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        patches = [rng.integers(0, 256, size=(12, 18, 3), dtype=np.uint8) for _ in range(2)]
        predictions = net.predict(image, patches)
        assert len(predictions) == toy_config.queries
        for p in predictions:
            assert 0.0 <= p.object_score <= 1.0
            assert p.box.shape == (4,)
            assert len(p.mask_vector) == toy_config.mask_coeffs

    def test_same_seed_same_parameters(self, toy_config):
        a = SkuPatchNet(toy_config, seed=5).state_dict()
        b = SkuPatchNet(toy_config, seed=5).state_dict()
        assert a.keys() == b.keys()
        for name in a:
            assert_array_equal(a[name], b[name])

    def test_zero_patches_change_output(self, rng, toy_config):
        net = SkuPatchNet(toy_config, seed=0)
        image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        patch = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        normal = net(image, [patch]).heads.class_logits.data
        zeroed = net(image, [patch], zero_patches=True).heads.class_logits.data
        assert not np.allclose(normal, zeroed)

    def test_aux_outputs_per_decoder_layer(self, rng):
        config = tiny_config(aux_loss=True)
        net = SkuPatchNet(config, seed=0)
        image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        out = net(image, [rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)])
        assert len(out.aux) == config.layers - 1
        assert out.encoded.levels == config.layers

    def test_float32_precision(self, rng):
        net = SkuPatchNet(tiny_config(precision="float32"), seed=0)
        image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        out = net(image, [rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)])
        assert out.heads.class_logits.dtype == np.float32
