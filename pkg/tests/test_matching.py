"""匹配与损失测试：Hungarian、GIoU、匹配代价、集合损失"""

from itertools import permutations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import linear_sum_assignment

from skupatch.autograd import Tensor
from skupatch.autograd.gradcheck import numerical_gradient, relative_error
from skupatch.common.errors import ConfigError, InputError
from skupatch.matching import (
    LossWeights,
    SetCriterion,
    TargetSet,
    build_targets,
    cost_matrix,
    cxcywh_to_xyxy,
    giou,
    giou_tensor,
    hungarian,
    match_cost,
    match_predictions,
    total_loss,
    xyxy_to_cxcywh,
)
from skupatch.model import HeadOutputs, MaskCodec, Prediction, SkuPatchNet
from skupatch.model.uqr import MaskVector
from skupatch.training.selftest import brute_force_cost, tiny_config


def random_heads(rng, queries, coeffs=4):
    return HeadOutputs(
        class_logits=Tensor(rng.normal(size=(queries, 2)), requires_grad=True),
        boxes=Tensor(rng.uniform(0.2, 0.6, size=(queries, 4)), requires_grad=True),
        mask_vectors=Tensor(rng.normal(size=(queries, coeffs)), requires_grad=True),
    )


def random_targets(rng, count, coeffs=4):
    boxes = np.column_stack([
        rng.uniform(0.3, 0.7, size=count),
        rng.uniform(0.3, 0.7, size=count),
        rng.uniform(0.1, 0.4, size=count),
        rng.uniform(0.1, 0.4, size=count),
    ])
    return TargetSet(boxes, rng.normal(size=(count, coeffs)))


def lexicographic_optimum(cost):
    """穷举所有 min(K, M) 对的指派；返回最优者中按行字典序最小的列元组，不匹配记为 M"""
    rows, cols = cost.shape
    candidates = []
    if rows <= cols:
        for perm in permutations(range(cols), rows):
            candidates.append((sum(cost[r, c] for r, c in enumerate(perm)), perm))
    else:
        for owners in permutations(range(rows), cols):
            per_row = [cols] * rows
            for c, r in enumerate(owners):
                per_row[r] = c
            candidates.append((sum(cost[r, c] for c, r in enumerate(owners)), tuple(per_row)))
    return min(candidates)[1]


# ==================== Hungarian ====================

class TestHungarian:

    def test_diagonal_optimum(self):
        cost = np.ones((4, 4)) - np.eye(4)
        result = hungarian(cost)
        assert result.pairs == [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert result.total_cost(cost) == 0.0

    def test_two_by_two(self):
        cost = np.array([[1.0, 2.0], [2.0, 4.0]])
        result = hungarian(cost)
        assert set(result.pairs) == {(0, 1), (1, 0)}
        assert result.total_cost(cost) == 4.0

    @pytest.mark.parametrize("shape", [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 6), (7, 7), (6, 4), (4, 6), (1, 5)])
    def test_matches_brute_force(self, rng, shape):
        for _ in range(5):
            cost = rng.integers(0, 10, size=shape).astype(np.float64)
            result = hungarian(cost)
            assert len(result.pairs) == min(shape)
            assert result.total_cost(cost) == pytest.approx(brute_force_cost(cost))

    @pytest.mark.parametrize("shape", [(30, 20), (20, 30), (25, 25)])
    def test_matches_scipy(self, rng, shape):
        cost = rng.normal(size=shape)
        rows, cols = linear_sum_assignment(cost)
        assert hungarian(cost).total_cost(cost) == pytest.approx(cost[rows, cols].sum(), abs=1e-9)

    def test_one_to_one(self, rng):
        result = hungarian(rng.normal(size=(8, 3)))
        preds = [p for p, _ in result.pairs]
        truths = [g for _, g in result.pairs]
        assert len(set(preds)) == 3 and sorted(truths) == [0, 1, 2]
        assert preds == sorted(preds)
        assert sorted(result.unmatched + preds) == list(range(8))

    def test_ties_take_lowest_columns(self):
        assert hungarian(np.zeros((3, 3))).pairs == [(0, 0), (1, 1), (2, 2)]
        cost = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        assert hungarian(cost).pairs == [(0, 1), (1, 2), (2, 0)]

    def test_ties_prefer_matching_earlier_predictions(self):
        result = hungarian(np.zeros((4, 2)))
        assert result.pairs == [(0, 0), (1, 1)]
        assert result.unmatched == [2, 3]

    @pytest.mark.parametrize("shape", [(2, 2), (3, 3), (3, 5), (4, 4), (4, 5), (5, 3), (6, 2)])
    def test_ties_match_lexicographic_brute_force(self, rng, shape):
        rows, cols = shape
        for _ in range(60):
            cost = rng.integers(0, 2, size=shape).astype(np.float64)
            result = hungarian(cost)
            got = [cols] * rows
            for r, c in result.pairs:
                got[r] = c
            assert tuple(got) == lexicographic_optimum(cost)

    def test_empty_targets(self):
        result = hungarian(np.zeros((4, 0)))
        assert result.pairs == [] and result.unmatched == [0, 1, 2, 3]

    def test_nan_rejected(self):
        cost = np.ones((2, 2))
        cost[0, 1] = np.nan
        with pytest.raises(InputError):
            hungarian(cost)


# ==================== 框 ====================

class TestBoxes:

    def test_touching_boxes(self):
        assert giou([0, 0, 1, 1], [1, 0, 2, 1]) == pytest.approx(0.0)

    def test_separated_boxes(self):
        assert giou([0, 0, 1, 1], [1.5, 0, 2.5, 1]) == pytest.approx(-0.2)

    def test_identical_boxes(self):
        assert giou([0.1, 0.2, 0.5, 0.9], [0.1, 0.2, 0.5, 0.9]) == pytest.approx(1.0)

    def test_symmetric_and_translation_invariant(self, rng):
        for _ in range(20):
            a = np.sort(rng.random((2, 2)), axis=0).T.reshape(-1)[[0, 2, 1, 3]]
            b = np.sort(rng.random((2, 2)), axis=0).T.reshape(-1)[[0, 2, 1, 3]]
            shift = np.tile(rng.normal(size=2), 2)
            assert giou(a, b) == pytest.approx(giou(b, a))
            assert giou(a + shift, b + shift) == pytest.approx(giou(a, b))
            assert -1.0 <= giou(a, b) <= 1.0

    def test_box_formats(self):
        xyxy = np.array([[0.1, 0.2, 0.5, 0.6]])
        cxcywh = xyxy_to_cxcywh(xyxy)
        assert_allclose(cxcywh, [[0.3, 0.4, 0.4, 0.4]])
        assert_allclose(cxcywh_to_xyxy(cxcywh), xyxy)

    def test_tensor_version_agrees(self, rng):
        pred = np.column_stack([rng.uniform(0.3, 0.7, (6, 2)), rng.uniform(0.1, 0.4, (6, 2))])
        target = cxcywh_to_xyxy(np.column_stack([rng.uniform(0.3, 0.7, (6, 2)), rng.uniform(0.1, 0.4, (6, 2))]))
        expected = giou(cxcywh_to_xyxy(pred), target)
        assert_allclose(giou_tensor(Tensor(pred), target).data, expected, atol=1e-7)


# ==================== 匹配代价 ====================

class TestMatchCost:

    def test_confident_exact_prediction(self):
        box = np.array([0.5, 0.5, 0.2, 0.3])
        pred = Prediction(np.array([50.0, -50.0]), box.copy(), MaskVector(np.zeros(4), 8))
        assert match_cost(pred, box, LossWeights()) == pytest.approx(-2.0)

    def test_matrix_agrees_with_single_cost(self, rng):
        heads = random_heads(rng, 5)
        targets = random_targets(rng, 3)
        weights = LossWeights()
        matrix = cost_matrix(heads, targets, weights)
        predictions = heads.to_predictions(8)
        for k in range(5):
            for m in range(3):
                assert matrix[k, m] == pytest.approx(match_cost(predictions[k], targets.boxes[m], weights))

    def test_more_targets_than_queries(self, rng):
        with pytest.raises(ConfigError):
            match_predictions(random_heads(rng, 2), random_targets(rng, 3), LossWeights())

    def test_no_targets_leaves_all_unmatched(self, rng):
        result = match_predictions(random_heads(rng, 4), TargetSet.empty(4), LossWeights())
        assert result.pairs == [] and result.unmatched == [0, 1, 2, 3]


# ==================== 损失 ====================

class TestSetLoss:

    def test_empty_scene_has_only_class_term(self, rng):
        heads = random_heads(rng, 4)
        targets = TargetSet.empty(4)
        weights = LossWeights()
        loss = total_loss(heads, targets, match_predictions(heads, targets, weights), weights)
        assert loss.box_l1.item() == 0.0 and loss.mask_l1.item() == 0.0 and loss.box_giou.item() == 0.0
        assert loss.total.item() == pytest.approx(weights.cls * loss.class_ce.item())

    def test_perfect_match_has_no_box_or_mask_loss(self, rng):
        targets = random_targets(rng, 2)
        heads = HeadOutputs(
            class_logits=Tensor(np.array([[5.0, -5.0], [5.0, -5.0], [-5.0, 5.0]])),
            boxes=Tensor(np.vstack([targets.boxes, [[0.1, 0.1, 0.05, 0.05]]])),
            mask_vectors=Tensor(np.vstack([targets.masks, np.zeros((1, 4))])),
        )
        weights = LossWeights()
        match = match_predictions(heads, targets, weights)
        assert match.pairs == [(0, 0), (1, 1)] and match.unmatched == [2]
        loss = total_loss(heads, targets, match, weights)
        assert loss.box_l1.item() == pytest.approx(0.0, abs=1e-12)
        assert loss.mask_l1.item() == pytest.approx(0.0, abs=1e-12)
        assert loss.box_giou.item() == pytest.approx(0.0, abs=1e-6)

    def test_build_targets_normalizes_boxes(self):
        codec = MaskCodec(8, 8)
        mask = np.zeros((20, 40), dtype=bool)
        mask[5:15, 10:30] = True
        targets = build_targets([[10, 5, 30, 15]], [mask], (20, 40), codec)
        assert targets.count == 1
        assert_allclose(targets.boxes, [[0.5, 0.5, 0.5, 0.5]])
        assert targets.masks.shape == (1, 8)

    def test_full_model_gradients(self, rng):
        config = tiny_config(
            dim=8, heads=2, queries=2, window=2, ffn_hidden=16, head_layers=2,
            image_size=16, patch_size=8, mask_grid=8, mask_coeffs=8,
        )
        net = SkuPatchNet(config, seed=0)
        image = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        patch = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:12, 2:10] = True
        targets = build_targets([[2, 3, 10, 12]], [mask], (16, 16), MaskCodec(8, 8))
        criterion = SetCriterion(config)

        def loss():
            return criterion(net(image, [patch]), targets)[0].objective

        params = [p for _, p in net.named_parameters()]
        for p in params:
            p.grad = None
        loss().backward()

        analytic, numeric = [], []
        for p in params:
            entries = np.sort(rng.choice(p.size, size=min(2, p.size), replace=False))
            grad = np.zeros(p.shape) if p.grad is None else p.grad
            analytic.append(grad.reshape(-1)[entries])
            numeric.append(numerical_gradient(loss, p, entries=entries).reshape(-1)[entries])
        assert relative_error(np.concatenate(analytic), np.concatenate(numeric)) < 1e-4
