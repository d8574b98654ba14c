"""
集合匹配代价与训练损失

流程:
    1. build_targets      - 场景实例 → 归一化框 + 掩码向量
    2. cost_matrix        - K×M 匹配代价（分类 + L1 + GIoU）
    3. hungarian          - 一对一指派
    4. total_loss         - 匹配对: CE(目标) + Smooth-L1(框) + (1−GIoU) + Smooth-L1(掩码向量)
                            未匹配: CE(no-object)

Example:
    >>> criterion = SetCriterion(config.model)
    >>> breakdown, match = criterion(output, targets)
    >>> breakdown.objective.backward()
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..autograd import Tensor, ops
from ..common.config import ModelConfig
from ..common.errors import ConfigError, DimensionError
from ..model.heads import NO_OBJECT_CLASS, NUM_CLASSES, OBJECT_CLASS, HeadOutputs, Prediction
from ..model.network import NetworkOutput
from ..model.uqr import MaskCodec
from .boxes import cxcywh_to_xyxy, giou, giou_tensor, pairwise_giou, xyxy_to_cxcywh
from .hungarian import MatchResult, hungarian


@dataclass(frozen=True)
class LossWeights:
    cls: float = 2.0
    l1: float = 5.0
    giou: float = 2.0
    mask: float = 1.0

    @classmethod
    def from_config(cls, config: ModelConfig) -> "LossWeights":
        return cls(config.weight_class, config.weight_l1, config.weight_giou, config.weight_mask)

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.cls * factor, self.l1 * factor, self.giou * factor, self.mask * factor)


@dataclass(frozen=True)
class TargetSet:
    """
    一张场景图对某个查询 SKU 的真值

    Attributes:
        boxes: (M, 4) 归一化 cxcywh
        masks: (M, n_c) 掩码向量
    """

    boxes: np.ndarray
    masks: np.ndarray

    def __post_init__(self) -> None:
        if self.boxes.ndim != 2 or self.boxes.shape[1] != 4:
            raise DimensionError(f"target boxes must be (M, 4), got {self.boxes.shape}")
        if self.masks.shape[0] != self.boxes.shape[0]:
            raise DimensionError("target boxes and masks disagree on instance count")

    @property
    def count(self) -> int:
        return int(self.boxes.shape[0])

    @property
    def xyxy(self) -> np.ndarray:
        return cxcywh_to_xyxy(self.boxes)

    @classmethod
    def empty(cls, coeffs: int) -> "TargetSet":
        return cls(np.zeros((0, 4)), np.zeros((0, coeffs)))


def build_targets(
    boxes: Sequence[Sequence[float]],
    masks: Sequence[np.ndarray],
    image_shape: Tuple[int, int],
    codec: MaskCodec,
) -> TargetSet:
    """
    Args:
        boxes: 像素 xyxy 框（x1/y1 不含）
        masks: 与图像同尺寸的二值掩码
        image_shape: (H, W)
    """
    if len(boxes) != len(masks):
        raise DimensionError(f"{len(boxes)} boxes vs {len(masks)} masks")
    if not boxes:
        return TargetSet.empty(codec.coeffs)
    h, w = image_shape
    xyxy = np.asarray(boxes, dtype=np.float64) / np.array([w, h, w, h], dtype=np.float64)
    vectors = np.stack([codec.encode_raster(m).coefficients for m in masks])
    return TargetSet(xyxy_to_cxcywh(xyxy), vectors)


# ==================== 匹配代价 ====================

def match_cost(prediction: Prediction, target_box: np.ndarray, weights: LossWeights) -> float:
    """λ_cls·(−p_object) + λ_L1·‖b−b_gt‖₁ + λ_giou·(1−GIoU)，框为归一化 cxcywh"""
    target_box = np.asarray(target_box, dtype=np.float64)
    l1 = float(np.abs(prediction.box - target_box).sum())
    g = float(giou(cxcywh_to_xyxy(prediction.box), cxcywh_to_xyxy(target_box)))
    return -weights.cls * prediction.object_score + weights.l1 * l1 + weights.giou * (1.0 - g)


def cost_matrix(heads: HeadOutputs, targets: TargetSet, weights: LossWeights) -> np.ndarray:
    """match_cost 的向量化版本，(K, M)"""
    scores = heads.object_scores()
    boxes = heads.boxes.data.astype(np.float64)
    l1 = np.abs(boxes[:, None, :] - targets.boxes[None, :, :]).sum(axis=-1)
    g = pairwise_giou(cxcywh_to_xyxy(boxes), targets.xyxy)
    return -weights.cls * scores[:, None] + weights.l1 * l1 + weights.giou * (1.0 - g)


def match_predictions(heads: HeadOutputs, targets: TargetSet, weights: LossWeights) -> MatchResult:
    """
    Raises:
        ConfigError: 真值数多于查询数 K
    """
    if targets.count > heads.queries:
        raise ConfigError(
            f"{targets.count} ground-truth instances exceed {heads.queries} object queries; raise `queries`"
        )
    if targets.count == 0:
        return MatchResult(pairs=[], unmatched=list(range(heads.queries)))
    return hungarian(cost_matrix(heads, targets, weights))


# ==================== 损失 ====================

@dataclass
class LossBreakdown:
    """
    各损失分量（标量张量）

    total = λ_cls·class_ce + λ_L1·box_l1 + λ_giou·box_giou + λ_mask·mask_l1
    aux 为各中间解码层的分量，objective = total + Σ aux.total
    """

    total: Tensor
    class_ce: Tensor
    box_l1: Tensor
    box_giou: Tensor
    mask_l1: Tensor
    weights: LossWeights
    aux: List["LossBreakdown"] = field(default_factory=list)

    @property
    def objective(self) -> Tensor:
        out = self.total
        for item in self.aux:
            out = out + item.total
        return out

    def values(self) -> Dict[str, float]:
        return {
            "total": self.total.item(),
            "class_ce": self.class_ce.item(),
            "box_l1": self.box_l1.item(),
            "box_giou": self.box_giou.item(),
            "mask_l1": self.mask_l1.item(),
        }

    def as_line(self, step: int) -> str:
        parts = [f"step={step}"] + [f"{k}={v:.6f}" for k, v in self.values().items()]
        if self.aux:
            parts.append(f"aux={sum(a.total.item() for a in self.aux):.6f}")
        return " ".join(parts)


def total_loss(
    heads: HeadOutputs,
    targets: TargetSet,
    match: MatchResult,
    weights: LossWeights,
    no_object_weight: float = 0.1,
    beta: float = 1.0,
) -> LossBreakdown:
    """匹配对的分类/框/掩码损失与未匹配查询的 no-object 损失，各项取均值"""
    dtype = heads.class_logits.dtype
    labels = np.full(heads.queries, NO_OBJECT_CLASS, dtype=np.int64)
    class_weights = np.ones(NUM_CLASSES)
    class_weights[NO_OBJECT_CLASS] = no_object_weight

    if match.pairs:
        pred_idx = match.prediction_indices
        gt_idx = match.target_indices
        labels[pred_idx] = OBJECT_CLASS
        boxes = heads.boxes[pred_idx]
        box_l1 = ops.smooth_l1(boxes, targets.boxes[gt_idx].astype(dtype), beta).mean()
        box_giou = (1.0 - giou_tensor(boxes, targets.xyxy[gt_idx])).mean()
        masks = heads.mask_vectors[pred_idx]
        mask_l1 = ops.smooth_l1(masks, targets.masks[gt_idx].astype(dtype), beta).mean()
    else:
        box_l1 = Tensor(np.zeros((), dtype=dtype))
        box_giou = Tensor(np.zeros((), dtype=dtype))
        mask_l1 = Tensor(np.zeros((), dtype=dtype))

    class_ce = ops.cross_entropy_with_logits(heads.class_logits, labels, class_weights)
    total = (
        class_ce * weights.cls
        + box_l1 * weights.l1
        + box_giou * weights.giou
        + mask_l1 * weights.mask
    )
    return LossBreakdown(total, class_ce, box_l1, box_giou, mask_l1, weights)


class SetCriterion:
    """匹配 + 损失的组合，支持逐解码层辅助损失"""

    def __init__(self, config: ModelConfig) -> None:
        self.weights = LossWeights.from_config(config)
        self.no_object_weight = config.no_object_weight
        self.beta = config.smooth_l1_beta

    def _single(self, heads: HeadOutputs, targets: TargetSet) -> Tuple[LossBreakdown, MatchResult]:
        match = match_predictions(heads, targets, self.weights)
        return total_loss(heads, targets, match, self.weights, self.no_object_weight, self.beta), match

    def __call__(self, output: NetworkOutput, targets: TargetSet) -> Tuple[LossBreakdown, MatchResult]:
        breakdown, match = self._single(output.heads, targets)
        breakdown.aux = [self._single(aux, targets)[0] for aux in output.aux]
        return breakdown, match
