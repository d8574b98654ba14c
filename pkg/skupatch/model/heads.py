"""
任务头

三个相互独立的多层前馈头作用在每个目标 token 上:
    class  - 2 类 logits（0 = 目标 SKU 实例, 1 = 无目标）
    box    - sigmoid 压缩后的 (cx, cy, w, h)，相对图像尺寸归一化
    mask   - n_c 个掩码 DCT 系数（无界实数）
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List

import numpy as np
from scipy.special import softmax as np_softmax

from ..autograd import Tensor, ops
from ..common.config import ModelConfig
from ..common.errors import DimensionError
from ..nn import Mlp, Module, ObjectTokens
from .uqr import MaskVector

OBJECT_CLASS = 0
NO_OBJECT_CLASS = 1
NUM_CLASSES = 2


@dataclass(frozen=True)
class Prediction:
    """单个查询的预测"""

    class_logits: np.ndarray
    box: np.ndarray
    mask_vector: MaskVector

    @property
    def object_score(self) -> float:
        """目标类别的 softmax 概率"""
        return float(np_softmax(self.class_logits)[OBJECT_CLASS])


@dataclass
class HeadOutputs:
    """K 个查询的批量输出（张量形式，参与求导）"""

    class_logits: Tensor
    boxes: Tensor
    mask_vectors: Tensor

    @property
    def queries(self) -> int:
        return self.class_logits.shape[0]

    def object_scores(self) -> np.ndarray:
        return np_softmax(self.class_logits.data.astype(np.float64), axis=1)[:, OBJECT_CLASS]

    def to_predictions(self, mask_grid: int) -> List[Prediction]:
        logits = self.class_logits.data
        boxes = self.boxes.data
        masks = self.mask_vectors.data
        return [
            Prediction(
                class_logits=logits[i].astype(np.float64),
                box=boxes[i].astype(np.float64),
                mask_vector=MaskVector(masks[i].astype(np.float64), mask_grid),
            )
            for i in range(self.queries)
        ]


class TaskHeads(Module):
    """分类、框、掩码向量三个并行头"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        d, depth = config.dim, config.head_layers
        hidden = [d] * depth
        self.class_head = Mlp(hidden + [NUM_CLASSES], rng, dtype)
        self.box_head = Mlp(hidden + [4], rng, dtype)
        self.mask_head = Mlp(hidden + [config.mask_coeffs], rng, dtype)

    def forward(self, z_object: ObjectTokens) -> HeadOutputs:
        if z_object.width != self.class_head.layers[0].in_features:
            raise DimensionError(f"object tokens width {z_object.width} does not match heads")
        x = z_object.tokens
        return HeadOutputs(
            class_logits=self.class_head(x),
            boxes=ops.sigmoid(self.box_head(x)),
            mask_vectors=self.mask_head(x),
        )
