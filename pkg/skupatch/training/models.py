"""
训练与评估 - 数据模型
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np


@dataclass
class LoadedInstance:
    sku_id: int
    box: Tuple[int, int, int, int]
    mask: np.ndarray


@dataclass
class LoadedScene:
    """内存中的场景（图像 + 实例掩码）"""

    index: int
    path: str
    split: str
    clutter: str
    image: np.ndarray
    instances: List[LoadedInstance] = field(default_factory=list)

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.image.shape[0]), int(self.image.shape[1])

    @property
    def sku_ids(self) -> List[int]:
        return sorted({inst.sku_id for inst in self.instances})

    def instances_of(self, sku_id: int) -> List[LoadedInstance]:
        return [inst for inst in self.instances if inst.sku_id == sku_id]


@dataclass(frozen=True)
class StepSample:
    """一个训练步的输入：场景、查询 SKU 与所用补丁下标"""

    scene: int
    sku_id: int
    patch_indices: Tuple[int, ...]
    negative: bool


@dataclass
class TrainSummary:
    steps: int
    initial_loss: float
    final_loss: float
    best_loss: float
    last_checkpoint: Path
    best_checkpoint: Optional[Path]
    loss_log: Path

    def as_text(self) -> str:
        return (
            f"steps={self.steps} initial_loss={self.initial_loss:.6f} "
            f"final_loss={self.final_loss:.6f} best_loss={self.best_loss:.6f}\n"
            f"last={self.last_checkpoint}\nbest={self.best_checkpoint}\nlog={self.loss_log}"
        )


@dataclass(frozen=True)
class InferenceDetection:
    index: int
    score: float
    box: Tuple[int, int, int, int]
    mask_file: str

    def as_line(self) -> str:
        x0, y0, x1, y1 = self.box
        return f"{self.index} {self.score:.6f} {x0} {y0} {x1} {y1} {self.mask_file}"


@dataclass
class InferenceResult:
    detections: List[InferenceDetection]
    detections_file: Path
    overlay_file: Optional[Path]
