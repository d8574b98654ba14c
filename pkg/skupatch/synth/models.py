"""
合成数据 - 数据模型

    SkuAsset          - 一个 SKU 的标准外观（纹理 + 形状掩码）
    SceneInstance     - 场景中的一个可见实例
    Scene             - 合成场景图及其实例
    DatasetManifest   - 数据集清单（划分、场景、补丁）
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Tuple

import numpy as np

Clutter = Literal["easy", "hard"]
Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class SkuAsset:
    """
    Attributes:
        sku_id: SKU 编号
        family: 纹理族（stripes / checker / spots / gradient）
        palette: 调色板颜色
        shape: rect 或 ellipse
        raster: (h, w, 3) uint8，形状外为 0
        mask: (h, w) bool 形状掩码
    """

    sku_id: int
    family: str
    palette: Tuple[Tuple[int, int, int], ...]
    shape: str
    raster: np.ndarray
    mask: np.ndarray

    @property
    def signature(self) -> Tuple[str, Tuple[Tuple[int, int, int], ...]]:
        return self.family, self.palette

    @property
    def size(self) -> Tuple[int, int]:
        """(宽, 高)"""
        return int(self.raster.shape[1]), int(self.raster.shape[0])

    def rgba(self) -> np.ndarray:
        alpha = np.where(self.mask, 255, 0).astype(np.uint8)
        return np.concatenate([self.raster, alpha[..., None]], axis=2)


@dataclass
class SceneInstance:
    sku_id: int
    box: Box
    mask: np.ndarray
    visibility: float


@dataclass
class Scene:
    image: np.ndarray
    instances: List[SceneInstance]
    clutter: Clutter

    @property
    def sku_ids(self) -> List[int]:
        return sorted({inst.sku_id for inst in self.instances})

    def instances_of(self, sku_id: int) -> List[SceneInstance]:
        return [inst for inst in self.instances if inst.sku_id == sku_id]


# ==================== 清单 ====================

@dataclass
class ManifestInstance:
    sku_id: int
    box: Box
    mask_path: str


@dataclass
class ManifestScene:
    path: str
    clutter: str
    split: str
    instances: List[ManifestInstance] = field(default_factory=list)

    @property
    def sku_ids(self) -> List[int]:
        return sorted({inst.sku_id for inst in self.instances})

    def instances_of(self, sku_id: int) -> List[ManifestInstance]:
        return [inst for inst in self.instances if inst.sku_id == sku_id]


@dataclass
class DatasetManifest:
    """
    数据集清单

    路径均相对于清单所在目录（root）。
    """

    seed: int
    config_hash: str
    image_size: int
    seen: List[int]
    unseen: List[int]
    scenes: List[ManifestScene] = field(default_factory=list)
    patches: Dict[int, List[str]] = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    def scenes_in(self, split: str) -> List[ManifestScene]:
        return [s for s in self.scenes if s.split == split]

    def patch_paths(self, sku_id: int, limit: int | None = None) -> List[Path]:
        paths = self.patches.get(sku_id, [])
        if limit is not None:
            paths = paths[:limit]
        return [self.resolve(p) for p in paths]

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def audit(self) -> List[str]:
        """检查划分约束，返回问题描述（空列表表示通过）"""
        problems: List[str] = []
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            problems.append(f"seen and unseen overlap: {sorted(overlap)}")
        listed = set(self.seen) | set(self.unseen)
        unseen = set(self.unseen)
        for scene in self.scenes:
            for inst in scene.instances:
                if inst.sku_id not in listed:
                    problems.append(f"{scene.path}: unlisted sku {inst.sku_id}")
                if scene.split == "train" and inst.sku_id in unseen:
                    problems.append(f"{scene.path}: unseen sku {inst.sku_id} in a training scene")
        for sku_id in self.patches:
            if sku_id not in listed:
                problems.append(f"patches for unlisted sku {sku_id}")
        return problems
