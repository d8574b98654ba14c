"""
分块嵌入与多补丁融合

    PatchEmbedding  - s×s 像素块线性嵌入 + 可学习位置嵌入
    tokenize_image  - 图像 → ImageTokens
    tokenize_patch  - SKU 补丁（双线性重采样到 p×p）→ PatchTokens
    NToOne          - N 个补丁 token 集融合为一个

NToOne 三种方式:
    attention  - 以第一个补丁为初值，依次对其余补丁做交叉注意力（顺序相关）
    add        - N 个 token 集逐元素平均
    momentum   - ẑ ← μ·ẑ + (1−μ)·z_j
"""

from __future__ import annotations

from typing import Any, Sequence, Tuple

import numpy as np

from ..autograd import Tensor, ops
from ..common.config import ModelConfig
from ..common.errors import ConfigError, DimensionError, InputError, UsageError
from ..nn import AttentionParams, ImageTokens, Linear, Module, Parameter, PatchTokens, cross_attention, normal_init
from ..utils.image import resample_rgb, resize_rgb, to_unit_float


def blockify(raster: np.ndarray, stride: int) -> np.ndarray:
    """(H, W, C) → (H/s · W/s, s·s·C)，块按行主序排列"""
    h, w, c = raster.shape
    blocks = raster.reshape(h // stride, stride, w // stride, stride, c)
    return blocks.transpose(0, 2, 1, 3, 4).reshape((h // stride) * (w // stride), stride * stride * c)


class PatchEmbedding(Module):
    """块嵌入：Linear(s·s·3 → d) 加位置嵌入（σ=0.02 的正态初始化）"""

    def __init__(
        self,
        stride: int,
        grid: Tuple[int, int],
        dim: int,
        rng: np.random.Generator,
        dtype: Any = np.float64,
    ) -> None:
        self.stride = stride
        self.grid = grid
        self.proj = Linear(stride * stride * 3, dim, rng, dtype)
        self.position = Parameter(normal_init(rng, (grid[0] * grid[1], dim), 0.02, dtype))

    @property
    def dtype(self) -> np.dtype:
        return self.position.dtype

    def forward(self, raster: np.ndarray) -> Tensor:
        blocks = Tensor(blockify(np.asarray(raster, dtype=self.dtype), self.stride))
        return ops.add(self.proj(blocks), self.position)


def tokenize_image(image: np.ndarray, stride: int, embed: PatchEmbedding) -> ImageTokens:
    """
    图像分块嵌入

    Args:
        image: (H, W, 3)，uint8 或 [0, 1] 浮点

    Raises:
        ConfigError: H、W 不能被 s 整除，或与嵌入网格不符
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got {image.shape}")
    h, w, _ = image.shape
    if h % stride or w % stride:
        raise ConfigError(f"image {h}x{w} is not divisible by stride {stride}")
    grid = (h // stride, w // stride)
    if grid != embed.grid or stride != embed.stride:
        raise ConfigError(f"image grid {grid} does not match embedding grid {embed.grid}")
    if image.dtype == np.uint8:
        image = to_unit_float(image, embed.dtype)
    return ImageTokens(embed(image), grid=grid, level=1)


def tokenize_patch(patch: np.ndarray, config: ModelConfig, embed: PatchEmbedding) -> PatchTokens:
    """
    补丁双线性重采样到 p×p 后分块嵌入，得到 (p/s_p)² 个 token

    uint8 补丁走 Pillow BILINEAR，缩小时滤波支撑随比例放宽（近似面积平均）；
    浮点补丁逐通道走半像素双线性（scipy.ndimage.zoom），不量化到 uint8。

    Raises:
        InputError: 零面积补丁
    """
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise DimensionError(f"patch must be (h, w, 3), got {patch.shape}")
    if patch.shape[0] == 0 or patch.shape[1] == 0:
        raise InputError(f"degenerate patch of shape {patch.shape}")
    p = config.patch_size
    if patch.dtype == np.uint8:
        raster = to_unit_float(resize_rgb(patch, (p, p)), embed.dtype)
    else:
        raster = resample_rgb(patch, (p, p)).astype(embed.dtype)
    grid = (p // config.patch_stride, p // config.patch_stride)
    return PatchTokens(embed(raster), grid=grid, level=1)


class NToOne(Module):
    """N 个补丁 token 集 → 一个代表集"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        self.mode = config.n_to_1_mode
        self.momentum = config.n_to_1_momentum
        self.attention = AttentionParams(config.dim, config.heads, rng, dtype, eps=config.ln_eps)

    def forward(self, patches: Sequence[PatchTokens]) -> PatchTokens:
        """
        Raises:
            UsageError: 空列表
            DimensionError: 各补丁 token 形状不一致
        """
        if not patches:
            raise UsageError("n_to_1 needs at least one patch")
        first = patches[0]
        for other in patches[1:]:
            if other.tokens.shape != first.tokens.shape:
                raise DimensionError(f"patch token shapes differ: {first.tokens.shape} vs {other.tokens.shape}")
        if len(patches) == 1:
            return first

        if self.mode == "attention":
            fused = first
            for other in patches[1:]:
                fused = cross_attention(fused, other, self.attention)
            return fused
        if self.mode == "add":
            total = first.tokens
            for other in patches[1:]:
                total = ops.add(total, other.tokens)
            return first.with_tokens(ops.scale(total, 1.0 / len(patches)))
        # momentum
        fused_tokens = first.tokens
        for other in patches[1:]:
            fused_tokens = ops.add(
                ops.scale(fused_tokens, self.momentum),
                ops.scale(other.tokens, 1.0 - self.momentum),
            )
        return first.with_tokens(fused_tokens)
