"""
补丁-图像相关编码器

每层按固定顺序执行:
    (a) 图像 token 关注补丁 token（补丁引导，可关闭）
    (b) 补丁 token 关注更新后的图像 token
    (c) 图像 token 窗口自注意力 + 前馈
    (d) 目标 token 关注图像 token
    (e) 目标 token 自注意力 + 前馈
    (f) 非最后一层：图像网格 2×2 平均池化后经 d→d 仿射合并；补丁 token 成对平均

金字塔中存放的是 (f) 之前、校准后的图像 token。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List

import numpy as np

from ..autograd import ops
from ..common.config import ModelConfig
from ..common.errors import ConfigError, DimensionError
from ..nn import (
    AttentionParams,
    FeedForward,
    ImageTokens,
    Linear,
    Module,
    ModuleList,
    ObjectTokens,
    PatchTokens,
    cross_attention,
    self_attention,
    windowed_self_attention,
)


def merge_grid(tokens: ImageTokens, merge: Linear) -> ImageTokens:
    """2×2 平均池化 + 仿射映射，网格每轴减半"""
    gh, gw = tokens.grid
    if gh % 2 or gw % 2:
        raise ConfigError(f"grid {gh}x{gw} cannot be halved")
    d = tokens.width
    x = ops.reshape(tokens.tokens, (gh // 2, 2, gw // 2, 2, d))
    x = ops.transpose(x, (0, 2, 1, 3, 4))
    x = ops.reshape(x, ((gh // 2) * (gw // 2), 4, d))
    pooled = ops.mean(x, axis=1)
    return tokens.with_tokens(merge(pooled), grid=(gh // 2, gw // 2), level=tokens.level + 1)


def pool_patch_pairs(tokens: PatchTokens) -> PatchTokens:
    """相邻 token 成对平均；token 数为奇数或只剩一个时原样进入下一层级"""
    n, d = tokens.count, tokens.width
    if n < 2 or n % 2:
        return tokens.with_tokens(tokens.tokens, level=tokens.level + 1)
    x = ops.mean(ops.reshape(tokens.tokens, (n // 2, 2, d)), axis=1)
    grid = None
    if tokens.grid is not None and tokens.grid[1] % 2 == 0:
        grid = (tokens.grid[0], tokens.grid[1] // 2)
    return PatchTokens(x, grid=grid, level=tokens.level + 1)


class EncoderLayer(Module):
    """一层补丁引导 Transformer"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, last: bool, dtype: Any = np.float64) -> None:
        d, h, eps = config.dim, config.heads, config.ln_eps
        self.window = config.window
        self.use_window_attention = config.use_window_attention
        self.last = last
        self.patch_to_image = AttentionParams(d, h, rng, dtype, eps=eps, enabled=config.use_patch_guidance)
        self.image_to_patch = AttentionParams(d, h, rng, dtype, eps=eps)
        self.image_self = AttentionParams(d, h, rng, dtype, eps=eps, shared_norm=True)
        self.image_ffn = FeedForward(d, config.ffn_hidden, rng, dtype, eps)
        self.image_to_object = AttentionParams(d, h, rng, dtype, eps=eps)
        self.object_self = AttentionParams(d, h, rng, dtype, eps=eps, shared_norm=True)
        self.object_ffn = FeedForward(d, config.ffn_hidden, rng, dtype, eps)
        self.merge = None if last else Linear(d, d, rng, dtype)

    def image_self_block(self, z_image: ImageTokens) -> ImageTokens:
        """(c) 窗口（或全局）自注意力 + 前馈"""
        if self.use_window_attention:
            z_image = windowed_self_attention(z_image, self.window, self.image_self)
        else:
            z_image = self_attention(z_image, self.image_self)
        return z_image.with_tokens(self.image_ffn(z_image.tokens))

    def forward(
        self,
        z_image: ImageTokens,
        z_patch: PatchTokens,
        z_object: ObjectTokens,
    ) -> "LayerOutput":
        if not (z_image.width == z_patch.width == z_object.width):
            raise DimensionError(
                f"token widths differ: image {z_image.width}, patch {z_patch.width}, object {z_object.width}"
            )
        z_image = cross_attention(z_image, z_patch, self.patch_to_image)
        z_patch = cross_attention(z_patch, z_image, self.image_to_patch)
        z_image = self.image_self_block(z_image)
        z_object = cross_attention(z_object, z_image, self.image_to_object)
        z_object = self_attention(z_object, self.object_self)
        z_object = z_object.with_tokens(self.object_ffn(z_object.tokens))

        if self.last:
            return LayerOutput(z_image, z_patch, z_image, z_patch, z_object)
        return LayerOutput(
            image=z_image,
            patch=z_patch,
            next_image=merge_grid(z_image, self.merge),
            next_patch=pool_patch_pairs(z_patch),
            objects=z_object,
        )


@dataclass
class LayerOutput:
    """image/patch 为本层级校准后的 token，next_* 为下一层输入"""

    image: ImageTokens
    patch: PatchTokens
    next_image: ImageTokens
    next_patch: PatchTokens
    objects: ObjectTokens


@dataclass
class EncoderOutput:
    """pyramid[i] 为第 i+1 层级（0 最细）；patches 与之一一对应"""

    pyramid: List[ImageTokens]
    patches: List[PatchTokens]
    objects: ObjectTokens

    @property
    def levels(self) -> int:
        return len(self.pyramid)


class Encoder(Module):
    """L 层编码器"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        grid = config.token_grid
        halvings = config.layers - 1
        if grid % (2 ** halvings):
            raise ConfigError(
                f"token grid {grid}x{grid} cannot be halved {halvings} times; "
                f"lower layers or raise image_size"
            )
        self.layers = ModuleList([
            EncoderLayer(config, rng, last=(i == config.layers - 1), dtype=dtype)
            for i in range(config.layers)
        ])

    def forward(self, z_image: ImageTokens, z_patch: PatchTokens, z_object: ObjectTokens) -> EncoderOutput:
        pyramid: List[ImageTokens] = []
        patches: List[PatchTokens] = []
        for layer in self.layers:
            out = layer(z_image, z_patch, z_object)
            pyramid.append(out.image)
            patches.append(out.patch)
            z_image, z_patch, z_object = out.next_image, out.next_patch, out.objects
        return EncoderOutput(pyramid=pyramid, patches=patches, objects=z_object)
