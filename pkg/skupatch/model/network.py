"""
SkuPatchNet - 完整的补丁引导实例分割网络

    图像 → ImageTokens ┐
    补丁×N → PatchTokens → NToOne ┤→ Encoder → Decoder → TaskHeads
    可学习目标查询 z_O^0 ┘

Example:
    >>> net = SkuPatchNet(config, seed=0)
    >>> out = net(image, [patch])           # 训练：返回张量输出
    >>> preds = net.predict(image, [patch]) # 推理：no_grad，返回 Prediction 列表
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..autograd import Tensor, no_grad
from ..common.config import ModelConfig
from ..nn import Module, ObjectTokens, Parameter, normal_init
from .decoder import Decoder
from .encoder import Encoder, EncoderOutput
from .heads import HeadOutputs, Prediction, TaskHeads
from .tokenizer import NToOne, PatchEmbedding, tokenize_image, tokenize_patch


@dataclass
class NetworkOutput:
    heads: HeadOutputs
    encoded: EncoderOutput
    aux: List[HeadOutputs] = field(default_factory=list)


class SkuPatchNet(Module):
    """
    Args:
        config: 网络结构配置
        seed: 参数初始化种子（numpy Generator）
    """

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        self.config = config
        dtype = np.dtype(config.precision)
        rng = np.random.default_rng(seed)
        grid = config.token_grid
        pgrid = config.patch_grid
        self.image_embed = PatchEmbedding(config.stride, (grid, grid), config.dim, rng, dtype)
        self.patch_embed = PatchEmbedding(config.patch_stride, (pgrid, pgrid), config.dim, rng, dtype)
        self.n_to_1 = NToOne(config, rng, dtype)
        self.object_queries = Parameter(normal_init(rng, (config.queries, config.dim), 0.02, dtype))
        self.encoder = Encoder(config, rng, dtype)
        self.decoder = Decoder(config, rng, dtype)
        self.heads = TaskHeads(config, rng, dtype)

    @property
    def dtype(self) -> np.dtype:
        return self.object_queries.dtype

    def forward(
        self,
        image: np.ndarray,
        patches: Sequence[np.ndarray],
        zero_patches: bool = False,
    ) -> NetworkOutput:
        """
        Args:
            image: (H, W, 3) uint8 或 [0,1] 浮点
            patches: N 个补丁栅格（任意尺寸，重采样到 p×p）
            zero_patches: 将融合后的补丁 token 置零（补丁引导消融）
        """
        z_image = tokenize_image(image, self.config.stride, self.image_embed)
        patch_tokens = [tokenize_patch(p, self.config, self.patch_embed) for p in patches]
        z_patch = self.n_to_1(patch_tokens)
        if zero_patches:
            z_patch = z_patch.with_tokens(Tensor(np.zeros(z_patch.tokens.shape, dtype=self.dtype)))
        z_object = ObjectTokens(self.object_queries, level=1)

        encoded = self.encoder(z_image, z_patch, z_object)
        if self.config.aux_loss:
            steps = self.decoder(encoded, return_intermediate=True)
            outputs = [self.heads(z) for z in steps]
            return NetworkOutput(heads=outputs[-1], encoded=encoded, aux=outputs[:-1])
        return NetworkOutput(heads=self.heads(self.decoder(encoded)), encoded=encoded)

    def predict(
        self,
        image: np.ndarray,
        patches: Sequence[np.ndarray],
        zero_patches: bool = False,
    ) -> List[Prediction]:
        """冻结参数的推理，可在多线程中并发调用"""
        with no_grad():
            out = self.forward(image, patches, zero_patches=zero_patches)
        return out.heads.to_predictions(self.config.mask_grid)
