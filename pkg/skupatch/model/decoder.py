"""
补丁感知解码器

    Bottleneck           - 残差瓶颈块 d → d/2 → d
    upsample_2x          - 双线性 ×2 上采样（半像素中心，常量插值矩阵）
    FusionLayer          - fused^i = B(A(z^i) + up(fused^{i+1}))
    pyramid_fuse         - 自顶向下融合整个金字塔
    DeformableAttention  - 每个查询预测参考点与 D 个偏移，双线性采样后只在这 D 个样本上做注意力
    DecoderLayer         - 补丁交叉注意力 → 可变形注意力 → 目标自注意力 → 前馈
    Decoder              - 从最粗层级 L 到最细层级 1 逐层细化目标 token
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autograd import Tensor, ops
from ..common.config import ModelConfig
from ..common.errors import DimensionError
from ..nn import (
    AttentionParams,
    FeedForward,
    ImageTokens,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    ObjectTokens,
    PatchTokens,
    cross_attention,
    self_attention,
)
from .encoder import EncoderOutput


# ==================== 金字塔融合 ====================

class Bottleneck(Module):
    """x + expand(GELU(reduce(x)))，expand 默认零初始化"""

    def __init__(self, dim: int, rng: np.random.Generator, dtype: Any = np.float64, zero_init: bool = True) -> None:
        self.reduce = Linear(dim, max(dim // 2, 1), rng, dtype)
        self.expand = Linear(max(dim // 2, 1), dim, rng, dtype, zero_init=zero_init)

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(x, self.expand(ops.gelu(self.reduce(x))))


@lru_cache(maxsize=32)
def _interp_matrix_1d(n: int) -> np.ndarray:
    """长度 n → 2n 的线性插值矩阵，源坐标 (o + 0.5)/2 − 0.5 钳制到 [0, n−1]"""
    out = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = min(max((o + 0.5) / 2.0 - 0.5, 0.0), n - 1.0)
        lo = min(int(math.floor(src)), max(n - 2, 0))
        hi = min(lo + 1, n - 1)
        frac = src - lo
        out[o, lo] += 1.0 - frac
        out[o, hi] += frac
    return out


@lru_cache(maxsize=32)
def upsample_matrix(rows: int, cols: int) -> np.ndarray:
    """行主序网格 (rows, cols) → (2rows, 2cols) 的插值矩阵"""
    return np.kron(_interp_matrix_1d(rows), _interp_matrix_1d(cols))


def upsample_2x(tokens: ImageTokens) -> ImageTokens:
    """双线性 ×2 上采样"""
    gh, gw = tokens.grid
    matrix = Tensor(upsample_matrix(gh, gw).astype(tokens.tokens.dtype))
    return tokens.with_tokens(ops.matmul(matrix, tokens.tokens), grid=(2 * gh, 2 * gw), level=tokens.level - 1)


class FusionLayer(Module):
    """一级自顶向下融合"""

    def __init__(self, dim: int, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        self.block_a = Bottleneck(dim, rng, dtype)
        self.block_b = Bottleneck(dim, rng, dtype)

    def forward(self, high: ImageTokens, fused_low: ImageTokens) -> ImageTokens:
        gh, gw = high.grid
        lh, lw = fused_low.grid
        if (gh, gw) != (2 * lh, 2 * lw):
            raise DimensionError(f"pyramid chain broken: {high.grid} is not twice {fused_low.grid}")
        up = upsample_2x(fused_low)
        return high.with_tokens(self.block_b(ops.add(self.block_a(high.tokens), up.tokens)))


def pyramid_fuse(pyramid: Sequence[ImageTokens], layers: Sequence[FusionLayer]) -> List[ImageTokens]:
    """
    fused^L = z^L；i = L−1..1: fused^i = B(A(z^i) + up(fused^{i+1}))

    Args:
        pyramid: 由细到粗
        layers: 长度 L−1，layers[i] 负责第 i 级
    """
    if len(layers) != len(pyramid) - 1:
        raise DimensionError(f"{len(pyramid)} pyramid levels need {len(pyramid) - 1} fusion layers")
    fused: List[Optional[ImageTokens]] = [None] * len(pyramid)
    fused[-1] = pyramid[-1]
    for i in range(len(pyramid) - 2, -1, -1):
        fused[i] = layers[i](pyramid[i], fused[i + 1])
    return fused  # type: ignore[return-value]


# ==================== 可变形注意力 ====================

def grid_centers(rows: int, cols: int) -> np.ndarray:
    """所有 token 中心的归一化坐标，行主序，(rows·cols, 2)"""
    ys, xs = np.meshgrid((np.arange(rows) + 0.5) / rows, (np.arange(cols) + 0.5) / cols, indexing="ij")
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=-1)


def _offset_bias(heads: int, points: int) -> np.ndarray:
    """偏移初值：每个头的 D 个点沿不同方向展开，半径随点序号增大"""
    bias = np.zeros((heads, points, 2))
    for hd in range(heads):
        theta = 2.0 * math.pi * hd / heads
        direction = np.array([math.cos(theta), math.sin(theta)])
        for p in range(points):
            bias[hd, p] = direction * (p + 1) * 0.5
    return bias.reshape(-1)


class DeformableAttention(Module):
    """
    可变形注意力

    每个查询:
        参考点 r = sigmoid(Linear(q)) ∈ (0,1)²
        位置   = r + Δ / (W, H)，Δ 由 Linear(q) 预测（每头 D 个）
        权重   = softmax(Linear(q))（predicted）或 Q(q)·K(样本)/√dh（dot）
        输出   = O(Σ_D 权重 · V(样本))

    V、K 在整张网格上先投影再采样（与采样后投影等价，因为投影是逐 token 仿射）。
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        points: int,
        rng: np.random.Generator,
        dtype: Any = np.float64,
        logits: str = "predicted",
    ) -> None:
        self.heads = heads
        self.points = points
        self.logits = logits
        self.attn = AttentionParams(dim, heads, rng, dtype, pre_norm=False, residual=False)
        self.reference = Linear(dim, 2, rng, dtype)
        self.offsets = Linear(dim, heads * points * 2, rng, dtype, zero_init=True)
        self.offsets.bias.data = _offset_bias(heads, points).astype(dtype)
        self.weights = Linear(dim, heads * points, rng, dtype, zero_init=True)

    @property
    def head_dim(self) -> int:
        return self.attn.dim // self.heads

    def sampling_locations(self, queries: Tensor, grid: Tuple[int, int]) -> Tensor:
        """(K, h, D, 2) 的归一化采样坐标"""
        k = queries.shape[0]
        h, dpts = self.heads, self.points
        ref = ops.sigmoid(self.reference(queries))
        spread = np.zeros((2, h * dpts * 2), dtype=queries.dtype)
        spread[0, 0::2] = 1.0
        spread[1, 1::2] = 1.0
        ref_expanded = ops.matmul(ref, Tensor(spread))
        rows, cols = grid
        scale = np.tile(np.array([1.0 / cols, 1.0 / rows], dtype=queries.dtype), (k, h * dpts))
        offsets = ops.multiply(self.offsets(queries), Tensor(scale))
        return ops.reshape(ops.add(ref_expanded, offsets), (k, h, dpts, 2))

    def forward(
        self,
        queries: Tensor,
        image: ImageTokens,
        locations: Optional[Union[Tensor, np.ndarray]] = None,
        return_weights: bool = False,
    ):
        """
        Args:
            queries: (K, d)
            image: 带网格的图像 token
            locations: 可选 (K, h, D', 2) 固定采样点（测试与等价性检查用）

        Returns:
            (K, d)；return_weights 时额外返回 (h, K, D') 注意力权重
        """
        if image.grid is None:
            raise DimensionError("deformable attention needs a grid")
        if queries.shape[-1] != self.attn.dim or image.width != self.attn.dim:
            raise DimensionError(f"width mismatch: queries {queries.shape}, image width {image.width}")
        k = queries.shape[0]
        h, dh = self.heads, self.head_dim
        rows, cols = image.grid
        proj = self.attn.projections

        if locations is None:
            loc = self.sampling_locations(queries, image.grid)
        else:
            loc = locations if isinstance(locations, Tensor) else Tensor(np.asarray(locations, dtype=queries.dtype))
        if loc.ndim != 4 or loc.shape[0] != k or loc.shape[1] != h or loc.shape[3] != 2:
            raise DimensionError(f"locations must be ({k}, {h}, D, 2), got {loc.shape}")
        dpts = loc.shape[2]
        points = ops.reshape(ops.transpose(loc, (1, 0, 2, 3)), (h, k * dpts, 2))

        def sample(projected: Tensor) -> Tensor:
            grid = ops.transpose(ops.reshape(projected, (rows, cols, h, dh)), (2, 0, 1, 3))
            sampled = ops.bilinear_sample(grid, points)
            return ops.reshape(sampled, (h * k, dpts, dh))

        values = sample(proj.value(image.tokens))
        if self.logits == "dot":
            keys = sample(proj.key(image.tokens))
            q = ops.transpose(ops.reshape(proj.query(queries), (k, h, dh)), (1, 0, 2))
            q = ops.reshape(q, (h * k, 1, dh))
            logits = ops.scale(ops.matmul(q, ops.transpose(keys, (0, 2, 1))), 1.0 / math.sqrt(dh))
        else:
            if dpts != self.points:
                raise DimensionError(f"predicted weights cover {self.points} points, got {dpts} locations")
            logits = ops.transpose(ops.reshape(self.weights(queries), (k, h, dpts)), (1, 0, 2))
            logits = ops.reshape(logits, (h * k, 1, dpts))
        weights = ops.softmax(logits, axis=-1)

        out = ops.matmul(weights, values)
        out = ops.transpose(ops.reshape(out, (h, k, dh)), (1, 0, 2))
        out = self.attn.output(ops.reshape(out, (k, h * dh)))
        if return_weights:
            return out, ops.reshape(weights, (h, k, dpts))
        return out


# ==================== 解码层 ====================

class DecoderLayer(Module):
    """一个层级上的解码层"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        d, h, eps = config.dim, config.heads, config.ln_eps
        self.use_deformable = config.use_deformable
        self.patch_cross = AttentionParams(d, h, rng, dtype, eps=eps, enabled=config.use_patch_cross)
        self.norm_object = LayerNorm(d, eps, dtype)
        if config.use_deformable:
            self.deformable = DeformableAttention(d, h, config.sampling_points, rng, dtype, config.deformable_logits)
            self.dense = None
        else:
            self.deformable = None
            self.dense = AttentionParams(d, h, rng, dtype, eps=eps)
        self.object_self = AttentionParams(d, h, rng, dtype, eps=eps, shared_norm=True)
        self.ffn = FeedForward(d, config.ffn_hidden, rng, dtype, eps)

    def forward(self, z_object: ObjectTokens, image: ImageTokens, patches: PatchTokens) -> ObjectTokens:
        if not (z_object.width == image.width == patches.width):
            raise DimensionError("decoder inputs have different widths")
        image = cross_attention(image, patches, self.patch_cross)
        if self.deformable is not None:
            update = self.deformable(self.norm_object(z_object.tokens), image)
            z_object = z_object.with_tokens(ops.add(z_object.tokens, update))
        else:
            z_object = cross_attention(z_object, image, self.dense)
        z_object = self_attention(z_object, self.object_self)
        return z_object.with_tokens(self.ffn(z_object.tokens))


class Decoder(Module):
    """融合金字塔后，从层级 L 到 1 逐层细化目标 token"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        self.use_fuse = config.use_fuse
        self.fusion = ModuleList([FusionLayer(config.dim, rng, dtype) for _ in range(config.layers - 1)])
        self.layers = ModuleList([DecoderLayer(config, rng, dtype) for _ in range(config.layers)])

    def forward(self, encoded: EncoderOutput, return_intermediate: bool = False):
        """
        Returns:
            最终 z_O；return_intermediate 时返回每层之后的 z_O 列表（最后一项为最终结果）
        """
        levels = encoded.levels
        if levels != len(self.layers):
            raise DimensionError(f"encoder produced {levels} levels, decoder has {len(self.layers)} layers")
        if self.use_fuse:
            images = pyramid_fuse(encoded.pyramid, list(self.fusion))
            patches = encoded.patches
        else:
            images = [encoded.pyramid[-1]] * levels
            patches = [encoded.patches[-1]] * levels

        z_object = encoded.objects
        intermediate: List[ObjectTokens] = []
        for step, layer in enumerate(self.layers):
            level = levels - 1 - step
            z_object = layer(z_object, images[level], patches[level])
            intermediate.append(z_object)
        return intermediate if return_intermediate else z_object
