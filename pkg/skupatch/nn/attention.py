"""
注意力原语

    ProjectionTriple        - Q/K/V 三个 d→d 仿射映射
    AttentionParams         - 投影 + 输出映射 + 可选前置归一化与残差
    attend                  - 批量多头缩放点积注意力内核
    cross_attention         - query token 关注 key/value token
    self_attention          - 全局自注意力
    windowed_self_attention - 不重叠窗口内的自注意力（无移位、无相对位置偏置）

每个头的 logits 按 1/√(d/h) 缩放。前置归一化时:
    out = query + O(attn(Q·LN_q(query), K·LN_kv(kv), V·LN_kv(kv)))
"""

from __future__ import annotations

import math
from typing import Any, Optional, Tuple, Union

import numpy as np

from ..autograd import Tensor, ops
from ..common.errors import ConfigError, DimensionError, UsageError
from .module import LayerNorm, Linear, Module
from .tokens import TokenSet


class ProjectionTriple(Module):
    """Q、K、V 三个 d→d 仿射映射，按 h 个头切分"""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dtype: Any = np.float64) -> None:
        if dim % heads:
            raise ConfigError(f"width {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.query = Linear(dim, dim, rng, dtype)
        self.key = Linear(dim, dim, rng, dtype)
        self.value = Linear(dim, dim, rng, dtype)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


class AttentionParams(Module):
    """
    一个注意力块的全部参数

    Args:
        pre_norm: 在投影前对 query 与 key/value 做 LayerNorm
        residual: 输出加回 query
        enabled: False 时块为恒等映射（消融开关）
        shared_norm: 自注意力块，query 与 key/value 共用一个 LayerNorm
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        dtype: Any = np.float64,
        pre_norm: bool = True,
        residual: bool = True,
        enabled: bool = True,
        eps: float = 1e-5,
        shared_norm: bool = False,
    ) -> None:
        self.projections = ProjectionTriple(dim, heads, rng, dtype)
        self.output = Linear(dim, dim, rng, dtype)
        self.norm_query = LayerNorm(dim, eps, dtype) if pre_norm else None
        self.norm_context = LayerNorm(dim, eps, dtype) if pre_norm and not shared_norm else None
        self.residual = residual
        self.enabled = enabled

    @property
    def dim(self) -> int:
        return self.projections.dim

    @property
    def heads(self) -> int:
        return self.projections.heads


# ==================== 内核 ====================

def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(B, N, d) → (B·h, N, d/h)"""
    b, n, d = x.shape
    x = ops.reshape(x, (b, n, heads, d // heads))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (b * heads, n, d // heads))


def _merge_heads(x: Tensor, batch: int, heads: int) -> Tensor:
    """(B·h, N, d/h) → (B, N, d)"""
    _, n, dh = x.shape
    x = ops.reshape(x, (batch, heads, n, dh))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (batch, n, heads * dh))


def attend(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    key_mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    多头缩放点积注意力

    Args:
        q: (B, Nq, d) 已投影的 query
        k, v: (B, Nk, d) 已投影的 key / value
        key_mask: (B, Nk) 布尔，False 的 key 不参与 softmax

    Returns:
        (B, Nq, d)；return_weights 时额外返回 (B·h, Nq, Nk) 权重
    """
    batch, _, d = q.shape
    head_dim = d // heads
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    logits = ops.scale(ops.matmul(qh, ops.transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(head_dim))
    mask = None
    if key_mask is not None:
        mask = np.repeat(np.asarray(key_mask, dtype=bool), heads, axis=0)[:, None, :]
    weights = ops.softmax(logits, axis=-1, mask=mask)
    out = _merge_heads(ops.matmul(weights, vh), batch, heads)
    if return_weights:
        return out, weights
    return out


def _check_width(tokens: TokenSet, params: AttentionParams, role: str) -> None:
    if tokens.width != params.dim:
        raise DimensionError(f"{role} width {tokens.width} != attention width {params.dim}")


def attention_block(
    query: Tensor,
    context: Tensor,
    params: AttentionParams,
    key_mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
):
    """
    批量形式的注意力块: query (B, Nq, d)，context (B, Nk, d)

    返回值含输出映射与（按配置）残差。
    """
    q_in = params.norm_query(query) if params.norm_query is not None else query
    if context is query:
        kv_in = q_in
    else:
        kv_in = params.norm_context(context) if params.norm_context is not None else context
    proj = params.projections
    result = attend(
        proj.query(q_in), proj.key(kv_in), proj.value(kv_in),
        params.heads, key_mask=key_mask, return_weights=return_weights,
    )
    out, weights = result if return_weights else (result, None)
    out = params.output(out)
    if params.residual:
        out = ops.add(query, out)
    return (out, weights) if return_weights else out


# ==================== 对外操作 ====================

def cross_attention(
    query_tokens: TokenSet,
    key_value_tokens: TokenSet,
    params: AttentionParams,
    return_weights: bool = False,
):
    """
    query_tokens 关注 key_value_tokens，输出 token 数与 query 相同

    Raises:
        DimensionError: 宽度不符
        UsageError: key/value 为空
    """
    _check_width(query_tokens, params, "query")
    _check_width(key_value_tokens, params, "key/value")
    if key_value_tokens.count == 0:
        raise UsageError("cross_attention: empty key/value token set")
    if not params.enabled:
        return (query_tokens, None) if return_weights else query_tokens

    q = ops.reshape(query_tokens.tokens, (1, query_tokens.count, params.dim))
    if key_value_tokens is query_tokens:
        kv = q
    else:
        kv = ops.reshape(key_value_tokens.tokens, (1, key_value_tokens.count, params.dim))
    result = attention_block(q, kv, params, return_weights=return_weights)
    out, weights = result if return_weights else (result, None)
    out = query_tokens.with_tokens(ops.reshape(out, (query_tokens.count, params.dim)))
    return (out, weights) if return_weights else out


def self_attention(tokens: TokenSet, params: AttentionParams) -> TokenSet:
    """全局自注意力"""
    return cross_attention(tokens, tokens, params)


def window_partition(x: Tensor, window: Tuple[int, int]) -> Tensor:
    """(H, W, d) → (窗口数, wh·ww, d)，H、W 需为窗口边长的整数倍"""
    h, w, d = x.shape
    wh, ww = window
    x = ops.reshape(x, (h // wh, wh, w // ww, ww, d))
    x = ops.transpose(x, (0, 2, 1, 3, 4))
    return ops.reshape(x, ((h // wh) * (w // ww), wh * ww, d))


def window_reverse(windows: Tensor, window: Tuple[int, int], size: Tuple[int, int]) -> Tensor:
    """window_partition 的逆: (窗口数, wh·ww, d) → (H, W, d)"""
    h, w = size
    wh, ww = window
    d = windows.shape[-1]
    x = ops.reshape(windows, (h // wh, w // ww, wh, ww, d))
    x = ops.transpose(x, (0, 2, 1, 3, 4))
    return ops.reshape(x, (h, w, d))


def windowed_self_attention(
    grid_tokens: TokenSet,
    window: int,
    params: AttentionParams,
) -> TokenSet:
    """
    不重叠窗口内的自注意力

    窗口边长超过网格时退化为整网格；网格不能整除时在右/下补零 token，
    补出的 token 在 softmax 中被屏蔽，输出时裁掉。
    """
    if grid_tokens.grid is None:
        raise DimensionError("windowed_self_attention needs tokens with a grid layout")
    _check_width(grid_tokens, params, "grid")
    if not params.enabled:
        return grid_tokens

    gh, gw = grid_tokens.grid
    d = params.dim
    wh, ww = min(window, gh), min(window, gw)
    pad_h, pad_w = (-gh) % wh, (-gw) % ww
    ph, pw = gh + pad_h, gw + pad_w

    x = grid_tokens.tokens
    normed = params.norm_query(x) if params.norm_query is not None else x
    grid = ops.reshape(normed, (gh, gw, d))
    if pad_h:
        grid = ops.concatenate([grid, Tensor(np.zeros((pad_h, gw, d), dtype=x.dtype))], axis=0)
    if pad_w:
        grid = ops.concatenate([grid, Tensor(np.zeros((ph, pad_w, d), dtype=x.dtype))], axis=1)

    windows = window_partition(grid, (wh, ww))
    key_mask = None
    if pad_h or pad_w:
        valid = np.zeros((ph, pw), dtype=bool)
        valid[:gh, :gw] = True
        key_mask = valid.reshape(ph // wh, wh, pw // ww, ww).transpose(0, 2, 1, 3).reshape(-1, wh * ww)

    proj = params.projections
    attended = attend(proj.query(windows), proj.key(windows), proj.value(windows), params.heads, key_mask=key_mask)
    merged = window_reverse(attended, (wh, ww), (ph, pw))
    if pad_h or pad_w:
        merged = ops.getitem(merged, (slice(0, gh), slice(0, gw)))
    out = params.output(ops.reshape(merged, (gh * gw, d)))
    if params.residual:
        out = ops.add(x, out)
    return grid_tokens.with_tokens(out)
