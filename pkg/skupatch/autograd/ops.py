"""
可微算子

每个算子计算前向结果并通过 make_result 挂上伴随函数。
伴随函数接收输出梯度，按输入顺序返回各输入的梯度（不需要的返回 None）。

形状约定:
    - 除 add 的逐行偏置（一维 b 加到最后一维）外不做广播
    - matmul 支持二维、同批次维的三维及以上，以及 "批次 @ 二维权重"
    - 形状不符一律抛出 DimensionError
"""

from __future__ import annotations

import builtins
import math
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.special import erf, expit

from ..common.errors import DimensionError, UsageError
from .tensor import Tensor, make_result

ArrayLike = Union[Tensor, np.ndarray]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _const(value: ArrayLike, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


# ==================== 逐元素算术 ====================

def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b；b 可以是长度等于 a 最后一维的一维偏置"""
    if a.shape == b.shape:
        return make_result(a.data + b.data, "add", (a, b), lambda g: (g, g))
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        width = b.shape[0]
        return make_result(
            a.data + b.data, "add_bias", (a, b),
            lambda g: (g, g.reshape(-1, width).sum(axis=0)),
        )
    raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return make_result(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, "neg", (x,), lambda g: (-g,))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "multiply")
    return make_result(
        a.data * b.data, "multiply", (a, b),
        lambda g: (g * b.data, g * a.data),
    )


def divide(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "divide")
    out = a.data / b.data
    return make_result(
        out, "divide", (a, b),
        lambda g: (g / b.data, -g * out / b.data),
    )


def scale(x: Tensor, factor: float) -> Tensor:
    return make_result(x.data * factor, "scale", (x,), lambda g: (g * factor,))


def add_scalar(x: Tensor, value: float) -> Tensor:
    return make_result(x.data + value, "add_scalar", (x,), lambda g: (g,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """逐元素最大值，相等时梯度归 a"""
    _same_shape(a, b, "maximum")
    pick_a = a.data >= b.data
    return make_result(
        np.where(pick_a, a.data, b.data), "maximum", (a, b),
        lambda g: (np.where(pick_a, g, 0), np.where(pick_a, 0, g)),
    )


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """逐元素最小值，相等时梯度归 a"""
    _same_shape(a, b, "minimum")
    pick_a = a.data <= b.data
    return make_result(
        np.where(pick_a, a.data, b.data), "minimum", (a, b),
        lambda g: (np.where(pick_a, g, 0), np.where(pick_a, 0, g)),
    )


# ==================== 线性代数与形状 ====================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    矩阵乘法

    支持:
        (m, k) @ (k, n)
        (..., m, k) @ (..., k, n)   批次维必须相同
        (..., m, k) @ (k, n)        共享右侧矩阵
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dimensions differ {a.shape} @ {b.shape}")

    out = a.data @ b.data
    shared = b.ndim == 2 and a.ndim > 2

    def backward(g: np.ndarray):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if shared:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return make_result(out, "matmul", (a, b), backward)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: invalid axes {axes} for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return make_result(
        np.transpose(x.data, axes), "transpose", (x,),
        lambda g: (np.transpose(g, inverse),),
    )


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {shape}") from e
    original = x.shape
    return make_result(out, "reshape", (x,), lambda g: (g.reshape(original),))


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise UsageError("concatenate: empty input")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:ax] + t.shape[ax + 1:] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1:]:
            raise DimensionError(f"concatenate: incompatible shapes {tensors[0].shape} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return make_result(
        out, "concatenate", tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=ax)),
    )


def getitem(x: Tensor, index: Any) -> Tensor:
    """索引/切片；伴随用 np.add.at 散射，重复索引会累加"""
    out = np.array(x.data[index], copy=True)
    shape, dtype = x.shape, x.dtype

    def backward(g: np.ndarray):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return make_result(out, "getitem", (x,), backward)


# ==================== 激活函数 ====================

def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return make_result(
        np.where(positive, x.data, 0).astype(x.dtype, copy=False), "relu", (x,),
        lambda g: (np.where(positive, g, 0),),
    )


def gelu(x: Tensor) -> Tensor:
    """精确 GELU: x·Φ(x)"""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return make_result(
        (x.data * cdf).astype(x.dtype, copy=False), "gelu", (x,),
        lambda g: (g * (cdf + x.data * pdf),),
    )


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data).astype(x.dtype, copy=False)
    return make_result(out, "sigmoid", (x,), lambda g: (g * out * (1 - out),))


# ==================== 归一化与归约 ====================

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """最后一维上的 LayerNorm: γ·(x−μ)/√(σ²+ε) + β"""
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise DimensionError(f"layer_norm: affine shape {gamma.shape} does not match width {width}")

    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(g: np.ndarray):
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, width)
        dgamma = (flat_g * xhat.reshape(-1, width)).sum(axis=0)
        dbeta = flat_g.sum(axis=0)
        return dx, dgamma, dbeta

    return make_result(out, "layer_norm", (x, gamma, beta), backward)


def _expand_reduced(g: np.ndarray, shape: tuple, axis: Optional[int], keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=x.dtype)
    shape = x.shape
    return make_result(
        out, "sum", (x,),
        lambda g: (_expand_reduced(g, shape, axis, keepdims),),
    )


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise DimensionError("mean: empty reduction")
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims), dtype=x.dtype)
    shape = x.shape
    return make_result(
        out, "mean", (x,),
        lambda g: (_expand_reduced(g, shape, axis, keepdims) / count,),
    )


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    数值稳定的 softmax（减去最大值）

    mask 为可广播到 x 的布尔数组，False 位置概率为 0；
    整行被屏蔽时输出全 0。
    """
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    peak = logits.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0)
    e = np.exp(logits - peak)
    total = e.sum(axis=axis, keepdims=True)
    total = np.where(total > 0, total, 1)
    out = (e / total).astype(x.dtype, copy=False)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, "softmax", (x,), backward)


# ==================== 损失 ====================

def cross_entropy_with_logits(
    logits: Tensor,
    targets: np.ndarray,
    class_weights: Optional[np.ndarray] = None,
) -> Tensor:
    """
    加权平均交叉熵

    loss = Σ_i w[t_i]·(−log softmax(logits_i)[t_i]) / Σ_i w[t_i]

    Args:
        logits: (N, C)
        targets: 长度 N 的整数类别
        class_weights: 长度 C 的类别权重，默认全 1
    """
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be (N, C), got {logits.shape}")
    n, c = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise DimensionError(f"cross_entropy: targets shape {targets.shape} != ({n},)")
    if n == 0:
        raise DimensionError("cross_entropy: empty batch")
    weights = np.ones(c) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (c,):
        raise DimensionError(f"cross_entropy: class_weights shape {weights.shape} != ({c},)")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    w = weights[targets]
    norm = w.sum()
    value = -(w * log_p[rows, targets]).sum() / norm
    out = np.asarray(value, dtype=logits.dtype)

    def backward(g: np.ndarray):
        grad = np.exp(log_p)
        grad[rows, targets] -= 1.0
        grad *= (w / norm)[:, None]
        return ((grad * g).astype(logits.dtype, copy=False),)

    return make_result(out, "cross_entropy", (logits,), backward)


def smooth_l1(pred: Tensor, target: ArrayLike, beta: float = 1.0) -> Tensor:
    """
    逐元素 Smooth-L1

        |d| < β:  0.5·d²/β
        否则:     |d| − 0.5·β
    """
    target_t = _const(target, pred)
    _same_shape(pred, target_t, "smooth_l1")
    diff = pred.data - target_t.data
    small = np.abs(diff) < beta
    out = np.where(small, 0.5 * diff * diff / beta, np.abs(diff) - 0.5 * beta).astype(pred.dtype, copy=False)

    def backward(g: np.ndarray):
        local = np.where(small, diff / beta, np.sign(diff))
        return g * local, -g * local

    return make_result(out, "smooth_l1", (pred, target_t), backward)


# ==================== 双线性采样 ====================

def bilinear_sample(grid: Tensor, points: Tensor) -> Tensor:
    """
    在网格上按归一化坐标双线性采样（半像素中心，align_corners 关闭）

    Args:
        grid: (H, W, C) 或 (B, H, W, C)
        points: (P, 2) 或 (B, P, 2)，每行 (x, y) ∈ [0, 1]²，超出部分被钳制

    Returns:
        (P, C) 或 (B, P, C)

    token (i, j) 的中心位于 ((j + 0.5)/W, (i + 0.5)/H)，在中心采样逐位返回该 token。
    对坐标的梯度在钳制区域为 0。
    """
    batched = grid.ndim == 4
    if grid.ndim not in (3, 4):
        raise DimensionError(f"bilinear_sample: grid must be (H,W,C) or (B,H,W,C), got {grid.shape}")
    expected_pts = 3 if batched else 2
    if points.ndim != expected_pts or points.shape[-1] != 2:
        raise DimensionError(f"bilinear_sample: points shape {points.shape} incompatible with grid {grid.shape}")
    if batched and points.shape[0] != grid.shape[0]:
        raise DimensionError(f"bilinear_sample: batch mismatch {points.shape[0]} vs {grid.shape[0]}")

    values = grid.data if batched else grid.data[None]
    pts = points.data if batched else points.data[None]
    b, h, w, c = values.shape

    ux = pts[..., 0] * w - 0.5
    uy = pts[..., 1] * h - 0.5
    inside_x = (ux >= 0) & (ux <= w - 1)
    inside_y = (uy >= 0) & (uy <= h - 1)
    ux = np.clip(ux, 0, w - 1)
    uy = np.clip(uy, 0, h - 1)
    x0 = np.minimum(np.floor(ux).astype(np.int64), builtins.max(w - 2, 0))
    y0 = np.minimum(np.floor(uy).astype(np.int64), builtins.max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (ux - x0)[..., None].astype(values.dtype, copy=False)
    fy = (uy - y0)[..., None].astype(values.dtype, copy=False)

    bi = np.arange(b)[:, None]
    v00 = values[bi, y0, x0]
    v01 = values[bi, y0, x1]
    v10 = values[bi, y1, x0]
    v11 = values[bi, y1, x1]
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    if not batched:
        out = out[0]

    def backward(g: np.ndarray):
        gb = g if batched else g[None]
        grad_grid = np.zeros_like(values)
        np.add.at(grad_grid, (bi, y0, x0), w00 * gb)
        np.add.at(grad_grid, (bi, y0, x1), w01 * gb)
        np.add.at(grad_grid, (bi, y1, x0), w10 * gb)
        np.add.at(grad_grid, (bi, y1, x1), w11 * gb)

        d_ux = ((1 - fy) * (v01 - v00) + fy * (v11 - v10))
        d_uy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01))
        grad_x = (d_ux * gb).sum(axis=-1) * w * inside_x
        grad_y = (d_uy * gb).sum(axis=-1) * h * inside_y
        grad_pts = np.stack([grad_x, grad_y], axis=-1).astype(points.dtype, copy=False)
        if not batched:
            return grad_grid[0], grad_pts[0]
        return grad_grid, grad_pts

    return make_result(out, "bilinear_sample", (grid, points), backward)


__all__ = [
    "add", "sub", "neg", "multiply", "divide", "scale", "add_scalar",
    "maximum", "minimum",
    "matmul", "transpose", "reshape", "concatenate", "getitem",
    "relu", "gelu", "sigmoid",
    "layer_norm", "sum", "mean", "softmax",
    "cross_entropy_with_logits", "smooth_l1",
    "bilinear_sample",
]
