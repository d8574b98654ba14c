"""
有限差分梯度检查

用中心差分 (f(x+ε) − f(x−ε)) / 2ε 估计梯度，与反向传播结果比较。
只在 float64 下有意义。

Example:
    >>> x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    >>> report = gradcheck(lambda: ops.sum(ops.gelu(x)), [x])
    >>> assert report.ok
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradcheckReport:
    """梯度检查结果：各输入的最大相对误差"""

    errors: list[float] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_error < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a − n| / max(max|n|, max|a|, 1e-8)"""
    scale = max(float(np.abs(numeric).max(initial=0.0)), float(np.abs(analytic).max(initial=0.0)), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def numerical_gradient(
    fn: Callable[[], Tensor],
    target: Tensor,
    eps: float = 1e-5,
    entries: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    对 target 的（部分）元素做中心差分

    Args:
        fn: 无参函数，返回标量张量，内部读取 target.data
        entries: 需要检查的扁平下标，None 表示全部；未检查的位置为 0
    """
    if not target.data.flags.c_contiguous:
        target.data = np.ascontiguousarray(target.data)
    flat = target.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    indices = range(flat.size) if entries is None else entries
    for i in indices:
        original = flat[i]
        flat[i] = original + eps
        plus = fn().item()
        flat[i] = original - eps
        minus = fn().item()
        flat[i] = original
        grad[i] = (plus - minus) / (2 * eps)
    return grad.reshape(target.shape)


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradcheckReport:
    """
    比较 fn() 对 inputs 的解析梯度与数值梯度

    Args:
        fn: 无参函数，返回标量张量
        inputs: 需要检查的叶子张量（requires_grad=True，float64）
        max_entries: 每个输入最多抽查的元素数，None 表示全部
        rng: 抽查用随机数发生器
    """
    for t in inputs:
        t.grad = None
    fn().backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64) for t in inputs]

    rng = rng or np.random.default_rng(0)
    report = GradcheckReport(tol=tol)
    for t, grad in zip(inputs, analytic):
        entries = None
        if max_entries is not None and t.size > max_entries:
            entries = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        numeric = numerical_gradient(fn, t, eps=eps, entries=entries)
        if entries is not None:
            report.errors.append(relative_error(grad.reshape(-1)[entries], numeric.reshape(-1)[entries]))
        else:
            report.errors.append(relative_error(grad, numeric))
    return report
