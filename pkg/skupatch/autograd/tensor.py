"""
张量与计算记录

Tensor 保存 numpy 数据、梯度以及产生它的节点（算子名、输入、伴随函数）。
backward() 对计算图做一次拓扑排序得到 ComputationRecord，再逆序回放各节点的伴随。

约定:
    - 数据统一为浮点（float32 或 float64），整数输入提升为 float64
    - 梯度在扇出处累加，叶子的 .grad 由调用方显式清零
    - no_grad() 上下文内不记录节点；上下文按线程隔离

Example:
    >>> w = Tensor(3.0, requires_grad=True)
    >>> (w * w).backward()
    >>> float(w.grad)
    6.0
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

from ..common.config import settings
from ..common.errors import NumericalError, UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled: ContextVar[bool] = ContextVar("skupatch_grad_enabled", default=True)
_finite_checks: bool = settings.debug_finite


def is_grad_enabled() -> bool:
    """当前线程是否记录计算图"""
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """关闭计算图记录（推理与参数更新时使用）"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def set_debug_checks(enabled: bool) -> None:
    """开关 NaN/Inf 断言模式（默认取 SKUPATCH_DEBUG_FINITE）"""
    global _finite_checks
    _finite_checks = bool(enabled)


def debug_checks_enabled() -> bool:
    return _finite_checks


def _as_float_array(data: Any, dtype: Any = None) -> np.ndarray:
    if isinstance(data, Tensor):
        data = data.data
    arr = np.asarray(data, dtype=dtype)
    if dtype is None and arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}")


@dataclass(slots=True)
class _Node:
    op: str
    parents: Tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    """
    稠密张量

    Attributes:
        data: numpy 数组（行主序）
        requires_grad: 是否需要梯度
        grad: 与 data 同形状的梯度，未计算时为 None
        name: 可选名称，用于诊断信息
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Any = None,
    ) -> None:
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[_Node] = None
        if _finite_checks:
            _check_finite(self.data, name or "tensor")

    # ==================== 基本属性 ====================

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def op(self) -> Optional[str]:
        """产生该张量的算子名，叶子为 None"""
        return self._node.op if self._node is not None else None

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """共享数据、不参与求导的新张量"""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # ==================== 反向传播 ====================

    def backward(self) -> "ComputationRecord":
        """
        从标量损失反向传播到所有 requires_grad 叶子

        Returns:
            本次回放使用的 ComputationRecord

        Raises:
            UsageError: 非标量损失或损失不依赖任何参数
            NumericalError: 断言模式下出现非有限梯度
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")

        record = ComputationRecord.trace(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for tensor in reversed(record.tensors):
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor._node
            if node is None:
                tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
                continue
            for parent, parent_grad in zip(node.parents, node.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    parent_grad = parent_grad.reshape(parent.shape)
                if parent_grad.dtype != parent.dtype:
                    parent_grad = parent_grad.astype(parent.dtype)
                if _finite_checks:
                    _check_finite(parent_grad, f"gradient of {node.op}")
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad
        return record

    # ==================== 运算符 ====================

    def __add__(self, other: Any) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_scalar(self, -float(other))

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.add_scalar(ops.neg(self), float(other))

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.neg(self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.multiply(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.divide(self, other)
        return ops.scale(self, 1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from . import ops
        return ops.getitem(self, index)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)

    def reshape(self, *shape: Any) -> "Tensor":
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def make_result(
    data: np.ndarray,
    op: str,
    parents: Sequence[Tensor],
    backward: BackwardFn,
) -> Tensor:
    """包装算子输出；只有在记录开启且任一输入需要梯度时才挂节点"""
    requires = _grad_enabled.get() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires:
        out._node = _Node(op, tuple(parents), backward)
    return out


@dataclass
class ComputationRecord:
    """
    一次反向传播所用的计算记录

    tensors 为拓扑序（每个节点的输入都排在它前面），
    只包含需要梯度的张量。
    """

    tensors: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationRecord":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    @property
    def operations(self) -> list[str]:
        """按执行顺序排列的算子名"""
        return [t._node.op for t in self.tensors if t._node is not None]

    @property
    def leaves(self) -> list[Tensor]:
        return [t for t in self.tensors if t._node is None]

    def __len__(self) -> int:
        return len(self.tensors)
