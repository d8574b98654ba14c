"""
模块与参数

Module 通过实例属性的定义顺序收集参数（Parameter、子 Module、ModuleList），
参数名为点分路径，例如 encoder.layers.0.patch_to_image.output.weight。
state_dict / load_state_dict 以该命名为键，检查点按同一顺序序列化。
"""

from __future__ import annotations

import math
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from ..autograd import Tensor, ops
from ..common.errors import DimensionError


class Parameter(Tensor):
    """需要梯度的叶子张量"""

    __slots__ = ()

    def __init__(self, data: Any, name: Optional[str] = None, dtype: Any = None) -> None:
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)


class Module:
    """所有网络组件的基类，子类实现 forward()"""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{path}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        载入参数

        Raises:
            DimensionError: 形状不符，或 strict 模式下键集合不一致
        """
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise DimensionError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, value in state.items():
            param = own.get(name)
            if param is None:
                continue
            value = np.asarray(value)
            if value.shape != param.shape:
                raise DimensionError(f"{name}: expected shape {param.shape}, got {value.shape}")
            param.data = np.array(value, dtype=param.dtype, copy=True)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    """按下标命名的子模块列表"""

    def __init__(self, modules: Sequence[Module] = ()) -> None:
        self._items: list[Module] = list(modules)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for i, module in enumerate(self._items):
            yield from module.named_parameters(prefix=f"{prefix}{i}.")

    def append(self, module: Module) -> None:
        self._items.append(module)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)


# ==================== 初始化 ====================

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype: Any) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def normal_init(rng: np.random.Generator, shape: Tuple[int, ...], std: float, dtype: Any) -> np.ndarray:
    return (rng.standard_normal(shape) * std).astype(dtype)


# ==================== 基础层 ====================

class Linear(Module):
    """
    仿射映射 y = x·W + b

    x 的前导维任意，内部展平成二维做一次 matmul。
    weight 形状 (in, out)。
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype: Any = np.float64,
        zero_init: bool = False,
        bias: bool = True,
    ) -> None:
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = xavier_uniform(rng, in_features, out_features, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"Linear: expected width {self.in_features}, got {x.shape}")
        lead = x.shape[:-1]
        flat = x if x.ndim == 2 else ops.reshape(x, (-1, self.in_features))
        out = ops.matmul(flat, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)
        if x.ndim != 2:
            out = ops.reshape(out, lead + (self.out_features,))
        return out


class LayerNorm(Module):
    """最后一维上的 LayerNorm，γ=1、β=0 初始化"""

    def __init__(self, width: int, eps: float = 1e-5, dtype: Any = np.float64) -> None:
        self.eps = eps
        self.gamma = Parameter(np.ones(width, dtype=dtype))
        self.beta = Parameter(np.zeros(width, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    """前置归一化的残差前馈块: x + W2·GELU(W1·LN(x))"""

    def __init__(
        self,
        width: int,
        hidden: int,
        rng: np.random.Generator,
        dtype: Any = np.float64,
        eps: float = 1e-5,
    ) -> None:
        self.norm = LayerNorm(width, eps, dtype)
        self.fc1 = Linear(width, hidden, rng, dtype)
        self.fc2 = Linear(hidden, width, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(x, self.fc2(ops.gelu(self.fc1(self.norm(x)))))


class Mlp(Module):
    """多层感知机，层间 ReLU，最后一层线性输出"""

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        dtype: Any = np.float64,
    ) -> None:
        if len(widths) < 2:
            raise DimensionError("Mlp needs at least input and output widths")
        self.layers = ModuleList([
            Linear(a, b, rng, dtype) for a, b in zip(widths[:-1], widths[1:])
        ])

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = ops.relu(x)
        return x
