"""
AdamW 优化器

解耦权重衰减:
    w ← w − lr·wd·w
    m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²
    w ← w − lr·m̂ / (√v̂ + ε),  m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..common.config import TrainConfig
from ..common.errors import DimensionError, NumericalError
from ..nn import Parameter


@dataclass
class OptimizerState:
    """一阶/二阶矩、步数与超参数"""

    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    moments: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def hyper_parameters(self) -> Tuple[float, float, float, float, float]:
        return self.lr, self.beta1, self.beta2, self.eps, self.weight_decay


class AdamW:
    """
    Args:
        params: (名称, Parameter) 序列，名称用于检查点与诊断
    """

    def __init__(
        self,
        params: Iterable[Tuple[str, Parameter]],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ) -> None:
        self.params: List[Tuple[str, Parameter]] = list(params)
        self.state = OptimizerState(0, lr, beta1, beta2, eps, weight_decay)
        for name, p in self.params:
            self.state.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))

    @classmethod
    def from_config(cls, params: Iterable[Tuple[str, Parameter]], config: TrainConfig) -> "AdamW":
        return cls(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps, config.weight_decay)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self, lr: Optional[float] = None) -> None:
        """
        一步更新；lr 覆盖本步学习率（预热用）

        Raises:
            NumericalError: 梯度含 NaN/Inf，消息中带参数名
        """
        st = self.state
        lr = st.lr if lr is None else lr
        st.step += 1
        bias1 = 1.0 - st.beta1 ** st.step
        bias2 = 1.0 - st.beta2 ** st.step
        for name, p in self.params:
            grad = np.zeros_like(p.data) if p.grad is None else p.grad
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient in parameter {name!r} at step {st.step}")
            m, v = st.moments[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * grad
            v *= st.beta2
            v += (1.0 - st.beta2) * grad * grad
            p.data -= lr * st.weight_decay * p.data
            p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + st.eps)

    def load_state(self, state: OptimizerState) -> None:
        """恢复检查点中的优化器状态，矩的形状必须与参数一致"""
        for name, p in self.params:
            if name not in state.moments:
                raise DimensionError(f"optimizer state misses parameter {name!r}")
            m, v = state.moments[name]
            if m.shape != p.shape or v.shape != p.shape:
                raise DimensionError(f"optimizer moments for {name!r} have shape {m.shape}, expected {p.shape}")
        self.state = OptimizerState(
            state.step, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay,
            {name: (state.moments[name][0].astype(p.dtype), state.moments[name][1].astype(p.dtype))
             for name, p in self.params},
        )


def clip_grad_norm(params: Sequence[Tuple[str, Parameter]], max_norm: float) -> float:
    """按全局 L2 范数裁剪梯度，返回裁剪前的范数；max_norm ≤ 0 时只计算不裁剪"""
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for _, p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-6)
        for _, p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return total


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """线性预热，step 从 0 开始"""
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, (step + 1) / warmup_steps)
