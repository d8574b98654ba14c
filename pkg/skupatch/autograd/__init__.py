"""
autograd 模块 - numpy 上的反向模式自动微分

    tensor.py     - Tensor, ComputationRecord, no_grad
    ops.py        - 可微算子
    gradcheck.py  - 有限差分梯度检查
"""

from . import ops
from .gradcheck import GradcheckReport, gradcheck, numerical_gradient, relative_error
from .tensor import (
    ComputationRecord,
    Tensor,
    debug_checks_enabled,
    is_grad_enabled,
    no_grad,
    set_debug_checks,
)

__all__ = [
    "ops",
    "Tensor",
    "ComputationRecord",
    "no_grad",
    "is_grad_enabled",
    "set_debug_checks",
    "debug_checks_enabled",
    "gradcheck",
    "numerical_gradient",
    "relative_error",
    "GradcheckReport",
]
