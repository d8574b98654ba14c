"""
TokenSet - 带可选网格布局的 token 矩阵

tokens 以 (n, d) 行矩阵存储（每行一个 token），grid 为 (rows, cols) 时
按行主序对应网格位置。
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple, TypeVar

from ..autograd import Tensor
from ..common.errors import DimensionError

TS = TypeVar("TS", bound="TokenSet")


@dataclass(frozen=True)
class TokenSet:
    tokens: Tensor
    grid: Optional[Tuple[int, int]] = None
    level: int = 1

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2:
            raise DimensionError(f"TokenSet tokens must be (n, d), got {self.tokens.shape}")
        if self.grid is not None and self.grid[0] * self.grid[1] != self.tokens.shape[0]:
            raise DimensionError(f"grid {self.grid} does not match {self.tokens.shape[0]} tokens")

    @property
    def count(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]

    def with_tokens(self: TS, tokens: Tensor, grid: Optional[Tuple[int, int]] = None, level: Optional[int] = None) -> TS:
        """同类型、替换 token（grid/level 未给出时沿用）"""
        return replace(
            self,
            tokens=tokens,
            grid=self.grid if grid is None else grid,
            level=self.level if level is None else level,
        )


@dataclass(frozen=True)
class ImageTokens(TokenSet):
    """图像 token z_I，第 1 层为 (H/s)×(W/s) 网格"""


@dataclass(frozen=True)
class PatchTokens(TokenSet):
    """补丁 token z_P"""


@dataclass(frozen=True)
class ObjectTokens(TokenSet):
    """K 个目标查询 token z_O"""
