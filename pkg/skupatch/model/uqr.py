"""
统一查询表示（UQR）掩码编解码

掩码 S (m×m) 的二维正交 DCT-II 为 F = A·S·Aᵀ，按 zigzag 顺序保留前 n_c 个低频系数。
解码时补零后做逆变换（A⁻¹ = Aᵀ），阈值 0.5 二值化。

Example:
    >>> codec = MaskCodec(grid=32, coeffs=64)
    >>> vec = codec.encode_raster(mask)          # 任意尺寸二值掩码 → MaskVector
    >>> binary = codec.decode_raster(vec, (64, 64))
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.fft import dct, dctn, idctn

from ..common.errors import ConfigError, DimensionError
from ..utils.image import resample_map


@lru_cache(maxsize=16)
def zigzag_order(m: int) -> np.ndarray:
    """
    m×m 系数的 zigzag 扁平下标

    沿反对角线 i+j = s 依次遍历，s 为偶数时自下而上（i 递减），奇数时自上而下。
    """
    coords = [(i, j) for i in range(m) for j in range(m)]
    coords.sort(key=lambda ij: (ij[0] + ij[1], ij[1] if (ij[0] + ij[1]) % 2 == 0 else ij[0]))
    order = np.array([i * m + j for i, j in coords], dtype=np.int64)
    order.setflags(write=False)
    return order


@dataclass(frozen=True)
class DctBasis:
    """m×m 正交 DCT-II 矩阵 A（A·Aᵀ = I）"""

    size: int

    @property
    def matrix(self) -> np.ndarray:
        return _dct_matrix(self.size)


@lru_cache(maxsize=16)
def _dct_matrix(m: int) -> np.ndarray:
    matrix = dct(np.eye(m), norm="ortho", axis=0)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class MaskVector:
    """zigzag 排列的前 n_c 个 DCT 系数"""

    coefficients: np.ndarray
    grid: int

    def __len__(self) -> int:
        return int(self.coefficients.shape[0])


class MaskCodec:
    """
    掩码向量编解码器

    Args:
        grid: 重采样网格边长 m
        coeffs: 保留系数个数 n_c ≤ m²
    """

    def __init__(self, grid: int, coeffs: int) -> None:
        if coeffs < 1 or coeffs > grid * grid:
            raise ConfigError(f"mask_coeffs={coeffs} must be in [1, {grid * grid}]")
        self.grid = grid
        self.coeffs = coeffs
        self.basis = DctBasis(grid)
        self._order = zigzag_order(grid)[:coeffs]

    def encode(self, mask: np.ndarray) -> MaskVector:
        """
        m×m 实值掩码 → MaskVector

        Raises:
            DimensionError: 尺寸不是 m×m
        """
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (self.grid, self.grid):
            raise DimensionError(f"mask must be {self.grid}x{self.grid}, got {mask.shape}")
        full = dctn(mask, norm="ortho")
        return MaskVector(full.reshape(-1)[self._order].copy(), self.grid)

    def decode(self, vector: Union[MaskVector, np.ndarray]) -> np.ndarray:
        """MaskVector（或系数数组）→ m×m 实值图"""
        coeffs = vector.coefficients if isinstance(vector, MaskVector) else np.asarray(vector, dtype=np.float64)
        if coeffs.shape != (self.coeffs,):
            raise DimensionError(f"expected {self.coeffs} coefficients, got {coeffs.shape}")
        full = np.zeros(self.grid * self.grid)
        full[self._order] = coeffs
        return idctn(full.reshape(self.grid, self.grid), norm="ortho")

    @staticmethod
    def binarize(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return np.asarray(values) >= threshold

    def encode_raster(self, mask: np.ndarray) -> MaskVector:
        """任意尺寸二值掩码：双线性重采样到 m×m 后编码"""
        return self.encode(resample_map(np.asarray(mask, dtype=np.float64), (self.grid, self.grid)))

    def decode_raster(self, vector: Union[MaskVector, np.ndarray], shape: Tuple[int, int], threshold: float = 0.5) -> np.ndarray:
        """解码后重采样到 shape 并二值化"""
        return self.binarize(resample_map(self.decode(vector), shape), threshold)
