"""
图像工具 - PIL 封装

提供 PPM/PGM 读写、重采样、旋转与叠加可视化。
栅格在内存中统一为 numpy 数组：RGB 为 (H, W, 3) uint8，掩码为 (H, W) bool。

掩码文件为 PGM (P5, maxval 255)，255 表示前景。
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from ..common.base import Result, safe_call
from ..common.errors import InputError

logger = logging.getLogger("skupatch.utils.image")

# 叠加可视化的调色板
OVERLAY_COLORS: Tuple[Tuple[int, int, int], ...] = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)


# ==================== 读写 ====================

def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """写出二进制 PPM (P6)"""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"PPM needs an (H, W, 3) raster, got {arr.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8)).save(path, format="PPM")


def write_pgm(path: str | Path, mask: np.ndarray) -> None:
    """写出二值掩码 PGM (P5)，前景 255"""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InputError(f"PGM needs an (H, W) raster, got {arr.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pixels = np.where(arr.astype(bool), 255, 0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def _read_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def _read_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("L"), dtype=np.uint8) >= 128


def read_ppm(path: str | Path) -> Result[np.ndarray]:
    """读取 RGB 栅格，失败返回 Result.fail"""
    return safe_call(_read_rgb, path, error_msg=f"读取图像失败 [{path}]")


def read_pgm(path: str | Path) -> Result[np.ndarray]:
    """读取二值掩码（≥128 为前景）"""
    return safe_call(_read_mask, path, error_msg=f"读取掩码失败 [{path}]")


# ==================== 重采样 ====================

def resize_rgb(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """
    双线性缩放 RGB 栅格

    Args:
        size: (宽, 高)
    """
    if image.shape[1] == size[0] and image.shape[0] == size[1]:
        return image
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise InputError("cannot resize an empty raster")
    img = Image.fromarray(np.asarray(image, dtype=np.uint8))
    return np.array(img.resize(size, resample=Image.BILINEAR), dtype=np.uint8)


def resample_map(values: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """
    实值二维图的双线性重采样（半像素中心，align_corners 关闭）

    Args:
        shape: 目标 (高, 宽)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape == tuple(shape):
        return values.copy()
    if values.size == 0:
        raise InputError("cannot resample an empty map")
    zoom = (shape[0] / values.shape[0], shape[1] / values.shape[1])
    out = ndimage.zoom(values, zoom, order=1, mode="nearest", grid_mode=True)
    if out.shape != tuple(shape):
        # zoom 的输出尺寸经四舍五入，个别比例会差一个像素
        fixed = np.zeros(shape, dtype=np.float64)
        h, w = min(shape[0], out.shape[0]), min(shape[1], out.shape[1])
        fixed[:h, :w] = out[:h, :w]
        out = fixed
    return out


def resample_rgb(image: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """浮点 RGB 逐通道做 resample_map，不量化；shape 为 (高, 宽)"""
    image = np.asarray(image, dtype=np.float64)
    return np.stack([resample_map(image[..., c], shape) for c in range(image.shape[2])], axis=-1)


def rotate_rgba(rgba: np.ndarray, angle: float) -> np.ndarray:
    """RGBA 栅格绕中心旋转（度，逆时针），画布扩展以容纳全部像素"""
    img = Image.fromarray(np.asarray(rgba, dtype=np.uint8))
    return np.array(img.rotate(angle, resample=Image.BILINEAR, expand=True), dtype=np.uint8)


def resize_rgba(rgba: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """RGBA 双线性缩放，size 为 (宽, 高)"""
    img = Image.fromarray(np.asarray(rgba, dtype=np.uint8))
    return np.array(img.resize(size, resample=Image.BILINEAR), dtype=np.uint8)


def to_unit_float(image: np.ndarray, dtype=np.float64) -> np.ndarray:
    """uint8 → [0, 1] 浮点"""
    return np.asarray(image, dtype=dtype) / 255.0


# ==================== 可视化 ====================

def draw_overlay(
    image: np.ndarray,
    masks: Sequence[np.ndarray],
    boxes: Sequence[Tuple[int, int, int, int]],
    labels: Optional[Iterable[str]] = None,
    alpha: float = 0.45,
) -> np.ndarray:
    """
    在图像上叠加半透明掩码与框

    Args:
        boxes: (x0, y0, x1, y1)，x1/y1 不含
    """
    canvas = np.asarray(image, dtype=np.float64).copy()
    for i, mask in enumerate(masks):
        color = np.asarray(OVERLAY_COLORS[i % len(OVERLAY_COLORS)], dtype=np.float64)
        m = np.asarray(mask, dtype=bool)
        canvas[m] = (1 - alpha) * canvas[m] + alpha * color

    img = Image.fromarray(np.clip(canvas, 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    label_list = list(labels) if labels is not None else []
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        color = OVERLAY_COLORS[i % len(OVERLAY_COLORS)]
        draw.rectangle([x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)], outline=color)
        if i < len(label_list):
            draw.text((x0 + 1, y0 + 1), label_list[i], fill=color)
    return np.array(img, dtype=np.uint8)


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """两幅同尺寸栅格的归一化互相关，任一方为常数时返回 0"""
    x = np.asarray(a, dtype=np.float64).reshape(-1)
    y = np.asarray(b, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise InputError(f"NCC needs equal sizes, got {a.shape} and {b.shape}")
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0:
        return 0.0
    return float((x * y).sum() / denom)
