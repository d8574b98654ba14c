"""
utils 模块 - 工具函数

    image.py  - PPM/PGM 读写、重采样、叠加可视化（Pillow）
"""

from .image import (
    draw_overlay,
    normalized_cross_correlation,
    read_pgm,
    read_ppm,
    resample_map,
    resample_rgb,
    resize_rgb,
    resize_rgba,
    rotate_rgba,
    to_unit_float,
    write_pgm,
    write_ppm,
)

__all__ = [
    "read_ppm",
    "read_pgm",
    "write_ppm",
    "write_pgm",
    "resize_rgb",
    "resize_rgba",
    "rotate_rgba",
    "resample_map",
    "resample_rgb",
    "to_unit_float",
    "draw_overlay",
    "normalized_cross_correlation",
]
