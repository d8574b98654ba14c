"""
合成 SKU 资产、杂乱场景与补丁

所有随机性来自 SplitMix64，纹理为平滑的解析函数（条纹 / 棋盘 / 斑点 / 渐变），
几何变换由 Pillow 完成。

Example:
    >>> catalog = generate_catalog(seed=0, count=25, asset_size=48)
    >>> scene = compose_scene(catalog[:4], data_config, seed=derive_seed(0, "train", 0))
    >>> patches = extract_patches(catalog[0], n=5, seed=1, patch_size=32)
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from ..common.config import DataConfig
from ..common.errors import InputError
from ..utils.image import resize_rgba, rotate_rgba
from .models import Clutter, Scene, SceneInstance, SkuAsset
from .rng import SplitMix64, derive_seed

logger = logging.getLogger("skupatch.synth")

FAMILIES: Tuple[str, ...] = ("stripes", "checker", "spots", "gradient")
SHAPES: Tuple[str, ...] = ("rect", "ellipse")

MAX_PATCHES = 10
PATCH_CROP_FRACTION = 0.6


# ==================== SKU 资产 ====================

def _color(rng: SplitMix64) -> Tuple[int, int, int]:
    return (rng.randint(20, 235), rng.randint(20, 235), rng.randint(20, 235))


def _blend(t: np.ndarray, c0: Tuple[int, int, int], c1: Tuple[int, int, int]) -> np.ndarray:
    a = np.asarray(c0, dtype=np.float64)
    b = np.asarray(c1, dtype=np.float64)
    return a * (1.0 - t[..., None]) + b * t[..., None]


def _texture(family: str, rng: SplitMix64, palette, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    if family == "stripes":
        theta = rng.uniform(0.0, math.pi)
        period = rng.uniform(20.0, 28.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        t = 0.5 + 0.5 * np.sin(2 * math.pi * (xx * math.cos(theta) + yy * math.sin(theta)) / period + phase)
    elif family == "checker":
        cell = rng.uniform(14.0, 22.0)
        ox, oy = rng.uniform(0.0, cell), rng.uniform(0.0, cell)
        t = 0.5 + 0.5 * np.sin(math.pi * (xx + ox) / cell) * np.sin(math.pi * (yy + oy) / cell)
    elif family == "spots":
        t = np.zeros((h, w))
        for _ in range(rng.randint(3, 6)):
            cx, cy = rng.uniform(0.0, w), rng.uniform(0.0, h)
            radius = rng.uniform(6.0, 10.0)
            t += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius * radius))
        t = np.clip(t, 0.0, 1.0)
    elif family == "gradient":
        theta = rng.uniform(0.0, 2 * math.pi)
        proj = xx * math.cos(theta) + yy * math.sin(theta)
        t = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
    else:
        raise InputError(f"unknown texture family {family!r}")
    rgb = _blend(t, palette[0], palette[1])
    # 第三个颜色做一道横向色带，增加类间差异
    band = np.exp(-((yy - h * 0.5) ** 2) / (2 * (h * 0.12) ** 2))
    rgb = rgb * (1 - 0.35 * band[..., None]) + np.asarray(palette[2], dtype=np.float64) * 0.35 * band[..., None]
    return rgb


def ellipse_mask(h: int, w: int) -> np.ndarray:
    """内切于 h×w 画布的椭圆（像素中心判定）"""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    return ((xx - w / 2) / (w / 2)) ** 2 + ((yy - h / 2) / (h / 2)) ** 2 <= 1.0


def generate_sku(
    seed: int,
    sku_id: int,
    asset_size: int = 48,
    attempt: int = 0,
    family: Optional[str] = None,
) -> SkuAsset:
    """
    由 (seed, sku_id) 确定性地生成 SKU 外观

    Args:
        attempt: 与已有 SKU 撞车时的重抽序号
        family: 指定纹理族（默认随机）
    """
    rng = SplitMix64(derive_seed(seed, "sku", sku_id, attempt))
    family = family or rng.choice(FAMILIES)
    palette = (_color(rng), _color(rng), _color(rng))
    shape = rng.choice(SHAPES)
    w = asset_size
    h = max(8, int(round(asset_size * rng.uniform(0.6, 1.0))))

    rgb = _texture(family, rng, palette, h, w)
    mask = np.ones((h, w), dtype=bool) if shape == "rect" else ellipse_mask(h, w)
    raster = np.clip(np.rint(rgb), 0, 255).astype(np.uint8) * mask[..., None].astype(np.uint8)
    return SkuAsset(sku_id, family, palette, shape, raster, mask)


def generate_catalog(seed: int, count: int, asset_size: int = 48) -> List[SkuAsset]:
    """生成 count 个 SKU，(纹理族, 调色板) 两两不同"""
    catalog: List[SkuAsset] = []
    signatures = set()
    for sku_id in range(count):
        attempt = 0
        asset = generate_sku(seed, sku_id, asset_size)
        while asset.signature in signatures:
            attempt += 1
            asset = generate_sku(seed, sku_id, asset_size, attempt=attempt)
        signatures.add(asset.signature)
        catalog.append(asset)
    return catalog


# ==================== 场景合成 ====================

def _background(rng: SplitMix64, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    base = np.asarray([rng.randint(90, 170)] * 3, dtype=np.float64)
    tint = np.asarray([rng.uniform(-15, 15) for _ in range(3)])
    shade = (0.85 + 0.15 * (xx * rng.uniform(-1, 1) + yy * rng.uniform(-1, 1)))[..., None]
    return np.clip((base + tint) * shade, 0, 255)


def _place(rng: SplitMix64, asset: SkuAsset, params: DataConfig) -> np.ndarray:
    """缩放 + 任意角度旋转后的 RGBA"""
    scale = rng.uniform(params.min_scale, params.max_scale)
    w, h = asset.size
    factor = scale * params.scene_size / max(w, h)
    size = (max(2, int(round(w * factor))), max(2, int(round(h * factor))))
    angle = rng.uniform(-180.0, 180.0)
    return rotate_rgba(resize_rgba(asset.rgba(), size), angle)


def _tight_box(mask: np.ndarray) -> Tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def compose_scene(
    assets: Sequence[SkuAsset],
    params: DataConfig,
    seed: int,
    clutter: Optional[Clutter] = None,
) -> Scene:
    """
    由后往前绘制实例的杂乱场景

    easy 放 easy_min..easy_max 个实例，hard 放 hard_min..hard_max 个；
    被遮挡像素从下层掩码中移除，可见比例低于阈值的实例丢弃。

    Raises:
        InputError: assets 为空
    """
    if not assets:
        raise InputError("compose_scene needs at least one asset")
    rng = SplitMix64(seed)
    if clutter is None:
        clutter = "hard" if rng.uniform() < params.hard_fraction else "easy"
    lo, hi = (params.easy_min, params.easy_max) if clutter == "easy" else (params.hard_min, params.hard_max)
    count = rng.randint(lo, hi)

    size = params.scene_size
    canvas = _background(rng, size)
    labels = np.full((size, size), -1, dtype=np.int64)
    placed: List[Tuple[int, int]] = []   # (sku_id, 原始像素数)

    for index in range(count):
        asset = assets[rng.randint(0, len(assets) - 1)]
        rgba = _place(rng, asset, params)
        ph, pw = rgba.shape[:2]
        x0 = rng.randint(-pw // 4, size - pw + pw // 4)
        y0 = rng.randint(-ph // 4, size - ph + ph // 4)

        alpha = rgba[..., 3] >= 128
        total = int(alpha.sum())
        placed.append((asset.sku_id, total))
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x0 + pw, size), min(y0 + ph, size)
        if cx0 >= cx1 or cy0 >= cy1 or total == 0:
            continue
        src = (slice(cy0 - y0, cy1 - y0), slice(cx0 - x0, cx1 - x0))
        dst = (slice(cy0, cy1), slice(cx0, cx1))
        region = alpha[src]
        canvas[dst][region] = rgba[src][..., :3][region]
        labels[dst][region] = index

    instances: List[SceneInstance] = []
    for index, (sku_id, total) in enumerate(placed):
        mask = labels == index
        visible = int(mask.sum())
        if total == 0 or visible == 0:
            continue
        visibility = visible / total
        if visibility < params.visibility_threshold:
            continue
        instances.append(SceneInstance(sku_id, _tight_box(mask), mask, min(visibility, 1.0)))

    logger.debug(f"场景合成: clutter={clutter} 放置 {count} 个，保留 {len(instances)} 个")
    return Scene(np.clip(np.rint(canvas), 0, 255).astype(np.uint8), instances, clutter)


# ==================== 补丁 ====================

def _crop_patch(
    asset: SkuAsset,
    patch_size: int,
    angle: float = 0.0,
    scale: float = 1.0,
    shift: Tuple[float, float] = (0.0, 0.0),
    brightness: float = 1.0,
) -> np.ndarray:
    w, h = asset.size
    img = Image.fromarray(asset.raster)
    if angle:
        img = img.rotate(angle, resample=Image.BILINEAR, center=(w / 2, h / 2))
    side = PATCH_CROP_FRACTION * min(w, h) * scale
    cx, cy = w / 2 + shift[0], h / 2 + shift[1]
    box = (cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2)
    patch = np.asarray(img.resize((patch_size, patch_size), resample=Image.BILINEAR, box=box), dtype=np.float64)
    return np.clip(np.rint(patch * brightness), 0, 255).astype(np.uint8)


def canonical_patch(asset: SkuAsset, patch_size: int) -> np.ndarray:
    """无抖动的中心裁剪"""
    return _crop_patch(asset, patch_size)


def extract_patches(
    asset: SkuAsset,
    n: int,
    seed: int,
    patch_size: int = 32,
    jitter: bool = True,
) -> List[np.ndarray]:
    """
    从标准外观中心裁出 n 个 p×p 补丁

    抖动: 旋转 ±2°、缩放 0.97–1.0、平移 ±1 像素、亮度 ±10%

    Raises:
        InputError: n 不在 1..10
    """
    if not 1 <= n <= MAX_PATCHES:
        raise InputError(f"patch count must be in 1..{MAX_PATCHES}, got {n}")
    rng = SplitMix64(derive_seed(seed, "patch", asset.sku_id))
    patches = []
    for _ in range(n):
        if not jitter:
            patches.append(canonical_patch(asset, patch_size))
            continue
        patches.append(
            _crop_patch(
                asset,
                patch_size,
                angle=rng.uniform(-2.0, 2.0),
                scale=rng.uniform(0.97, 1.0),
                shift=(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                brightness=rng.uniform(0.9, 1.1),
            )
        )
    return patches
