"""
synth 模块 - 合成 SKU 数据

目录结构:
    rng.py         - SplitMix64 与种子派生
    models.py      - SkuAsset, Scene, DatasetManifest
    generator.py   - SKU 外观、场景合成、补丁提取
    repository.py  - 清单读写
    service.py     - DatasetService（gen-data）
"""

from .generator import (
    FAMILIES,
    MAX_PATCHES,
    canonical_patch,
    compose_scene,
    ellipse_mask,
    extract_patches,
    generate_catalog,
    generate_sku,
)
from .models import (
    DatasetManifest,
    ManifestInstance,
    ManifestScene,
    Scene,
    SceneInstance,
    SkuAsset,
)
from .repository import MANIFEST_NAME, ManifestRepository, format_manifest, parse_manifest
from .rng import SplitMix64, derive_seed
from .service import DatasetService, get_dataset_service

__all__ = [
    "SplitMix64",
    "derive_seed",
    "SkuAsset",
    "Scene",
    "SceneInstance",
    "DatasetManifest",
    "ManifestScene",
    "ManifestInstance",
    "FAMILIES",
    "MAX_PATCHES",
    "generate_sku",
    "generate_catalog",
    "compose_scene",
    "extract_patches",
    "canonical_patch",
    "ellipse_mask",
    "MANIFEST_NAME",
    "ManifestRepository",
    "format_manifest",
    "parse_manifest",
    "DatasetService",
    "get_dataset_service",
]
