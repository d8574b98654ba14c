"""
训练与评估 - 场景与补丁加载

按清单把场景图、实例掩码和补丁读入内存，带缓存。
读取失败抛出 InputError（由服务层转换为 Result）。
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from ..common.base import Result
from ..common.errors import InputError
from ..synth.models import DatasetManifest
from ..utils.image import read_pgm, read_ppm
from .models import LoadedInstance, LoadedScene


def _unwrap(result: Result[np.ndarray]) -> np.ndarray:
    if not result:
        raise InputError(result.error)
    return result.value


def read_rasters(paths: Sequence[Path]) -> List[np.ndarray]:
    return [_unwrap(read_ppm(p)) for p in paths]


class SceneRepository:
    """清单中场景与补丁的惰性缓存，可被多个评估线程共享"""

    def __init__(self, manifest: DatasetManifest) -> None:
        self.manifest = manifest
        self._scenes: Dict[int, LoadedScene] = {}
        self._patches: Dict[int, List[np.ndarray]] = {}
        self._lock = threading.Lock()

    def scene(self, index: int) -> LoadedScene:
        with self._lock:
            cached = self._scenes.get(index)
        if cached is not None:
            return cached
        entry = self.manifest.scenes[index]
        image = _unwrap(read_ppm(self.manifest.resolve(entry.path)))
        loaded = LoadedScene(index, entry.path, entry.split, entry.clutter, image)
        for inst in entry.instances:
            mask = _unwrap(read_pgm(self.manifest.resolve(inst.mask_path)))
            if mask.shape != image.shape[:2]:
                raise InputError(f"{inst.mask_path}: mask size {mask.shape} differs from scene {image.shape[:2]}")
            loaded.instances.append(LoadedInstance(inst.sku_id, inst.box, mask))
        with self._lock:
            self._scenes[index] = loaded
        return loaded

    def indices(self, split: str) -> List[int]:
        return [i for i, s in enumerate(self.manifest.scenes) if s.split == split]

    def patches(self, sku_id: int) -> List[np.ndarray]:
        with self._lock:
            cached = self._patches.get(sku_id)
        if cached is not None:
            return cached
        paths = self.manifest.patch_paths(sku_id)
        if not paths:
            raise InputError(f"manifest lists no patches for sku {sku_id}")
        loaded = read_rasters(paths)
        with self._lock:
            self._patches[sku_id] = loaded
        return loaded
