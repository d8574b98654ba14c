"""
合成数据 - 数据集服务

服务层 - 实现 DatasetServiceProtocol 协议

目录结构:
    <out>/manifest.txt
    <out>/skus/sku_003.ppm, sku_003.pgm
    <out>/patches/sku_003/patch_00.ppm ...
    <out>/train/scene_0000.ppm, scene_0000_m00.pgm ...
    <out>/test/...

场景按下标并行生成（各自派生种子），文件由主线程按顺序写出。
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Tuple

from ..common.base import Result, ServiceBase
from ..common.config import ExperimentConfig, config_hash
from ..common.errors import SkuPatchError
from ..common.protocols import DatasetServiceProtocol, ServiceLocator, SystemMonitorProtocol
from ..utils.image import write_pgm, write_ppm
from .generator import compose_scene, extract_patches, generate_catalog
from .models import DatasetManifest, ManifestInstance, ManifestScene, Scene, SkuAsset
from .repository import MANIFEST_NAME, ManifestRepository
from .rng import SplitMix64, derive_seed


class DatasetService(ServiceBase, DatasetServiceProtocol):
    """合成数据集的生成与加载"""

    _logger_name = "skupatch.synth"

    def __init__(self) -> None:
        super().__init__()
        self._repository = ManifestRepository()

    def initialize(self) -> None:
        if self._initialized:
            return
        self._initialized = True
        ServiceLocator.register(DatasetServiceProtocol, self)
        self.logger.debug("Dataset Service initialized")

    def _workers(self) -> int:
        monitor = ServiceLocator.get(SystemMonitorProtocol)
        return monitor.recommended_threads() if monitor else 1

    # ========== 场景 ==========

    @staticmethod
    def _pick_assets(
        split: str,
        seed: int,
        index: int,
        seen: Sequence[SkuAsset],
        unseen: Sequence[SkuAsset],
    ) -> List[SkuAsset]:
        """训练场景只用 seen；测试场景 1–2 个 unseen 加 0–2 个 seen 干扰项"""
        rng = SplitMix64(derive_seed(seed, split, "skus", index))
        if split == "train":
            return rng.sample(seen, rng.randint(1, min(4, len(seen))))
        chosen = rng.sample(unseen, rng.randint(1, min(2, len(unseen))))
        return chosen + rng.sample(seen, rng.randint(0, min(2, len(seen))))

    def _scene_jobs(
        self,
        config: ExperimentConfig,
        seed: int,
        seen: Sequence[SkuAsset],
        unseen: Sequence[SkuAsset],
    ) -> List[Tuple[str, int, List[SkuAsset]]]:
        jobs = []
        for split, count in (("train", config.data.train_scenes), ("test", config.data.test_scenes)):
            for index in range(count):
                jobs.append((split, index, self._pick_assets(split, seed, index, seen, unseen)))
        return jobs

    # ========== DatasetServiceProtocol 实现 ==========

    def build_dataset(self, config: ExperimentConfig, seed: int, out_dir: Path) -> Result[DatasetManifest]:
        """
        生成 SKU 目录、补丁、训练/测试场景与清单

        Returns:
            Result[DatasetManifest]: 失败时 error 描述原因
        """
        self.ensure_initialized()
        try:
            return Result.success(self._build(config, seed, Path(out_dir)))
        except (SkuPatchError, OSError) as e:
            self.logger.error(f"数据集生成失败: {e}")
            return Result.fail(f"数据集生成失败: {e}")

    def _build(self, config: ExperimentConfig, seed: int, out: Path) -> DatasetManifest:
        data = config.data
        catalog = generate_catalog(seed, data.num_seen + data.num_unseen, data.asset_size)
        seen, unseen = catalog[: data.num_seen], catalog[data.num_seen:]
        self.logger.info(
            f"生成数据集: seed={seed} seen={len(seen)} unseen={len(unseen)} "
            f"train={data.train_scenes} test={data.test_scenes}"
        )

        manifest = DatasetManifest(
            seed=seed,
            config_hash=config_hash(config),
            image_size=data.scene_size,
            seen=[a.sku_id for a in seen],
            unseen=[a.sku_id for a in unseen],
            root=out,
        )

        for asset in catalog:
            write_ppm(out / "skus" / f"sku_{asset.sku_id:03d}.ppm", asset.raster)
            write_pgm(out / "skus" / f"sku_{asset.sku_id:03d}.pgm", asset.mask)
            paths = []
            for j, patch in enumerate(
                extract_patches(asset, data.patches_per_sku, seed, config.model.patch_size)
            ):
                rel = f"patches/sku_{asset.sku_id:03d}/patch_{j:02d}.ppm"
                write_ppm(out / rel, patch)
                paths.append(rel)
            manifest.patches[asset.sku_id] = paths

        jobs = self._scene_jobs(config, seed, seen, unseen)

        def render(job: Tuple[str, int, List[SkuAsset]]) -> Scene:
            split, index, assets = job
            return compose_scene(assets, data, derive_seed(seed, split, "scene", index))

        with ThreadPoolExecutor(max_workers=self._workers()) as pool:
            scenes = list(pool.map(render, jobs))

        for (split, index, _), scene in zip(jobs, scenes):
            manifest.scenes.append(self._write_scene(out, split, index, scene))

        self._repository.save(manifest, out / MANIFEST_NAME)
        return manifest

    @staticmethod
    def _write_scene(out: Path, split: str, index: int, scene: Scene) -> ManifestScene:
        rel = f"{split}/scene_{index:04d}.ppm"
        write_ppm(out / rel, scene.image)
        entry = ManifestScene(rel, scene.clutter, split)
        for k, inst in enumerate(scene.instances):
            mask_rel = f"{split}/scene_{index:04d}_m{k:02d}.pgm"
            write_pgm(out / mask_rel, inst.mask)
            entry.instances.append(ManifestInstance(inst.sku_id, inst.box, mask_rel))
        return entry

    def load_manifest(self, path: Path) -> Result[DatasetManifest]:
        return self._repository.load(path)


def get_dataset_service() -> DatasetService:
    """获取数据集服务实例"""
    return DatasetService.get_instance()
