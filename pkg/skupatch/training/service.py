"""
训练与评估服务

服务层 - 实现 TrainingServiceProtocol / EvaluationServiceProtocol 协议

    TrainingService     - 单线程训练循环，写出 loss_log.txt、best.ckpt、last.ckpt
    EvaluationService   - 检查点评估（场景 × SKU 并行）与单图推理

使用方式:
    >>> trainer = get_training_service()
    >>> result = trainer.train(config, manifest, seed=0, out_dir=Path("runs/a"))
    >>> if result:
    ...     print(result.value.as_text())
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..common.base import Result, ServiceBase
from ..common.config import ExperimentConfig, ModelConfig
from ..common.errors import InputError, NumericalError, SkuPatchError
from ..common.protocols import (
    EvaluationServiceProtocol,
    ServiceLocator,
    SystemMonitorProtocol,
    TrainingServiceProtocol,
)
from ..matching import SetCriterion, TargetSet, build_targets, cxcywh_to_xyxy
from ..metrics import Detection, EvalReport, GroundTruth, SceneResult, evaluate_scenes
from ..model import MaskCodec, Prediction, SkuPatchNet
from ..synth.generator import MAX_PATCHES
from ..synth.models import DatasetManifest
from ..utils.image import draw_overlay, read_ppm, resize_rgb, write_pgm, write_ppm
from .checkpoint import load_checkpoint, save_checkpoint
from .models import InferenceDetection, InferenceResult, LoadedScene, StepSample, TrainSummary
from .optimizer import AdamW, clip_grad_norm, warmup_lr
from .repository import SceneRepository, read_rasters

LOSS_LOG = "loss_log.txt"
LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"


def fit_image(image: np.ndarray, size: int) -> np.ndarray:
    """缩放到网络输入边长"""
    return resize_rgb(image, (size, size))


def scene_targets(scene: LoadedScene, sku_id: int, codec: MaskCodec) -> TargetSet:
    instances = scene.instances_of(sku_id)
    return build_targets([i.box for i in instances], [i.mask for i in instances], scene.shape, codec)


def to_detections(predictions: Sequence[Prediction], shape: Tuple[int, int], codec: MaskCodec) -> List[Detection]:
    """网络输出 → 原图分辨率下的掩码与像素框"""
    h, w = shape
    scale = np.array([w, h, w, h], dtype=np.float64)
    out = []
    for pred in predictions:
        box = np.clip(cxcywh_to_xyxy(pred.box) * scale, 0, scale)
        out.append(Detection(pred.object_score, codec.decode_raster(pred.mask_vector, shape), box))
    return out


def load_model(path: Path) -> Result[SkuPatchNet]:
    """从检查点恢复网络（参数转为检查点配置中的精度）"""
    loaded = load_checkpoint(path)
    if not loaded:
        return Result.fail(loaded.error)
    ckpt = loaded.value
    model = SkuPatchNet(ckpt.config, seed=0)
    try:
        model.load_state_dict(ckpt.tensors)
    except SkuPatchError as e:
        return Result.fail(f"检查点与网络结构不符: {e}")
    return Result.success(model)


# ==================== 训练 ====================

class TrainingService(ServiceBase, TrainingServiceProtocol):
    """
    训练服务

    数据顺序由 numpy Generator(seed + 1) 决定，单线程执行，
    相同 (配置, 种子) 得到相同的损失日志。
    """

    _logger_name = "skupatch.training"

    def initialize(self) -> None:
        if self._initialized:
            return
        self._initialized = True
        ServiceLocator.register(TrainingServiceProtocol, self)
        self.logger.debug("Training Service initialized")

    def sample_step(
        self,
        rng: np.random.Generator,
        repo: SceneRepository,
        indices: Sequence[int],
        seen: Sequence[int],
        config: ExperimentConfig,
    ) -> StepSample:
        """随机选场景与查询 SKU；以 negative_rate 的概率选场景中不存在的 seen SKU"""
        scene_index = int(indices[int(rng.integers(len(indices)))])
        present = repo.scene(scene_index).sku_ids
        absent = [s for s in seen if s not in present]
        negative = bool(absent) and (not present or rng.random() < config.train.negative_rate)
        if negative:
            sku_id = int(absent[int(rng.integers(len(absent)))])
        else:
            sku_id = int(present[int(rng.integers(len(present)))])
        available = len(repo.patches(sku_id))
        n = int(rng.integers(1, min(config.train.train_patches, available) + 1))
        picks = tuple(int(i) for i in rng.choice(available, size=n, replace=False))
        return StepSample(scene_index, sku_id, picks, negative)

    def train(
        self,
        config: ExperimentConfig,
        manifest: DatasetManifest,
        seed: int,
        out_dir: Path,
    ) -> Result[TrainSummary]:
        """
        Returns:
            Result[TrainSummary]: 输入类错误返回 Result.fail；NumericalError 继续向上抛出
        """
        self.ensure_initialized()
        try:
            return Result.success(self._train(config, manifest, seed, Path(out_dir)))
        except NumericalError:
            raise
        except (SkuPatchError, OSError) as e:
            self.logger.error(f"训练失败: {e}")
            return Result.fail(f"训练失败: {e}")

    def _train(self, config: ExperimentConfig, manifest: DatasetManifest, seed: int, out: Path) -> TrainSummary:
        repo = SceneRepository(manifest)
        indices = [i for i in repo.indices("train") if repo.scene(i).instances]
        if not indices:
            raise InputError("manifest has no training scenes with instances")

        model_cfg = config.model
        model = SkuPatchNet(model_cfg, seed=seed)
        params = list(model.named_parameters())
        optimizer = AdamW.from_config(params, config.train)
        criterion = SetCriterion(model_cfg)
        codec = MaskCodec(model_cfg.mask_grid, model_cfg.mask_coeffs)
        rng = np.random.default_rng(seed + 1)

        monitor = ServiceLocator.get(SystemMonitorProtocol)
        if monitor:
            self.logger.info("训练开始\n" + monitor.get_status_text())
        self.logger.info(
            f"参数量 {model.num_parameters()}，训练场景 {len(indices)}，步数 {config.train.steps}"
        )

        out.mkdir(parents=True, exist_ok=True)
        log_path = out / LOSS_LOG
        best_path: Optional[Path] = None
        best_loss = float("inf")
        initial_loss = final_loss = float("nan")
        window: List[float] = []

        with log_path.open("w", encoding="utf-8") as log:
            for step in range(config.train.steps):
                sample = self.sample_step(rng, repo, indices, manifest.seen, config)
                scene = repo.scene(sample.scene)
                patches = [repo.patches(sample.sku_id)[i] for i in sample.patch_indices]
                targets = scene_targets(scene, sample.sku_id, codec)

                optimizer.zero_grad()
                output = model(fit_image(scene.image, model_cfg.image_size), patches)
                breakdown, _ = criterion(output, targets)
                objective = breakdown.objective
                value = objective.item()
                if not np.isfinite(value):
                    raise NumericalError(f"non-finite loss at step {step}")
                objective.backward()
                clip_grad_norm(params, config.train.grad_clip)
                optimizer.step(lr=warmup_lr(config.train.learning_rate, step, config.train.warmup_steps))

                if step == 0:
                    initial_loss = value
                final_loss = value
                window.append(value)

                if step % config.train.log_every == 0 or step == config.train.steps - 1:
                    line = breakdown.as_line(step)
                    log.write(line + "\n")
                    log.flush()
                    self.logger.info(line)

                if (step + 1) % config.train.checkpoint_every == 0 or step == config.train.steps - 1:
                    mean = float(np.mean(window))
                    window.clear()
                    if mean < best_loss:
                        best_loss = mean
                        best_path = save_checkpoint(out / BEST_CHECKPOINT, model_cfg, model.state_dict())

        last_path = save_checkpoint(out / LAST_CHECKPOINT, model_cfg, model.state_dict(), optimizer.state)
        summary = TrainSummary(
            steps=config.train.steps,
            initial_loss=initial_loss,
            final_loss=final_loss,
            best_loss=best_loss,
            last_checkpoint=last_path,
            best_checkpoint=best_path,
            loss_log=log_path,
        )
        self.logger.info("训练完成: " + summary.as_text().splitlines()[0])
        return summary


# ==================== 评估与推理 ====================

class EvaluationService(ServiceBase, EvaluationServiceProtocol):
    """
    评估服务

    split:
        unseen - 测试场景 × 每个 unseen SKU（场景中没有的 SKU 作为负样本）
        train  - 训练场景 × 场景中出现的 seen SKU
    """

    _logger_name = "skupatch.evaluation"

    def initialize(self) -> None:
        if self._initialized:
            return
        self._initialized = True
        ServiceLocator.register(EvaluationServiceProtocol, self)
        self.logger.debug("Evaluation Service initialized")

    def _workers(self) -> int:
        monitor = ServiceLocator.get(SystemMonitorProtocol)
        return monitor.recommended_threads() if monitor else 1

    @staticmethod
    def jobs(repo: SceneRepository, split: str) -> List[Tuple[int, int]]:
        manifest = repo.manifest
        if split == "unseen":
            return [(i, sku) for i in repo.indices("test") for sku in manifest.unseen]
        if split == "train":
            return [(i, sku) for i in repo.indices("train") for sku in manifest.scenes[i].sku_ids]
        raise InputError(f"unknown split {split!r} (expected unseen or train)")

    def evaluate(
        self,
        checkpoint_path: Path,
        manifest: DatasetManifest,
        split: str,
        n_patches: int,
        zero_patches: bool = False,
        score_threshold: float = 0.5,
    ) -> Result[EvalReport]:
        self.ensure_initialized()
        if not 1 <= n_patches <= MAX_PATCHES:
            return Result.fail(f"patches must be in 1..{MAX_PATCHES}, got {n_patches}")
        loaded = load_model(Path(checkpoint_path))
        if not loaded:
            return Result.fail(loaded.error)
        try:
            report = self._evaluate(loaded.value, manifest, split, n_patches, zero_patches, score_threshold)
        except NumericalError:
            raise
        except (SkuPatchError, OSError) as e:
            self.logger.error(f"评估失败: {e}")
            return Result.fail(f"评估失败: {e}")
        return Result.success(report)

    def _evaluate(
        self,
        model: SkuPatchNet,
        manifest: DatasetManifest,
        split: str,
        n_patches: int,
        zero_patches: bool,
        score_threshold: float,
    ) -> EvalReport:
        repo = SceneRepository(manifest)
        jobs = self.jobs(repo, split)
        cfg: ModelConfig = model.config
        codec = MaskCodec(cfg.mask_grid, cfg.mask_coeffs)

        def run(job: Tuple[int, int]) -> SceneResult:
            index, sku_id = job
            scene = repo.scene(index)
            patches = repo.patches(sku_id)[:n_patches]
            predictions = model.predict(fit_image(scene.image, cfg.image_size), patches, zero_patches=zero_patches)
            truths = [GroundTruth(i.mask, np.asarray(i.box, dtype=np.float64)) for i in scene.instances_of(sku_id)]
            return SceneResult(
                key=f"{index:04d}.sku{sku_id:03d}",
                clutter=scene.clutter,
                detections=to_detections(predictions, scene.shape, codec),
                truths=truths,
            )

        self.logger.info(f"评估 split={split} 组合数={len(jobs)} 补丁数={n_patches} zero_patches={zero_patches}")
        with ThreadPoolExecutor(max_workers=self._workers()) as pool:
            results = list(pool.map(run, jobs))
        return evaluate_scenes(results, score_threshold)

    def infer(
        self,
        checkpoint_path: Path,
        image_path: Path,
        patch_paths: Sequence[Path],
        out_dir: Path,
        score_threshold: float = 0.5,
    ) -> Result[InferenceResult]:
        """写出 mask_XX.pgm、detections.txt 与 overlay.ppm"""
        self.ensure_initialized()
        if not 1 <= len(patch_paths) <= MAX_PATCHES:
            return Result.fail(f"need 1..{MAX_PATCHES} patch files, got {len(patch_paths)}")
        loaded = load_model(Path(checkpoint_path))
        if not loaded:
            return Result.fail(loaded.error)
        image = read_ppm(image_path)
        if not image:
            return Result.fail(image.error)
        try:
            return Result.success(
                self._infer(loaded.value, image.value, read_rasters(patch_paths), Path(out_dir), score_threshold)
            )
        except NumericalError:
            raise
        except (SkuPatchError, OSError) as e:
            return Result.fail(f"推理失败: {e}")

    def _infer(
        self,
        model: SkuPatchNet,
        image: np.ndarray,
        patches: List[np.ndarray],
        out: Path,
        score_threshold: float,
    ) -> InferenceResult:
        cfg: ModelConfig = model.config
        codec = MaskCodec(cfg.mask_grid, cfg.mask_coeffs)
        shape = (int(image.shape[0]), int(image.shape[1]))
        detections = to_detections(model.predict(fit_image(image, cfg.image_size), patches), shape, codec)
        kept = sorted(
            (d for d in detections if d.score >= score_threshold),
            key=lambda d: -d.score,
        )

        out.mkdir(parents=True, exist_ok=True)
        records: List[InferenceDetection] = []
        for i, det in enumerate(kept):
            mask_file = f"mask_{i:02d}.pgm"
            write_pgm(out / mask_file, det.mask)
            x0, y0, x1, y1 = (int(round(v)) for v in det.box)
            records.append(InferenceDetection(i, det.score, (x0, y0, x1, y1), mask_file))

        det_file = out / "detections.txt"
        det_file.write_text("".join(r.as_line() + "\n" for r in records), encoding="utf-8")
        overlay = draw_overlay(
            image,
            [d.mask for d in kept],
            [r.box for r in records],
            labels=[f"{r.score:.2f}" for r in records],
        )
        overlay_file = out / "overlay.ppm"
        write_ppm(overlay_file, overlay)
        self.logger.info(f"推理完成: {len(records)} 个检测 → {out}")
        return InferenceResult(records, det_file, overlay_file)


def get_training_service() -> TrainingService:
    """获取训练服务实例"""
    return TrainingService.get_instance()


def get_evaluation_service() -> EvaluationService:
    """获取评估服务实例"""
    return EvaluationService.get_instance()
