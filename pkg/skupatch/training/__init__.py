"""
training 模块 - 优化器、检查点、训练 / 评估服务与自检

目录结构:
    optimizer.py   - AdamW, 梯度裁剪, 线性预热
    checkpoint.py  - SKUP1 二进制检查点
    models.py      - 训练与推理的数据模型
    repository.py  - 场景 / 补丁加载缓存
    service.py     - TrainingService, EvaluationService
    selftest.py    - selftest 命令的检查套件
"""

from .checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .models import InferenceDetection, InferenceResult, LoadedScene, StepSample, TrainSummary
from .optimizer import AdamW, OptimizerState, clip_grad_norm, warmup_lr
from .repository import SceneRepository
from .selftest import SuiteResult, run_selftest, tiny_config
from .service import (
    EvaluationService,
    TrainingService,
    get_evaluation_service,
    get_training_service,
    load_model,
)

__all__ = [
    "AdamW",
    "OptimizerState",
    "clip_grad_norm",
    "warmup_lr",
    "MAGIC",
    "Checkpoint",
    "CheckpointError",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "LoadedScene",
    "StepSample",
    "TrainSummary",
    "InferenceDetection",
    "InferenceResult",
    "SceneRepository",
    "TrainingService",
    "EvaluationService",
    "get_training_service",
    "get_evaluation_service",
    "load_model",
    "SuiteResult",
    "run_selftest",
    "tiny_config",
]
