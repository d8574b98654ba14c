"""
common 模块 - 基础设施层

目录结构:
    base.py           - 基础层: ServiceBase, Result[T]
    errors.py         - 异常类型与退出码
    config.py         - 配置层: RuntimeSettings, ExperimentConfig
    protocols.py      - 协议层: 接口定义, ServiceLocator
    services/         - 基础服务
        └── system.py       - 系统监控

使用方式:
    from skupatch.common import Result, ServiceBase, config
    from skupatch.common.protocols import ServiceLocator, TrainingServiceProtocol
"""

# ========== 基础层 ==========
from .base import (
    ServiceBase,
    Result,
    safe_call,
)

# ========== 异常 ==========
from .errors import (
    SkuPatchError,
    DimensionError,
    UsageError,
    ConfigError,
    InputError,
    NumericalError,
)

# ========== 配置层 ==========
from .config import (
    settings,
    RuntimeSettings,
    ModelConfig,
    TrainConfig,
    DataConfig,
    ExperimentConfig,
    load_config,
    format_config,
    config_hash,
)

# ========== 协议层 ==========
from .protocols import (
    ServiceLocator,
    DatasetServiceProtocol,
    TrainingServiceProtocol,
    EvaluationServiceProtocol,
    SystemMonitorProtocol,
)

# ========== 服务层 ==========
from .services import SystemMonitorService

__all__ = [
    # 基础层
    'ServiceBase',
    'Result',
    'safe_call',

    # 异常
    'SkuPatchError',
    'DimensionError',
    'UsageError',
    'ConfigError',
    'InputError',
    'NumericalError',

    # 配置层
    'settings',
    'RuntimeSettings',
    'ModelConfig',
    'TrainConfig',
    'DataConfig',
    'ExperimentConfig',
    'load_config',
    'format_config',
    'config_hash',

    # 协议层
    'ServiceLocator',
    'DatasetServiceProtocol',
    'TrainingServiceProtocol',
    'EvaluationServiceProtocol',
    'SystemMonitorProtocol',

    # 服务层
    'SystemMonitorService',
]
