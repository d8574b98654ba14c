"""
协议层 - 定义层间通信接口

命令层只依赖此处的抽象接口，服务层实现接口并在初始化完成后注册到服务定位器。

分层依赖关系:
    命令层 ──依赖──> 协议层 <──实现── 服务层
    服务层 ──依赖──> 模型层 / 数值内核

子命令通过 CommandHandler.locate() 取服务，找不到时报 UsageError（退出码 2）。
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Optional, Sequence, Type, TypeVar

from .base import Result


# ========== 服务协议接口 ==========

class DatasetServiceProtocol(ABC):
    """合成数据集服务协议"""

    @abstractmethod
    def build_dataset(self, config: Any, seed: int, out_dir: Path) -> Result[Any]:
        """生成数据集并写出清单，返回 DatasetManifest"""

    @abstractmethod
    def load_manifest(self, path: Path) -> Result[Any]:
        """读取并校验清单"""


class TrainingServiceProtocol(ABC):
    """训练服务协议"""

    @abstractmethod
    def train(self, config: Any, manifest: Any, seed: int, out_dir: Path) -> Result[Any]:
        """训练模型，写出检查点与损失日志"""


class EvaluationServiceProtocol(ABC):
    """评估与推理服务协议"""

    @abstractmethod
    def evaluate(
        self,
        checkpoint_path: Path,
        manifest: Any,
        split: str,
        n_patches: int,
        zero_patches: bool = False,
        score_threshold: float = 0.5,
    ) -> Result[Any]:
        """在给定划分上评估，返回 EvalReport"""

    @abstractmethod
    def infer(
        self,
        checkpoint_path: Path,
        image_path: Path,
        patch_paths: Sequence[Path],
        out_dir: Path,
        score_threshold: float = 0.5,
    ) -> Result[Any]:
        """单张图像推理，写出掩码、检测文本与叠加图"""


class SystemMonitorProtocol(ABC):
    """系统监控服务协议"""

    @abstractmethod
    def get_status_text(self) -> str:
        """获取格式化的状态文本"""

    @abstractmethod
    def recommended_threads(self) -> int:
        """在 SKUPATCH_THREADS 约束下推荐的并行线程数"""


# ========== 服务定位器 ==========

T = TypeVar('T')


class ServiceLocator:
    """
    服务定位器 - 解耦服务的获取与实现

    Example:
        # 服务层初始化完成后注册
        service.initialize()
        ServiceLocator.register(TrainingServiceProtocol, service)

        # 命令层通过 locator 获取
        trainer = ServiceLocator.get(TrainingServiceProtocol)
    """

    _services: dict[Type[Any], Any] = {}

    @classmethod
    def register(cls, protocol: Type[T], implementation: T) -> None:
        """注册服务实现（必须已完成初始化）"""
        cls._services[protocol] = implementation

    @classmethod
    def get(cls, protocol: Type[T]) -> Optional[T]:
        """获取服务实现，未注册返回 None"""
        return cls._services.get(protocol)

    @classmethod
    def has(cls, protocol: Type[Any]) -> bool:
        """检查是否已注册某协议"""
        return protocol in cls._services

    @classmethod
    def clear(cls) -> None:
        """清空注册（用于测试）"""
        cls._services.clear()
