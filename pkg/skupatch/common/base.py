"""
基础模块 - 服务单例与 Result

    ServiceBase  - 进程内单例服务（数据集、训练、评估、系统监控、命令注册表）
    Result[T]    - 文件读取、配置解析、检查点加载等可能因用户输入失败的操作的返回值
    safe_call    - 把抛出 I/O 或解析异常的调用包装为 Result

数值内核不返回 Result，直接抛出 common.errors 中的异常。

    >>> def parse_seed(text: str) -> Result[int]:
    ...     if not text.isdigit():
    ...         return Result.fail("种子必须是非负整数")
    ...     return Result.success(int(text))
"""

from __future__ import annotations

import logging
import threading
from abc import ABC
from dataclasses import dataclass
from typing import Callable, Dict, Generic, Optional, Tuple, Type, TypeVar

T = TypeVar("T")
S = TypeVar("S", bound="ServiceBase")


class ServiceBase(ABC):
    """
    服务基类

    每个子类全局一个实例，由 get_instance() 懒创建；initialize() 幂等，
    子类在其中把自己注册到 ServiceLocator。logger 名称取自 _logger_name。
    """

    _instances: Dict[Type["ServiceBase"], "ServiceBase"] = {}
    _instances_lock = threading.Lock()
    _logger_name = "skupatch.services"

    def __init__(self) -> None:
        self._initialized = False
        self.logger = logging.getLogger(self._logger_name)

    @classmethod
    def get_instance(cls: Type[S]) -> S:
        """评估线程与主线程可能同时取实例，创建过程加锁"""
        with ServiceBase._instances_lock:
            instance = cls._instances.get(cls)
            if instance is None:
                instance = cls()
                cls._instances[cls] = instance
        return instance  # type: ignore[return-value]

    def ensure_initialized(self) -> None:
        if not self._initialized:
            self.initialize()

    def initialize(self) -> None:
        self._initialized = True


@dataclass(frozen=True, slots=True)
class Result(Generic[T]):
    """
    成功时 value 有值、error 为 None；失败时 error 为可读的原因

    布尔值即是否成功:
        >>> loaded = load_config("desk.conf")
        >>> if not loaded:
        ...     print(loaded.error)
    """

    value: Optional[T] = None
    error: Optional[str] = None

    @property
    def is_success(self) -> bool:
        return self.error is None

    @property
    def is_failure(self) -> bool:
        return self.error is not None

    def __bool__(self) -> bool:
        return self.error is None

    def unwrap(self) -> T:
        """失败时抛出 RuntimeError，消息带上 error"""
        if self.error is not None:
            raise RuntimeError(f"Cannot unwrap failed result: {self.error}")
        return self.value  # type: ignore[return-value]

    def unwrap_or(self, default: T) -> T:
        return default if self.error is not None else self.value  # type: ignore[return-value]

    @classmethod
    def ok(cls, value: T) -> "Result[T]":
        return cls(value=value)

    @classmethod
    def err(cls, error: str) -> "Result[T]":
        return cls(error=error)

    success = ok
    fail = err


def safe_call(
    func: Callable[..., T],
    *args,
    error_msg: str = "Operation failed",
    catch: Tuple[Type[BaseException], ...] = (OSError, ValueError),
    **kwargs,
) -> Result[T]:
    """
    调用 func，catch 中的异常转为 Result.fail("<error_msg>: <异常>")

    默认只接住 I/O 与解析类异常（Pillow 的 UnidentifiedImageError 属于 OSError），
    其余异常照常抛出。
    """
    try:
        return Result.success(func(*args, **kwargs))
    except catch as e:
        return Result.fail(f"{error_msg}: {e}")
