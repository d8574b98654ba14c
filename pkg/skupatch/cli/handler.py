"""
命令处理器基类 - 子命令业务逻辑接口

Handler 只负责业务处理，参数解析与分发由 CommandRegistry 完成。
"""

from __future__ import annotations

import argparse
import logging
import sys
from abc import ABC, abstractmethod
from typing import Optional, Set, Type, TypeVar

from ..common.base import Result
from ..common.errors import SkuPatchError, UsageError
from ..common.protocols import ServiceLocator

P = TypeVar("P")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class CommandHandler(ABC):
    """子命令处理器基类"""

    # 元数据（子类配置）
    name: str = ""
    description: str = ""
    command: Optional[str] = None
    aliases: Optional[Set[str]] = None
    usage: str = ""
    hidden_in_help: bool = False

    def __init__(self) -> None:
        self.logger = logging.getLogger(f"skupatch.cli.{self.command or self.name}")

    def configure(self, parser: argparse.ArgumentParser) -> None:
        """添加子命令参数（可重写）"""

    @abstractmethod
    def handle(self, args: argparse.Namespace) -> int:
        """执行命令，返回退出码（子类必须实现）"""

    def handle_error(self, error: SkuPatchError) -> int:
        """异常 → 退出码（可重写）"""
        self.fail(f"{type(error).__name__}: {error}")
        return error.exit_code

    def echo(self, text: str) -> None:
        """写到标准输出"""
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        sys.stdout.flush()

    def fail(self, text: str) -> None:
        sys.stderr.write(f"error: {text}\n")
        sys.stderr.flush()

    def unwrap(self, result: Result) -> object:
        """Result 失败时转为 UsageError（退出码 2）"""
        if not result:
            raise UsageError(result.error)
        return result.value

    @staticmethod
    def locate(protocol: Type[P]) -> P:
        service = ServiceLocator.get(protocol)
        if service is None:
            raise UsageError(f"service {protocol.__name__} is not registered")
        return service
