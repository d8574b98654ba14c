"""
cli 模块 - 命令行入口

目录结构:
    handler.py    - CommandHandler 基类
    registry.py   - CommandRegistry（解析器构建与分发）
    commands.py   - 各子命令

退出码: 0 成功, 2 输入 / 配置错误, 3 数值失败
"""

from __future__ import annotations

import logging
import sys
from typing import Optional, Sequence

from ..common.config import settings
from .commands import ALL_COMMANDS, register_commands
from .handler import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, CommandHandler
from .registry import CommandInfo, CommandRegistry, get_command_registry

LOG_FORMAT = "%(asctime)s | %(levelname)-7s | %(name)s - %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """日志输出到 stderr，标准输出只留给命令结果"""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=LOG_FORMAT,
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )


def init_services() -> None:
    """初始化所有核心服务"""
    from ..common.services import SystemMonitorService
    from ..synth import DatasetService
    from ..training import EvaluationService, TrainingService

    # 初始化并注册所有服务到 ServiceLocator
    SystemMonitorService.get_instance().initialize()
    DatasetService.get_instance().initialize()
    TrainingService.get_instance().initialize()
    EvaluationService.get_instance().initialize()

    registry = get_command_registry()
    registry.initialize()
    register_commands(registry)
    logging.getLogger("skupatch").debug("核心服务初始化完成")


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    init_services()
    return get_command_registry().dispatch(sys.argv[1:] if argv is None else argv)


__all__ = [
    "CommandHandler",
    "CommandInfo",
    "CommandRegistry",
    "get_command_registry",
    "ALL_COMMANDS",
    "register_commands",
    "init_services",
    "setup_logging",
    "main",
    "EXIT_OK",
    "EXIT_INPUT",
    "EXIT_NUMERICAL",
]
