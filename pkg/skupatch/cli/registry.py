"""
命令注册表服务

收集所有子命令的元数据，构建 argparse 解析器并生成帮助信息。
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set

from ..common.base import ServiceBase
from ..common.errors import NumericalError, SkuPatchError
from .handler import EXIT_INPUT, EXIT_NUMERICAL, CommandHandler


@dataclass
class CommandInfo:
    """子命令信息"""
    name: str                           # 显示名称
    description: str                    # 功能描述
    command: str                        # 子命令
    aliases: Optional[Set[str]] = None  # 别名
    usage: str = ""                     # 使用说明
    hidden: bool = False                # 是否在帮助中隐藏


class CommandRegistry(ServiceBase):
    """
    命令注册表服务

    Example:
        >>> registry = CommandRegistry.get_instance()
        >>> registry.register(TrainHandler())
        >>> exit_code = registry.dispatch(["train", "--data", "data/manifest.txt"])
    """

    _logger_name = "skupatch.cli"

    def __init__(self) -> None:
        super().__init__()
        self._handlers: Dict[str, CommandHandler] = {}
        self._commands: Dict[str, str] = {}   # command/alias -> command

    def register(self, handler: CommandHandler) -> None:
        if not handler.command:
            raise ValueError(f"handler {handler.name!r} has no command")
        if handler.command in self._handlers:
            self.logger.debug(f"命令已注册，跳过: {handler.command}")
            return
        self._handlers[handler.command] = handler
        self._commands[handler.command] = handler.command
        for alias in handler.aliases or ():
            self._commands[alias] = handler.command
        self.logger.debug(f"注册命令: {handler.command}")

    def get_handler(self, command: str) -> Optional[CommandHandler]:
        key = self._commands.get(command)
        return self._handlers.get(key) if key else None

    def get_all_commands(self, include_hidden: bool = False) -> List[CommandInfo]:
        infos = [
            CommandInfo(h.name, h.description, h.command or "", h.aliases, h.usage, h.hidden_in_help)
            for h in self._handlers.values()
        ]
        return infos if include_hidden else [i for i in infos if not i.hidden]

    def help_text(self) -> str:
        lines = ["skupatch 子命令:"]
        for info in self.get_all_commands():
            lines.append(f"  {info.command:<10} {info.description}")
        lines.append("使用 skupatch help <子命令> 查看详细用法")
        return "\n".join(lines)

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="skupatch", description="patch-guided SKU instance segmentation")
        sub = parser.add_subparsers(dest="command", metavar="<command>")
        for command, handler in self._handlers.items():
            p = sub.add_parser(
                command,
                aliases=sorted(handler.aliases or ()),
                help=handler.description,
                description=handler.usage or handler.description,
            )
            handler.configure(p)
        return parser

    def dispatch(self, argv: Sequence[str]) -> int:
        """
        解析参数并执行子命令

        Returns:
            退出码: 0 成功, 2 输入错误 / Result 失败, 3 数值失败
        """
        parser = self.build_parser()
        try:
            args = parser.parse_args(list(argv))
        except SystemExit as e:
            return EXIT_INPUT if e.code else 0
        if not args.command:
            parser.print_help()
            return EXIT_INPUT
        handler = self.get_handler(args.command)
        if handler is None:
            return EXIT_INPUT
        try:
            return handler.handle(args)
        except NumericalError as e:
            self.logger.error(f"数值失败: {e}")
            handler.handle_error(e)
            return EXIT_NUMERICAL
        except SkuPatchError as e:
            return handler.handle_error(e)

    def clear(self) -> None:
        """清空注册表（主要用于测试）"""
        self._handlers.clear()
        self._commands.clear()


def get_command_registry() -> CommandRegistry:
    """获取命令注册表实例"""
    return CommandRegistry.get_instance()
