"""
系统监控服务

服务层 - 实现 SystemMonitorProtocol 协议

selftest 与训练开始时打印的运行环境，以及评估 / 数据生成的线程数
（SKUPATCH_THREADS 优先，否则取物理核数）。
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass
from typing import List

import numpy as np

from ..base import ServiceBase
from ..config import settings
from ..protocols import ServiceLocator, SystemMonitorProtocol


@dataclass(frozen=True)
class ProcessStatus:
    """一次采样的进程与主机状态；psutil 缺失时 rss_mb / cpu_percent 为 None"""

    physical_cores: int
    logical_cores: int
    rss_mb: float | None
    cpu_percent: float | None
    threads: int | None
    uptime_seconds: float

    def as_lines(self) -> List[str]:
        lines = [
            f"Platform: {platform.platform()} / Python {platform.python_version()} / numpy {np.__version__}",
            f"Cores: {self.physical_cores} physical, {self.logical_cores} logical",
        ]
        if self.rss_mb is None:
            lines.append("Process: N/A (psutil not installed)")
        else:
            lines.append(f"Process: {self.rss_mb:.1f}MB RSS, CPU {self.cpu_percent}%, {self.threads} threads")
        return lines


class SystemMonitorService(ServiceBase, SystemMonitorProtocol):
    """
    系统监控服务

    initialize() 后注册到 ServiceLocator，评估服务从那里取线程数。
    """

    _logger_name = "skupatch.services.system"

    def __init__(self) -> None:
        super().__init__()
        self._started = time.monotonic()
        try:
            import psutil
        except ImportError:
            self._psutil = None
            self._process = None
            self.logger.warning("psutil not installed, falling back to one worker thread")
        else:
            self._psutil = psutil
            self._process = psutil.Process()

    def initialize(self) -> None:
        if self._initialized:
            return
        self._initialized = True
        ServiceLocator.register(SystemMonitorProtocol, self)
        self.logger.debug("System Monitor Service initialized")

    def status(self) -> ProcessStatus:
        uptime = time.monotonic() - self._started
        if self._psutil is None:
            return ProcessStatus(1, 1, None, None, None, uptime)
        logical = self._psutil.cpu_count(logical=True) or 1
        physical = self._psutil.cpu_count(logical=False) or logical
        with self._process.oneshot():
            rss = self._process.memory_info().rss / (1024 * 1024)
            cpu = round(self._process.cpu_percent(interval=None), 1)
            threads = self._process.num_threads()
        return ProcessStatus(physical, logical, rss, cpu, threads, uptime)

    # ========== SystemMonitorProtocol 实现 ==========

    def recommended_threads(self) -> int:
        if settings.threads > 0:
            return settings.threads
        return max(1, self.status().physical_cores)

    def get_status_text(self) -> str:
        lines = self.status().as_lines()
        lines.append(f"Worker threads: {self.recommended_threads()}")
        return "\n".join(lines)


def get_system_monitor_service() -> SystemMonitorService:
    """获取系统监控服务实例"""
    return SystemMonitorService.get_instance()
