"""
services 子模块 - 基础服务实现

只包含与具体业务无关的服务；数据集、训练、评估服务位于各自的功能包中。
"""

from .system import SystemMonitorService, ProcessStatus

__all__ = [
    'SystemMonitorService',
    'ProcessStatus',
]
