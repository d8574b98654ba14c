"""
异常模块 - 数值内核使用的异常类型

每个异常携带命令行退出码：输入类错误为 2，数值失败为 3。
"""


class SkuPatchError(Exception):
    """所有 skupatch 异常的基类"""

    exit_code: int = 2


class DimensionError(SkuPatchError):
    """张量形状或维度不匹配"""


class UsageError(SkuPatchError):
    """调用方式不正确（如对非标量调用 backward）"""


class ConfigError(SkuPatchError):
    """配置非法或与数据不一致"""


class InputError(SkuPatchError):
    """输入数据非法（如零面积补丁、代价矩阵含 NaN）"""


class NumericalError(SkuPatchError):
    """数值失败：NaN/Inf 梯度或输出"""

    exit_code = 3


__all__ = [
    "SkuPatchError",
    "DimensionError",
    "UsageError",
    "ConfigError",
    "InputError",
    "NumericalError",
]
