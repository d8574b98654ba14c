"""
计数器式随机数发生器

SplitMix64 只用 Python 整数运算，输出与平台、numpy 版本无关，
数据集由 (配置, 种子) 逐位确定。

Example:
    >>> rng = SplitMix64(derive_seed(7, "scene", 3))
    >>> rng.randint(3, 6)
"""

from __future__ import annotations

import zlib
from typing import List, MutableSequence, Sequence, TypeVar, Union

T = TypeVar("T")

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """由主种子和若干键派生子种子（字符串键取 CRC32）"""
    state = seed & _MASK
    for key in keys:
        value = zlib.crc32(key.encode("utf-8")) if isinstance(key, str) else int(key) & _MASK
        state = _mix((state + _GOLDEN + _mix(value + _GOLDEN)) & _MASK)
    return state


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix(self.state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """[low, high) 上的均匀分布，53 位精度"""
        return low + (high - low) * ((self.next_u64() >> 11) * (1.0 / (1 << 53)))

    def randint(self, low: int, high: int) -> int:
        """[low, high] 闭区间整数"""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + self.next_u64() % (high - low + 1)

    def choice(self, items: Sequence[T]) -> T:
        if not items:
            raise ValueError("choice from an empty sequence")
        return items[self.randint(0, len(items) - 1)]

    def shuffle(self, items: MutableSequence[T]) -> None:
        """原地 Fisher-Yates 洗牌"""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: Sequence[T], k: int) -> List[T]:
        pool = list(items)
        self.shuffle(pool)
        return pool[:k]
