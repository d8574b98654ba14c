"""
检查点二进制格式

    "SKUP1"
    u32 配置文本长度 + ModelConfig 文本（key = value 行）
    u32 张量个数
    张量条目 × n:  u16 名称长度, 名称 (utf-8), u8 秩, u32 × 秩 各维, f32 小端数据
    u8 优化器标志
    [标志为 1]     u64 步数, f64 × 5 (lr, β₁, β₂, ε, wd), u32 条目数, 矩条目 (m:<名称>, v:<名称>)
    u32 CRC32（小端，覆盖之前的全部字节）

所有整数均为小端。
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..common.base import Result
from ..common.config import ModelConfig, format_section, parse_model_config
from ..common.errors import InputError
from .optimizer import OptimizerState

logger = logging.getLogger("skupatch.training")

MAGIC = b"SKUP1"


class CheckpointError(InputError):
    """检查点损坏或格式不符"""


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    optimizer: Optional[OptimizerState] = None


# ==================== 编码 ====================

def _encode_entry(name: str, array: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    arr = np.ascontiguousarray(array, dtype="<f4")
    head = struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts: List[bytes] = [MAGIC]
    text = format_section(ckpt.config).encode("utf-8")
    parts.append(struct.pack("<I", len(text)) + text)
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    parts.extend(_encode_entry(name, arr) for name, arr in ckpt.tensors.items())

    opt = ckpt.optimizer
    if opt is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<Q", opt.step) + struct.pack("<5d", *opt.hyper_parameters))
        parts.append(struct.pack("<I", 2 * len(opt.moments)))
        for name, (m, v) in opt.moments.items():
            parts.append(_encode_entry(f"m:{name}", m))
            parts.append(_encode_entry(f"v:{name}", v))

    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


# ==================== 解码 ====================

class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def entry(self) -> Tuple[str, np.ndarray]:
        (name_len,) = self.unpack("<H")
        name = self.take(name_len).decode("utf-8")
        (rank,) = self.unpack("<B")
        dims = self.unpack(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        payload = self.take(4 * count)
        return name, np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Raises:
        CheckpointError: 魔数、CRC、配置块或条目格式错误
    """
    if len(data) < len(MAGIC) + 4 or not data.startswith(MAGIC):
        raise CheckpointError("not a skupatch checkpoint (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch")

    reader = _Reader(body)
    reader.take(len(MAGIC))
    (text_len,) = reader.unpack("<I")
    parsed = parse_model_config(reader.take(text_len).decode("utf-8"))
    if not parsed:
        raise CheckpointError(parsed.error or "bad config block")

    (count,) = reader.unpack("<I")
    tensors = dict(reader.entry() for _ in range(count))

    optimizer = None
    (flag,) = reader.unpack("<B")
    if flag == 1:
        (step,) = reader.unpack("<Q")
        lr, beta1, beta2, eps, wd = reader.unpack("<5d")
        (moment_count,) = reader.unpack("<I")
        entries = dict(reader.entry() for _ in range(moment_count))
        names = [key[2:] for key in entries if key.startswith("m:")]
        moments = {}
        for name in names:
            if f"v:{name}" not in entries:
                raise CheckpointError(f"missing second moment for {name!r}")
            moments[name] = (entries[f"m:{name}"], entries[f"v:{name}"])
        optimizer = OptimizerState(step, lr, beta1, beta2, eps, wd, moments)
    elif flag != 0:
        raise CheckpointError(f"bad optimizer flag {flag}")

    if reader.pos != len(body):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(parsed.value, tensors, optimizer)


# ==================== 文件 ====================

def save_checkpoint(
    path: str | Path,
    config: ModelConfig,
    tensors: Dict[str, np.ndarray],
    optimizer: Optional[OptimizerState] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(Checkpoint(config, tensors, optimizer)))
    logger.debug(f"检查点已写出: {path}")
    return path


def load_checkpoint(path: str | Path) -> Result[Checkpoint]:
    """读取并校验检查点，失败返回 Result.fail"""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        return Result.fail(f"读取检查点失败: {e}")
    try:
        return Result.success(decode_checkpoint(data))
    except (CheckpointError, UnicodeDecodeError, ValueError) as e:
        return Result.fail(f"检查点无效 [{path}]: {e}")
