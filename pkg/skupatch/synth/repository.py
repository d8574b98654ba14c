"""
合成数据 - 清单读写

清单为行式文本（# 开头为注释）:

    seed <n>
    config_hash <hex>
    image_size <n>
    seen <id> <id> ...
    unseen <id> <id> ...
    split train|test                                   # 作用于其后的 scene
    scene <path> <easy|hard> <num_instances>
    instance <sku_id> <x0> <y0> <x1> <y1> <mask_path>  # 属于前一个 scene，x1/y1 不含
    patch <sku_id> <path>

路径相对于清单文件所在目录。
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List

from ..common.base import Result
from .models import DatasetManifest, ManifestInstance, ManifestScene

logger = logging.getLogger("skupatch.synth")

MANIFEST_NAME = "manifest.txt"


class ManifestFormatError(ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")


def format_manifest(manifest: DatasetManifest) -> str:
    lines: List[str] = [
        "# skupatch dataset manifest",
        f"seed {manifest.seed}",
        f"config_hash {manifest.config_hash}",
        f"image_size {manifest.image_size}",
        "seen " + " ".join(str(i) for i in manifest.seen),
        "unseen " + " ".join(str(i) for i in manifest.unseen),
    ]
    split = None
    for scene in manifest.scenes:
        if scene.split != split:
            split = scene.split
            lines.append(f"split {split}")
        lines.append(f"scene {scene.path} {scene.clutter} {len(scene.instances)}")
        for inst in scene.instances:
            x0, y0, x1, y1 = inst.box
            lines.append(f"instance {inst.sku_id} {x0} {y0} {x1} {y1} {inst.mask_path}")
    for sku_id in sorted(manifest.patches):
        for path in manifest.patches[sku_id]:
            lines.append(f"patch {sku_id} {path}")
    return "\n".join(lines) + "\n"


def _ints(tokens: List[str], line_no: int) -> List[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ManifestFormatError(line_no, f"expected integers, got {' '.join(tokens)!r}") from None


def parse_manifest(text: str, root: Path) -> DatasetManifest:
    """
    Raises:
        ManifestFormatError: 语法错误、缺少头部字段或实例数不符
    """
    header = {}
    seen: List[int] = []
    unseen: List[int] = []
    scenes: List[ManifestScene] = []
    expected: List[int] = []
    patches = {}
    split = "train"

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key in ("seed", "image_size"):
            if len(rest) != 1:
                raise ManifestFormatError(line_no, f"{key} takes one value")
            header[key] = _ints(rest, line_no)[0]
        elif key == "config_hash":
            if len(rest) != 1:
                raise ManifestFormatError(line_no, "config_hash takes one value")
            header[key] = rest[0]
        elif key == "seen":
            seen = _ints(rest, line_no)
        elif key == "unseen":
            unseen = _ints(rest, line_no)
        elif key == "split":
            if rest not in (["train"], ["test"]):
                raise ManifestFormatError(line_no, "split must be train or test")
            split = rest[0]
        elif key == "scene":
            if len(rest) != 3 or rest[1] not in ("easy", "hard"):
                raise ManifestFormatError(line_no, "scene <path> <easy|hard> <num_instances>")
            scenes.append(ManifestScene(rest[0], rest[1], split))
            expected.append(_ints(rest[2:], line_no)[0])
        elif key == "instance":
            if not scenes:
                raise ManifestFormatError(line_no, "instance before any scene")
            if len(rest) != 6:
                raise ManifestFormatError(line_no, "instance <sku_id> <x0> <y0> <x1> <y1> <mask_path>")
            sku_id, x0, y0, x1, y1 = _ints(rest[:5], line_no)
            if x1 <= x0 or y1 <= y0:
                raise ManifestFormatError(line_no, "empty instance box")
            scenes[-1].instances.append(ManifestInstance(sku_id, (x0, y0, x1, y1), rest[5]))
        elif key == "patch":
            if len(rest) != 2:
                raise ManifestFormatError(line_no, "patch <sku_id> <path>")
            patches.setdefault(_ints(rest[:1], line_no)[0], []).append(rest[1])
        else:
            raise ManifestFormatError(line_no, f"unknown record {key!r}")

    for name in ("seed", "config_hash", "image_size"):
        if name not in header:
            raise ManifestFormatError(0, f"missing {name}")
    for scene, count in zip(scenes, expected):
        if len(scene.instances) != count:
            raise ManifestFormatError(0, f"{scene.path}: declared {count} instances, found {len(scene.instances)}")

    return DatasetManifest(
        seed=header["seed"],
        config_hash=header["config_hash"],
        image_size=header["image_size"],
        seen=seen,
        unseen=unseen,
        scenes=scenes,
        patches=patches,
        root=root,
    )


class ManifestRepository:
    """清单文件的读写"""

    def save(self, manifest: DatasetManifest, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_manifest(manifest), encoding="utf-8")
        logger.info(f"清单已写出: {path} ({len(manifest.scenes)} 个场景)")
        return path

    def load(self, path: str | Path) -> Result[DatasetManifest]:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            return Result.fail(f"读取清单失败: {e}")
        try:
            manifest = parse_manifest(text, path.parent)
        except ManifestFormatError as e:
            return Result.fail(f"清单格式错误 [{path}] {e}")
        problems = manifest.audit()
        if problems:
            return Result.fail(f"清单校验失败 [{path}]: {problems[0]}")
        return Result.success(manifest)
