"""
子命令实现

    gen-data   - 生成合成数据集
    train      - 训练
    eval       - 评估检查点
    infer      - 单图推理
    selftest   - 数值自检
    help       - 帮助
"""

from __future__ import annotations

import argparse
from pathlib import Path

from ..common.config import format_config, load_config, settings
from ..common.protocols import (
    DatasetServiceProtocol,
    EvaluationServiceProtocol,
    SystemMonitorProtocol,
    TrainingServiceProtocol,
)
from ..metrics import format_summary
from ..synth.repository import MANIFEST_NAME
from .handler import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, CommandHandler
from .registry import CommandRegistry


class GenDataHandler(CommandHandler):
    """生成合成数据集"""

    name = "生成数据"
    description = "生成 SKU 目录、补丁与合成场景"
    command = "gen-data"
    aliases = {"gen"}
    usage = "skupatch gen-data --config desk.conf --seed 0 --out data/"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", default=None, help="配置文件（默认使用内置配置）")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", default=settings.data_dir, help="输出目录")

    def handle(self, args: argparse.Namespace) -> int:
        config = self.unwrap(load_config(args.config))
        service = self.locate(DatasetServiceProtocol)
        manifest = self.unwrap(service.build_dataset(config, args.seed, Path(args.out)))
        self.echo(
            f"manifest: {manifest.root / MANIFEST_NAME}\n"
            f"seen={len(manifest.seen)} unseen={len(manifest.unseen)} "
            f"train={len(manifest.scenes_in('train'))} test={len(manifest.scenes_in('test'))}"
        )
        return EXIT_OK


class TrainHandler(CommandHandler):
    """训练"""

    name = "训练"
    description = "在 seen SKU 上训练网络"
    command = "train"
    usage = "skupatch train --config desk.conf --data data/manifest.txt --seed 0 --out runs/a"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", default=None, help="配置文件（默认使用内置配置）")
        parser.add_argument("--data", required=True, help="manifest.txt 或数据集目录")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", required=True, help="检查点与损失日志目录")

    def handle(self, args: argparse.Namespace) -> int:
        config = self.unwrap(load_config(args.config))
        manifest = self.unwrap(self.locate(DatasetServiceProtocol).load_manifest(Path(args.data)))
        self.logger.debug("实验配置:\n" + format_config(config))
        summary = self.unwrap(self.locate(TrainingServiceProtocol).train(config, manifest, args.seed, Path(args.out)))
        self.echo(summary.as_text())
        return EXIT_OK


class EvalHandler(CommandHandler):
    """评估"""

    name = "评估"
    description = "在 unseen 或 train 划分上评估检查点"
    command = "eval"
    aliases = {"evaluate"}
    usage = "skupatch eval --ckpt runs/a/best.ckpt --data data/ --split unseen --patches 10 [--zero-patches]"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--ckpt", required=True)
        parser.add_argument("--data", required=True, help="manifest.txt 或数据集目录")
        parser.add_argument("--split", default="unseen", choices=("unseen", "train"))
        parser.add_argument("--patches", type=int, default=10, help="每个 SKU 使用的补丁数 N（1..10）")
        parser.add_argument("--zero-patches", action="store_true", help="补丁 token 置零（补丁指导消融）")
        parser.add_argument("--threshold", type=float, default=0.5, help="P/R/F 使用的分数阈值")
        parser.add_argument("--out", default=None, help="报告文件（默认只输出到标准输出）")

    def handle(self, args: argparse.Namespace) -> int:
        manifest = self.unwrap(self.locate(DatasetServiceProtocol).load_manifest(Path(args.data)))
        report = self.unwrap(
            self.locate(EvaluationServiceProtocol).evaluate(
                Path(args.ckpt), manifest, args.split, args.patches,
                zero_patches=args.zero_patches, score_threshold=args.threshold,
            )
        )
        if args.out:
            report.save(args.out)
            self.logger.info(f"报告已写入 {args.out}")
        self.echo(report.to_text())
        self.logger.info(format_summary(report))
        return EXIT_OK


class InferHandler(CommandHandler):
    """单图推理"""

    name = "推理"
    description = "对单张图像与一组补丁推理，输出掩码、检测框与叠加图"
    command = "infer"
    usage = "skupatch infer --ckpt runs/a/best.ckpt --image scene.ppm --patch p0.ppm --patch p1.ppm --out out/"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--ckpt", required=True)
        parser.add_argument("--image", required=True, help="PPM 场景图像")
        parser.add_argument("--patch", action="append", required=True, help="PPM 补丁，可重复 1..10 次")
        parser.add_argument("--threshold", type=float, default=0.5)
        parser.add_argument("--out", default="infer_out")

    def handle(self, args: argparse.Namespace) -> int:
        result = self.unwrap(
            self.locate(EvaluationServiceProtocol).infer(
                Path(args.ckpt), Path(args.image), [Path(p) for p in args.patch],
                Path(args.out), score_threshold=args.threshold,
            )
        )
        for det in result.detections:
            self.echo(det.as_line())
        self.echo(f"detections: {result.detections_file}")
        if result.overlay_file:
            self.echo(f"overlay: {result.overlay_file}")
        return EXIT_OK


class SelftestHandler(CommandHandler):
    """数值自检"""

    name = "自检"
    description = "梯度检查、匈牙利匹配、DCT、可变形注意力与消融前向"
    command = "selftest"

    def handle(self, args: argparse.Namespace) -> int:
        from ..training.selftest import run_selftest

        monitor = self.locate(SystemMonitorProtocol)
        self.logger.info("运行环境:\n" + monitor.get_status_text())
        results = run_selftest()
        for result in results:
            self.echo(result.as_line())
        return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERICAL


class HelpHandler(CommandHandler):
    """帮助"""

    name = "帮助"
    description = "查看子命令用法"
    command = "help"
    usage = "skupatch help [子命令]"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("topic", nargs="?", default=None)

    def handle(self, args: argparse.Namespace) -> int:
        registry = CommandRegistry.get_instance()
        if not args.topic:
            self.echo(registry.help_text())
            return EXIT_OK
        handler = registry.get_handler(args.topic)
        if handler is None or handler.hidden_in_help:
            self.fail(f"未找到子命令: {args.topic}")
            return EXIT_INPUT
        lines = [f"{handler.command} {handler.name}"]
        if handler.aliases:
            lines.append(f"别名: {', '.join(sorted(handler.aliases))}")
        lines.append(f"描述: {handler.description}")
        if handler.usage:
            lines.append(f"用法: {handler.usage}")
        self.echo("\n".join(lines))
        return EXIT_OK


ALL_COMMANDS = (
    GenDataHandler,
    TrainHandler,
    EvalHandler,
    InferHandler,
    SelftestHandler,
    HelpHandler,
)


def register_commands(registry: CommandRegistry) -> None:
    for handler_cls in ALL_COMMANDS:
        registry.register(handler_cls())
