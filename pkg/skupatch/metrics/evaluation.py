"""
检测 / 分割评估指标

    mask_iou / box_iou    - 单对 IoU（IoU(∅,∅)=1）
    average_precision     - 全点插值 AP（按分数降序贪心匹配，每个真值至多匹配一次）
    map_50_95             - IoU 阈值 0.50:0.05:0.95 的平均
    overlap_prf           - 掩码 F 值 Hungarian 匹配后的像素重叠 P/R/F
    evaluate_scenes       - 汇总为 EvalReport（全局、easy/hard 分组、逐场景）

逐场景的像素计数直接求和，汇总结果与场景顺序无关。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..matching.boxes import box_iou as _box_iou
from ..matching.hungarian import hungarian

IouKind = Literal["mask", "box"]

AP_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))


# ==================== 数据结构 ====================

@dataclass(frozen=True)
class Detection:
    """一个预测实例：分数、二值掩码、像素 xyxy 框"""

    score: float
    mask: np.ndarray
    box: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    mask: np.ndarray
    box: np.ndarray


@dataclass
class SceneResult:
    """一个 (场景, 查询 SKU) 组合的预测与真值"""

    key: str
    clutter: str
    detections: List[Detection]
    truths: List[GroundTruth]


# ==================== IoU ====================

def mask_iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def box_iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """xyxy 框 IoU；两个零面积框视为相同（IoU=1）"""
    a = np.asarray(box_a, dtype=np.float64)
    b = np.asarray(box_b, dtype=np.float64)
    area_a = max(a[2] - a[0], 0) * max(a[3] - a[1], 0)
    area_b = max(b[2] - b[0], 0) * max(b[3] - b[1], 0)
    if area_a == 0 and area_b == 0:
        return 1.0
    return float(_box_iou(a, b))


def pairwise_mask_iou(preds: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> np.ndarray:
    if not preds or not truths:
        return np.zeros((len(preds), len(truths)))
    p = np.stack([np.asarray(m, dtype=bool).ravel() for m in preds]).astype(np.float64)
    g = np.stack([np.asarray(m, dtype=bool).ravel() for m in truths]).astype(np.float64)
    inter = p @ g.T
    union = p.sum(axis=1)[:, None] + g.sum(axis=1)[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)


def pairwise_box_iou(preds: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros((len(preds), len(truths)))
    for i, pb in enumerate(preds):
        for j, gb in enumerate(truths):
            out[i, j] = box_iou(pb, gb)
    return out


def _iou_matrix(scene: SceneResult, kind: IouKind) -> np.ndarray:
    if kind == "mask":
        return pairwise_mask_iou([d.mask for d in scene.detections], [g.mask for g in scene.truths])
    return pairwise_box_iou([d.box for d in scene.detections], [g.box for g in scene.truths])


# ==================== AP ====================

def _ranked_detections(scenes: Sequence[SceneResult]) -> List[Tuple[int, int]]:
    """全局按分数降序的 (场景, 检测) 下标；分数相同按出现顺序"""
    entries = [(s, d) for s, scene in enumerate(scenes) for d in range(len(scene.detections))]
    scores = np.array([scenes[s].detections[d].score for s, d in entries], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return [entries[i] for i in order]


def _true_positives(
    ranked: List[Tuple[int, int]],
    ious: Sequence[np.ndarray],
    threshold: float,
) -> np.ndarray:
    """依次为每个检测匹配 IoU ≥ 阈值且尚未匹配的最佳真值"""
    taken = [np.zeros(m.shape[1], dtype=bool) for m in ious]
    tp = np.zeros(len(ranked), dtype=bool)
    for rank, (s, d) in enumerate(ranked):
        row = ious[s][d]
        if row.size == 0:
            continue
        eligible = np.where((row >= threshold) & ~taken[s], row, -1.0)
        best = int(np.argmax(eligible))
        if eligible[best] >= 0:
            taken[s][best] = True
            tp[rank] = True
    return tp


def _area_under_pr(tp: np.ndarray, num_truths: int) -> float:
    """全点插值：精度包络线下的面积"""
    if num_truths == 0 or tp.size == 0:
        return 0.0
    hits = np.cumsum(tp)
    recalls = hits / num_truths
    precisions = hits / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], recalls, [1.0]])
    mpre = np.concatenate([[0.0], precisions, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _ap_at(
    scenes: Sequence[SceneResult],
    thresholds: Sequence[float],
    kind: IouKind,
) -> List[float]:
    ranked = _ranked_detections(scenes)
    ious = [_iou_matrix(scene, kind) for scene in scenes]
    num_truths = sum(len(scene.truths) for scene in scenes)
    return [_area_under_pr(_true_positives(ranked, ious, t), num_truths) for t in thresholds]


def average_precision(
    scenes: Sequence[SceneResult],
    iou_threshold: float = 0.5,
    iou_kind: IouKind = "mask",
) -> float:
    """
    单类 AP（补丁引导下每个查询只有"目标 SKU"一类）

    没有真值或没有预测时 AP = 0。
    """
    return _ap_at(scenes, [iou_threshold], iou_kind)[0]


def map_50_95(scenes: Sequence[SceneResult], iou_kind: IouKind = "mask") -> float:
    return float(np.mean(_ap_at(scenes, AP_THRESHOLDS, iou_kind)))


# ==================== 重叠 P/R/F ====================

@dataclass(frozen=True)
class OverlapTally:
    """像素计数：匹配对的重叠、预测像素总数、真值像素总数"""

    overlap: float = 0.0
    predicted: float = 0.0
    truth: float = 0.0

    def __add__(self, other: "OverlapTally") -> "OverlapTally":
        return OverlapTally(
            self.overlap + other.overlap,
            self.predicted + other.predicted,
            self.truth + other.truth,
        )

    def prf(self) -> Tuple[float, float, float]:
        if self.predicted > 0:
            precision = self.overlap / self.predicted
        else:
            precision = 1.0 if self.truth == 0 else 0.0
        if self.truth > 0:
            recall = self.overlap / self.truth
        else:
            recall = 1.0 if self.predicted == 0 else 0.0
        f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return float(precision), float(recall), float(f)


def overlap_tally(pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]) -> OverlapTally:
    """单个场景：按像素 F 值做 Hungarian 匹配后累计重叠"""
    preds = [np.asarray(m, dtype=bool) for m in pred_masks]
    truths = [np.asarray(m, dtype=bool) for m in gt_masks]
    predicted = float(sum(p.sum() for p in preds))
    truth = float(sum(g.sum() for g in truths))
    if not preds or not truths:
        return OverlapTally(0.0, predicted, truth)

    p = np.stack([m.ravel() for m in preds]).astype(np.float64)
    g = np.stack([m.ravel() for m in truths]).astype(np.float64)
    inter = p @ g.T
    sizes = p.sum(axis=1)[:, None] + g.sum(axis=1)[None, :]
    f_score = np.where(sizes > 0, 2 * inter / np.where(sizes > 0, sizes, 1.0), 0.0)
    match = hungarian(-f_score)
    overlap = float(sum(inter[i, j] for i, j in match.pairs))
    return OverlapTally(overlap, predicted, truth)


def overlap_prf(
    pred_masks: Sequence[Sequence[np.ndarray]],
    gt_masks: Sequence[Sequence[np.ndarray]],
) -> Tuple[float, float, float]:
    """
    多个场景的重叠 precision / recall / F

    Args:
        pred_masks: 每个场景的预测掩码列表
        gt_masks: 每个场景的真值掩码列表
    """
    total = OverlapTally()
    for preds, truths in zip(pred_masks, gt_masks):
        total = total + overlap_tally(preds, truths)
    return total.prf()


# ==================== 汇总报告 ====================

@dataclass
class EvalReport:
    """
    评估报告

    metrics 为扁平的 指标名 → [0,1] 数值；scenes 为逐场景细分。
    文本形式为按键排序的 key=value 行。
    """

    metrics: Dict[str, float] = field(default_factory=dict)
    scenes: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.metrics[key]

    def flat(self) -> Dict[str, float]:
        out = dict(self.metrics)
        for scene_key, values in self.scenes.items():
            for name, value in values.items():
                out[f"scene.{scene_key}.{name}"] = value
        return out

    def to_text(self) -> str:
        flat = self.flat()
        return "".join(f"{key}={flat[key]:.6f}\n" for key in sorted(flat))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _kept(scene: SceneResult, score_threshold: float) -> List[Detection]:
    return [d for d in scene.detections if d.score >= score_threshold]


def _group_metrics(scenes: Sequence[SceneResult], score_threshold: float) -> Dict[str, float]:
    mask_ap = _ap_at(scenes, AP_THRESHOLDS, "mask")
    box_ap = _ap_at(scenes, [0.5], "box")[0]

    tally = OverlapTally()
    hits = 0
    num_truths = 0
    for scene in scenes:
        kept = _kept(scene, score_threshold)
        truths = [g.mask for g in scene.truths]
        tally = tally + overlap_tally([d.mask for d in kept], truths)
        thresholded = SceneResult(scene.key, scene.clutter, kept, scene.truths)
        ranked = [(0, d) for d in np.argsort([-d.score for d in kept], kind="stable")]
        hits += int(_true_positives(ranked, [_iou_matrix(thresholded, "mask")], 0.5).sum())
        num_truths += len(truths)
    precision, recall, f_measure = tally.prf()

    return {
        "mAP50": mask_ap[0],
        "mAP75": mask_ap[AP_THRESHOLDS.index(0.75)],
        "mAP50:95": float(np.mean(mask_ap)),
        "box.mAP50": box_ap,
        "precision": precision,
        "recall": recall,
        "f_measure": f_measure,
        "recall50": hits / num_truths if num_truths else 0.0,
    }


def evaluate_scenes(scenes: Sequence[SceneResult], score_threshold: float = 0.5) -> EvalReport:
    """
    计算全局指标、easy/hard 分组指标和逐场景指标

    Args:
        scenes: 每个 (场景, 查询 SKU) 的结果
        score_threshold: P/R/F 与 recall50 使用的置信度阈值（AP 使用全部检测）
    """
    report = EvalReport(metrics=_group_metrics(scenes, score_threshold))
    for clutter in ("easy", "hard"):
        group = [s for s in scenes if s.clutter == clutter]
        if group:
            for name, value in _group_metrics(group, score_threshold).items():
                report.metrics[f"{clutter}.{name}"] = value

    for scene in scenes:
        kept = _kept(scene, score_threshold)
        precision, recall, f_measure = overlap_tally(
            [d.mask for d in kept], [g.mask for g in scene.truths]
        ).prf()
        report.scenes[scene.key] = {
            "mAP50": average_precision([scene], 0.5, "mask"),
            "precision": precision,
            "recall": recall,
            "f_measure": f_measure,
        }
    return report


def format_summary(report: EvalReport, keys: Optional[Sequence[str]] = None) -> str:
    """标准输出上的单行摘要"""
    keys = keys or ("mAP50", "mAP75", "mAP50:95", "precision", "recall", "f_measure")
    return " ".join(f"{k}={report.metrics[k]:.4f}" for k in keys if k in report.metrics)
