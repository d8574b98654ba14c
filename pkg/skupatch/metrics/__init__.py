"""
metrics 模块 - 评估指标

    evaluation.py - IoU、AP / mAP、重叠 P/R/F、EvalReport
"""

from .evaluation import (
    AP_THRESHOLDS,
    Detection,
    EvalReport,
    GroundTruth,
    OverlapTally,
    SceneResult,
    average_precision,
    box_iou,
    evaluate_scenes,
    format_summary,
    map_50_95,
    mask_iou,
    overlap_prf,
    overlap_tally,
    pairwise_box_iou,
    pairwise_mask_iou,
)

__all__ = [
    "AP_THRESHOLDS",
    "Detection",
    "GroundTruth",
    "SceneResult",
    "EvalReport",
    "OverlapTally",
    "mask_iou",
    "box_iou",
    "pairwise_mask_iou",
    "pairwise_box_iou",
    "average_precision",
    "map_50_95",
    "overlap_prf",
    "overlap_tally",
    "evaluate_scenes",
    "format_summary",
]
