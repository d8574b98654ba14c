"""
matching 模块 - 集合匹配与训练损失

    hungarian.py  - 最小代价一对一指派
    boxes.py      - 框换算、IoU / GIoU（numpy 与可微版本）
    losses.py     - 匹配代价、TargetSet、LossBreakdown、SetCriterion
"""

from .boxes import box_area, box_iou, cxcywh_to_xyxy, giou, giou_tensor, pairwise_giou, xyxy_to_cxcywh
from .hungarian import MatchResult, hungarian
from .losses import (
    LossBreakdown,
    LossWeights,
    SetCriterion,
    TargetSet,
    build_targets,
    cost_matrix,
    match_cost,
    match_predictions,
    total_loss,
)

__all__ = [
    "hungarian",
    "MatchResult",
    "box_area",
    "box_iou",
    "cxcywh_to_xyxy",
    "xyxy_to_cxcywh",
    "giou",
    "giou_tensor",
    "pairwise_giou",
    "LossWeights",
    "LossBreakdown",
    "TargetSet",
    "build_targets",
    "match_cost",
    "cost_matrix",
    "match_predictions",
    "total_loss",
    "SetCriterion",
]
