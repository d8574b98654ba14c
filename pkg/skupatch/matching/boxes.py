"""
框的换算与 (G)IoU

numpy 版本用于匹配代价与评估；Tensor 版本 giou_tensor 参与反向传播。
框格式:
    cxcywh - (cx, cy, w, h)，网络输出格式
    xyxy   - (x0, y0, x1, y1) 角点
"""

from __future__ import annotations

import numpy as np

from ..autograd import Tensor, ops

_GUARD = 1e-9

# cxcywh 行向量右乘得到 xyxy
_CORNERS = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [-0.5, 0.0, 0.5, 0.0],
        [0.0, -0.5, 0.0, 0.5],
    ]
)


def cxcywh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return boxes @ _CORNERS


def xyxy_to_cxcywh(boxes: np.ndarray) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64)
    x0, y0, x1, y1 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0], axis=-1)


def box_area(boxes: np.ndarray) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64)
    return np.clip(b[..., 2] - b[..., 0], 0, None) * np.clip(b[..., 3] - b[..., 1], 0, None)


def _intersection_union(a: np.ndarray, b: np.ndarray):
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    return inter, union


def box_iou(box_a: np.ndarray, box_b: np.ndarray) -> np.ndarray:
    """xyxy 框的 IoU，支持广播；并集为 0 时 IoU 取 0"""
    a = np.asarray(box_a, dtype=np.float64)
    b = np.asarray(box_b, dtype=np.float64)
    inter, union = _intersection_union(a, b)
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def giou(box_a: np.ndarray, box_b: np.ndarray) -> np.ndarray:
    """
    Generalized IoU = IoU − (hull − union) / hull

    零面积框的 IoU 项为 0；外接框面积为 0 时退化为 IoU。
    """
    a = np.asarray(box_a, dtype=np.float64)
    b = np.asarray(box_b, dtype=np.float64)
    inter, union = _intersection_union(a, b)
    iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    hull = (np.maximum(a[..., 2], b[..., 2]) - np.minimum(a[..., 0], b[..., 0])) * (
        np.maximum(a[..., 3], b[..., 3]) - np.minimum(a[..., 1], b[..., 1])
    )
    safe = np.where(hull > 0, hull, 1.0)
    return np.where(hull > 0, iou - (hull - union) / safe, iou)


def pairwise_giou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(K,4) × (M,4) xyxy → (K, M)"""
    a = np.asarray(boxes_a, dtype=np.float64)[:, None, :]
    b = np.asarray(boxes_b, dtype=np.float64)[None, :, :]
    return giou(a, b)


def giou_tensor(pred_cxcywh: Tensor, target_xyxy: np.ndarray) -> Tensor:
    """
    可微 GIoU（逐行）

    Args:
        pred_cxcywh: (P, 4) 预测框
        target_xyxy: (P, 4) 真值角点
    Returns:
        (P,) 张量
    """
    corners = ops.matmul(pred_cxcywh, Tensor(_CORNERS.astype(pred_cxcywh.dtype)))
    target = Tensor(np.asarray(target_xyxy, dtype=pred_cxcywh.dtype))

    px0, py0, px1, py1 = (corners[:, i] for i in range(4))
    tx0, ty0, tx1, ty1 = (target[:, i] for i in range(4))

    iw = ops.relu(ops.minimum(px1, tx1) - ops.maximum(px0, tx0))
    ih = ops.relu(ops.minimum(py1, ty1) - ops.maximum(py0, ty0))
    inter = iw * ih
    area_p = ops.relu(px1 - px0) * ops.relu(py1 - py0)
    area_t = (tx1 - tx0) * (ty1 - ty0)
    union = area_p + area_t - inter

    hull = (ops.maximum(px1, tx1) - ops.minimum(px0, tx0)) * (ops.maximum(py1, ty1) - ops.minimum(py0, ty0))
    iou = inter / (union + _GUARD)
    return iou - (hull - union) / (hull + _GUARD)
