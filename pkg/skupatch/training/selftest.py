"""
自检套件（selftest 命令）

    primitives      - 可微算子的有限差分梯度检查
    hungarian       - 与穷举指派比对
    dct             - 全系数往返与 Parseval
    deformable      - 采样点固定在全部 token 中心时等价于稠密交叉注意力
    ablations       - 每种消融配置、K ∈ {100, 200, 300}、每种 N-to-1 方式各跑一次前向
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from ..autograd import Tensor, gradcheck, ops
from ..common.config import ModelConfig
from ..matching import giou_tensor, hungarian
from ..model import DeformableAttention, MaskCodec, SkuPatchNet, grid_centers
from ..nn import ImageTokens, ObjectTokens, cross_attention

logger = logging.getLogger("skupatch.selftest")


@dataclass
class SuiteResult:
    name: str
    ok: bool
    detail: str
    seconds: float

    def as_line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"[{status}] {self.name:<11} {self.seconds:6.2f}s  {self.detail}"


def tiny_config(**overrides) -> ModelConfig:
    """自检与测试共用的小网络"""
    base = dict(
        dim=16, layers=2, queries=8, heads=2, window=4, sampling_points=2,
        ffn_hidden=32, head_layers=2, image_size=32, stride=4,
        patch_size=16, patch_stride=4, mask_grid=16, mask_coeffs=32,
        precision="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)


# ==================== 各套件 ====================

def check_primitives(seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    leaf = lambda *shape: Tensor(rng.normal(size=shape), requires_grad=True)  # noqa: E731
    cases: List[Tuple[str, Callable, List[Tensor]]] = []

    a, b = leaf(3, 4), leaf(4, 5)
    cases.append(("matmul", lambda: ops.sum(ops.matmul(a, b)), [a, b]))
    x, g, bt = leaf(4, 6), leaf(6), leaf(6)
    w = Tensor(rng.normal(size=(4, 6)))
    cases.append(("layer_norm", lambda: ops.sum(ops.multiply(ops.layer_norm(x, g, bt), w)), [x, g, bt]))
    s = leaf(3, 5)
    ws = Tensor(rng.normal(size=(3, 5)))
    cases.append(("softmax", lambda: ops.sum(ops.multiply(ops.softmax(s), ws)), [s]))
    u = leaf(5, 3)
    cases.append(("gelu", lambda: ops.sum(ops.gelu(u)), [u]))
    grid = leaf(4, 5, 3)
    pts = Tensor(rng.uniform(0.15, 0.85, size=(6, 2)), requires_grad=True)
    cases.append(("bilinear", lambda: ops.sum(ops.bilinear_sample(grid, pts)), [grid, pts]))
    boxes = Tensor(np.column_stack([rng.uniform(0.3, 0.7, (4, 2)), rng.uniform(0.2, 0.4, (4, 2))]), requires_grad=True)
    target = np.column_stack([rng.uniform(0.1, 0.3, (4, 2)), rng.uniform(0.5, 0.8, (4, 2))])
    cases.append(("giou", lambda: ops.sum(giou_tensor(boxes, target)), [boxes]))
    logits = leaf(5, 2)
    labels = rng.integers(0, 2, size=5)
    cases.append(("cross_ent", lambda: ops.cross_entropy_with_logits(logits, labels, np.array([1.0, 0.1])), [logits]))

    worst = 0.0
    for name, fn, inputs in cases:
        report = gradcheck(fn, inputs)
        worst = max(worst, report.max_error)
        if not report.ok:
            raise AssertionError(f"{name}: relative error {report.max_error:.2e}")
    return f"{len(cases)} primitives, max rel. error {worst:.1e}"


def brute_force_cost(cost: np.ndarray) -> float:
    rows, cols = cost.shape
    if rows <= cols:
        return min(sum(cost[i, p[i]] for i in range(rows)) for p in itertools.permutations(range(cols), rows))
    return brute_force_cost(cost.T)


def check_hungarian(trials: int = 60, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    for t in range(trials):
        rows, cols = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        cost = rng.integers(0, 10, size=(rows, cols)).astype(np.float64)
        result = hungarian(cost)
        if len(result.pairs) != min(rows, cols):
            raise AssertionError(f"trial {t}: {len(result.pairs)} pairs for {cost.shape}")
        if abs(result.total_cost(cost) - brute_force_cost(cost)) > 1e-9:
            raise AssertionError(f"trial {t}: cost {result.total_cost(cost)} is not optimal")
    return f"{trials} random matrices up to 5x5"


def check_dct(seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    codec = MaskCodec(16, 256)
    worst = 0.0
    for _ in range(10):
        mask = rng.random((16, 16))
        vec = codec.encode(mask)
        worst = max(worst, float(np.abs(codec.decode(vec) - mask).max()))
        if abs(np.sum(vec.coefficients ** 2) - np.sum(mask ** 2)) > 1e-8:
            raise AssertionError("Parseval identity violated")
    if worst >= 1e-9:
        raise AssertionError(f"round trip error {worst:.2e}")
    return f"round trip max error {worst:.1e}"


def check_deformable(seeds: int = 5) -> str:
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        rows = cols = 4
        deform = DeformableAttention(8, 2, 4, rng, np.float64, logits="dot")
        image = ImageTokens(Tensor(rng.normal(size=(rows * cols, 8))), grid=(rows, cols))
        queries = ObjectTokens(Tensor(rng.normal(size=(3, 8))))
        centers = grid_centers(rows, cols)
        locations = np.broadcast_to(centers, (3, 2, rows * cols, 2)).copy()
        sparse = deform(queries.tokens, image, locations=locations)
        dense = cross_attention(queries, image, deform.attn).tokens
        worst = max(worst, float(np.abs(sparse.data - dense.data).max()))
    if worst >= 1e-8:
        raise AssertionError(f"deformable differs from dense by {worst:.2e}")
    return f"{seeds} seeds, max difference {worst:.1e}"


ABLATIONS = {
    "full": {},
    "no-fuse": {"use_fuse": False},
    "no-cross": {"use_patch_cross": False},
    "no-deform": {"use_deformable": False},
    "no-guide": {"use_patch_guidance": False},
    "global-attn": {"use_window_attention": False},
    "dot-logits": {"deformable_logits": "dot"},
    "K=100": {"queries": 100},
    "K=200": {"queries": 200},
    "K=300": {"queries": 300},
    "n2one-add": {"n_to_1_mode": "add"},
    "n2one-mom": {"n_to_1_mode": "momentum"},
}


def check_ablations(seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    patches = [rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8) for _ in range(3)]
    for name, overrides in ABLATIONS.items():
        cfg = tiny_config(**overrides)
        predictions = SkuPatchNet(cfg, seed=seed).predict(image, patches)
        if len(predictions) != cfg.queries:
            raise AssertionError(f"{name}: {len(predictions)} predictions for K={cfg.queries}")
        if not all(np.isfinite(p.class_logits).all() and np.isfinite(p.box).all() for p in predictions):
            raise AssertionError(f"{name}: non-finite outputs")
    return f"{len(ABLATIONS)} configurations"


SUITES: Tuple[Tuple[str, Callable[[], str]], ...] = (
    ("primitives", check_primitives),
    ("hungarian", check_hungarian),
    ("dct", check_dct),
    ("deformable", check_deformable),
    ("ablations", check_ablations),
)


def run_selftest() -> List[SuiteResult]:
    results = []
    for name, suite in SUITES:
        start = time.perf_counter()
        try:
            detail, ok = suite(), True
        except AssertionError as e:
            detail, ok = str(e), False
        result = SuiteResult(name, ok, detail, time.perf_counter() - start)
        logger.info(result.as_line())
        results.append(result)
    return results
