"""
Hungarian 最小代价指派

O(n²·m) 的势函数 + 最短增广路实现（Jonker-Volgenant 风格），
内层对列做向量化。矩阵先用零代价补成方阵，补出的行 / 列排在最后。

平局处理：在所有最优指派中取按行字典序最小的一个，即行 0 取能保持
最优总代价的最小列，行 1 在此基础上取最小列，依此类推；预测多于真值时
"不匹配" 排在所有真值列之后。最优指派恰是对偶势下紧边构成的完美匹配，
逐行固定时用交替路在紧边图里改线。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..common.errors import InputError


@dataclass(frozen=True)
class MatchResult:
    """
    Attributes:
        pairs: (预测下标, 真值下标)，按预测下标升序
        unmatched: 未匹配的预测下标（视为 no-object）
    """

    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched: List[int] = field(default_factory=list)

    def total_cost(self, cost: np.ndarray) -> float:
        return float(sum(cost[r, c] for r, c in self.pairs))

    @property
    def prediction_indices(self) -> np.ndarray:
        return np.array([p for p, _ in self.pairs], dtype=np.int64)

    @property
    def target_indices(self) -> np.ndarray:
        return np.array([g for _, g in self.pairs], dtype=np.int64)


def _solve_rows_le_cols(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """n ≤ m；返回每行指派到的列，以及行势 u、列势 v（u_i + v_j ≤ c_ij，匹配边取等）"""
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match_col = np.zeros(m + 1, dtype=np.int64)   # 列 j 匹配的行（1 起，0 为空）
    way = np.zeros(m + 1, dtype=np.int64)

    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0

            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]

            used_cols = np.flatnonzero(used)
            u[match_col[used_cols]] += delta
            v[used_cols] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while True:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
            if j0 == 0:
                break

    assignment = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if match_col[j]:
            assignment[match_col[j] - 1] = j - 1
    return assignment, u[1:], v[1:]


def _reroute(
    row: int,
    adjacency: List[np.ndarray],
    assign: np.ndarray,
    owner: np.ndarray,
    locked: np.ndarray,
    visited: np.ndarray,
) -> bool:
    """为失去列的 row 沿紧边找一条通向空列的交替路，成功时就地改线"""
    for col in adjacency[row]:
        if locked[col] or visited[col]:
            continue
        visited[col] = True
        if owner[col] < 0 or _reroute(int(owner[col]), adjacency, assign, owner, locked, visited):
            owner[col] = row
            assign[row] = col
            return True
    return False


def _lexicographic_min(tight: np.ndarray, assignment: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """在紧边图的完美匹配中，逐行把前 rows 行固定到可行的最小列"""
    n = tight.shape[0]
    assign = assignment.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[assign] = np.arange(n)
    locked = np.zeros(n, dtype=bool)
    adjacency = [np.flatnonzero(tight[r]) for r in range(n)]

    for i in range(rows):
        current = int(assign[i])
        # 补出的列彼此等价，只需尝试真实列
        limit = min(current, cols)
        for j in adjacency[i]:
            j = int(j)
            if j >= limit:
                break
            if locked[j]:
                continue
            trial_assign, trial_owner = assign.copy(), owner.copy()
            displaced = int(trial_owner[j])
            trial_assign[i] = j
            trial_owner[j] = i
            trial_owner[current] = -1
            locked[j] = True
            visited = np.zeros(n, dtype=bool)
            if _reroute(displaced, adjacency, trial_assign, trial_owner, locked, visited):
                assign, owner = trial_assign, trial_owner
                break
            locked[j] = False
        locked[assign[i]] = True
    return assign


def hungarian(cost: np.ndarray) -> MatchResult:
    """
    K×M 代价矩阵的最小代价指派，恰好 min(K, M) 对；平局取按行字典序最小的指派

        >>> hungarian(np.array([[0, 0, 0], [1, 1, 1], [0, 1, 1]])).pairs
        [(0, 1), (1, 2), (2, 0)]

    Raises:
        InputError: 含 NaN/Inf 或不是二维
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InputError(f"cost must be a matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix contains NaN or infinite entries")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return MatchResult(pairs=[], unmatched=list(range(rows)))

    n = max(rows, cols)
    padded = np.zeros((n, n))
    padded[:rows, :cols] = cost
    assignment, u, v = _solve_rows_le_cols(padded)

    tolerance = 1e-9 * (1.0 + float(np.abs(cost).max()))
    tight = padded - u[:, None] - v[None, :] <= tolerance
    tight[np.arange(n), assignment] = True
    assignment = _lexicographic_min(tight, assignment, rows, cols)

    pairs = [(r, int(assignment[r])) for r in range(rows) if assignment[r] < cols]
    matched = {r for r, _ in pairs}
    return MatchResult(pairs=pairs, unmatched=[r for r in range(rows) if r not in matched])
