#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Q-LRP 编码规则的根点查找

A(x) 的每个非零矩阵元都是各分量单变量三角函数的乘积，每个因子按所在比特的
(k_m, l_m) 取以下形式之一:

    |0⟩⟨0| -> 1 + cos(x_m)   零点 ±π
    |0⟩⟨1| ->  i sin(x_m)    零点 0, ±π
    |1⟩⟨0| -> -i sin(x_m)    零点 0, ±π
    |1⟩⟨1| -> 1 - cos(x_m)   零点 0

所以只要把一个分量换成 {0, -π, +π} 中合适的值就能让该矩阵元为零。
算法按 |x_m|, |x_m + π|, |x_m - π| 从小到大扫描网格超平面，
把每个命中的根点分配给所有尚未分配、且在第 m 位满足查表条件的 (k, l):

    n = 1 (靠近 0)   -> 第 m 位为 (0,1), (1,0), (1,1) 的矩阵元, 替换值 0
    n = 2 (靠近 -π)  -> 第 m 位为 (0,0) 的矩阵元, 替换值 -π
    n = 3 (靠近 +π)  -> 第 m 位为 (0,0) 的矩阵元, 替换值 +π

当所有矩阵元都分配完毕时提前结束。
"""

import dataclasses
import logging

import numpy as np

import qcore
from errors import DomainError, RootLookupError

logger = logging.getLogger(__name__)

UNASSIGNED = -1

# n -> 替换值
_REPLACEMENTS = {1: 0.0, 2: -np.pi, 3: np.pi}


def fold_principal(x):
    """把各分量折叠到 (-π, π]"""
    x = np.asarray(x, dtype=float)
    return -(np.mod(-x + np.pi, 2 * np.pi) - np.pi)


@dataclasses.dataclass(frozen=True, eq=False)
class RootAssignment:
    """
    每个基矩阵元 (k, l) 的根点

    根点与源输入 x 只在 component[k, l] 这一个分量上不同, 该分量被替换为 value[k, l]。

    字段:
        x (np.ndarray): 源输入
        component (np.ndarray): (N, N) 整数, 未分配为 -1
        value (np.ndarray): (N, N) 替换值, 取自 {0, -π, +π}
    """

    x: np.ndarray
    component: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name in ("x", "component", "value"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_qubits(self):
        return self.x.size

    @property
    def assigned_count(self):
        return int(np.count_nonzero(self.component != UNASSIGNED))

    def is_complete(self):
        return self.assigned_count == self.component.size

    def _index(self, index):
        n = self.component.shape[0]
        if isinstance(index, (int, np.integer)):
            if not 0 <= index < n:
                raise DomainError(f"矩阵元下标 {index} 超出范围 [0, {n})")
            return int(index)
        bits = qcore._bits(index, self.num_qubits)
        return int(bits @ (1 << (self.num_qubits - 1 - np.arange(self.num_qubits))))

    def lookup(self, k, l):
        """
        返回 (分量下标 m, 替换值)

        参数:
            k, l: 比特串或整数下标

        异常:
            RootLookupError: 该矩阵元没有分配根点
        """
        k, l = self._index(k), self._index(l)
        m = int(self.component[k, l])
        if m == UNASSIGNED:
            raise RootLookupError(f"矩阵元 ({k}, {l}) 没有分配根点")
        return m, float(self.value[k, l])

    def root_point(self, k, l):
        """矩阵元 (k, l) 的完整根点向量"""
        m, v = self.lookup(k, l)
        point = self.x.copy()
        point[m] = v
        return point


def grid_order(x):
    """
    网格命中序列

    返回按 |x^{(n)}_m| 升序排列的 (m, n) 对, 其中 x^{(1)} = x, x^{(2)} = x + π, x^{(3)} = x - π;
    距离相同时按 (m, n) 升序。
    """
    folded = fold_principal(x)
    d = folded.size
    dist = np.abs(np.stack([folded, folded + np.pi, folded - np.pi], axis=1))  # (d, 3)
    m_idx, n_idx = np.meshgrid(np.arange(d), np.arange(1, 4), indexing="ij")
    # lexsort 以最后一个键为主键
    order = np.lexsort((n_idx.ravel(), m_idx.ravel(), dist.ravel()))
    return [(int(m_idx.ravel()[o]), int(n_idx.ravel()[o]), float(dist.ravel()[o])) for o in order]


def find_root_points(x):
    """
    为 A(x) 的每个矩阵元分配最近的单分量网格根点

    参数:
        x (array-like): 长度 d 的有限实向量

    返回:
        RootAssignment: 以基矩阵元 (k, l) 为键; 展开矩阵的四个块共用同一个根点
    """
    x = qcore.as_input(x)
    d = x.size
    n = 2 ** d
    idx = np.arange(n)
    component = np.full((n, n), UNASSIGNED, dtype=int)
    value = np.zeros((n, n))

    for step, (m, hit, dist) in enumerate(grid_order(x), start=1):
        bit = (idx >> (d - 1 - m)) & 1
        row_bit, col_bit = bit[:, None], bit[None, :]
        if hit == 1:
            pattern = (row_bit | col_bit) == 1
        else:
            pattern = (row_bit == 0) & (col_bit == 0)
        target = pattern & (component == UNASSIGNED)
        component[target] = m
        value[target] = _REPLACEMENTS[hit]
        logger.debug("[根点] 第 %d 步: 分量 %d, n=%d, 距离 %.4f, 新分配 %d 个",
                     step, m, hit, dist, int(target.sum()))
        if not np.any(component == UNASSIGNED):
            break

    return RootAssignment(x=x, component=component, value=value)
