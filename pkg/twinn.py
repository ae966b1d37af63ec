#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
PQC 的实值"数字孪生"(twiNN)

把复矩阵通过 𝖬 映射展开为实矩阵:

    𝖬(U) = [[Re U, -Im U],
            [Im U,  Re U]]

于是模型写成两步 x -> A(x) = 𝖬(ρ(x)) -> f = ½ Tr{A(x) M(θ)}, 其中 M(θ) = 𝖬(ℳ(θ))。
A(x) 的单个矩阵元可以直接由 entry_g 在 O(d) 时间内算出，Q-LRP 的编码规则依赖这一点。
"""

import dataclasses

import numpy as np

import qcore
from errors import DomainError


@dataclasses.dataclass(frozen=True, eq=False)
class RealExpandedMatrix:
    """
    𝖬 映射的像: 2N x 2N 实矩阵, 分块结构 [[Re, -Im], [Im, Re]]

    字段:
        base_dim (int): 原复矩阵的维数 N
        entries (np.ndarray): 2N x 2N 实矩阵
    """

    base_dim: int
    entries: np.ndarray

    def __post_init__(self):
        n = int(self.base_dim)
        entries = np.array(self.entries, dtype=float)
        if entries.shape != (2 * n, 2 * n):
            raise DomainError(f"展开矩阵形状应为 {(2 * n, 2 * n)}, 实际为 {entries.shape}")
        if not blocks_consistent(entries, n):
            raise DomainError("展开矩阵不满足 [[Re, -Im], [Im, Re]] 分块结构")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def real_block(self):
        return self.entries[:self.base_dim, :self.base_dim]

    def imag_block(self):
        return self.entries[self.base_dim:, :self.base_dim]

    def trace(self):
        return float(np.trace(self.entries))


def blocks_consistent(entries, n, tol=1e-12):
    """左上 = 右下 且 右上 = -左下"""
    top_left, top_right = entries[:n, :n], entries[:n, n:]
    bottom_left, bottom_right = entries[n:, :n], entries[n:, n:]
    return (np.allclose(top_left, bottom_right, atol=tol, rtol=0)
            and np.allclose(top_right, -bottom_left, atol=tol, rtol=0))


def m_map(u):
    """
    𝖬: ℂ^{N×N} -> ℝ^{2N×2N}

    这是一个保持乘法的同构: m_map(U) @ m_map(V) = m_map(U @ V)，
    对厄米矩阵还有 Tr{m_map(H)} = 2 Tr{H}。

    参数:
        u (np.ndarray | DensityMatrix | Observable): 方阵
    """
    if isinstance(u, (qcore.DensityMatrix, qcore.Observable)):
        u = u.mat
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DomainError(f"m_map 只接受方阵, 实际形状为 {u.shape}")
    re, im = u.real, u.imag
    return RealExpandedMatrix(u.shape[0], np.block([[re, -im], [im, re]]))


def split_index(i, base_dim):
    """展开矩阵下标 -> (块号 0/1, 原矩阵下标)"""
    return np.divmod(i, base_dim)


def expanded_entries(values, block_rows, block_cols):
    """
    把复矩阵元映射到展开矩阵中对应块的实数值

    同块(0,0)/(1,1) 取实部; 右上块取 -虚部; 左下块取 +虚部。
    """
    values = np.asarray(values)
    same = np.asarray(block_rows) == np.asarray(block_cols)
    sign = np.where(np.asarray(block_rows) > np.asarray(block_cols), 1.0, -1.0)
    return np.where(same, values.real, sign * values.imag)


def feature_matrix(x):
    """数据特征矩阵 A(x) = 𝖬(ρ(x))"""
    return m_map(qcore.encode_state(x))


def feature_entry(i, j, x):
    """
    惰性计算 A(x) 的单个矩阵元

    参数:
        i, j (int): 展开矩阵中的行、列下标, 取值 [0, 2^{d+1})
        x (array-like): 输入

    返回:
        float: A_ij(x), 由 entry_g / 2^d 得到
    """
    x = qcore.as_input(x)
    n = 2 ** x.size
    if not (0 <= i < 2 * n and 0 <= j < 2 * n):
        raise DomainError(f"下标 ({i}, {j}) 超出展开矩阵范围 [0, {2 * n})")
    bi, k = split_index(i, n)
    bj, l = split_index(j, n)
    g = qcore.entry_g(int(k), int(l), x) / n
    return float(expanded_entries(g, bi, bj))


def task_matrix(spec, params, cls):
    """任务矩阵 M(θ) = 𝖬(ℳ_c(θ))"""
    return m_map(qcore.heisenberg_observable(spec, params, cls))


def trace_product(a, m):
    """½ Tr{A M}"""
    a = a.entries if isinstance(a, RealExpandedMatrix) else np.asarray(a)
    m = m.entries if isinstance(m, RealExpandedMatrix) else np.asarray(m)
    if a.shape != m.shape:
        raise DomainError(f"维度不匹配: A {a.shape}, M {m.shape}")
    return 0.5 * float(np.einsum("ij,ji->", a, m))


def twinn_forward(x, spec, params, cls):
    """
    孪生网络前向: ½ Tr{A(x) M(θ)}，与 qcore.model_forward 的第 cls 个得分相等
    """
    x = qcore.as_input(x, spec.num_qubits)
    return trace_product(feature_matrix(x), task_matrix(spec, params, cls))
