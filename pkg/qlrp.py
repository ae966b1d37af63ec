#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
量子层级相关性传播 (Q-LRP)

在 twiNN 表示 f = ½ Tr{A(x) M(θ)} 上分两步反传相关性:

1. 线性规则: R_ij = ½ A_ij M_ji，ΣR = f(x) 严格成立
2. 编码规则: 每个矩阵元 A_ij 在其根点 x̃^{(i,j)} 处为零，
   用单分量全阶泰勒项把 R_ij 分给输入分量

       E_k = Σ_ij T_k^{(i,j)}(x, x̃^{(i,j)}) · R_ij / A_ij     (0/0 = 0)

根点只替换一个分量 m，所以只有 T_m 非零；又因为 A_ij 关于 x_m 是一阶三角多项式，
T_m = A_ij(x) − A_ij(x̃) = A_ij(x)，编码规则也是守恒的。

整个流程需要稠密的 2^{d+1} x 2^{d+1} 矩阵，比特数受 qlrp_qubit_cap 限制。
"""

import dataclasses
import logging

import numpy as np

import attribution
import config
import qcore
import rootfind
import twinn
from errors import DomainError, ResourceError, RootLookupError

logger = logging.getLogger(__name__)

# 编码规则每次向量化处理的矩阵元个数
_CHUNK = 1 << 16


@dataclasses.dataclass(frozen=True, eq=False)
class IntermediateRelevance:
    """
    线性规则的输出: 与 A(x) 同形状的相关性矩阵

    task_scale 记录 max|M_ij|, 用于检查 A_ij≈0 处 R_ij 也可忽略。
    """

    relevance: np.ndarray
    task_scale: float = 1.0

    def __post_init__(self):
        rel = np.array(self.relevance, dtype=float)
        rel.setflags(write=False)
        object.__setattr__(self, "relevance", rel)

    @property
    def shape(self):
        return self.relevance.shape

    def total(self):
        return float(self.relevance.sum())


def _entries(mat):
    return mat.entries if isinstance(mat, twinn.RealExpandedMatrix) else np.asarray(mat, dtype=float)


def linear_rule(A, M):
    """
    R_ij = ½ A_ij M_ji

    ½ 因子来自 f = ½ Tr{AM}，因此 ΣR 恰好等于 f(x)。
    """
    a, m = _entries(A), _entries(M)
    if a.shape != m.shape:
        raise DomainError(f"维度不匹配: A {a.shape}, M {m.shape}")
    return IntermediateRelevance(0.5 * a * m.T, float(np.abs(m).max(initial=0.0)))


def _expanded_at(rows, cols, points, d):
    """在各自的求值点上计算展开矩阵元 A_ij"""
    n = 2 ** d
    bi, k = np.divmod(rows, n)
    bj, l = np.divmod(cols, n)
    g = qcore.entries_g(k, l, points, d) / n
    return twinn.expanded_entries(g, bi, bj)


def _shift(points, comp, delta):
    out = points.copy()
    out[np.arange(out.shape[0]), comp] += delta
    return out


def _taylor_terms(rows, cols, x, roots_x, comp, d):
    """
    每个矩阵元在其替换分量 comp 上的泰勒项

        T = sin(δ) ∂A(x̃) + (1 − cos δ) ∂²A(x̃),   δ = x_comp − x̃_comp

    导数用矩阵元级的参数平移公式, 不构造稠密矩阵。
    """
    at_root = _expanded_at(rows, cols, roots_x, d)
    d1 = (_expanded_at(rows, cols, _shift(roots_x, comp, qcore.HALF_PI), d)
          - _expanded_at(rows, cols, _shift(roots_x, comp, -qcore.HALF_PI), d)) / 2
    d2 = -(at_root - _expanded_at(rows, cols, _shift(roots_x, comp, np.pi), d)) / 2
    delta = x[comp] - roots_x[np.arange(comp.size), comp]
    return np.sin(delta) * d1 + (1.0 - np.cos(delta)) * d2


def entry_taylor_terms(i, j, x, x_tilde, k):
    """
    单个矩阵元 A_ij 对分量 k 的泰勒项 T_k^{(i,j)}(x, x̃)

    参数:
        i, j (int): 展开矩阵下标
        x (array-like): 输入
        x_tilde (RootAssignment | array-like): 根点分配, 或直接给出的根点向量
        k (int): 分量下标

    异常:
        RootLookupError: 该矩阵元没有分配根点
    """
    x = qcore.as_input(x)
    d = x.size
    n = 2 ** d
    if not (0 <= i < 2 * n and 0 <= j < 2 * n):
        raise DomainError(f"下标 ({i}, {j}) 超出展开矩阵范围 [0, {2 * n})")
    if not 0 <= k < d:
        raise DomainError(f"分量下标 {k} 超出范围 [0, {d})")
    if isinstance(x_tilde, rootfind.RootAssignment):
        x_tilde = x_tilde.root_point(int(i % n), int(j % n))
    x_tilde = qcore.as_input(x_tilde, d)
    terms = _taylor_terms(np.array([i]), np.array([j]), x, x_tilde[None, :], np.array([k]), d)
    return float(terms[0])


def encoding_rule(x, A, R, roots, cls=0):
    """
    把矩阵元相关性分配到输入分量

    参数:
        x (array-like): 输入
        A (RealExpandedMatrix | np.ndarray): 特征矩阵 A(x)
        R (IntermediateRelevance): 线性规则的输出
        roots (RootAssignment): 同一个 x 的根点分配
        cls (int): 记录在解释中的类别

    返回:
        attribution.Explanation: 残差为 ΣE − ΣR

    异常:
        DomainError: 某个被跳过的矩阵元 A_ij≈0 但 R_ij 不为零
        RootLookupError: 非零矩阵元没有根点
    """
    x = qcore.as_input(x)
    d = x.size
    a = _entries(A)
    rel = R.relevance if isinstance(R, IntermediateRelevance) else np.asarray(R, dtype=float)
    if a.shape != (2 ** (d + 1),) * 2 or rel.shape != a.shape:
        raise DomainError(f"A {a.shape} 与 R {rel.shape} 的形状与输入维度 {d} 不符")

    tol = config.get_settings().zero_entry_tol
    skipped = np.abs(a) < tol
    scale = max(1.0, R.task_scale) if isinstance(R, IntermediateRelevance) else 1.0
    if np.any(np.abs(rel[skipped]) >= tol * scale):
        raise DomainError("存在 A_ij 为零而 R_ij 非零的矩阵元, 无法使用 0/0 = 0 约定")

    n = 2 ** d
    rows, cols = np.nonzero(~skipped)
    values = np.zeros(d)
    for start in range(0, rows.size, _CHUNK):
        r, c = rows[start:start + _CHUNK], cols[start:start + _CHUNK]
        comp = roots.component[r % n, c % n]
        if np.any(comp == rootfind.UNASSIGNED):
            bad = int(np.argmax(comp == rootfind.UNASSIGNED))
            raise RootLookupError(f"矩阵元 ({r[bad]}, {c[bad]}) 没有分配根点")
        roots_x = np.tile(roots.x, (r.size, 1))
        roots_x[np.arange(r.size), comp] = roots.value[r % n, c % n]
        terms = _taylor_terms(r, c, x, roots_x, comp, d)
        values += np.bincount(comp, weights=terms * rel[r, c] / a[r, c], minlength=d)

    logger.debug("[解释] 编码规则: %d 个非零矩阵元, 跳过 %d 个", rows.size, int(skipped.sum()))
    report = attribution.ConservationReport(float(values.sum()), float(rel.sum()), 0.0)
    return attribution.Explanation(values, attribution.Method.QLRP, cls, report=report)


def qlrp_explain(model, x, cls):
    """
    完整 Q-LRP: A(x) -> M(θ) -> 线性规则 -> 根点 -> 编码规则

    参数:
        model (qcore.CircuitModel): 线路模型
        x (array-like): 输入
        cls (int): 类别

    异常:
        ResourceError: 比特数超过 qlrp_qubit_cap
    """
    if not isinstance(model, qcore.CircuitModel):
        raise DomainError("Q-LRP 需要线路模型 (qcore.CircuitModel)")
    x = qcore.as_input(x, model.num_features)
    cap = config.get_settings().qlrp_qubit_cap
    if x.size > cap:
        raise ResourceError(f"Q-LRP 的比特数 {x.size} 超过上限 {cap}")
    model._check_class(cls)

    A = twinn.feature_matrix(x)
    M = twinn.m_map(model.observables[cls])
    R = linear_rule(A, M)
    roots = rootfind.find_root_points(x)
    expl = encoding_rule(x, A, R, roots, cls)
    report = attribution.ConservationReport(float(expl.values.sum()), model.value(x, cls), 0.0)
    return expl.with_report(report)
