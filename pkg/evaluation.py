#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
解释质量评估模块

以数据集的真值掩码为参照给解释打分:

    Q_A   对齐度: 落在掩码内的 |E| 占总 |E| 的比例
    Q_P   单样本内 E 与掩码在各分量上的 Pearson 相关
    Q_ROC 以对齐度为阈值统计"解释正确"与"解释错误"(对反掩码的对齐度)的比例,
          把两条比例曲线画成 r_+(r_−) 后求面积
    relative_error  守恒性的相对误差 |ΣE − f(x)| / |f(x)|

无定义的值(全零解释、零方差、|f(x)| 过小)记为 NaN，不参与平均，并统计排除个数。
"""

import collections
import dataclasses
import json
import logging
import math
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

import attribution
import config
from errors import DomainError

logger = logging.getLogger(__name__)

METRICS = ("q_alignment", "q_pearson", "q_roc", "relative_error")


# ==================== 单样本指标 ====================

def q_alignment(E, mask):
    """
    Q_A = Σ|E_i| M_i / Σ|E_i|

    示例:
        >>> q_alignment([1, -2, 0, 1, 0, 0], [1, 1, 1, 0, 0, 0])
        0.75
    """
    E = np.abs(np.asarray(E, dtype=float))
    mask = np.asarray(mask, dtype=float)
    if E.shape != mask.shape:
        raise DomainError(f"解释形状 {E.shape} 与掩码形状 {mask.shape} 不符")
    total = E.sum()
    if total == 0:
        return math.nan
    return float(np.dot(E, mask) / total)


def q_pearson(E, mask):
    """单样本内 E 与掩码的 Pearson 相关, 任一方为常数时为 NaN"""
    E = np.asarray(E, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if E.shape != mask.shape:
        raise DomainError(f"解释形状 {E.shape} 与掩码形状 {mask.shape} 不符")
    if np.ptp(E) == 0 or np.ptp(mask) == 0:
        return math.nan
    return float(np.clip(np.corrcoef(E, mask)[0, 1], -1.0, 1.0))


# ==================== ROC ====================

@dataclasses.dataclass(frozen=True, eq=False)
class RocCurve:
    """
    字段:
        thresholds (np.ndarray): α 网格
        r_plus (np.ndarray): 对齐度 > α 的样本比例
        r_minus (np.ndarray): 反掩码对齐度 > α 的样本比例
        auc (float): r_+(r_−) 曲线下面积, 首尾补 (0,0) 与 (1,1)
        n_used (int): 参与统计的样本数
    """

    thresholds: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    auc: float
    n_used: int


def roc_curve(explanations, masks, grid=None):
    """
    参数:
        explanations (array-like): (n, d) 解释
        masks (array-like): (n, d) 对应的真值掩码
        grid (int | None): α 网格点数, 缺省取配置中的 roc_grid

    返回:
        RocCurve: 全部样本都无定义时 auc 为 NaN
    """
    E = np.asarray(explanations, dtype=float)
    masks = np.asarray(masks, dtype=float)
    if E.ndim != 2 or E.shape != masks.shape or E.shape[0] == 0:
        raise DomainError(f"解释 {E.shape} 与掩码 {masks.shape} 必须是同形状的非空二维数组")
    grid = grid or config.get_settings().roc_grid
    alphas = np.linspace(0.0, 1.0, grid)

    aligned = np.array([q_alignment(e, m) for e, m in zip(E, masks)])
    anti = np.array([q_alignment(e, 1 - m) for e, m in zip(E, masks)])
    keep = ~np.isnan(aligned)
    aligned, anti = aligned[keep], anti[keep]
    if aligned.size == 0:
        empty = np.zeros(grid)
        return RocCurve(alphas, empty, empty, math.nan, 0)

    r_plus = (aligned[None, :] > alphas[:, None]).mean(axis=1)
    r_minus = (anti[None, :] > alphas[:, None]).mean(axis=1)
    # α 从大到小时两条比例都单调不减
    xs = np.concatenate([[0.0], r_minus[::-1], [1.0]])
    ys = np.concatenate([[0.0], r_plus[::-1], [1.0]])
    return RocCurve(alphas, r_plus, r_minus, float(trapezoid(ys, xs)), int(aligned.size))


def roc_auc(explanations, masks, grid=None):
    return roc_curve(explanations, masks, grid).auc


# ==================== 汇总 ====================

MetricSummary = collections.namedtuple("MetricSummary", "method metric mean stderr n n_excluded")


def summarize(method, metric, values):
    """去掉 NaN 后求均值与标准误"""
    values = np.asarray(values, dtype=float)
    valid = values[~np.isnan(values)]
    n_excluded = int(values.size - valid.size)
    if valid.size == 0:
        return MetricSummary(method, metric, math.nan, math.nan, 0, n_excluded)
    stderr = float(valid.std(ddof=1) / math.sqrt(valid.size)) if valid.size > 1 else math.nan
    return MetricSummary(method, metric, float(valid.mean()), stderr, int(valid.size), n_excluded)


@dataclasses.dataclass(frozen=True)
class QualityScores:
    """一种方法在一个样本集上的逐样本分数

    class_means 是 (类别数, d) 的平均解释, 没有样本的类别为 NaN 行; class_counts 是各类样本数。
    """

    method: str
    q_alignment: np.ndarray
    q_pearson: np.ndarray
    relative_error: np.ndarray
    roc: RocCurve
    class_means: np.ndarray = None
    class_counts: np.ndarray = None

    def summaries(self):
        rows = [
            summarize(self.method, "q_alignment", self.q_alignment),
            summarize(self.method, "q_pearson", self.q_pearson),
            MetricSummary(self.method, "q_roc", self.roc.auc, math.nan, self.roc.n_used,
                          int(self.q_alignment.size - self.roc.n_used)),
            summarize(self.method, "relative_error", self.relative_error),
        ]
        return rows


@dataclasses.dataclass(frozen=True)
class Report:
    """评估报告: 每种方法 4 个指标的汇总, 以及逐样本分数"""

    scores: tuple
    config_hash: str = None
    seed: int = None

    def rows(self):
        return [row for s in self.scores for row in s.summaries()]

    def methods(self):
        return [s.method for s in self.scores]


def _aggregate_relative_error(report):
    """relative_error 汇总时额外排除 |f(x)| < aggregate_floor 的样本"""
    if report is None or abs(report.function_value) < config.get_settings().aggregate_floor:
        return math.nan
    return report.relative_error()


def class_mean_explanations(E, data):
    """
    按真实类别求平均解释

    参数:
        E (np.ndarray): (n, d) 解释
        data (dataset.Dataset): 与 E 逐行对应的样本

    返回:
        tuple[np.ndarray, np.ndarray]: (num_classes, d) 的平均解释与各类样本数
    """
    E = np.asarray(E, dtype=float)
    means = np.full((data.num_classes, E.shape[1]), math.nan)
    counts = np.zeros(data.num_classes, dtype=int)
    for c in range(data.num_classes):
        rows = data.class_indices(c)
        counts[c] = rows.size
        if rows.size:
            means[c] = E[rows].mean(axis=0)
    return means, counts


def score_method(method, explanations, data):
    """
    给一种方法的解释打分

    参数:
        method (str): 方法名
        explanations (list[Explanation]): 与 data 一一对应
        data (dataset.Dataset): 样本(标签决定掩码)
    """
    if len(explanations) != len(data):
        raise DomainError(f"{method}: 解释个数 {len(explanations)} 与样本数 {len(data)} 不符")
    E = np.array([e.values for e in explanations])
    masks = data.masks()
    qa = np.array([q_alignment(e, m) for e, m in zip(E, masks)])
    qp = np.array([q_pearson(e, m) for e, m in zip(E, masks)])
    rel = np.array([_aggregate_relative_error(e.report) for e in explanations])
    return QualityScores(method, qa, qp, rel, roc_curve(E, masks), *class_mean_explanations(E, data))


def evaluate_explanations(data, explanations_by_method, config_hash=None, seed=None):
    """
    由已算好的解释生成报告

    参数:
        data (dataset.Dataset): 被解释的样本
        explanations_by_method (dict): {方法名: list[Explanation] 或 {sample_id: Explanation}}
    """
    scores = []
    for method, expls in explanations_by_method.items():
        name = method.value if isinstance(method, attribution.Method) else str(method)
        if isinstance(expls, dict):
            missing = sorted(set(range(len(data))) - set(expls))
            if missing:
                raise DomainError(f"{name}: 缺少样本 {missing[:5]} 等 {len(missing)} 个解释")
            expls = [expls[i] for i in range(len(data))]
        scores.append(score_method(name, expls, data))
        logger.info("[评估] %s: Q_A=%.4f Q_ROC=%.4f", name,
                    summarize(name, "q_alignment", scores[-1].q_alignment).mean, scores[-1].roc.auc)
    return Report(tuple(scores), config_hash, seed)


def evaluate_suite(model, data, methods, cfg=None, progress=False, config_hash=None, seed=None):
    """
    对每种方法解释全部样本(解释其真实类别)并评估

    参数:
        model (qcore.CircuitModel): 模型
        data (dataset.Dataset): 测试集
        methods (list): 方法名
        cfg (BaselineConfig | dict | None): 统一的超参数, 或 {方法: BaselineConfig}
    """
    methods = attribution.parse_methods(list(methods))
    explanations = {}
    for method in methods:
        method_cfg = cfg.get(method) if isinstance(cfg, dict) else cfg
        explanations[method] = attribution.explain_batch(method, model, data.X, data.y,
                                                         method_cfg, progress=progress)
    return evaluate_explanations(data, explanations, config_hash, seed)


# ==================== 输出 ====================

def _json_number(value):
    return None if value is None or (isinstance(value, float) and math.isnan(value)) else value


def _provenance_cells(report):
    return f"{report.config_hash or ''},{'' if report.seed is None else report.seed}"


def write_report_csv(path, report):
    """列: method, metric, mean, stderr, n_excluded, config_hash, seed"""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write("method,metric,mean,stderr,n_excluded,config_hash,seed\n")
        for row in report.rows():
            f.write(f"{row.method},{row.metric},{row.mean:.10g},{row.stderr:.10g},"
                    f"{row.n_excluded},{_provenance_cells(report)}\n")
    logger.info("[保存] 评估报告已写入 %s", path)
    return path


def report_to_dict(report):
    return {
        "config_hash": report.config_hash,
        "seed": report.seed,
        "methods": report.methods(),
        "rows": [{k: _json_number(v) for k, v in row._asdict().items()} for row in report.rows()],
    }


def write_report_json(path, report):
    path = Path(path)
    path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def write_per_sample(path, report, data):
    """逐样本分数的 JSON-lines, 便于外部画图"""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for s in report.scores:
            for i in range(len(data)):
                record = {
                    "method": s.method,
                    "sample_id": i,
                    "label": int(data.y[i]),
                    "q_alignment": _json_number(float(s.q_alignment[i])),
                    "q_pearson": _json_number(float(s.q_pearson[i])),
                    "relative_error": _json_number(float(s.relative_error[i])),
                    "config_hash": report.config_hash,
                    "seed": report.seed,
                }
                f.write(json.dumps(record, sort_keys=True) + "\n")
    return path



def write_class_means(path, report):
    """
    每种方法每个类别的平均解释

    列: method, class, n, E_0..E_{d-1}, config_hash, seed
    """
    path = Path(path)
    d = report.scores[0].class_means.shape[1] if report.scores else 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(["method", "class", "n"] + [f"E_{i}" for i in range(d)]
                         + ["config_hash", "seed"]) + "\n")
        for s in report.scores:
            for c, row in enumerate(s.class_means):
                cells = ",".join(f"{v:.10g}" for v in row)
                f.write(f"{s.method},{c},{s.class_counts[c]},{cells},{_provenance_cells(report)}\n")
    logger.info("[保存] 类别平均解释已写入 %s", path)
    return path


def write_roc_curves(path, report):
    """
    每种方法的 ROC 曲线点

    列: method, alpha, r_plus, r_minus, config_hash, seed
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write("method,alpha,r_plus,r_minus,config_hash,seed\n")
        for s in report.scores:
            roc = s.roc
            for alpha, rp, rm in zip(roc.thresholds, roc.r_plus, roc.r_minus):
                f.write(f"{s.method},{alpha:.10g},{rp:.10g},{rm:.10g},{_provenance_cells(report)}\n")
    logger.info("[保存] ROC 曲线已写入 %s", path)
    return path
