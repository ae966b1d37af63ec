#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
局部归因(解释)方法模块

每种方法把 (模型, 输入 x, 类别, 方法配置) 映射为一个 Explanation，
即长度为 d 的相关性向量 E(x)。

支持的方法:
    grad                 梯度 ∂_i f(x)
    smooth_grad          高斯扰动下梯度的蒙特卡洛平均
    sensitivity          |∂_i f(x)|
    grad_x_input         ∂_i f(x) · x_i
    taylor_1             一阶泰勒 ∂_i f(x̃)(x_i − x̃_i)
    integrated_gradients 沿 x̃ -> x 的直线路径对梯度积分(中点公式)
    shapley_exact        精确基线 Shapley 值
    shapley_sampling     随机排列采样的 Shapley 估计
    taylor_inf           单分量全阶泰勒 sin(δ)∂f(x̃) + (1 − cos δ)∂²f(x̃)
    qlrp                 量子层级相关性传播(见 qlrp.py)

模型只需要提供 value(x, cls)、gradient(x, cls)、hessian_diag(x, cls)
和 num_features 属性；qcore.CircuitModel 满足这一约定。

随机性:
    批量解释时第 i 个样本的随机数流由 (rng_seed, i) 派生，
    因此并行与串行的结果逐位一致。
"""

import concurrent.futures
import dataclasses
import enum
import json
import logging
import math
from pathlib import Path

import numpy as np
from tqdm import tqdm

import config
from errors import ConfigError, DomainError, MissingInputError, ResourceError, UnsupportedMethodError

logger = logging.getLogger(__name__)


class Method(str, enum.Enum):
    """解释方法名, 取值即报告与命令行里使用的名字"""

    GRAD = "grad"
    SMOOTH_GRAD = "smooth_grad"
    SENSITIVITY = "sensitivity"
    GRAD_X_INPUT = "grad_x_input"
    TAYLOR_1 = "taylor_1"
    INTEGRATED_GRADIENTS = "integrated_gradients"
    SHAPLEY_EXACT = "shapley_exact"
    SHAPLEY_SAMPLING = "shapley_sampling"
    TAYLOR_INF = "taylor_inf"
    QLRP = "qlrp"

    @property
    def uses_baseline(self):
        return self in _BASELINE_METHODS

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            known = ", ".join(m.value for m in cls)
            raise UnsupportedMethodError(f"不支持的解释方法 {name!r}, 可选: {known}") from None


_BASELINE_METHODS = frozenset({
    Method.TAYLOR_1, Method.INTEGRATED_GRADIENTS, Method.SHAPLEY_EXACT,
    Method.SHAPLEY_SAMPLING, Method.TAYLOR_INF,
})


def parse_methods(names):
    """
    解析方法名列表

    参数:
        names (str | list): 逗号分隔的字符串或名字列表; "all" 表示全部十种

    异常:
        UnsupportedMethodError: 出现未知名字
    """
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    if not names:
        raise ConfigError("方法列表不能为空")
    if any(str(n).strip().lower() == "all" for n in names):
        return list(Method)
    methods = []
    for name in names:
        method = Method.parse(name)
        if method not in methods:
            methods.append(method)
    return methods


# ==================== 配置与结果类型 ====================

@dataclasses.dataclass(frozen=True)
class BaselineConfig:
    """
    各方法的超参数

    字段:
        baseline (tuple | None): 基线 x̃, None 表示零向量
        ig_steps (int): 积分梯度的中点公式步数
        sv_samples (int): Shapley 采样的排列个数
        smoothgrad_sigma (float): SmoothGrad 的高斯噪声标准差
        smoothgrad_samples (int): SmoothGrad 的采样个数
        rng_seed (int): 随机数种子
    """

    baseline: tuple = None
    ig_steps: int = 50
    sv_samples: int = 2000
    smoothgrad_sigma: float = 0.1
    smoothgrad_samples: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.baseline is not None:
            baseline = tuple(float(v) for v in self.baseline)
            if not all(math.isfinite(v) for v in baseline):
                raise ConfigError("基线含有非有限值")
            object.__setattr__(self, "baseline", baseline)
        for name in ("ig_steps", "sv_samples", "smoothgrad_samples"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} 必须是正整数, 实际为 {value!r}")
        if not self.smoothgrad_sigma > 0:
            raise ConfigError(f"smoothgrad_sigma 必须为正, 实际为 {self.smoothgrad_sigma!r}")

    def baseline_for(self, d):
        """长度为 d 的基线向量"""
        if self.baseline is None:
            return np.zeros(d)
        if len(self.baseline) != d:
            raise DomainError(f"基线长度 {len(self.baseline)} 与输入维度 {d} 不符")
        return np.array(self.baseline)

    def rng(self, sample_index=None):
        if sample_index is None:
            return np.random.default_rng(self.rng_seed)
        return np.random.default_rng([self.rng_seed, int(sample_index)])

    def to_dict(self):
        data = dataclasses.asdict(self)
        if self.baseline is not None:
            data["baseline"] = list(self.baseline)
        return data


@dataclasses.dataclass(frozen=True)
class ConservationReport:
    """
    守恒性检查

    residual = sum_relevance + baseline_value − function_value 衡量相对基线的守恒;
    relative_error 按 |sum_relevance − function_value| / |function_value| 计算, 不加回 f(x̃)。
    """

    sum_relevance: float
    function_value: float
    baseline_value: float
    residual: float = dataclasses.field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "residual",
                           float(self.sum_relevance + self.baseline_value - self.function_value))

    @property
    def output_gap(self):
        """ΣE − f(x)"""
        return float(self.sum_relevance - self.function_value)

    def relative_error(self):
        """|ΣE − f(x)| / |f(x)|, |f(x)| 过小时为 NaN"""
        if abs(self.function_value) <= config.get_settings().relative_error_floor:
            return math.nan
        return abs(self.output_gap) / abs(self.function_value)


@dataclasses.dataclass(frozen=True, eq=False)
class Explanation:
    """
    单个输入、单个类别的解释

    字段:
        values (np.ndarray): 长度 d 的相关性
        method (Method): 方法名
        cls (int): 被解释的类别
        baseline_used (np.ndarray | None): 使用的基线, 无基线方法为 None
        report (ConservationReport | None): 守恒性检查
    """

    values: np.ndarray
    method: Method
    cls: int
    baseline_used: np.ndarray = None
    report: ConservationReport = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{self.method.value} 解释含有非有限值")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.baseline_used is not None:
            baseline = np.array(self.baseline_used, dtype=float)
            baseline.setflags(write=False)
            object.__setattr__(self, "baseline_used", baseline)

    def __len__(self):
        return self.values.size

    @property
    def residual(self):
        return math.nan if self.report is None else self.report.residual

    def with_report(self, report):
        return dataclasses.replace(self, report=report)


# ==================== 模型求值辅助 ====================

def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.num_features:
        raise DomainError(f"输入形状应为 ({model.num_features},), 实际为 {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("输入含有非有限值")
    return x


def _values(model, Z, cls):
    """在多个点上求 f_cls, 支持批量打分的模型走批量路径"""
    Z = np.asarray(Z, dtype=float)
    if hasattr(model, "score_batch"):
        return np.asarray(model.score_batch(Z))[:, cls]
    return np.array([model.value(z, cls) for z in Z])


def _gradients(model, Z, cls):
    return np.array([model.gradient(z, cls) for z in Z])


def _coalition_points(x, baseline, masks):
    """第 i 位为 1 的分量取 x_i, 其余取基线"""
    d = x.size
    keep = ((np.asarray(masks)[:, None] >> np.arange(d)) & 1).astype(bool)
    return np.where(keep, x, baseline)


# ==================== 梯度类方法 ====================

def grad_explain(model, x, cls):
    """E_i = ∂_i f(x)"""
    x = _check_input(model, x)
    return Explanation(model.gradient(x, cls), Method.GRAD, cls)


def smoothgrad_explain(model, x, cls, cfg=None, sample_index=None):
    """
    SmoothGrad: 在 x 附近加 𝒩(0, σ²I) 噪声, 对梯度取平均

    参数:
        cfg (BaselineConfig | None): 取 smoothgrad_sigma、smoothgrad_samples、rng_seed
        sample_index (int | None): 批量解释中的样本序号, 用于派生随机数流
    """
    cfg = cfg or BaselineConfig()
    x = _check_input(model, x)
    rng = cfg.rng(sample_index)
    noise = rng.normal(0.0, cfg.smoothgrad_sigma, size=(cfg.smoothgrad_samples, x.size))
    grads = _gradients(model, x + noise, cls)
    return Explanation(grads.mean(axis=0), Method.SMOOTH_GRAD, cls)


def sensitivity_explain(model, x, cls):
    x = _check_input(model, x)
    return Explanation(np.abs(model.gradient(x, cls)), Method.SENSITIVITY, cls)


def gradxinput_explain(model, x, cls):
    x = _check_input(model, x)
    return Explanation(model.gradient(x, cls) * x, Method.GRAD_X_INPUT, cls)


def taylor1_explain(model, x, cls, baseline=None):
    """一阶泰勒: E_i = ∂_i f(x̃)(x_i − x̃_i)"""
    x = _check_input(model, x)
    x_tilde = np.zeros_like(x) if baseline is None else _check_input(model, baseline)
    values = model.gradient(x_tilde, cls) * (x - x_tilde)
    return Explanation(values, Method.TAYLOR_1, cls, baseline_used=x_tilde)


def integrated_gradients_explain(model, x, cls, baseline=None, steps=50):
    """
    积分梯度, 中点公式

        E_i = (x_i − x̃_i) · (1/steps) Σ_{t=1..steps} ∂_i f(x̃ + (t − ½)/steps · (x − x̃))
    """
    if steps < 1:
        raise DomainError(f"积分步数必须为正, 实际为 {steps}")
    x = _check_input(model, x)
    x_tilde = np.zeros_like(x) if baseline is None else _check_input(model, baseline)
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    path = x_tilde + alphas[:, None] * (x - x_tilde)
    values = (x - x_tilde) * _gradients(model, path, cls).mean(axis=0)
    return Explanation(values, Method.INTEGRATED_GRADIENTS, cls, baseline_used=x_tilde)


def taylor_inf_explain(model, x, cls, baseline=None):
    """
    单分量全阶泰勒展开

    对每个分量只编码一次的线路, f 关于单个分量是一阶三角多项式 a + b cos + c sin，
    因此单分量贡献可以精确写成

        T_i = sin(x_i − x̃_i) ∂_i f(x̃) + (1 − cos(x_i − x̃_i)) ∂²_i f(x̃)

    剩余误差只来自分量之间的交叉项。返回的解释附带守恒性报告。
    """
    x = _check_input(model, x)
    x_tilde = np.zeros_like(x) if baseline is None else _check_input(model, baseline)
    delta = x - x_tilde
    values = (np.sin(delta) * model.gradient(x_tilde, cls)
              + (1.0 - np.cos(delta)) * model.hessian_diag(x_tilde, cls))
    expl = Explanation(values, Method.TAYLOR_INF, cls, baseline_used=x_tilde)
    return expl.with_report(conservation_report(expl, model, x, cls))


# ==================== Shapley 值 ====================

def _shapley_weights(d):
    """|S|!(d−1−|S|)!/d!, 按 |S| = 0..d-1 索引"""
    return np.array([math.factorial(s) * math.factorial(d - 1 - s) / math.factorial(d)
                     for s in range(d)])


def shapley_exact(model, x, cls, baseline=None):
    """
    精确基线 Shapley 值

    一次性求出全部 2^d 个联盟的函数值(按位掩码缓存)，再按加权边际贡献求和。

    异常:
        ResourceError: d 超过 shapley_qubit_cap
    """
    x = _check_input(model, x)
    d = x.size
    cap = config.get_settings().shapley_qubit_cap
    if d > cap:
        raise ResourceError(f"精确 Shapley 需要 2^{d} 次求值, 超过上限 2^{cap}")
    x_tilde = np.zeros_like(x) if baseline is None else _check_input(model, baseline)

    masks = np.arange(2 ** d)
    coalition = _values(model, _coalition_points(x, x_tilde, masks), cls)
    sizes = np.array([bin(int(s)).count("1") for s in masks])
    weights = _shapley_weights(d)

    values = np.empty(d)
    for i in range(d):
        without = masks[((masks >> i) & 1) == 0]
        marginal = coalition[without | (1 << i)] - coalition[without]
        values[i] = np.dot(weights[sizes[without]], marginal)
    return Explanation(values, Method.SHAPLEY_EXACT, cls, baseline_used=x_tilde)


def shapley_sampling(model, x, cls, baseline=None, samples=2000, seed=0, sample_index=None):
    """
    随机排列采样的 Shapley 估计(无偏)

    每个排列依次把分量从基线切换为 x, 记录边际贡献。
    所有排列共享同一个联盟值缓存, 每个联盟只求值一次。
    """
    if samples < 1:
        raise DomainError(f"采样排列数必须为正, 实际为 {samples}")
    x = _check_input(model, x)
    d = x.size
    x_tilde = np.zeros_like(x) if baseline is None else _check_input(model, baseline)
    rng = (np.random.default_rng(seed) if sample_index is None
           else np.random.default_rng([seed, int(sample_index)]))

    perms = rng.permuted(np.tile(np.arange(d), (samples, 1)), axis=1)
    # 各分量位互不相同, 累加即按位或
    after = np.cumsum(np.int64(1) << perms.astype(np.int64), axis=1)
    before = np.concatenate([np.zeros((samples, 1), dtype=np.int64), after[:, :-1]], axis=1)

    needed, inverse = np.unique(np.concatenate([before.ravel(), after.ravel()]), return_inverse=True)
    cache = _values(model, _coalition_points(x, x_tilde, needed), cls)
    n = before.size
    marginal = cache[inverse[n:]] - cache[inverse[:n]]

    values = np.zeros(d)
    np.add.at(values, perms.ravel(), marginal)
    values /= samples
    logger.debug("[解释] Shapley 采样: %d 个排列, %d 个不同联盟", samples, needed.size)
    return Explanation(values, Method.SHAPLEY_SAMPLING, cls, baseline_used=x_tilde)


# ==================== 守恒性 ====================

def conservation_report(expl, model, x, cls, baseline=None):
    """
    计算 ΣE、f(x)、f(x̃) 以及残差

    baseline 缺省时使用解释里记录的基线; 无基线方法取 f(x̃) = 0。
    """
    x = _check_input(model, x)
    if baseline is None:
        baseline = expl.baseline_used
    fb = 0.0 if baseline is None else float(model.value(np.asarray(baseline, dtype=float), cls))
    return ConservationReport(float(expl.values.sum()), float(model.value(x, cls)), fb)


def relative_error(expl, model, x, cls):
    """
    相对近似误差 |ΣE − f(x)| / |f(x)|

    |f(x)| 不超过 relative_error_floor 时返回 NaN(无定义, 不参与汇总)。
    """
    report = expl.report or conservation_report(expl, model, x, cls)
    return report.relative_error()


# ==================== 分发与批量 ====================

def explain(method, model, x, cls, cfg=None, sample_index=None):
    """
    用指定方法解释一个输入, 并附上守恒性报告

    参数:
        method (Method | str): 方法名
        model: 提供 value/gradient/hessian_diag 的模型
        x (array-like): 输入
        cls (int): 被解释的类别
        cfg (BaselineConfig | None): 方法超参数
        sample_index (int | None): 批量中的样本序号
    """
    method = Method.parse(method.value if isinstance(method, Method) else method)
    cfg = cfg or BaselineConfig()
    x = _check_input(model, x)
    baseline = cfg.baseline_for(x.size) if method.uses_baseline else None

    if method is Method.GRAD:
        expl = grad_explain(model, x, cls)
    elif method is Method.SMOOTH_GRAD:
        expl = smoothgrad_explain(model, x, cls, cfg, sample_index)
    elif method is Method.SENSITIVITY:
        expl = sensitivity_explain(model, x, cls)
    elif method is Method.GRAD_X_INPUT:
        expl = gradxinput_explain(model, x, cls)
    elif method is Method.TAYLOR_1:
        expl = taylor1_explain(model, x, cls, baseline)
    elif method is Method.INTEGRATED_GRADIENTS:
        expl = integrated_gradients_explain(model, x, cls, baseline, cfg.ig_steps)
    elif method is Method.SHAPLEY_EXACT:
        expl = shapley_exact(model, x, cls, baseline)
    elif method is Method.SHAPLEY_SAMPLING:
        expl = shapley_sampling(model, x, cls, baseline, cfg.sv_samples, cfg.rng_seed, sample_index)
    elif method is Method.TAYLOR_INF:
        expl = taylor_inf_explain(model, x, cls, baseline)
    else:
        import qlrp
        return qlrp.qlrp_explain(model, x, cls)

    if expl.report is None:
        expl = expl.with_report(conservation_report(expl, model, x, cls))
    return expl


def explain_batch(method, model, X, classes, cfg=None, progress=False, max_workers=None):
    """
    对一批输入逐个解释, 线程池并行

    参数:
        X (np.ndarray): (B, d) 输入
        classes (array-like): (B,) 每个样本被解释的类别
        max_workers (int | None): 线程数, 缺省读取 XQML_THREADS

    返回:
        list[Explanation]: 与 X 顺序一致
    """
    X = np.asarray(X, dtype=float)
    classes = np.asarray(classes, dtype=int)
    if X.ndim != 2 or classes.shape != (X.shape[0],):
        raise DomainError(f"输入形状 {X.shape} 与类别形状 {classes.shape} 不匹配")
    method = Method.parse(method.value if isinstance(method, Method) else method)
    workers = max_workers or config.worker_threads()
    logger.info("[解释] %s: %d 个样本, %d 个线程", method.value, X.shape[0], workers)

    def task(i):
        return explain(method, model, X[i], int(classes[i]), cfg, sample_index=i)

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        results = pool.map(task, range(X.shape[0]))
        return list(tqdm(results, total=X.shape[0], desc=f"[解释] {method.value}",
                         disable=not progress, leave=False))


# ==================== JSON-lines 持久化 ====================

def explanation_record(expl, sample_id, config_hash=None, seed=None):
    """一条解释的 JSON 记录"""
    report = expl.report
    return {
        "sample_id": int(sample_id),
        "class": int(expl.cls),
        "method": expl.method.value,
        "values": [float(v) for v in expl.values],
        "baseline": None if expl.baseline_used is None else [float(v) for v in expl.baseline_used],
        "residual": None if report is None else report.residual,
        "function_value": None if report is None else report.function_value,
        "baseline_value": None if report is None else report.baseline_value,
        "output_gap": None if report is None else report.output_gap,
        "config_hash": config_hash,
        "seed": seed,
    }


def explanation_from_record(record):
    """explanation_record 的逆操作, 返回 (sample_id, Explanation)"""
    try:
        report = None
        if record.get("function_value") is not None:
            report = ConservationReport(float(np.sum(record["values"])),
                                        record["function_value"], record["baseline_value"])
        expl = Explanation(
            values=record["values"],
            method=Method.parse(record["method"]),
            cls=int(record["class"]),
            baseline_used=record.get("baseline"),
            report=report,
        )
    except KeyError as e:
        raise DomainError(f"解释记录缺少字段 {e}") from None
    return int(record["sample_id"]), expl


def save_explanations(path, records):
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    logger.info("[保存] 解释已写入 %s", path)
    return path


def load_explanations(path):
    """读取 JSON-lines, 返回 {method: {sample_id: Explanation}}"""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"找不到解释文件: {path}")
    by_method = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DomainError(f"{path} 第 {lineno} 行不是合法 JSON: {e}") from None
            sample_id, expl = explanation_from_record(record)
            by_method.setdefault(expl.method, {})[sample_id] = expl
    return by_method
