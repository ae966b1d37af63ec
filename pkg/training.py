#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
PQC 分类器训练模块

损失: softmax 交叉熵 L = −mean_b log(softmax(f_b)_{y_b} + ε)
优化器: Adam + 余弦退火学习率
梯度: 对每个旋转角使用参数平移规则。

梯度的计算方式:
    令 w_bc = ∂L/∂f_bc, S_c = Σ_b w_bc ρ_b，则 ∂L/∂θ = Σ_c ∂ Tr{V S_c V† Z_c} / ∂θ。
    沿门序列做一次前向(把 S_c 推到第 t 个门之前)和一次反向(把 Z_c 拉回到第 t 个门之后)，
    第 t 个门的参数平移只需要两次单门共轭和两次求迹。
"""

import collections
import dataclasses
import functools
import logging
import math
from pathlib import Path

import numpy as np
from tqdm import tqdm

import qcore
from errors import ConfigError, DivergenceError, DomainError, MissingInputError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    训练超参数

    字段:
        learning_rate (float): 初始学习率, 按余弦退火降到 0
        epochs (int): 训练轮数
        layers (int): 强纠缠层数
        batch_size (int): 批大小, 最后一个不满的批也参与训练
        eps_stab (float): log(p + ε) 中的稳定项
        seed (int): 参数初始化种子
        beta1, beta2, adam_eps (float): Adam 常数
        progress (bool): 是否显示进度条
    """

    learning_rate: float = 1.0
    epochs: int = 200
    layers: int = 5
    batch_size: int = 1000
    eps_stab: float = 1e-10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    progress: bool = True

    def __post_init__(self):
        for name in ("epochs", "layers", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} 必须是正整数, 实际为 {value!r}")
        for name in ("learning_rate", "eps_stab", "adam_eps"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} 必须是正数, 实际为 {value!r}")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} 必须在 [0, 1) 内")

    def to_dict(self):
        data = dataclasses.asdict(self)
        # 进度条不影响结果, 不参与配置哈希
        data.pop("progress")
        return data


EpochRecord = collections.namedtuple("EpochRecord", "epoch loss train_acc test_acc")


@dataclasses.dataclass(frozen=True, eq=False)
class TrainedModel:
    """训练得到的线路结构、参数以及逐轮历史"""

    spec: qcore.CircuitSpec
    params: qcore.ParamVector
    history: tuple = ()

    @functools.cached_property
    def model(self):
        return qcore.CircuitModel(self.spec, self.params)


# ==================== 损失 ====================

def softmax(scores):
    z = np.asarray(scores, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(scores, labels, eps_stab=1e-10):
    """
    −mean log(softmax(scores)_label + ε)

    参数:
        scores (array-like): (C,) 或 (B, C) 各类别得分
        labels (int | array-like): 标签

    示例:
        >>> softmax_cross_entropy([0.0, 0.0, 0.0, 0.0], 2)  # ≈ log 4
        1.386...
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    if labels.shape != (scores.shape[0],):
        raise DomainError(f"得分形状 {scores.shape} 与标签形状 {labels.shape} 不符")
    p = softmax(scores)[np.arange(labels.size), labels]
    return float(-np.mean(np.log(p + eps_stab)))


def _score_weights(scores, labels, eps_stab):
    """∂L/∂f_bc = −(1/B) p_y (δ_cy − p_c) / (p_y + ε)"""
    B, C = scores.shape
    p = softmax(scores)
    py = p[np.arange(B), labels]
    onehot = np.eye(C)[labels]
    return -(py / (py + eps_stab))[:, None] * (onehot - p) / B


# ==================== 参数梯度 ====================

def _sweep_gradient(spec, params, weighted_states):
    """
    Σ_c ∂ Tr{V(θ) S_c V(θ)† Z_c} / ∂θ

    参数:
        weighted_states (np.ndarray): (C, N, N) 每个类别的加权态 S_c
    """
    d = spec.num_qubits
    theta = params.values
    gates = qcore.circuit_gates(spec)
    grad = np.zeros(spec.num_params)

    for c in range(spec.num_classes):
        # pulled[t] 是第 t 个门之后的观测量
        pulled = [None] * len(gates)
        h = qcore.pauli_z_sum(spec.measured_qubits(c), d)
        for t in range(len(gates) - 1, -1, -1):
            pulled[t] = h
            gate = gates[t]
            angle = None if gate.param is None else theta[gate.param]
            h = qcore.apply_gate(h, gate, angle, d, adjoint=True)

        s = weighted_states[c]
        for t, gate in enumerate(gates):
            if gate.param is None:
                s = qcore.apply_gate(s, gate, None, d)
                continue
            angle = theta[gate.param]
            plus = qcore.expectation(qcore.apply_gate(s, gate, angle + qcore.HALF_PI, d), pulled[t])
            minus = qcore.expectation(qcore.apply_gate(s, gate, angle - qcore.HALF_PI, d), pulled[t])
            grad[gate.param] += (plus - minus) / 2
            s = qcore.apply_gate(s, gate, angle, d)
    return grad


def loss_and_gradient(spec, params, X, y, eps_stab=1e-10):
    """
    一个批次的平均损失及其对全部旋转角的梯度

    返回:
        tuple[float, np.ndarray]: (损失, 长度 num_params 的梯度)
    """
    params = qcore.as_params(spec, params)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise DomainError("批次为空")
    model = qcore.CircuitModel(spec, params)
    states = qcore.encode_batch(X)
    scores = model.score_states(states)
    loss = softmax_cross_entropy(scores, y, eps_stab)
    w = _score_weights(scores, y, eps_stab)
    weighted = np.einsum("bc,bij->cij", w, states)
    return loss, _sweep_gradient(spec, params, weighted)


def parameter_gradient(spec, params, X, y, eps_stab=1e-10):
    """批次平均损失对旋转角的梯度"""
    return loss_and_gradient(spec, params, X, y, eps_stab)[1]


# ==================== 优化器 ====================

class Adam:
    """
    Adam 优化器

    状态(一阶、二阶矩和步数)在 step() 之间保留。
    """

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grad, lr):
        """返回更新后的参数数组"""
        params = np.asarray(params, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_decay(step, total_steps, base_lr):
    """lr_t = base_lr · ½(1 + cos(π t / T)), t = 0..T-1"""
    if total_steps < 1:
        raise DomainError(f"总步数必须为正, 实际为 {total_steps}")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(step, total_steps) / total_steps))


# ==================== 训练 ====================

def accuracy(model, data):
    """
    argmax 预测正确的比例, 并列时取下标最小的类别

    参数:
        model (qcore.CircuitModel | TrainedModel): 模型
        data (dataset.Dataset): 样本
    """
    if isinstance(model, TrainedModel):
        model = model.model
    if len(data) == 0:
        raise DomainError("样本集为空, 无法计算准确率")
    return float(np.mean(model.predict(data.X) == data.y))


def train(train_set, cfg, test_set=None):
    """
    训练分类线路

    参数:
        train_set (dataset.Dataset): 训练集(已打乱)
        cfg (TrainConfig): 超参数
        test_set (dataset.Dataset | None): 每轮评估的测试集

    返回:
        TrainedModel

    异常:
        DivergenceError: 损失变为 NaN/Inf
    """
    if len(train_set) == 0:
        raise DomainError("训练集为空")
    spec = qcore.CircuitSpec(num_qubits=train_set.X.shape[1], num_layers=cfg.layers,
                             observables=tuple(range(train_set.num_classes)))
    params = qcore.ParamVector.random(spec, cfg.seed).values
    optimizer = Adam(cfg.beta1, cfg.beta2, cfg.adam_eps)

    n = len(train_set)
    starts = list(range(0, n, cfg.batch_size))
    total_steps = cfg.epochs * len(starts)
    logger.info("[训练] %d 个参数, %d 个样本, 每轮 %d 个批次, 共 %d 轮",
                spec.num_params, n, len(starts), cfg.epochs)

    history = []
    step = 0
    for epoch in tqdm(range(1, cfg.epochs + 1), desc="[训练]", disable=not cfg.progress):
        epoch_loss = 0.0
        for start in starts:
            X = train_set.X[start:start + cfg.batch_size]
            y = train_set.y[start:start + cfg.batch_size]
            loss, grad = loss_and_gradient(spec, params, X, y, cfg.eps_stab)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(f"第 {epoch} 轮第 {step} 步损失或梯度非有限 (loss={loss})")
            params = optimizer.step(params, grad, cosine_decay(step, total_steps, cfg.learning_rate))
            epoch_loss += loss * y.size
            step += 1

        model = qcore.CircuitModel(spec, params)
        record = EpochRecord(epoch, epoch_loss / n, accuracy(model, train_set),
                             accuracy(model, test_set) if test_set is not None and len(test_set) else math.nan)
        history.append(record)
        logger.debug("[训练] 第 %d 轮: loss=%.6f train_acc=%.4f test_acc=%.4f", *record)

    last = history[-1]
    logger.info("[训练] 完成: loss=%.6f train_acc=%.4f test_acc=%.4f",
                last.loss, last.train_acc, last.test_acc)
    return TrainedModel(spec, qcore.ParamVector(params), tuple(history))


# ==================== 持久化 ====================

def save_history(path, history, extra=None):
    """写逐轮历史 CSV: epoch, loss, train_acc, test_acc"""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write("# " + " ".join(f"{k}={v}" for k, v in sorted((extra or {}).items())) + "\n")
        f.write(",".join(EpochRecord._fields) + "\n")
        for r in history:
            f.write(f"{r.epoch},{r.loss:.17g},{r.train_acc:.17g},{r.test_acc:.17g}\n")
    logger.info("[保存] 训练历史已写入 %s", path)
    return path


def load_history(path):
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"找不到训练历史文件: {path}")
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#") or line.startswith("epoch"):
            continue
        epoch, loss, train_acc, test_acc = line.split(",")
        records.append(EpochRecord(int(epoch), float(loss), float(train_acc), float(test_acc)))
    return tuple(records)


def save_trained(model_path, history_path, trained, extra=None):
    qcore.save_circuit(model_path, trained.spec, trained.params, extra)
    save_history(history_path, trained.history, extra)


def load_trained(model_path, history_path=None):
    spec, params = qcore.load_circuit(model_path)
    history = load_history(history_path) if history_path is not None else ()
    return TrainedModel(spec, params, history)
