#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成基准数据集

4 个类别、6 维输入。每个类别有 3 个"主维度"服从高斯分布 𝒩(μ, σ²)，
其余 3 个维度服从 [−m, m] 上的均匀分布。m 越大，非主维度的干扰越强，分类越难。

主维度(也就是真值掩码中为 1 的位置):

    类别 0: 0 1 2
    类别 1: 3 4 5
    类别 2: 0 2 4
    类别 3: 1 3 5

μ = (½, ½, 0) 按升序对应到各类别的三个主维度。
"""

import dataclasses
import json
import logging
import math
from pathlib import Path

import numpy as np

import config
from errors import ConfigError, DomainError, MissingInputError

logger = logging.getLogger(__name__)

NUM_FEATURES = 6
NUM_CLASSES = 4

MAIN_DIMENSIONS = {
    0: (0, 1, 2),
    1: (3, 4, 5),
    2: (0, 2, 4),
    3: (1, 3, 5),
}

# 基准实验使用的三档均匀分布半宽
M_VALUES = {"0.1": 0.1, "0.5": 0.5, "pi": math.pi}


@dataclasses.dataclass(frozen=True)
class DatasetConfig:
    """
    数据集生成参数

    字段:
        samples_per_class (int): 每个类别的样本数
        m (float): 非主维度均匀分布的半宽
        mu (tuple): 主维度的高斯均值
        sigma (float): 主维度的高斯标准差
        seed (int): 生成种子
        split_seed (int): 训练/测试划分种子
        test_fraction (float): 每个类别划入测试集的比例
    """

    samples_per_class: int = 1000
    m: float = 0.5
    mu: tuple = (0.5, 0.5, 0.0)
    sigma: float = 0.2 / math.sqrt(2)
    seed: int = 0
    split_seed: int = 1
    test_fraction: float = 0.2

    def __post_init__(self):
        if not isinstance(self.samples_per_class, (int, np.integer)) or self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class 必须是正整数, 实际为 {self.samples_per_class!r}")
        if not (isinstance(self.m, (int, float)) and math.isfinite(self.m) and self.m > 0):
            raise ConfigError(f"m 必须是正数, 实际为 {self.m!r}")
        mu = tuple(float(v) for v in self.mu)
        if len(mu) != 3:
            raise ConfigError(f"mu 必须有 3 个分量, 实际为 {len(mu)}")
        object.__setattr__(self, "mu", mu)
        if not self.sigma > 0:
            raise ConfigError(f"sigma 必须为正, 实际为 {self.sigma!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction 必须在 (0, 1) 内, 实际为 {self.test_fraction!r}")

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["mu"] = list(self.mu)
        return data


@dataclasses.dataclass(frozen=True)
class Sample:
    x: np.ndarray
    label: int


class Dataset:
    """
    带标签的样本集合

    按下标访问得到 Sample，同时暴露 X (n, 6) 与 y (n,) 两个只读数组供批量计算。
    """

    def __init__(self, X, y, num_classes=NUM_CLASSES):
        X = np.array(X, dtype=float).reshape(-1, NUM_FEATURES)
        y = np.array(y, dtype=int).reshape(-1)
        if X.shape[0] != y.size:
            raise DomainError(f"样本数 {X.shape[0]} 与标签数 {y.size} 不符")
        if not np.all(np.isfinite(X)):
            raise DomainError("样本含有非有限值")
        if y.size and (y.min() < 0 or y.max() >= num_classes):
            raise DomainError(f"标签必须在 [0, {num_classes}) 内")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.num_classes = num_classes

    def __len__(self):
        return self.y.size

    def __getitem__(self, index):
        return Sample(self.X[index], int(self.y[index]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.X[indices], self.y[indices], self.num_classes)

    def class_indices(self, cls):
        """标签为 cls 的样本下标"""
        return np.flatnonzero(self.y == cls)

    def masks(self):
        """每个样本所属类别的真值掩码, (n, 6)"""
        table = np.array([ground_truth_mask(c) for c in range(self.num_classes)])
        return table[self.y]


def ground_truth_mask(cls):
    """
    类别 cls 的真值掩码: 主维度为 1, 其余为 0

    示例:
        >>> ground_truth_mask(0)
        array([1, 1, 1, 0, 0, 0])
    """
    if cls not in MAIN_DIMENSIONS:
        raise DomainError(f"类别下标 {cls} 超出范围 [0, {NUM_CLASSES})")
    mask = np.zeros(NUM_FEATURES, dtype=int)
    mask[list(MAIN_DIMENSIONS[cls])] = 1
    return mask


def generate(cfg):
    """
    按类别生成样本

    每个类别使用由 (seed, 类别) 派生的独立随机数流，结果按类别顺序排列。

    参数:
        cfg (DatasetConfig): 生成参数

    返回:
        Dataset: NUM_CLASSES × samples_per_class 个样本
    """
    n = cfg.samples_per_class
    X = np.empty((NUM_CLASSES * n, NUM_FEATURES))
    for c in range(NUM_CLASSES):
        rng = np.random.default_rng([cfg.seed, c])
        block = rng.uniform(-cfg.m, cfg.m, size=(n, NUM_FEATURES))
        block[:, list(MAIN_DIMENSIONS[c])] = rng.normal(cfg.mu, cfg.sigma, size=(n, 3))
        X[c * n:(c + 1) * n] = block
    y = np.repeat(np.arange(NUM_CLASSES), n)
    logger.info("[数据] 生成 %d 个样本, m=%.4g, seed=%d", y.size, cfg.m, cfg.seed)
    return Dataset(X, y)


def split(data, cfg):
    """
    按类别分层划分训练/测试集

    每个类别用 (split_seed, 类别) 的随机数流打乱后取前 test_fraction 作为测试集；
    训练集再用 split_seed 整体打乱一次, 测试集保持类别顺序。

    返回:
        tuple[Dataset, Dataset]: (训练集, 测试集)
    """
    train_idx, test_idx = [], []
    for c in range(data.num_classes):
        idx = data.class_indices(c)
        if idx.size == 0:
            continue
        idx = np.random.default_rng([cfg.split_seed, c]).permutation(idx)
        n_test = int(round(cfg.test_fraction * idx.size))
        test_idx.append(np.sort(idx[:n_test]))
        train_idx.append(idx[n_test:])
    if not train_idx:
        raise DomainError("数据集为空, 无法划分")
    train = np.random.default_rng(cfg.split_seed).permutation(np.concatenate(train_idx))
    return data.subset(train), data.subset(np.concatenate(test_idx))


# ==================== 持久化 ====================

def _provenance(extra):
    return "# " + " ".join(f"{k}={v}" for k, v in sorted((extra or {}).items()))


def save_dataset(path, data, cfg, extra=None):
    """
    写 CSV(列 x0..x5, label) 以及同名 JSON 说明文件

    参数:
        extra (dict | None): 写入 CSV 首行注释与 JSON 的附加字段(config_hash、seed)
    """
    path = Path(path)
    header = ",".join([f"x{i}" for i in range(NUM_FEATURES)] + ["label"])
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(_provenance(extra) + "\n")
        f.write(header + "\n")
        rows = np.column_stack([data.X, data.y])
        np.savetxt(f, rows, delimiter=",", fmt=["%.17g"] * NUM_FEATURES + ["%d"])
    sidecar = {"config": cfg.to_dict(), "num_samples": len(data),
               "config_hash": config.config_hash(cfg.to_dict())}
    sidecar.update(extra or {})
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    logger.info("[保存] 数据集已写入 %s", path)
    return path


def load_dataset(path):
    """
    读取 save_dataset 写出的 CSV

    返回:
        tuple[Dataset, DatasetConfig | None]: 数据集与 JSON 说明文件中的配置(若存在)
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"找不到数据集文件: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()
             if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("x0"):
        raise DomainError(f"{path} 缺少表头 x0..x5,label")
    rows = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.zeros((0, 7))
    data = Dataset(rows[:, :NUM_FEATURES], rows[:, NUM_FEATURES].astype(int))

    cfg = None
    sidecar = path.with_suffix(".json")
    if sidecar.is_file():
        cfg = config.dataclass_from_dict(DatasetConfig, config.load_json(sidecar).get("config"), "dataset")
    return data, cfg
