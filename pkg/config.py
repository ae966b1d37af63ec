#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
全局配置模块

集中存放数值容差、量子比特上限、线程数等可调参数，
以及实验配置文件(JSON)的读取与哈希工具。

常量可以通过 configure() 在运行时整体覆盖，
实验配置文件中的 "tolerances" 段就是经由该函数生效的。
"""

import dataclasses
import hashlib
import json
import logging
import os
from pathlib import Path

from errors import ConfigError, MissingInputError

logger = logging.getLogger(__name__)

# ==================== 规模上限 ====================

QUBIT_CAP = 12          # 稠密模拟上限: 2^24 个矩阵元
QLRP_QUBIT_CAP = 10     # Q-LRP 需要遍历 4^d 个矩阵元
SHAPLEY_QUBIT_CAP = 12  # 精确 Shapley 需要 2^d 次联盟求值

# ==================== 数值容差 ====================

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
ZERO_ENTRY_TOL = 1e-12        # 编码规则 0/0 = 0 约定的阈值
RELATIVE_ERROR_FLOOR = 1e-12  # |f(x)| 低于此值时相对误差无定义
AGGREGATE_FLOOR = 1e-6        # 汇总相对误差时排除 |f(x)| 过小的样本
ROC_GRID = 512

# 线程数上限的环境变量
THREADS_ENV = "XQML_THREADS"


@dataclasses.dataclass(frozen=True)
class Settings:
    """可被实验配置覆盖的上限与容差"""

    qubit_cap: int = QUBIT_CAP
    qlrp_qubit_cap: int = QLRP_QUBIT_CAP
    shapley_qubit_cap: int = SHAPLEY_QUBIT_CAP
    hermitian_tol: float = HERMITIAN_TOL
    trace_tol: float = TRACE_TOL
    psd_tol: float = PSD_TOL
    zero_entry_tol: float = ZERO_ENTRY_TOL
    relative_error_floor: float = RELATIVE_ERROR_FLOOR
    aggregate_floor: float = AGGREGATE_FLOOR
    roc_grid: int = ROC_GRID


_settings = Settings()


def get_settings():
    """返回当前生效的 Settings"""
    return _settings


def configure(**overrides):
    """
    覆盖部分设置并返回新的 Settings

    参数:
        **overrides: Settings 的字段名及新值

    异常:
        ConfigError: 出现未知字段或非正的取值
    """
    global _settings
    known = {f.name for f in dataclasses.fields(Settings)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"未知的容差/上限配置项: {unknown}")
    for key, value in overrides.items():
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"配置项 {key} 必须为正数, 实际为 {value!r}")
    _settings = dataclasses.replace(_settings, **overrides)
    logger.debug("[配置] 当前设置: %s", _settings)
    return _settings


def reset_settings():
    """恢复默认设置(测试用)"""
    global _settings
    _settings = Settings()
    return _settings


def worker_threads():
    """
    读取 XQML_THREADS 环境变量得到线程池大小

    未设置时取 min(8, CPU 核数)。
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, min(8, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} 必须是正整数, 实际为 {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} 必须是正整数, 实际为 {raw!r}")
    return value


# ==================== 配置文件工具 ====================

def canonical_json(obj):
    """键排序、紧凑分隔符的 JSON 文本，用于哈希与落盘"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj):
    """配置对象的 sha256 前 16 位十六进制"""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def load_json(path):
    """
    读取 JSON 文档

    异常:
        MissingInputError: 文件不存在
        ConfigError: 内容不是合法 JSON
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"找不到文件: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} 不是合法的 JSON: {e}") from None


def dataclass_from_dict(cls, data, section):
    """
    用字典构造 dataclass，拒绝未知键

    参数:
        cls: 目标 dataclass 类型
        data (dict | None): 字段取值, None 表示全部使用默认值
        section (str): 报错时显示的配置段名称
    """
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"配置段 {section} 必须是 JSON 对象")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"配置段 {section} 含有未知键: {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置段 {section} 取值不合法: {e}") from None
