#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义模块

所有库内异常都继承自 XqmlError，并带有命令行退出码 exit_code。
命令行入口(cli.py)只需捕获 XqmlError 即可把错误转换为机器可读的输出。

退出码约定:
    2 - 配置错误
    3 - 输入文件缺失
    4 - 不支持的解释方法
    5 - 训练发散(损失非有限)
    6 - 数值/定义域错误
    7 - 资源上限(量子比特数超限)
"""


class XqmlError(Exception):
    """库内所有异常的基类"""

    exit_code = 1


class DomainError(XqmlError, ValueError):
    """输入数值、形状或取值范围不合法"""

    exit_code = 6


class ResourceError(XqmlError):
    """问题规模超过配置的量子比特上限"""

    exit_code = 7


class RootLookupError(XqmlError, KeyError):
    """Q-LRP 编码规则查询了没有分配根点的矩阵元"""

    exit_code = 6

    def __str__(self):
        # KeyError 默认会给消息加引号
        return str(self.args[0]) if self.args else ""


class ConfigError(XqmlError):
    """实验配置中的键或取值不合法"""

    exit_code = 2


class UnsupportedMethodError(ConfigError):
    """配置或命令行中出现了未知的解释方法名"""

    exit_code = 4


class MissingInputError(XqmlError, FileNotFoundError):
    """流水线的上游产物不存在"""

    exit_code = 3


class DivergenceError(XqmlError, ArithmeticError):
    """训练过程中损失变为 NaN/Inf"""

    exit_code = 5
