#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
可解释量子机器学习实验 - 命令行入口

流水线: 数据集 -> 训练 -> 解释 -> 评估 -> 报告

子命令:
    dataset    生成合成数据集            -> dataset.csv, dataset.json
    train      训练分类线路              -> model.json, history.csv
    explain    对测试集逐方法求解释      -> explanations.jsonl
    evaluate   计算解释质量指标          -> report.csv, report.json, per_sample.jsonl,
                                             class_means.csv, roc_curves.csv
    reproduce  依次执行以上四步

所有产物写在 <out>/m=<m>/ 下，并记录配置哈希与种子。
相同的配置与种子重复运行会得到逐字节相同的报告。

使用说明:
    python cli.py reproduce --m 0.5 --out results
    python cli.py reproduce --m all --config experiment.json
    python cli.py explain --methods taylor_inf,qlrp --m pi

环境变量:
    XQML_THREADS  解释阶段的线程数上限

退出码:
    0 成功; 2 配置错误; 3 输入文件缺失; 4 不支持的方法;
    5 训练发散; 6 数值错误; 7 规模超限; 130 用户中断
"""

import argparse
import copy
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import attribution
import config
import dataset
import evaluation
import training
from errors import ConfigError, MissingInputError, XqmlError

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset.csv"
MODEL_FILE = "model.json"
HISTORY_FILE = "history.csv"
EXPLANATIONS_FILE = "explanations.jsonl"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
PER_SAMPLE_FILE = "per_sample.jsonl"
CLASS_MEANS_FILE = "class_means.csv"
ROC_CURVES_FILE = "roc_curves.csv"

_TOP_LEVEL_KEYS = {"dataset", "train", "methods", "output_dir", "seed", "tolerances"}


# ==================== 实验配置 ====================

@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """
    一次实验的完整配置

    字段:
        dataset (DatasetConfig): 数据集参数
        train (TrainConfig): 训练参数
        methods (dict): {Method: BaselineConfig}, 按给出顺序
        output_dir (str): 输出根目录
        seed (int): 全局种子; 各子配置未显式给出种子时由它派生
        tolerances (dict): 传给 config.configure 的容差/上限覆盖
    """

    dataset: dataset.DatasetConfig
    train: training.TrainConfig
    methods: dict
    output_dir: str = "results"
    seed: int = 0
    tolerances: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        """
        由 JSON 文档构造

        子配置中没有显式给出的种子按全局种子派生:
        dataset.seed = seed, dataset.split_seed = seed + 1, train.seed = seed + 2,
        各方法的 rng_seed = seed + 3。

        异常:
            ConfigError: 未知键或非法取值
            UnsupportedMethodError: 未知方法名
        """
        if not isinstance(data, dict):
            raise ConfigError("实验配置必须是 JSON 对象")
        unknown = sorted(set(data) - _TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(f"实验配置含有未知键: {unknown}")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed 必须是整数, 实际为 {seed!r}")

        ds = dict(data.get("dataset") or {})
        ds.setdefault("seed", seed)
        ds.setdefault("split_seed", seed + 1)
        tr = dict(data.get("train") or {})
        tr.setdefault("seed", seed + 2)

        raw_methods = data.get("methods", ["all"])
        if isinstance(raw_methods, (list, str)):
            raw_methods = {m.value: {} for m in attribution.parse_methods(raw_methods)}
        if not isinstance(raw_methods, dict) or not raw_methods:
            raise ConfigError("methods 必须是非空的列表或对象")
        methods = {}
        for name, overrides in raw_methods.items():
            for method in attribution.parse_methods([name]):
                section = dict(overrides or {})
                section.setdefault("rng_seed", seed + 3)
                methods[method] = config.dataclass_from_dict(attribution.BaselineConfig, section,
                                                             f"methods.{method.value}")

        tolerances = data.get("tolerances") or {}
        if not isinstance(tolerances, dict):
            raise ConfigError("tolerances 必须是 JSON 对象")
        return cls(
            dataset=config.dataclass_from_dict(dataset.DatasetConfig, ds, "dataset"),
            train=config.dataclass_from_dict(training.TrainConfig, tr, "train"),
            methods=methods,
            output_dir=str(data.get("output_dir", "results")),
            seed=seed,
            tolerances=dict(tolerances),
        )

    def to_dict(self):
        return {
            "dataset": self.dataset.to_dict(),
            "train": self.train.to_dict(),
            "methods": {m.value: c.to_dict() for m, c in self.methods.items()},
            "output_dir": self.output_dir,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
        }

    def config_hash(self):
        """输出目录不影响结果, 不参与哈希"""
        data = self.to_dict()
        data.pop("output_dir")
        return config.config_hash(data)

    def with_m(self, m):
        return dataclasses.replace(self, dataset=dataclasses.replace(self.dataset, m=m))

    def run_dir(self):
        return Path(self.output_dir) / f"m={m_label(self.dataset.m)}"

    def provenance(self):
        return {"config_hash": self.config_hash(), "seed": self.seed}


def m_label(m):
    """m 的目录名: 0.1 / 0.5 / pi, 其余取 repr"""
    for label, value in dataset.M_VALUES.items():
        if math.isclose(m, value):
            return label
    return repr(float(m))


def parse_m(text):
    """--m 取值 -> m 列表"""
    if text == "all":
        return list(dataset.M_VALUES.values())
    if text in dataset.M_VALUES:
        return [dataset.M_VALUES[text]]
    raise ConfigError(f"--m 只能取 0.1、0.5、pi 或 all, 实际为 {text!r}")


def load_experiment(args):
    """读取配置文件并应用命令行覆盖"""
    data = config.load_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigError("实验配置必须是 JSON 对象")
    data = copy.deepcopy(data)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    if args.methods is not None:
        names = [m.value for m in attribution.parse_methods(args.methods)]
        current = data.get("methods")
        per_method = current if isinstance(current, dict) else {}
        data["methods"] = {name: per_method.get(name, {}) for name in names}
    cfg = ExperimentConfig.from_dict(data)
    if cfg.tolerances:
        config.configure(**cfg.tolerances)
    return cfg


# ==================== 子命令 ====================

def _require(path):
    if not path.is_file():
        raise MissingInputError(f"找不到上游产物 {path}, 请先运行前一步子命令")
    return path


def _load_splits(cfg):
    data, _ = dataset.load_dataset(_require(cfg.run_dir() / DATASET_FILE))
    return dataset.split(data, cfg.dataset)


def cmd_dataset(cfg):
    out = cfg.run_dir()
    out.mkdir(parents=True, exist_ok=True)
    data = dataset.generate(cfg.dataset)
    return [dataset.save_dataset(out / DATASET_FILE, data, cfg.dataset, cfg.provenance())]


def cmd_train(cfg):
    out = cfg.run_dir()
    train_set, test_set = _load_splits(cfg)
    trained = training.train(train_set, cfg.train, test_set)
    training.save_trained(out / MODEL_FILE, out / HISTORY_FILE, trained, cfg.provenance())
    return [out / MODEL_FILE, out / HISTORY_FILE]


def cmd_explain(cfg):
    out = cfg.run_dir()
    _, test_set = _load_splits(cfg)
    model = training.load_trained(_require(out / MODEL_FILE)).model
    prov = cfg.provenance()
    records = []
    for method, method_cfg in cfg.methods.items():
        expls = attribution.explain_batch(method, model, test_set.X, test_set.y, method_cfg,
                                          progress=sys.stderr.isatty())
        records.extend(attribution.explanation_record(e, i, prov["config_hash"], prov["seed"])
                       for i, e in enumerate(expls))
    return [attribution.save_explanations(out / EXPLANATIONS_FILE, records)]


def cmd_evaluate(cfg):
    out = cfg.run_dir()
    _, test_set = _load_splits(cfg)
    by_method = attribution.load_explanations(_require(out / EXPLANATIONS_FILE))
    # 报告中的方法顺序与配置一致
    ordered = {m: by_method[m] for m in cfg.methods if m in by_method}
    if not ordered:
        raise MissingInputError(f"{out / EXPLANATIONS_FILE} 中没有所配置方法的解释")
    prov = cfg.provenance()
    report = evaluation.evaluate_explanations(test_set, ordered, prov["config_hash"], prov["seed"])
    return [
        evaluation.write_report_csv(out / REPORT_CSV, report),
        evaluation.write_report_json(out / REPORT_JSON, report),
        evaluation.write_per_sample(out / PER_SAMPLE_FILE, report, test_set),
        evaluation.write_class_means(out / CLASS_MEANS_FILE, report),
        evaluation.write_roc_curves(out / ROC_CURVES_FILE, report),
    ]


def cmd_reproduce(cfg):
    paths = []
    for step in (cmd_dataset, cmd_train, cmd_explain, cmd_evaluate):
        paths.extend(step(cfg))
    return paths


COMMANDS = {
    "dataset": cmd_dataset,
    "train": cmd_train,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


# ==================== 入口 ====================

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="参数化量子线路分类器的训练、解释与解释质量评估",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="实验配置 JSON 文件")
    common.add_argument("--seed", type=int, help="全局种子(覆盖配置)")
    common.add_argument("--out", help="输出根目录(覆盖配置)")
    common.add_argument("--methods", help="逗号分隔的方法名, 或 all")
    common.add_argument("--m", help="均匀分布半宽: 0.1 / 0.5 / pi / all")
    common.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=func.__name__.replace("cmd_", ""))
    return parser


def _error_line(name, message, exit_code):
    return json.dumps({"error": name, "message": message, "exit_code": exit_code}, ensure_ascii=False)


def main(argv=None):
    """
    解析参数并执行子命令

    返回:
        int: 进程退出码
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="[%(levelname)s] %(message)s")
    try:
        cfg = load_experiment(args)
        m_values = parse_m(args.m) if args.m is not None else [cfg.dataset.m]
        for m in m_values:
            run_cfg = cfg.with_m(m)
            logger.info("[配置] %s: m=%s, 配置哈希 %s", args.command, m_label(m), run_cfg.config_hash())
            for path in COMMANDS[args.command](run_cfg):
                print(path)
    except XqmlError as e:
        print(_error_line(type(e).__name__, str(e), e.exit_code), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print(_error_line("KeyboardInterrupt", "用户中断", 130), file=sys.stderr)
        return 130
    except Exception as e:
        logger.exception("[错误] 未预期的异常")
        print(_error_line(type(e).__name__, str(e), 1), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
