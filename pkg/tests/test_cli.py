import json
import math

import pytest

import attribution
import cli
from errors import ConfigError

SMALL_CONFIG = {
    "seed": 11,
    "dataset": {"samples_per_class": 10},
    "train": {"epochs": 1, "layers": 1, "batch_size": 16, "progress": False},
    "methods": {
        "grad": {},
        "smooth_grad": {"smoothgrad_samples": 5},
        "sensitivity": {},
        "grad_x_input": {},
        "taylor_1": {},
        "integrated_gradients": {"ig_steps": 8},
        "shapley_exact": {},
        "shapley_sampling": {"sv_samples": 40},
        "taylor_inf": {},
        "qlrp": {},
    },
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_reproduce_writes_full_report(tmp_path, config_file, capsys):
    out = tmp_path / "results"
    assert run("reproduce", "--config", config_file, "--out", out, "--m", "0.5") == 0
    run_dir = out / "m=0.5"
    printed = capsys.readouterr().out.split()
    assert str(run_dir / cli.REPORT_CSV) in printed

    lines = (run_dir / cli.REPORT_CSV).read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 10 * 4
    methods = {line.split(",")[0] for line in lines[1:]}
    assert methods == {m.value for m in attribution.Method}

    for name in (cli.DATASET_FILE, cli.MODEL_FILE, cli.HISTORY_FILE, cli.EXPLANATIONS_FILE,
                 cli.REPORT_JSON, cli.PER_SAMPLE_FILE, cli.CLASS_MEANS_FILE, cli.ROC_CURVES_FILE):
        assert (run_dir / name).is_file()
    class_means = (run_dir / cli.CLASS_MEANS_FILE).read_text(encoding="utf-8").splitlines()
    assert len(class_means) == 1 + 10 * 4
    roc_methods = {line.split(",")[0] for line in
                   (run_dir / cli.ROC_CURVES_FILE).read_text(encoding="utf-8").splitlines()[1:]}
    assert roc_methods == methods
    report = json.loads((run_dir / cli.REPORT_JSON).read_text(encoding="utf-8"))
    assert report["seed"] == 11
    assert len(report["config_hash"]) == 16


def test_reproduce_is_byte_identical(tmp_path, config_file):
    for name in ("a", "b"):
        assert run("reproduce", "--config", config_file, "--out", tmp_path / name, "--m", "pi") == 0
    for artifact in (cli.DATASET_FILE, cli.HISTORY_FILE, cli.EXPLANATIONS_FILE, cli.REPORT_CSV, cli.REPORT_JSON,
                     cli.CLASS_MEANS_FILE, cli.ROC_CURVES_FILE):
        a = (tmp_path / "a" / "m=pi" / artifact).read_bytes()
        b = (tmp_path / "b" / "m=pi" / artifact).read_bytes()
        assert a == b, artifact


def test_dataset_for_all_noise_levels(tmp_path):
    assert run("dataset", "--out", tmp_path, "--m", "all") == 0
    for label in ("0.1", "0.5", "pi"):
        assert (tmp_path / f"m={label}" / cli.DATASET_FILE).is_file()


def test_unknown_method_fails_before_writing(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("reproduce", "--methods", "grad,deeplift", "--out", out) == 4
    assert not out.exists()
    err = error_of(capsys)
    assert err["error"] == "UnsupportedMethodError"
    assert err["exit_code"] == 4


def test_missing_upstream_artifact(tmp_path, capsys):
    assert run("train", "--out", tmp_path) == 3
    assert error_of(capsys)["error"] == "MissingInputError"


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"datasets": {}}), encoding="utf-8")
    assert run("dataset", "--config", path, "--out", tmp_path) == 2
    assert error_of(capsys)["exit_code"] == 2


def test_bad_noise_level(tmp_path):
    assert run("dataset", "--out", tmp_path, "--m", "0.7") == 2


def test_seed_derivation():
    cfg = cli.ExperimentConfig.from_dict({"seed": 5, "methods": ["grad", "shapley_sampling"]})
    assert (cfg.dataset.seed, cfg.dataset.split_seed, cfg.train.seed) == (5, 6, 7)
    assert all(c.rng_seed == 8 for c in cfg.methods.values())
    explicit = cli.ExperimentConfig.from_dict({"seed": 5, "dataset": {"seed": 42}})
    assert explicit.dataset.seed == 42
    assert len(explicit.methods) == 10


def test_config_hash_ignores_output_dir():
    a = cli.ExperimentConfig.from_dict({"output_dir": "x"})
    b = cli.ExperimentConfig.from_dict({"output_dir": "y"})
    c = cli.ExperimentConfig.from_dict({"seed": 1})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.with_m(0.1).config_hash() != a.config_hash()


def test_m_labels():
    assert cli.m_label(math.pi) == "pi"
    assert cli.m_label(0.1) == "0.1"
    assert cli.parse_m("all") == [0.1, 0.5, math.pi]
    with pytest.raises(ConfigError):
        cli.parse_m("1")


def test_from_dict_rejects_bad_sections():
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.from_dict({"train": {"epochs": 0}})
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.from_dict({"seed": "zero"})
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.from_dict({"methods": {"grad": {"ig_steps": -1}}})
