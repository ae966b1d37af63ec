"""共享夹具与解析玩具模型"""

import functools

import numpy as np
import pytest

import config
import dataset
import qcore
import training


@pytest.fixture(autouse=True)
def _default_settings():
    config.reset_settings()
    yield
    config.reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class LinearModel:
    """f(x) = w·x"""

    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)
        self.num_features = self.w.size

    def value(self, x, cls):
        return float(self.w @ np.asarray(x, dtype=float))

    def gradient(self, x, cls):
        return self.w.copy()

    def hessian_diag(self, x, cls):
        return np.zeros_like(self.w)


class ConstantModel:
    def __init__(self, c, d):
        self.c = float(c)
        self.num_features = d

    def value(self, x, cls):
        return self.c

    def gradient(self, x, cls):
        return np.zeros(self.num_features)

    def hessian_diag(self, x, cls):
        return np.zeros(self.num_features)


class AdditiveModel:
    """f(x) = Σ_i a_i cos x_i + b_i sin x_i + c"""

    def __init__(self, a, b, c=0.0):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = float(c)
        self.num_features = self.a.size

    def terms(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * np.cos(x) + self.b * np.sin(x)

    def value(self, x, cls):
        return float(self.terms(x).sum() + self.c)

    def gradient(self, x, cls):
        x = np.asarray(x, dtype=float)
        return -self.a * np.sin(x) + self.b * np.cos(x)

    def hessian_diag(self, x, cls):
        return -self.terms(x)


class CosineModel(AdditiveModel):
    """f(x) = cos x, d = 1"""

    def __init__(self):
        super().__init__([1.0], [0.0])


@pytest.fixture
def linear_model():
    return LinearModel([0.5, -1.0, 2.0, 0.25])


@pytest.fixture
def cosine_model():
    return CosineModel()


def random_circuit(num_qubits, num_layers, seed, observables=None, entangler="ring"):
    """随机参数的线路模型"""
    observables = observables if observables is not None else tuple(range(min(num_qubits, 4)))
    spec = qcore.CircuitSpec(num_qubits, num_layers, observables, entangler)
    return qcore.CircuitModel(spec, qcore.ParamVector.random(spec, seed))


def separable_circuit(num_qubits, seed):
    """不纠缠、测量全部比特 Z 之和: f 是各分量一阶三角函数之和"""
    return random_circuit(num_qubits, 2, seed, observables=(tuple(range(num_qubits)),), entangler="none")


def identity_circuit(num_qubits, observables):
    spec = qcore.CircuitSpec(num_qubits, 1, observables, entangler="none")
    return qcore.CircuitModel(spec, qcore.ParamVector.zeros(spec))


@pytest.fixture
def benchmark_model():
    spec = qcore.CircuitSpec.benchmark(num_layers=2)
    return qcore.CircuitModel(spec, qcore.ParamVector.random(spec, 7))


def central_difference(f, x, k, h=1e-5):
    e = np.zeros_like(x)
    e[k] = h
    return (f(x + e) - f(x - e)) / (2 * h)


def second_difference(f, x, k, h=1e-4):
    e = np.zeros_like(x)
    e[k] = h
    return (f(x + e) - 2 * f(x) + f(x - e)) / h ** 2


@functools.lru_cache(maxsize=None)
def trained_benchmark(m):
    """按默认配置生成数据并训练, 返回 (TrainedModel, 测试集); 同一进程内每个 m 只训练一次"""
    cfg = dataset.DatasetConfig(m=m)
    train_set, test_set = dataset.split(dataset.generate(cfg), cfg)
    return training.train(train_set, training.TrainConfig(progress=False), test_set), test_set
