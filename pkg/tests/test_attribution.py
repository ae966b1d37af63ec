import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

import attribution
import config
from attribution import BaselineConfig, ConservationReport, Method
from conftest import (AdditiveModel, ConstantModel, central_difference, identity_circuit, random_circuit,
                      separable_circuit, trained_benchmark)
from errors import ConfigError, DomainError, MissingInputError, ResourceError, UnsupportedMethodError


class InteractionModel:
    """f(x) = x0 x1 + x0 sin x2 + x2"""

    num_features = 3

    def value(self, x, cls):
        x = np.asarray(x, dtype=float)
        return float(x[0] * x[1] + x[0] * np.sin(x[2]) + x[2])


class SymmetricModel:
    num_features = 2

    def value(self, x, cls):
        return float(np.cos(x[0]) * np.cos(x[1]))


def brute_force_shapley(model, x, baseline):
    d = x.size
    phi = np.zeros(d)
    for i in range(d):
        others = [j for j in range(d) if j != i]
        for size in range(d):
            for subset in itertools.combinations(others, size):
                z = baseline.copy()
                z[list(subset)] = x[list(subset)]
                without = model.value(z, 0)
                z[i] = x[i]
                weight = math.factorial(size) * math.factorial(d - 1 - size) / math.factorial(d)
                phi[i] += weight * (model.value(z, 0) - without)
    return phi


# ==================== 梯度类 ====================

def test_grad_vanishes_at_extremum(cosine_model):
    assert np.allclose(attribution.grad_explain(cosine_model, [0.0], 0).values, [0.0])


def test_grad_matches_finite_differences(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    expl = attribution.grad_explain(benchmark_model, x, 2)
    fd = [central_difference(lambda z: benchmark_model.value(z, 2), x, k) for k in range(6)]
    assert np.allclose(expl.values, fd, atol=1e-7)


def test_grad_identity_block_follows_measured_qubit():
    model = identity_circuit(2, (0, 1))
    x = np.array([0.4, -1.1])
    g0 = attribution.grad_explain(model, x, 0).values
    g1 = attribution.grad_explain(model, x, 1).values
    assert np.allclose(g0, [-np.sin(0.4), 0.0], atol=1e-12)
    assert np.allclose(g1, [0.0, np.sin(1.1)], atol=1e-12)


def test_smoothgrad_tiny_sigma_equals_grad(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    cfg = BaselineConfig(smoothgrad_sigma=1e-8, smoothgrad_samples=5)
    smooth = attribution.smoothgrad_explain(benchmark_model, x, 0, cfg)
    plain = attribution.grad_explain(benchmark_model, x, 0)
    assert np.allclose(smooth.values, plain.values, atol=1e-6)


def test_smoothgrad_is_deterministic_per_sample(cosine_model):
    cfg = BaselineConfig(rng_seed=11)
    a = attribution.smoothgrad_explain(cosine_model, [0.3], 0, cfg, sample_index=4)
    b = attribution.smoothgrad_explain(cosine_model, [0.3], 0, cfg, sample_index=4)
    c = attribution.smoothgrad_explain(cosine_model, [0.3], 0, cfg, sample_index=5)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_smoothgrad_converges_to_smoothed_derivative(cosine_model):
    sigma = 0.1
    cfg = BaselineConfig(smoothgrad_sigma=sigma, smoothgrad_samples=10_000, rng_seed=3)
    expl = attribution.smoothgrad_explain(cosine_model, [1.0], 0, cfg)
    assert expl.values[0] == pytest.approx(-np.sin(1.0) * np.exp(-sigma ** 2 / 2), abs=3e-3)


def test_sensitivity_is_absolute_gradient(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    sens = attribution.sensitivity_explain(benchmark_model, x, 1).values
    assert np.all(sens >= 0)
    assert np.allclose(sens, np.abs(benchmark_model.gradient(x, 1)))


def test_gradxinput_and_taylor1(linear_model):
    x = np.array([1.0, 2.0, -1.0, 4.0])
    assert np.allclose(attribution.gradxinput_explain(linear_model, x, 0).values, linear_model.w * x)
    base = np.array([0.5, 0.5, 0.5, 0.5])
    expl = attribution.taylor1_explain(linear_model, x, 0, base)
    assert np.allclose(expl.values, linear_model.w * (x - base))
    assert np.array_equal(expl.baseline_used, base)


# ==================== 积分梯度 ====================

def test_integrated_gradients_completeness(benchmark_model, rng):
    x = rng.uniform(-1.0, 1.0, 6)
    expl = attribution.integrated_gradients_explain(benchmark_model, x, 0, steps=200)
    gap = benchmark_model.value(x, 0) - benchmark_model.value(np.zeros(6), 0)
    assert abs(expl.values.sum() - gap) < 1e-3


def test_integrated_gradients_linear_is_exact(linear_model):
    x = np.array([1.0, -2.0, 0.5, 3.0])
    expl = attribution.integrated_gradients_explain(linear_model, x, 0, steps=1)
    assert np.allclose(expl.values, linear_model.w * x)


def test_integrated_gradients_residual_shrinks_with_steps(cosine_model):
    x = [2.5]
    residuals = []
    for steps in (2, 8, 32):
        expl = attribution.integrated_gradients_explain(cosine_model, x, 0, steps=steps)
        residuals.append(abs(expl.values.sum() - (np.cos(2.5) - 1.0)))
    assert residuals[0] > residuals[1] > residuals[2]


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2])
def test_integrated_gradients_residual_shrinks_on_circuit(seed):
    model = random_circuit(6, 3, seed=seed)
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, 6)
    gap = model.value(x, 0) - model.value(np.zeros(6), 0)
    residuals = []
    for steps in (8, 16, 32, 64, 128, 256):
        expl = attribution.integrated_gradients_explain(model, x, 0, steps=steps)
        residuals.append(abs(expl.values.sum() - gap))
    assert all(b <= a + 1e-12 for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] < residuals[0] / 100


def test_integrated_gradients_rejects_zero_steps(cosine_model):
    with pytest.raises(DomainError):
        attribution.integrated_gradients_explain(cosine_model, [0.1], 0, steps=0)


# ==================== Shapley ====================

def test_shapley_constant_model_is_zero():
    expl = attribution.shapley_exact(ConstantModel(3.0, 4), np.ones(4), 0)
    assert np.allclose(expl.values, 0.0)


def test_shapley_additive_model_splits_terms(rng):
    model = AdditiveModel(rng.normal(size=4), rng.normal(size=4), c=0.7)
    x = rng.uniform(-np.pi, np.pi, 4)
    expl = attribution.shapley_exact(model, x, 0)
    assert np.allclose(expl.values, model.terms(x) - model.terms(np.zeros(4)), atol=1e-12)


def test_shapley_matches_brute_force(rng):
    model = InteractionModel()
    x = rng.normal(size=3)
    base = rng.normal(size=3)
    expl = attribution.shapley_exact(model, x, 0, base)
    assert np.allclose(expl.values, brute_force_shapley(model, x, base), atol=1e-12)


def test_shapley_efficiency_on_circuit(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    expl = attribution.shapley_exact(benchmark_model, x, 3)
    gap = benchmark_model.value(x, 3) - benchmark_model.value(np.zeros(6), 3)
    assert expl.values.sum() == pytest.approx(gap, abs=1e-10)


def test_shapley_symmetry():
    expl = attribution.shapley_exact(SymmetricModel(), np.array([0.8, 0.8]), 0)
    assert expl.values[0] == pytest.approx(expl.values[1], abs=1e-14)


def test_shapley_exact_cap():
    config.configure(shapley_qubit_cap=2)
    with pytest.raises(ResourceError):
        attribution.shapley_exact(ConstantModel(0.0, 3), np.zeros(3), 0)


def test_shapley_sampling_is_deterministic(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    a = attribution.shapley_sampling(benchmark_model, x, 0, samples=50, seed=2, sample_index=1)
    b = attribution.shapley_sampling(benchmark_model, x, 0, samples=50, seed=2, sample_index=1)
    assert np.array_equal(a.values, b.values)


def test_shapley_sampling_constant_and_additive(rng):
    assert np.allclose(attribution.shapley_sampling(ConstantModel(1.0, 5), np.ones(5), 0, samples=20).values, 0)
    model = AdditiveModel(rng.normal(size=3), rng.normal(size=3))
    x = rng.normal(size=3)
    expl = attribution.shapley_sampling(model, x, 0, samples=7)
    assert np.allclose(expl.values, model.terms(x) - model.terms(np.zeros(3)), atol=1e-12)


def test_shapley_sampling_converges(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    exact = attribution.shapley_exact(benchmark_model, x, 1).values
    sampled = attribution.shapley_sampling(benchmark_model, x, 1, samples=20_000, seed=5).values
    assert np.max(np.abs(sampled - exact)) < 0.02


# ==================== 全阶泰勒 ====================

def test_taylor_inf_zero_at_baseline(benchmark_model, rng):
    x = rng.uniform(-np.pi, np.pi, 6)
    expl = attribution.taylor_inf_explain(benchmark_model, x, 0, baseline=x)
    assert np.allclose(expl.values, 0.0)


def test_taylor_inf_cosine_is_exact(cosine_model):
    for x in (-2.0, 0.3, 1.7, np.pi):
        expl = attribution.taylor_inf_explain(cosine_model, [x], 0, baseline=[np.pi / 2])
        assert expl.values[0] == pytest.approx(np.cos(x), abs=1e-12)


@pytest.mark.parametrize("d", [2, 4, 6])
def test_taylor_inf_is_conservative_for_separable_circuits(d, rng):
    model = separable_circuit(d, seed=d)
    x = rng.uniform(-np.pi, np.pi, d)
    expl = attribution.explain(Method.TAYLOR_INF, model, x, 0)
    assert abs(expl.residual) < 1e-10
    shapley = attribution.shapley_exact(model, x, 0)
    assert np.allclose(expl.values, shapley.values, atol=1e-10)


@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
@settings(max_examples=50, deadline=None)
def test_taylor_inf_exact_for_single_trig_term(x, base):
    model = AdditiveModel([0.3], [-1.2], c=0.5)
    expl = attribution.taylor_inf_explain(model, [x], 0, baseline=[base])
    assert expl.values[0] == pytest.approx(model.value([x], 0) - model.value([base], 0), abs=1e-12)


# ==================== 方法间一致性与守恒 ====================

@pytest.mark.parametrize("method", [
    Method.GRAD_X_INPUT, Method.TAYLOR_1, Method.INTEGRATED_GRADIENTS,
    Method.SHAPLEY_EXACT, Method.SHAPLEY_SAMPLING,
])
def test_linear_model_methods_coincide(method, linear_model):
    x = np.array([1.0, -0.5, 2.0, 0.25])
    cfg = BaselineConfig(ig_steps=3, sv_samples=10)
    expl = attribution.explain(method, linear_model, x, 0, cfg)
    assert np.allclose(expl.values, linear_model.w * x, atol=1e-12)


@pytest.mark.parametrize("method", [
    Method.GRAD, Method.SMOOTH_GRAD, Method.SENSITIVITY, Method.GRAD_X_INPUT, Method.TAYLOR_1,
    Method.INTEGRATED_GRADIENTS, Method.SHAPLEY_EXACT, Method.SHAPLEY_SAMPLING, Method.TAYLOR_INF,
])
def test_explanations_change_little_under_small_perturbation(method, benchmark_model, rng):
    cfg = BaselineConfig(smoothgrad_samples=20, sv_samples=50, ig_steps=20)
    for _ in range(3):
        x = rng.uniform(-np.pi, np.pi, 6)
        delta = rng.normal(size=6)
        delta *= 1e-3 / np.linalg.norm(delta)
        a = attribution.explain(method, benchmark_model, x, 1, cfg, sample_index=0).values
        b = attribution.explain(method, benchmark_model, x + delta, 1, cfg, sample_index=0).values
        assert np.max(np.abs(a - b)) / 1e-3 < 100.0


def test_relative_error_zero_for_exact_methods(linear_model):
    x = np.array([1.0, 2.0, 3.0, 4.0])
    expl = attribution.explain(Method.SHAPLEY_EXACT, linear_model, x, 0)
    assert attribution.relative_error(expl, linear_model, x, 0) == pytest.approx(0.0, abs=1e-12)


def test_relative_error_undefined_at_zero_output():
    model = ConstantModel(0.0, 2)
    expl = attribution.explain(Method.GRAD, model, np.ones(2), 0)
    assert math.isnan(attribution.relative_error(expl, model, np.ones(2), 0))


def test_report_includes_baseline_value(cosine_model):
    expl = attribution.explain(Method.TAYLOR_INF, cosine_model, [0.4], 0,
                               BaselineConfig(baseline=(1.0,)))
    assert expl.report.baseline_value == pytest.approx(np.cos(1.0))
    assert expl.report.function_value == pytest.approx(np.cos(0.4))
    assert abs(expl.residual) < 1e-12


def test_relative_error_ignores_baseline_output(cosine_model):
    # ∂cos(0) = 0, Taylor-1 在零基线处给出全零解释
    expl = attribution.explain(Method.TAYLOR_1, cosine_model, [0.4], 0)
    assert np.allclose(expl.values, 0.0)
    f = np.cos(0.4)
    assert attribution.relative_error(expl, cosine_model, [0.4], 0) == pytest.approx(1.0)
    assert expl.report.output_gap == pytest.approx(-f)
    assert expl.report.residual == pytest.approx(1.0 - f)


def test_relative_error_formula():
    report = ConservationReport(sum_relevance=0.3, function_value=0.5, baseline_value=0.4)
    assert report.relative_error() == pytest.approx(0.4)
    assert report.residual == pytest.approx(0.2)


def test_taylor_inf_attaches_report(cosine_model):
    expl = attribution.taylor_inf_explain(cosine_model, [0.4], 0, baseline=[1.0])
    assert expl.report is not None
    assert expl.report.function_value == pytest.approx(np.cos(0.4))
    assert expl.report.baseline_value == pytest.approx(np.cos(1.0))
    assert abs(expl.residual) < 1e-12


# ==================== 分发、配置与持久化 ====================

def test_method_parsing():
    assert attribution.parse_methods("all") == list(Method)
    assert attribution.parse_methods("grad, QLRP,grad") == [Method.GRAD, Method.QLRP]
    assert Method.parse("Taylor_Inf") is Method.TAYLOR_INF
    with pytest.raises(UnsupportedMethodError):
        attribution.parse_methods(["grad", "deeplift"])
    with pytest.raises(ConfigError):
        attribution.parse_methods("")


def test_explain_dispatches_by_name(linear_model):
    x = np.ones(4)
    expl = attribution.explain("grad", linear_model, x, 0)
    assert expl.method is Method.GRAD
    assert np.allclose(expl.values, linear_model.w)
    assert expl.baseline_used is None
    with pytest.raises(UnsupportedMethodError):
        attribution.explain("lime", linear_model, x, 0)


def test_explain_rejects_bad_input(linear_model):
    with pytest.raises(DomainError):
        attribution.explain(Method.GRAD, linear_model, np.ones(3), 0)
    with pytest.raises(DomainError):
        attribution.explain(Method.GRAD, linear_model, [1.0, np.nan, 0.0, 0.0], 0)


@pytest.mark.parametrize("method", [Method.SMOOTH_GRAD, Method.SHAPLEY_SAMPLING])
def test_batch_parallel_matches_serial(method, rng):
    model = AdditiveModel(rng.normal(size=3), rng.normal(size=3))
    X = rng.uniform(-np.pi, np.pi, (12, 3))
    classes = np.zeros(12, dtype=int)
    cfg = BaselineConfig(sv_samples=30, smoothgrad_samples=20, rng_seed=9)
    serial = attribution.explain_batch(method, model, X, classes, cfg, max_workers=1)
    parallel = attribution.explain_batch(method, model, X, classes, cfg, max_workers=4)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.values, b.values)


def test_batch_shape_mismatch(linear_model):
    with pytest.raises(DomainError):
        attribution.explain_batch(Method.GRAD, linear_model, np.ones((3, 4)), [0, 0])


def test_baseline_config_validation():
    with pytest.raises(ConfigError):
        BaselineConfig(ig_steps=0)
    with pytest.raises(ConfigError):
        BaselineConfig(smoothgrad_sigma=0.0)
    with pytest.raises(ConfigError):
        BaselineConfig(baseline=(0.0, float("nan")))
    with pytest.raises(DomainError):
        BaselineConfig(baseline=(0.0, 1.0)).baseline_for(3)


def test_explanations_persist(tmp_path, linear_model):
    x = np.array([1.0, 2.0, 0.0, -1.0])
    expls = [attribution.explain(m, linear_model, x, 0) for m in (Method.GRAD, Method.TAYLOR_1)]
    records = [attribution.explanation_record(e, 7, "abc", 3) for e in expls]
    path = attribution.save_explanations(tmp_path / "expl.jsonl", records)
    loaded = attribution.load_explanations(path)
    assert set(loaded) == {Method.GRAD, Method.TAYLOR_1}
    restored = loaded[Method.TAYLOR_1][7]
    assert np.array_equal(restored.values, expls[1].values)
    assert restored.residual == pytest.approx(expls[1].residual, abs=1e-12)
    assert np.array_equal(restored.baseline_used, np.zeros(4))


def test_load_explanations_missing(tmp_path):
    with pytest.raises(MissingInputError):
        attribution.load_explanations(tmp_path / "none.jsonl")


# ==================== 实验规模 ====================

def ray_root(model, x, cls):
    """线段 t·x (t ∈ [0, 1]) 上 f 的零点, 两端同号时返回 None"""
    f0, f1 = model.value(np.zeros_like(x), cls), model.value(x, cls)
    if f0 * f1 > 0:
        return None
    t = brentq(lambda s: model.value(s * x, cls), 0.0, 1.0, xtol=1e-12)
    return t * x


def mean_relative_error(method, model, data):
    errors = []
    floor = config.get_settings().aggregate_floor
    for x, cls in zip(data.X, data.y):
        cls = int(cls)
        root = ray_root(model, x, cls)
        if root is None or abs(model.value(x, cls)) < floor:
            continue
        expl = attribution.explain(method, model, x, cls, BaselineConfig(baseline=tuple(root)))
        errors.append(attribution.relative_error(expl, model, x, cls))
    assert len(errors) >= 100
    return float(np.mean(errors))


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.TAYLOR_1, Method.TAYLOR_INF])
def test_taylor_relative_error_bands(method):
    medium, medium_test = trained_benchmark(0.5)
    high, high_test = trained_benchmark(math.pi)
    err_medium = mean_relative_error(method, medium.model, medium_test)
    err_high = mean_relative_error(method, high.model, high_test)
    assert 0.005 <= err_medium <= 0.15
    assert 0.1 <= err_high <= 1.5
    assert err_medium < err_high
