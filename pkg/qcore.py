#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
小规模精确量子模拟模块

本模块用稠密密度矩阵精确模拟参数化量子线路(PQC)，包括：
- 数据编码态 ρ(x) = ⊗_j R_X(x_j)|0⟩⟨0|R_X(x_j)†
- 变分块(三角度单比特旋转 + CNOT 环)在海森堡绘景下演化得到的观测量 ℳ(θ)
- 期望值 Tr{ρℳ} 与各类别得分
- 对输入分量的参数平移(parameter-shift)一阶、二阶导数

比特顺序:
    第 0 个比特是基矢下标的最高位，与张量积 ⊗_{j=1}^d 的顺序一致。

所有返回的矩阵都是只读的，可以在线程间共享。
"""

import collections
import dataclasses
import functools
import json
import logging
import math
from pathlib import Path

import numpy as np

import config
from errors import DomainError, MissingInputError, ResourceError

logger = logging.getLogger(__name__)

HALF_PI = np.pi / 2

# i 的整数次幂, 避免 1j ** n 的舍入
_I_POWERS = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)

ENTANGLERS = ("ring", "none")


# ==================== 单比特门 ====================

def _finite_angle(angle):
    try:
        angle = float(angle)
    except (TypeError, ValueError):
        raise DomainError(f"旋转角必须是实数, 实际为 {angle!r}") from None
    if not math.isfinite(angle):
        raise DomainError(f"旋转角必须有限, 实际为 {angle}")
    return angle


def rx_gate(angle):
    """
    Pauli-X 旋转门 R_X(a) = exp(-i a X / 2)

    参数:
        angle (float): 旋转角(弧度)

    返回:
        np.ndarray: 2x2 酉矩阵

    异常:
        DomainError: 角度不是有限实数
    """
    a = _finite_angle(angle) / 2
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_gate(angle):
    """Pauli-Y 旋转门 R_Y(a) = exp(-i a Y / 2), 实矩阵"""
    a = _finite_angle(angle) / 2
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_gate(angle):
    """Pauli-Z 旋转门 R_Z(a) = diag(e^{-ia/2}, e^{ia/2})"""
    a = _finite_angle(angle) / 2
    return np.array([[complex(math.cos(a), -math.sin(a)), 0.0],
                     [0.0, complex(math.cos(a), math.sin(a))]], dtype=complex)


_ROTATIONS = {"rx": rx_gate, "ry": ry_gate, "rz": rz_gate}


# ==================== 线路描述 ====================

@dataclasses.dataclass(frozen=True)
class CircuitSpec:
    """
    线路结构描述

    字段:
        num_qubits (int): 比特数 d(同时是输入维度)
        num_layers (int): 强纠缠层的层数
        observables (tuple): 每个类别的测量位置; 整数表示该比特上的 Pauli-Z,
                             整数元组表示这些比特上 Pauli-Z 之和
        entangler (str): "ring" 为 CNOT 环(j -> j+1 mod d), "none" 为不纠缠
    """

    num_qubits: int
    num_layers: int
    observables: tuple
    entangler: str = "ring"

    def __post_init__(self):
        if not isinstance(self.num_qubits, (int, np.integer)) or self.num_qubits < 1:
            raise DomainError(f"num_qubits 必须是正整数, 实际为 {self.num_qubits!r}")
        if not isinstance(self.num_layers, (int, np.integer)) or self.num_layers < 1:
            raise DomainError(f"num_layers 必须是正整数, 实际为 {self.num_layers!r}")
        if self.entangler not in ENTANGLERS:
            raise DomainError(f"entangler 只能取 {ENTANGLERS}, 实际为 {self.entangler!r}")
        placements = tuple(_normalize_placement(p, self.num_qubits) for p in self.observables)
        if not placements:
            raise DomainError("至少需要一个类别的观测量")
        if len(placements) > self.num_qubits:
            raise DomainError(f"类别数 {len(placements)} 超过比特数 {self.num_qubits}")
        object.__setattr__(self, "observables", placements)

    @property
    def num_classes(self):
        return len(self.observables)

    @property
    def parameter_shape(self):
        return (self.num_layers, self.num_qubits, 3)

    @property
    def num_params(self):
        return self.num_layers * self.num_qubits * 3

    def measured_qubits(self, cls):
        """返回类别 cls 的观测量作用的比特元组"""
        if not 0 <= cls < self.num_classes:
            raise DomainError(f"类别下标 {cls} 超出范围 [0, {self.num_classes})")
        placement = self.observables[cls]
        return placement if isinstance(placement, tuple) else (placement,)

    def to_dict(self):
        return {
            "num_qubits": int(self.num_qubits),
            "num_layers": int(self.num_layers),
            "observables": [list(p) if isinstance(p, tuple) else int(p) for p in self.observables],
            "entangler": self.entangler,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                num_qubits=data["num_qubits"],
                num_layers=data["num_layers"],
                observables=tuple(data["observables"]),
                entangler=data.get("entangler", "ring"),
            )
        except KeyError as e:
            raise DomainError(f"线路描述缺少字段 {e}") from None

    @classmethod
    def benchmark(cls, num_layers=5):
        """6 比特、前 4 个比特各测一个 Pauli-Z 的基准分类线路"""
        return cls(num_qubits=6, num_layers=num_layers, observables=(0, 1, 2, 3))


def _normalize_placement(placement, num_qubits):
    if isinstance(placement, (list, tuple)):
        qubits = tuple(int(q) for q in placement)
        if not qubits or len(set(qubits)) != len(qubits):
            raise DomainError(f"观测量比特列表不合法: {placement!r}")
    else:
        qubits = (int(placement),)
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise DomainError(f"观测量比特 {q} 超出范围 [0, {num_qubits})")
    return qubits if isinstance(placement, (list, tuple)) else qubits[0]


@dataclasses.dataclass(frozen=True, eq=False)
class ParamVector:
    """展平的旋转角(弧度)，按 (层, 比特, 3) 排列"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DomainError("参数向量含有非有限值")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def layers(self, spec):
        """按 spec.parameter_shape 重排为 (层, 比特, 3)"""
        if self.values.size != spec.num_params:
            raise DomainError(f"参数个数 {self.values.size} 与线路要求的 {spec.num_params} 不符")
        return self.values.reshape(spec.parameter_shape)

    @classmethod
    def zeros(cls, spec):
        return cls(np.zeros(spec.num_params))

    @classmethod
    def random(cls, spec, seed):
        """[0, 2π) 上均匀初始化"""
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(0.0, 2 * np.pi, size=spec.num_params))


def as_params(spec, params):
    """把 ParamVector 或数组统一为长度校验过的 ParamVector"""
    if not isinstance(params, ParamVector):
        params = ParamVector(params)
    params.layers(spec)
    return params


# 线路中的一个门; param 是展平参数向量中的下标, CNOT 为 None
Gate = collections.namedtuple("Gate", "kind wires param")


def circuit_gates(spec):
    """
    按时间顺序列出变分块的所有门

    每层每个比特先作用 R_Z(c)、再 R_Y(b)、最后 R_Z(a)，即矩阵 R_Z(a)R_Y(b)R_Z(c)，
    其中 (a, b, c) 是该比特在该层的三个角度; 随后是一圈 CNOT。
    """
    d = spec.num_qubits
    gates = []
    for layer in range(spec.num_layers):
        for q in range(d):
            base = (layer * d + q) * 3
            gates.append(Gate("rz", (q,), base + 2))
            gates.append(Gate("ry", (q,), base + 1))
            gates.append(Gate("rz", (q,), base))
        if spec.entangler == "ring" and d > 1:
            for q in range(d):
                gates.append(Gate("cnot", (q, (q + 1) % d), None))
    return gates


# ==================== 矩阵上的门作用 ====================

def _apply_left(mat, u, qubit, d):
    """(I ⊗ .. u .. ⊗ I) @ mat, u 作用在第 qubit 个比特"""
    dim = mat.shape[0]
    t = mat.reshape((2,) * d + (dim,))
    t = np.tensordot(u, t, axes=([1], [qubit]))
    t = np.moveaxis(t, 0, qubit)
    return t.reshape(dim, dim)


def conjugate_single(mat, u, qubit, d):
    """U mat U†, U 为作用在单个比特上的 u"""
    x = _apply_left(mat, u, qubit, d)
    return _apply_left(x.conj().T, u, qubit, d).conj().T


@functools.lru_cache(maxsize=None)
def _cnot_permutation(control, target, d):
    idx = np.arange(2 ** d)
    cbit = (idx >> (d - 1 - control)) & 1
    perm = idx ^ (cbit << (d - 1 - target))
    perm.setflags(write=False)
    return perm


def apply_gate(mat, gate, angle, d, adjoint=False):
    """
    用一个门共轭矩阵

    参数:
        mat (np.ndarray): 2^d x 2^d 矩阵
        gate (Gate): 线路中的门
        angle (float | None): 旋转角, CNOT 忽略
        d (int): 比特数
        adjoint (bool): False 返回 G mat G† (薛定谔绘景), True 返回 G† mat G (海森堡绘景)
    """
    if gate.kind == "cnot":
        # CNOT 是对合置换, 两种绘景相同
        perm = _cnot_permutation(gate.wires[0], gate.wires[1], d)
        return mat[np.ix_(perm, perm)]
    u = _ROTATIONS[gate.kind](angle)
    if adjoint:
        u = u.conj().T
    return conjugate_single(mat, u, gate.wires[0], d)


# ==================== 密度矩阵与观测量 ====================

def _square_matrix(mat, num_qubits, what):
    mat = np.asarray(mat, dtype=complex)
    dim = 2 ** int(num_qubits)
    if mat.shape != (dim, dim):
        raise DomainError(f"{what} 的形状应为 {(dim, dim)}, 实际为 {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise DomainError(f"{what} 含有非有限值")
    return mat


def _frozen(mat):
    mat = np.array(mat, dtype=complex)
    mat.setflags(write=False)
    return mat


@dataclasses.dataclass(frozen=True, eq=False)
class DensityMatrix:
    """d 比特密度矩阵: 厄米、迹为 1(构造时检查), 半正定性由 is_physical() 检查"""

    num_qubits: int
    mat: np.ndarray

    def __post_init__(self):
        mat = _square_matrix(self.mat, self.num_qubits, "密度矩阵")
        tol = config.get_settings()
        if not np.allclose(mat, mat.conj().T, atol=tol.hermitian_tol, rtol=0):
            raise DomainError("密度矩阵不是厄米矩阵")
        if abs(np.trace(mat) - 1.0) > tol.trace_tol:
            raise DomainError(f"密度矩阵的迹为 {np.trace(mat):.3g}, 不等于 1")
        object.__setattr__(self, "mat", _frozen(mat))

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.mat)

    def is_physical(self):
        return bool(self.eigenvalues().min() >= -config.get_settings().psd_tol)


@dataclasses.dataclass(frozen=True, eq=False)
class Observable:
    """d 比特厄米观测量"""

    num_qubits: int
    mat: np.ndarray

    def __post_init__(self):
        mat = _square_matrix(self.mat, self.num_qubits, "观测量")
        if not np.allclose(mat, mat.conj().T, atol=config.get_settings().hermitian_tol, rtol=0):
            raise DomainError("观测量不是厄米矩阵")
        object.__setattr__(self, "mat", _frozen(mat))

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.mat)


def pauli_z_sum(qubits, d):
    """Σ_q Z_q 的稠密矩阵(对角)"""
    idx = np.arange(2 ** d)
    diag = np.zeros(2 ** d)
    for q in qubits:
        diag += 1.0 - 2.0 * ((idx >> (d - 1 - q)) & 1)
    return np.diag(diag).astype(complex)


def _check_qubits(d):
    cap = config.get_settings().qubit_cap
    if d > cap:
        raise ResourceError(f"比特数 {d} 超过上限 {cap}")


def as_input(x, d=None):
    """把输入转为有限的一维浮点数组, 可选地检查长度"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError(f"输入必须是非空一维向量, 实际形状为 {x.shape}")
    if d is not None and x.size != d:
        raise DomainError(f"输入长度 {x.size} 与比特数 {d} 不符")
    if not np.all(np.isfinite(x)):
        raise DomainError("输入含有非有限值")
    return x


def _encoded_qubit(xj):
    c, s = math.cos(xj), math.sin(xj)
    return 0.5 * np.array([[1 + c, 1j * s], [-1j * s, 1 - c]], dtype=complex)


def encoded_matrix(x):
    """ρ(x) 的原始矩阵(不做厄米/迹校验, 供导数与批量路径使用)"""
    x = as_input(x)
    _check_qubits(x.size)
    return functools.reduce(np.kron, (_encoded_qubit(xj) for xj in x))


def encode_state(x):
    """
    数据编码态 ρ(x) = ⊗_j R_X(x_j)|0⟩⟨0|R_X(x_j)†

    参数:
        x (array-like): 长度为 d 的实向量, 每个分量编码到对应比特

    返回:
        DensityMatrix: 2^d x 2^d 密度矩阵

    异常:
        ResourceError: d 超过配置的比特上限(默认 12)
        DomainError: 数值误差使 ρ(x) 失去半正定性
    """
    x = as_input(x)
    rho = DensityMatrix(x.size, encoded_matrix(x))
    if not rho.is_physical():
        raise DomainError(f"编码态最小本征值 {rho.eigenvalues().min():.3g} 为负")
    return rho


def encode_batch(X):
    """
    批量编码

    参数:
        X (np.ndarray): (B, d) 输入

    返回:
        np.ndarray: (B, 2^d, 2^d) 复矩阵
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError(f"批量输入必须是二维数组, 实际形状为 {X.shape}")
    _check_qubits(X.shape[1])
    c, s = np.cos(X), np.sin(X)
    q = np.empty(X.shape + (2, 2), dtype=complex)
    q[..., 0, 0] = (1 + c) / 2
    q[..., 0, 1] = 0.5j * s
    q[..., 1, 0] = -0.5j * s
    q[..., 1, 1] = (1 - c) / 2
    out = q[:, 0]
    for j in range(1, X.shape[1]):
        n = out.shape[1] * 2
        out = np.einsum("bij,bkl->bikjl", out, q[:, j]).reshape(X.shape[0], n, n)
    return out


def _bits(index, d):
    """比特串(字符串 / 0-1 序列 / 整数)转为长度 d 的 0/1 数组"""
    if isinstance(index, str):
        if any(ch not in "01" for ch in index):
            raise DomainError(f"比特串只能包含 0 和 1: {index!r}")
        bits = np.array([int(ch) for ch in index], dtype=int)
    elif isinstance(index, (int, np.integer)):
        if d is None or not 0 <= index < 2 ** d:
            raise DomainError(f"整数下标 {index} 超出 [0, 2^{d})")
        bits = (int(index) >> (d - 1 - np.arange(d))) & 1
    else:
        bits = np.asarray(index, dtype=int)
        if bits.ndim != 1 or np.any((bits != 0) & (bits != 1)):
            raise DomainError(f"比特串不合法: {index!r}")
    if d is not None and bits.size != d:
        raise DomainError(f"比特串长度 {bits.size} 与输入维度 {d} 不符")
    return bits


def entry_g(k, l, x):
    """
    编码态矩阵元的闭式公式

        g(k,l) = i^{3|k|+|l|} ∏_j (δ_{k_j,l_j} + cos(x_j − π/2 (k_j + l_j)))

    并满足 ρ(x)[k, l] = g(k,l) / 2^d。计算量与 d 成线性。

    参数:
        k, l: 比特串(字符串、0/1 序列或整数下标)
        x (array-like): 长度 d 的输入

    返回:
        complex: g(k,l)
    """
    x = as_input(x)
    d = x.size
    kb, lb = _bits(k, d), _bits(l, d)
    phase = _I_POWERS[(3 * int(kb.sum()) + int(lb.sum())) % 4]
    factors = (kb == lb) + np.cos(x - HALF_PI * (kb + lb))
    return complex(phase * np.prod(factors))


def entries_g(ks, ls, X, d):
    """
    向量化的 entry_g

    参数:
        ks, ls (array-like): (n,) 整数下标
        X (array-like): (n, d) 每个矩阵元各自的求值点, 或 (d,) 共用一个点
        d (int): 比特数

    返回:
        np.ndarray: (n,) 复数 g 值
    """
    ks = np.asarray(ks, dtype=np.int64)
    ls = np.asarray(ls, dtype=np.int64)
    shifts = d - 1 - np.arange(d)
    kb = (ks[:, None] >> shifts) & 1
    lb = (ls[:, None] >> shifts) & 1
    X = np.broadcast_to(np.asarray(X, dtype=float), kb.shape)
    phase = np.array(_I_POWERS)[(3 * kb.sum(axis=1) + lb.sum(axis=1)) % 4]
    factors = (kb == lb) + np.cos(X - HALF_PI * (kb + lb))
    return phase * np.prod(factors, axis=1)


# ==================== 观测量演化与期望值 ====================

def heisenberg_observable(spec, params, cls):
    """
    海森堡绘景下的观测量 ℳ(θ) = V(θ)† ℳ₀ V(θ)

    ℳ₀ 是类别 cls 对应的 Pauli-Z(或其和)，从线路末端逐门向前共轭。

    参数:
        spec (CircuitSpec): 线路结构
        params (ParamVector | array-like): 旋转角
        cls (int): 类别下标

    返回:
        Observable: 演化后的观测量
    """
    params = as_params(spec, params)
    d = spec.num_qubits
    _check_qubits(d)
    mat = pauli_z_sum(spec.measured_qubits(cls), d)
    theta = params.values
    for gate in reversed(circuit_gates(spec)):
        angle = None if gate.param is None else theta[gate.param]
        mat = apply_gate(mat, gate, angle, d, adjoint=True)
    return Observable(d, mat)


def _matrix_of(obj):
    return obj.mat if isinstance(obj, (DensityMatrix, Observable)) else np.asarray(obj)


def expectation(rho, observable):
    """
    期望值 Tr{ρℳ}

    参数:
        rho (DensityMatrix | np.ndarray): 状态(或任意同形状矩阵, 如导数矩阵)
        observable (Observable | np.ndarray): 观测量

    返回:
        float: 实数期望值

    异常:
        DomainError: 维度不匹配
    """
    r, m = _matrix_of(rho), _matrix_of(observable)
    if r.ndim != 2 or r.shape != m.shape or r.shape[0] != r.shape[1]:
        raise DomainError(f"维度不匹配: 状态 {r.shape}, 观测量 {m.shape}")
    return float(np.real(np.einsum("ij,ji->", r, m)))


def model_forward(spec, params, x):
    """各类别得分 f_c(x, θ) = Tr{ρ(x) ℳ_c(θ)}"""
    x = as_input(x, spec.num_qubits)
    rho = encode_state(x)
    return np.array([expectation(rho, heisenberg_observable(spec, params, c))
                     for c in range(spec.num_classes)])


# ==================== 参数平移导数 ====================

def _check_component(x, k):
    if not isinstance(k, (int, np.integer)) or not 0 <= k < x.size:
        raise DomainError(f"分量下标 {k} 超出范围 [0, {x.size})")


def _shifted(x, k, delta):
    z = x.copy()
    z[k] += delta
    return z


def shift_d1_state(x, k):
    """∂_k ρ(x) = (ρ(x + π/2 ê_k) − ρ(x − π/2 ê_k)) / 2, 迹为 0 的厄米矩阵"""
    x = as_input(x)
    _check_component(x, k)
    return (encoded_matrix(_shifted(x, k, HALF_PI)) - encoded_matrix(_shifted(x, k, -HALF_PI))) / 2


def shift_d2_state(x, k):
    """∂²_k ρ(x) = −(ρ(x) − ρ(x + π ê_k)) / 2"""
    x = as_input(x)
    _check_component(x, k)
    return -(encoded_matrix(x) - encoded_matrix(_shifted(x, k, np.pi))) / 2


def input_gradient(spec, params, x, cls):
    """∂_k f(x) = Tr{∂_k ρ(x) ℳ(θ)}, k = 0..d-1"""
    x = as_input(x, spec.num_qubits)
    obs = heisenberg_observable(spec, params, cls)
    return np.array([expectation(shift_d1_state(x, k), obs) for k in range(x.size)])


def input_hessian_diag(spec, params, x, cls):
    """∂²_k f(x) = Tr{∂²_k ρ(x) ℳ(θ)}, k = 0..d-1"""
    x = as_input(x, spec.num_qubits)
    obs = heisenberg_observable(spec, params, cls)
    return np.array([expectation(shift_d2_state(x, k), obs) for k in range(x.size)])


# ==================== 模型封装 ====================

@dataclasses.dataclass(frozen=True, eq=False)
class CircuitModel:
    """
    训练好(或给定参数)的 PQC 分类器

    构造时一次性算出所有类别的 ℳ_c(θ)，之后的求值只需编码和求迹。
    """

    spec: CircuitSpec
    params: ParamVector
    observables: tuple = dataclasses.field(init=False, repr=False, compare=False)
    _flat: np.ndarray = dataclasses.field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", as_params(self.spec, self.params))
        observables = tuple(heisenberg_observable(self.spec, self.params, c)
                            for c in range(self.spec.num_classes))
        # Tr(ρM) = vec(ρ) · vec(Mᵀ)
        flat = np.stack([o.mat.T.reshape(-1) for o in observables])
        flat.setflags(write=False)
        object.__setattr__(self, "observables", observables)
        object.__setattr__(self, "_flat", flat)

    @property
    def num_features(self):
        return self.spec.num_qubits

    @property
    def num_classes(self):
        return self.spec.num_classes

    def _check_class(self, cls):
        if not 0 <= cls < self.num_classes:
            raise DomainError(f"类别下标 {cls} 超出范围 [0, {self.num_classes})")

    def _value_of(self, x, cls):
        return float(np.real(encoded_matrix(x).reshape(-1) @ self._flat[cls]))

    def scores(self, x):
        x = as_input(x, self.num_features)
        return np.real(self._flat @ encoded_matrix(x).reshape(-1))

    def value(self, x, cls):
        self._check_class(cls)
        return self._value_of(as_input(x, self.num_features), cls)

    def gradient(self, x, cls):
        self._check_class(cls)
        x = as_input(x, self.num_features)
        return np.array([
            (self._value_of(_shifted(x, k, HALF_PI), cls)
             - self._value_of(_shifted(x, k, -HALF_PI), cls)) / 2
            for k in range(x.size)
        ])

    def hessian_diag(self, x, cls):
        self._check_class(cls)
        x = as_input(x, self.num_features)
        fx = self._value_of(x, cls)
        return np.array([-(fx - self._value_of(_shifted(x, k, np.pi), cls)) / 2
                         for k in range(x.size)])

    def score_states(self, states):
        """(B, N, N) 编码态 -> (B, C) 得分"""
        states = np.asarray(states)
        return np.real(states.reshape(states.shape[0], -1) @ self._flat.T)

    def score_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise DomainError(f"批量输入形状应为 (B, {self.num_features}), 实际为 {X.shape}")
        # 每块最多约 2^22 个矩阵元
        chunk = max(1, 2 ** 22 // 4 ** self.num_features)
        if X.shape[0] <= chunk:
            return self.score_states(encode_batch(X))
        return np.concatenate([self.score_states(encode_batch(X[s:s + chunk]))
                               for s in range(0, X.shape[0], chunk)])

    def predict(self, X):
        """argmax 预测, 并列时取下标最小的类别"""
        return np.argmax(self.score_batch(X), axis=1)


# ==================== JSON 持久化 ====================

def circuit_to_dict(spec, params):
    data = spec.to_dict()
    data["params"] = [float(v) for v in as_params(spec, params).values]
    return data


def circuit_from_dict(data):
    spec = CircuitSpec.from_dict(data)
    if "params" not in data:
        raise DomainError("线路文件缺少 params 字段")
    return spec, as_params(spec, data["params"])


def save_circuit(path, spec, params, extra=None):
    """
    把线路结构与参数写成 JSON

    参数:
        extra (dict | None): 附加字段(如 config_hash、seed)
    """
    data = circuit_to_dict(spec, params)
    if extra:
        data.update(extra)
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("[保存] 线路已写入 %s", path)
    return path


def load_circuit(path):
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"找不到线路文件: {path}")
    return circuit_from_dict(json.loads(path.read_text(encoding="utf-8")))
