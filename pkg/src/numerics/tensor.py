# -*- coding: utf-8 -*-
"""
稠密张量基础设施

张量即 rank-4 的 numpy 数组 (N, C, H, W)，默认 float32；梯度检查时允许 float64。
ParamStore 按名称保存全部可学习参数及其同形状梯度。
"""
import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import GradientError, ShapeError, ValidationError
from .prng import stream

DEFAULT_DTYPE = np.float32
SUPPORTED_DTYPES = (np.float32, np.float64)


def as_tensor(x, dtype=None) -> np.ndarray:
    """转换为 rank-4 浮点数组（不复制已满足要求的数组）"""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise ShapeError(f"张量必须为 4 维 (N, C, H, W)，实际为 {arr.ndim} 维", arr.shape)
    target = np.dtype(dtype) if dtype is not None else (arr.dtype if arr.dtype in SUPPORTED_DTYPES else np.dtype(DEFAULT_DTYPE))
    return arr.astype(target, copy=False)


def ensure_finite(x: np.ndarray, what: str) -> np.ndarray:
    """非有限值检查"""
    if not np.all(np.isfinite(x)):
        raise GradientError(f"{what} 含有 NaN/Inf", parameter=what)
    return x


def same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: 形状不一致", a.shape, b.shape)


class ParamStore:
    """
    参数仓库

    名称 -> 参数张量，并为每个参数维护同形状的梯度张量。
    迭代顺序按名称字典序，保证可复现。
    """

    def __init__(self, seed: int = 0, dtype=DEFAULT_DTYPE):
        if np.dtype(dtype) not in [np.dtype(d) for d in SUPPORTED_DTYPES]:
            raise ValidationError(f"不支持的数据类型: {dtype}", field='dtype', value=dtype)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self._params: Dict[str, np.ndarray] = {}
        self._grads: Dict[str, np.ndarray] = {}

    def register(self, name: str, shape: Sequence[int], fan_in: Optional[int] = None,
                 init: str = 'uniform') -> np.ndarray:
        """
        注册参数；同名参数已存在时校验形状后复用

        Args:
            name: 参数路径名，如 "enc.0.detail.depthwise.weight"
            shape: 参数形状
            fan_in: 均匀初始化的扇入，界为 sqrt(1/fan_in)
            init: 'uniform' 或 'zeros'
        """
        shape = tuple(int(s) for s in shape)
        if name in self._params:
            if self._params[name].shape != shape:
                raise ShapeError(f"参数 {name} 已以不同形状注册", self._params[name].shape, shape)
            return self._params[name]

        if init == 'zeros':
            value = np.zeros(shape, dtype=self.dtype)
        elif init == 'uniform':
            bound = math.sqrt(1.0 / max(1, fan_in or 1))
            value = stream(self.seed, 'param', name).uniform(-bound, bound, size=shape).astype(self.dtype)
        else:
            raise ValidationError(f"未知的初始化方式: {init}", field='init', value=init)

        self._params[name] = value
        self._grads[name] = np.zeros(shape, dtype=self.dtype)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value)
        if name in self._params:
            same_shape(self._params[name], value, f"参数 {name}")
            self._params[name][...] = value
        else:
            self._params[name] = np.array(value, dtype=self.dtype)
            self._grads[name] = np.zeros(value.shape, dtype=self.dtype)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self) -> List[str]:
        return sorted(self._params)

    def items(self) -> List[Tuple[str, np.ndarray]]:
        return [(name, self._params[name]) for name in self.names()]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def accumulate(self, name: str, g: np.ndarray) -> None:
        """梯度累加（单写者）"""
        self._grads[name] += g

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: self._params[name].copy() for name in self.names()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """加载参数；strict 时要求名称集合完全一致"""
        if strict:
            missing = sorted(set(self._params) - set(state))
            unexpected = sorted(set(state) - set(self._params))
            if missing or unexpected:
                raise ValidationError(
                    f"参数集合不一致，缺失: {missing[:5]}，多余: {unexpected[:5]}", field='state_dict')
        for name, value in state.items():
            self[name] = np.asarray(value, dtype=self.dtype)

    def astype(self, dtype) -> 'ParamStore':
        """复制为另一种精度的参数仓库"""
        other = ParamStore(seed=self.seed, dtype=dtype)
        for name, value in self.items():
            other[name] = value.astype(dtype)
        return other
