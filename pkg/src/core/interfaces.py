# -*- coding: utf-8 -*-
"""
可微模块接口定义

每个可学习模块都实现 forward(*inputs) 与 backward(grad)：
- backward 返回对各输入的梯度（单输入时直接返回数组，多输入时返回元组）
- 参数梯度累加进共享的 ParamStore
- 前向缓存只在训练模式下保存，推理模式下的前向是纯函数，可并发调用
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .exceptions import GradientError


class DifferentiableBlock(ABC):
    """可微模块基类"""

    def __init__(self, store, name: str):
        self.store = store
        self.name = name
        self.training = False
        self._children: List['DifferentiableBlock'] = []
        self._own_params: List[str] = []
        self._cache: Optional[Dict[str, Any]] = None

    # ---- 参数与子模块 ----

    def add_child(self, block: 'DifferentiableBlock') -> 'DifferentiableBlock':
        self._children.append(block)
        return block

    def register_param(self, key: str, shape: Sequence[int], fan_in: Optional[int] = None,
                       init: str = 'uniform') -> str:
        full = f"{self.name}.{key}" if self.name else key
        self.store.register(full, shape, fan_in=fan_in, init=init)
        self._own_params.append(full)
        return full

    def param(self, key: str) -> np.ndarray:
        """参数每次都从仓库读取，便于外部原地扰动或加载"""
        return self.store[f"{self.name}.{key}" if self.name else key]

    def accumulate(self, key: str, grad: np.ndarray) -> None:
        self.store.accumulate(f"{self.name}.{key}" if self.name else key, grad)

    def param_names(self) -> List[str]:
        names = list(self._own_params)
        for child in self._children:
            names.extend(child.param_names())
        return sorted(set(names))

    def num_parameters(self) -> int:
        return int(sum(self.store[n].size for n in self.param_names()))

    # ---- 模式切换 ----

    def train(self, mode: bool = True) -> 'DifferentiableBlock':
        self.training = mode
        if not mode:
            self._cache = None
        for child in self._children:
            child.train(mode)
        return self

    def eval(self) -> 'DifferentiableBlock':
        return self.train(False)

    # ---- 前向缓存 ----

    def save_for_backward(self, **tensors) -> None:
        if self.training:
            self._cache = tensors

    def saved(self) -> Dict[str, Any]:
        if self._cache is None:
            raise GradientError(f"模块 {self.name} 需要先在训练模式下执行前向再反向", parameter=self.name)
        return self._cache

    # ---- 计算 ----

    @abstractmethod
    def forward(self, *inputs):
        """前向计算"""

    @abstractmethod
    def backward(self, grad):
        """反向传播，返回对输入的梯度"""

    def __call__(self, *inputs):
        return self.forward(*inputs)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, params={len(self.param_names())})"
