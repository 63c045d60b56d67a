# -*- coding: utf-8 -*-
"""
AdamW 优化器与学习率计划

解耦权重衰减：θ ← θ - lr·m̂/(√v̂ + ε) - lr·wd·θ，衰减作用于更新前的参数。
学习率前 (epochs - decay_window) 轮保持 lr0，之后线性降到 lr0/decay_window。
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..core.config import TrainConfig
from ..core.exceptions import GradientError
from ..numerics.tensor import ParamStore

ADAM_EPS = 1e-8


@dataclass
class OptState:
    """优化器状态：一阶/二阶矩与已执行步数"""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def moments(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        return self.m[name], self.v[name]


def optimizer_step(store: ParamStore, state: OptState, lr: float, cfg: TrainConfig) -> None:
    """
    执行一步 AdamW 更新（原地修改参数与状态）

    Args:
        store: 已填充梯度的参数仓库
        state: 优化器状态
        lr: 本步学习率
        cfg: 训练配置（beta1、beta2、weight_decay）
    """
    names = store.names()
    for name in names:
        if not np.all(np.isfinite(store.grad(name))):
            raise GradientError(f"参数 {name} 的梯度含有 NaN/Inf", parameter=name)

    state.step += 1
    t = state.step
    b1, b2, wd = cfg.beta1, cfg.beta2, cfg.weight_decay
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name in names:
        theta = store[name]
        g = store.grad(name)
        m, v = state.moments(name, theta)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        theta -= (update + lr * wd * theta).astype(theta.dtype, copy=False)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """第 epoch 轮（从 0 开始）的学习率"""
    start = cfg.epochs - cfg.decay_window
    if epoch < start:
        return cfg.lr0
    return cfg.lr0 * (cfg.epochs - epoch) / cfg.decay_window
