# -*- coding: utf-8 -*-
"""
训练损失

L_h：P_h 与 G_h(P_g) 的平均绝对误差；L_r：P_r 与 P_g 的均方误差；
L_t = λ·L_h + (1 - λ)·L_r。均按元素取平均，使数值与分辨率无关。
"""
from typing import Tuple

import numpy as np

from ..core.exceptions import ShapeError, ValidationError
from ..numerics.filters import gaussian_highpass


def _check_pair(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: 预测与目标形状不一致", a.shape, b.shape)


def highpass_target(p_g: np.ndarray, sigma: float) -> np.ndarray:
    return gaussian_highpass(p_g, sigma)


def loss_h(p_h: np.ndarray, p_g: np.ndarray, sigma: float) -> float:
    """高频损失 mean|P_h - G_h(P_g)|"""
    _check_pair(p_h, p_g, 'loss_h')
    return float(np.mean(np.abs(p_h.astype(np.float64) - highpass_target(p_g, sigma))))


def loss_h_with_grad(p_h: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """已给定高通目标时的 L_h 及其对 P_h 的梯度 sign(P_h - T) / n"""
    _check_pair(p_h, target, 'loss_h')
    diff = p_h.astype(np.float64) - target
    value = float(np.mean(np.abs(diff)))
    return value, (np.sign(diff) / diff.size).astype(p_h.dtype)


def loss_r(p_r: np.ndarray, p_g: np.ndarray) -> float:
    """重建损失 mean((P_r - P_g)^2)"""
    _check_pair(p_r, p_g, 'loss_r')
    return float(np.mean(np.square(p_r.astype(np.float64) - p_g)))


def loss_r_with_grad(p_r: np.ndarray, p_g: np.ndarray) -> Tuple[float, np.ndarray]:
    _check_pair(p_r, p_g, 'loss_r')
    diff = p_r.astype(np.float64) - p_g
    return float(np.mean(np.square(diff))), (2.0 * diff / diff.size).astype(p_r.dtype)


def check_lambda(lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"λ 必须位于 [0, 1]，当前为 {lam}", field='lambda', value=lam)
    return lam


def loss_total(lh: float, lr: float, lam: float) -> float:
    """L_t = λ·L_h + (1 - λ)·L_r"""
    check_lambda(lam)
    return lam * lh + (1.0 - lam) * lr
