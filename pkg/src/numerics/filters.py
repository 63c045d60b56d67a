# -*- coding: utf-8 -*-
"""
高斯滤波工具

边界统一使用镜像（不重复边缘）延拓，即 scipy.ndimage 的 'mirror' 模式，
与 numpy.pad(mode='reflect') 一致。
"""
import math
from typing import Optional

import numpy as np
from scipy import ndimage

from ..core.exceptions import ValidationError

BOUNDARY_MODE = 'mirror'


def gaussian_kernel1d(sigma: float, radius: Optional[int] = None) -> np.ndarray:
    """
    归一化的一维高斯核

    Args:
        sigma: 标准差，必须 > 0
        radius: 半径，默认 ceil(3σ)，核长度为 2·radius + 1

    Returns:
        np.ndarray: float64，元素和为 1
    """
    if sigma <= 0:
        raise ValidationError(f"高斯 σ 必须 > 0，当前为 {sigma}", field='sigma', value=sigma)
    if radius is None:
        radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def separable_filter(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """在 (…, H, W) 的最后两个维度上做可分离相关滤波"""
    out = ndimage.correlate1d(x, kernel, axis=-2, mode=BOUNDARY_MODE)
    return ndimage.correlate1d(out, kernel, axis=-1, mode=BOUNDARY_MODE)


def gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    """逐通道各向同性高斯模糊，核长 2·ceil(3σ)+1，结果保持输入精度"""
    k = gaussian_kernel1d(sigma).astype(x.dtype, copy=False)
    return separable_filter(x, k)


def gaussian_highpass(x: np.ndarray, sigma: float) -> np.ndarray:
    """高斯高通：G_h(I) = I - blur(I)"""
    return x - gaussian_blur(x, sigma)


def anisotropic_gaussian_kernel(sigma_major: float, sigma_minor: float, theta: float) -> np.ndarray:
    """
    旋转各向异性高斯核（二维，归一化）

    核尺寸 2·ceil(3·σ_major)+1，θ 为主轴与水平方向的夹角。
    """
    if sigma_major <= 0 or sigma_minor <= 0:
        raise ValidationError("各向异性高斯的 σ 必须 > 0", field='sigma')
    radius = int(math.ceil(3.0 * sigma_major))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    yy, xx = np.meshgrid(ax, ax, indexing='ij')
    c, s = math.cos(theta), math.sin(theta)
    u = c * xx + s * yy
    v = -s * xx + c * yy
    k = np.exp(-0.5 * ((u / sigma_major) ** 2 + (v / sigma_minor) ** 2))
    return k / k.sum()


def filter2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """对 (N, C, H, W) 逐通道做二维相关滤波"""
    weights = kernel.reshape((1,) * (x.ndim - 2) + kernel.shape).astype(x.dtype, copy=False)
    return ndimage.correlate(x, weights, mode=BOUNDARY_MODE)
