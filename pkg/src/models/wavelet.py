# -*- coding: utf-8 -*-
"""
Haar 小波分解与重构

以步长 2 的逐通道互相关实现单层二维 Haar 分析，重构为其伴随（转置卷积）。
四个 2×2 核均按 ½ 缩放，构成正交基，因此重构是精确的逆变换。
对角核采用标准 Haar 形式 ½[[1,-1],[-1,1]]。
"""
from typing import NamedTuple

import numpy as np

from ..core.exceptions import ShapeError
from ..numerics.conv import conv2d, conv_transpose2d

# 每个通道的子带顺序：全局 g、竖直细节 d1、水平细节 d2、对角细节 d3
HAAR_KERNELS = 0.5 * np.array([
    [[1.0, 1.0], [1.0, 1.0]],
    [[1.0, -1.0], [1.0, -1.0]],
    [[1.0, 1.0], [-1.0, -1.0]],
    [[1.0, -1.0], [-1.0, 1.0]],
])
NUM_BANDS = 4


class SubBands(NamedTuple):
    """单层小波分解的四个半分辨率子带"""
    g: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @property
    def details(self) -> np.ndarray:
        """细节子带按 (d1, d2, d3) 在通道维拼接"""
        return np.concatenate([self.d1, self.d2, self.d3], axis=1)

    def energy(self) -> float:
        return float(sum(np.sum(np.square(b, dtype=np.float64)) for b in self))


def filter_bank(channels: int, dtype=np.float32) -> np.ndarray:
    """(4C, 1, 2, 2) 的逐通道滤波器组，输出通道 4c+b 对应通道 c 的第 b 个子带"""
    return np.tile(HAAR_KERNELS, (channels, 1, 1)).reshape(channels * NUM_BANDS, 1, 2, 2).astype(dtype)


def _interleave(bands: SubBands) -> np.ndarray:
    n, c, h, w = bands.g.shape
    return np.stack(list(bands), axis=2).reshape(n, c * NUM_BANDS, h, w)


def wt_forward(x: np.ndarray) -> SubBands:
    """
    单层 Haar 分析

    Args:
        x: (N, C, H, W)，H 与 W 必须为偶数

    Returns:
        SubBands: 四个 (N, C, H/2, W/2) 子带
    """
    if x.ndim != 4:
        raise ShapeError("小波变换需要 4 维张量", x.shape)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("小波变换要求高和宽为偶数，请先对输入做填充", x.shape)
    y = conv2d(x, filter_bank(c, x.dtype), stride=2, groups=c)
    y = y.reshape(n, c, NUM_BANDS, h // 2, w // 2)
    return SubBands(*(np.ascontiguousarray(y[:, :, b]) for b in range(NUM_BANDS)))


def wt_inverse(bands: SubBands) -> np.ndarray:
    """
    单层 Haar 重构（分析算子的伴随）

    Args:
        bands: 形状一致的四个子带

    Returns:
        np.ndarray: (N, C, 2H, 2W)
    """
    shapes = [b.shape for b in bands]
    if len(bands) != NUM_BANDS or any(s != shapes[0] for s in shapes) or len(shapes[0]) != 4:
        raise ShapeError("子带形状不一致", *shapes)
    c = shapes[0][1]
    return conv_transpose2d(_interleave(SubBands(*bands)), filter_bank(c, bands[0].dtype), stride=2, groups=c)


def split_bands(x: np.ndarray) -> SubBands:
    """把按 (g, d1, d2, d3) 顺序在通道维拼接的 4C 张量拆成子带"""
    c = x.shape[1] // NUM_BANDS
    if x.shape[1] != c * NUM_BANDS:
        raise ShapeError("通道数必须是 4 的倍数才能拆分为子带", x.shape)
    return SubBands(*(x[:, b * c:(b + 1) * c] for b in range(NUM_BANDS)))
