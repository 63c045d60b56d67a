# -*- coding: utf-8 -*-
"""
可复用的可学习模块

深度可分离卷积、通道混洗、组注意力、空间/通道注意力、选择性通道融合、
上采样模块以及高斯高通算子。所有模块的参数都存放在共享的 ParamStore 中，
命名形如 "<模块路径>.<weight|bias>"。
"""
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import expit

from ..core.exceptions import ShapeError, ValidationError
from ..core.interfaces import DifferentiableBlock
from ..numerics.conv import conv2d, conv2d_backward
from ..numerics.filters import gaussian_blur, gaussian_highpass  # noqa: F401  对外导出

UPSAMPLE_MODES = ('nearest', 'bilinear')


def _check_channels(x: np.ndarray, expected: int, who: str) -> None:
    if x.ndim != 4 or x.shape[1] != expected:
        raise ShapeError(f"{who} 期望 {expected} 个输入通道", x.shape)


class Conv2d(DifferentiableBlock):
    """普通 / 分组二维卷积，same 填充（(k-1)/2）"""

    def __init__(self, store, name: str, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, groups: int = 1, bias: bool = True, pad_mode: str = 'reflect'):
        super().__init__(store, name)
        if in_channels % groups or out_channels % groups:
            raise ValidationError(f"{name}: 通道数不能被 groups={groups} 整除", field='groups', value=groups)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.groups = groups
        self.padding = (kernel_size - 1) // 2
        self.pad_mode = pad_mode
        self.has_bias = bias
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        self.register_param('weight', (out_channels, in_channels // groups, kernel_size, kernel_size), fan_in=fan_in)
        if bias:
            self.register_param('bias', (out_channels,), init='zeros')

    def forward(self, x):
        _check_channels(x, self.in_channels, self.name)
        self.save_for_backward(x=x)
        return conv2d(x, self.param('weight'), self.param('bias') if self.has_bias else None,
                      stride=self.stride, padding=self.padding, pad_mode=self.pad_mode, groups=self.groups)

    def backward(self, grad):
        x = self.saved()['x']
        dx, dw, db = conv2d_backward(grad, x, self.param('weight'), stride=self.stride, padding=self.padding,
                                     pad_mode=self.pad_mode, groups=self.groups)
        self.accumulate('weight', dw)
        if self.has_bias:
            self.accumulate('bias', db)
        return dx


class Sigmoid(DifferentiableBlock):
    """逐元素 sigmoid（无参数）"""

    def forward(self, x):
        out = expit(x)
        self.save_for_backward(out=out)
        return out

    def backward(self, grad):
        out = self.saved()['out']
        return grad * out * (1 - out)


class DepthwiseSeparableConv(DifferentiableBlock):
    """
    深度可分离卷积

    k×k 逐通道卷积（反射填充）后接 1×1 逐点卷积。
    参数: depthwise.weight (Cin, 1, k, k)，pointwise.weight (Cout, Cin, 1, 1)，可选 pointwise.bias。
    """

    def __init__(self, store, name: str, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: int = 1, bias: bool = True):
        super().__init__(store, name)
        if kernel_size % 2 == 0:
            raise ValidationError(f"{name}: 卷积核大小必须为奇数", field='kernel_size', value=kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.depthwise = self.add_child(Conv2d(store, f"{name}.depthwise", in_channels, in_channels,
                                               kernel_size, stride=stride, groups=in_channels, bias=False))
        self.pointwise = self.add_child(Conv2d(store, f"{name}.pointwise", in_channels, out_channels, 1, bias=bias))

    def forward(self, x):
        _check_channels(x, self.in_channels, self.name)
        return self.pointwise(self.depthwise(x))

    def backward(self, grad):
        return self.depthwise.backward(self.pointwise.backward(grad))


@lru_cache(maxsize=64)
def _bilinear_matrix(n: int, dtype_name: str) -> np.ndarray:
    """×2 双线性插值矩阵 (2n, n)，半像素对齐，边界截断"""
    m = np.zeros((2 * n, n), dtype=np.float64)
    for i in range(2 * n):
        src = min(max((i + 0.5) / 2.0 - 0.5, 0.0), n - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n - 1)
        t = src - i0
        m[i, i0] += 1.0 - t
        m[i, i1] += t
    m = m.astype(dtype_name)
    m.setflags(write=False)
    return m


def upsample2x(x: np.ndarray, mode: str = 'nearest') -> np.ndarray:
    """空间维 ×2 上采样"""
    if mode == 'nearest':
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    if mode == 'bilinear':
        uh = _bilinear_matrix(x.shape[2], x.dtype.name)
        uw = _bilinear_matrix(x.shape[3], x.dtype.name)
        return np.matmul(np.matmul(uh, x), uw.T)
    raise ValidationError(f"未知的上采样模式: {mode}", field='upsample_mode', value=mode)


def upsample2x_backward(grad: np.ndarray, mode: str = 'nearest') -> np.ndarray:
    """upsample2x 的伴随"""
    n, c, h2, w2 = grad.shape
    if mode == 'nearest':
        return grad.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
    uh = _bilinear_matrix(h2 // 2, grad.dtype.name)
    uw = _bilinear_matrix(w2 // 2, grad.dtype.name)
    return np.matmul(np.matmul(uh.T, grad), uw)


class UpsampleBlock(DifferentiableBlock):
    """×2 上采样后接深度可分离卷积（可改变通道数）"""

    def __init__(self, store, name: str, in_channels: int, out_channels: int, kernel_size: int = 3,
                 mode: str = 'nearest'):
        super().__init__(store, name)
        if mode not in UPSAMPLE_MODES:
            raise ValidationError(f"未知的上采样模式: {mode}", field='upsample_mode', value=mode)
        self.mode = mode
        self.dwc = self.add_child(DepthwiseSeparableConv(store, f"{name}.dwc", in_channels, out_channels,
                                                         kernel_size))

    def forward(self, x):
        return self.dwc(upsample2x(x, self.mode))

    def backward(self, grad):
        return upsample2x_backward(self.dwc.backward(grad), self.mode)


def channel_shuffle(x: np.ndarray, groups: int) -> np.ndarray:
    """
    通道混洗：通道按 (G, C/G) 重排后转置再展平

    以 C/G 为组数再混洗一次即可还原。
    """
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ShapeError(f"通道数 {c} 不能被分组数 {groups} 整除", x.shape)
    return x.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3), keepdims=True)


def _gap_backward(grad: np.ndarray, hw: Tuple[int, int]) -> np.ndarray:
    h, w = hw
    return (grad / (h * w)) * np.ones((h, w), dtype=grad.dtype)


class GroupAttention(DifferentiableBlock):
    """
    组注意力

    GAP → 组内 1×1 压缩 → ReLU → 组内 1×1 恢复 → sigmoid 门控，
    输入乘以门控后做通道混洗，最后经 C→C 逐点卷积混合。
    """

    def __init__(self, store, name: str, channels: int, groups: int, reduction: int):
        super().__init__(store, name)
        if groups < 1 or channels % groups:
            raise ShapeError(f"{name}: 通道数 {channels} 不能被分组数 {groups} 整除", (channels,), (groups,))
        self.channels = channels
        self.groups = groups
        self.hidden = max(1, (channels // groups) // reduction)
        width = groups * self.hidden
        self.squeeze = self.add_child(Conv2d(store, f"{name}.squeeze", channels, width, 1, groups=groups))
        self.excite = self.add_child(Conv2d(store, f"{name}.excite", width, channels, 1, groups=groups))
        self.mix = self.add_child(Conv2d(store, f"{name}.mix", channels, channels, 1))

    def forward(self, x):
        _check_channels(x, self.channels, self.name)
        pre = self.squeeze(global_avg_pool(x))
        gate = expit(self.excite(np.maximum(pre, 0)))
        self.save_for_backward(x=x, pre=pre, gate=gate)
        return self.mix(channel_shuffle(x * gate, self.groups))

    def backward(self, grad):
        cache = self.saved()
        x, pre, gate = cache['x'], cache['pre'], cache['gate']
        du = channel_shuffle(self.mix.backward(grad), self.channels // self.groups)
        dx = du * gate
        dgate = np.sum(du * x, axis=(2, 3), keepdims=True)
        dz = self.excite.backward(dgate * gate * (1 - gate))
        ds = self.squeeze.backward(dz * (pre > 0))
        return dx + _gap_backward(ds, x.shape[2:])


class SpatialAttention(DifferentiableBlock):
    """空间注意力：通道均值图与最大值图拼接，7×7 卷积（反射填充）后 sigmoid"""

    def __init__(self, store, name: str, kernel_size: int = 7):
        super().__init__(store, name)
        self.conv = self.add_child(Conv2d(store, f"{name}.conv", 2, 1, kernel_size))

    def forward(self, x):
        idx = np.argmax(x, axis=1)[:, None]
        stats = np.concatenate([x.mean(axis=1, keepdims=True), np.take_along_axis(x, idx, axis=1)], axis=1)
        out = expit(self.conv(stats))
        self.save_for_backward(shape=x.shape, idx=idx, out=out)
        return out

    def backward(self, grad):
        cache = self.saved()
        out, idx = cache['out'], cache['idx']
        n, c, h, w = cache['shape']
        dstats = self.conv.backward(grad * out * (1 - out))
        dx = np.repeat(dstats[:, 0:1] / c, c, axis=1)
        onehot = np.arange(c).reshape(1, c, 1, 1) == idx
        return dx + onehot * dstats[:, 1:2]


class ChannelAttention(DifferentiableBlock):
    """通道注意力：GAP → 1×1 (C→C/r) → ReLU → 1×1 (C/r→C) → sigmoid，输出 (N, C, 1, 1)"""

    def __init__(self, store, name: str, channels: int, reduction: int):
        super().__init__(store, name)
        hidden = channels // reduction
        if hidden < 1:
            raise ValidationError(f"{name}: C/r = {channels}/{reduction} < 1", field='reduction', value=reduction)
        self.channels = channels
        self.fc1 = self.add_child(Conv2d(store, f"{name}.fc1", channels, hidden, 1))
        self.fc2 = self.add_child(Conv2d(store, f"{name}.fc2", hidden, channels, 1))

    def forward(self, x):
        _check_channels(x, self.channels, self.name)
        pre = self.fc1(global_avg_pool(x))
        out = expit(self.fc2(np.maximum(pre, 0)))
        self.save_for_backward(hw=x.shape[2:], pre=pre, out=out)
        return out

    def backward(self, grad):
        cache = self.saved()
        out, pre = cache['out'], cache['pre']
        dz = self.fc2.backward(grad * out * (1 - out))
        return _gap_backward(self.fc1.backward(dz * (pre > 0)), cache['hw'])


class SelectiveChannelFusion(DifferentiableBlock):
    """
    选择性通道融合

    I_in = I_h + X_ga；由空间图与通道向量经 3×3 反射卷积得到逐像素逐通道门控 I_pa，
    输出 Conv1x1(I_pa ⊙ I_h) + (1 - I_pa) ⊙ X_ga。
    """

    def __init__(self, store, name: str, channels: int, reduction: int, spatial_kernel: int = 7):
        super().__init__(store, name)
        self.channels = channels
        self.spatial = self.add_child(SpatialAttention(store, f"{name}.spatial", spatial_kernel))
        self.channel = self.add_child(ChannelAttention(store, f"{name}.channel", channels, reduction))
        self.refine = self.add_child(Conv2d(store, f"{name}.refine", channels + 1, channels, 3))
        self.proj = self.add_child(Conv2d(store, f"{name}.proj", channels, channels, 1))

    def forward(self, i_h, x_ga):
        if i_h.shape != x_ga.shape:
            raise ShapeError(f"{self.name}: 两路特征形状不一致", i_h.shape, x_ga.shape)
        _check_channels(i_h, self.channels, self.name)
        i_in = i_h + x_ga
        sa = self.spatial(i_in)
        ca = self.channel(i_in)
        stacked = np.concatenate([sa, np.broadcast_to(ca, i_in.shape)], axis=1)
        gate = expit(self.refine(stacked))
        self.save_for_backward(i_h=i_h, x_ga=x_ga, gate=gate)
        return self.proj(gate * i_h) + (1 - gate) * x_ga

    def backward(self, grad):
        cache = self.saved()
        i_h, x_ga, gate = cache['i_h'], cache['x_ga'], cache['gate']
        dq = self.proj.backward(grad)
        d_ih = dq * gate
        d_xga = grad * (1 - gate)
        dgate = dq * i_h - grad * x_ga
        dstacked = self.refine.backward(dgate * gate * (1 - gate))
        d_in = self.spatial.backward(dstacked[:, 0:1])
        d_in = d_in + self.channel.backward(dstacked[:, 1:].sum(axis=(2, 3), keepdims=True))
        return d_ih + d_in, d_xga + d_in
