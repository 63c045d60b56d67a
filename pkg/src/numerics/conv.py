# -*- coding: utf-8 -*-
"""
二维互相关卷积及其反向传播

- 前向：im2col（sliding_window_view）+ tensordot；逐通道卷积走 einsum 快速路径
- 反向：按卷积核偏移 (i, j) 做 col2im 累加，结果与线程数无关
- 反射填充为"镜像不重复边缘"（numpy.pad 的 reflect 模式），其反向用索引映射矩阵完成
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.exceptions import ShapeError, ValidationError

PAD_MODES = ('zero', 'reflect')

Pads = Tuple[int, int, int, int]  # (上, 下, 左, 右)


def _as_pads(padding) -> Pads:
    if isinstance(padding, (int, np.integer)):
        p = int(padding)
        return (p, p, p, p)
    pads = tuple(int(p) for p in padding)
    if len(pads) != 4:
        raise ValidationError("padding 必须为整数或 (上, 下, 左, 右)", field='padding', value=padding)
    return pads


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    """反射填充后每个位置对应的原始下标"""
    return np.pad(np.arange(n), (before, after), mode='reflect')


def _scatter_matrix(n: int, before: int, after: int, dtype) -> np.ndarray:
    """(n, n+before+after) 的 0/1 矩阵，把填充后的梯度归并回原始位置"""
    idx = _reflect_index(n, before, after)
    m = np.zeros((n, idx.size), dtype=dtype)
    m[idx, np.arange(idx.size)] = 1
    return m


def pad2d(x: np.ndarray, padding, mode: str = 'zero') -> np.ndarray:
    """对 (N, C, H, W) 的空间维做填充"""
    top, bottom, left, right = _as_pads(padding)
    if not (top or bottom or left or right):
        return x
    widths = ((0, 0), (0, 0), (top, bottom), (left, right))
    if mode == 'zero':
        return np.pad(x, widths, mode='constant')
    if mode == 'reflect':
        if x.shape[2] < 2 and (top or bottom) or x.shape[3] < 2 and (left or right):
            raise ShapeError("反射填充要求被填充维度至少为 2", x.shape)
        return np.pad(x, widths, mode='reflect')
    raise ValidationError(f"未知的填充模式: {mode}", field='pad_mode', value=mode)


def pad2d_backward(grad: np.ndarray, padding, mode: str, input_hw: Tuple[int, int]) -> np.ndarray:
    """pad2d 的伴随：把填充区域的梯度归并回原始像素"""
    top, bottom, left, right = _as_pads(padding)
    if not (top or bottom or left or right):
        return grad
    h, w = input_hw
    if mode == 'zero':
        return grad[:, :, top:top + h, left:left + w]
    mh = _scatter_matrix(h, top, bottom, grad.dtype)
    mw = _scatter_matrix(w, left, right, grad.dtype)
    return np.matmul(np.matmul(mh, grad), mw.T)


def conv_output_size(size: int, k: int, stride: int, pad_before: int, pad_after: int) -> int:
    return (size + pad_before + pad_after - k) // stride + 1


def _check_conv(x: np.ndarray, weight: np.ndarray, stride: int, groups: int) -> None:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d 需要 4 维输入和 4 维卷积核", x.shape, weight.shape)
    cin = x.shape[1]
    cout, cin_g, kh, kw = weight.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeError(f"通道数不能被 groups={groups} 整除", x.shape, weight.shape)
    if cin_g != cin // groups:
        raise ShapeError(f"卷积核输入通道应为 {cin // groups}", x.shape, weight.shape)
    if stride < 1:
        raise ValidationError(f"stride 必须 ≥ 1，当前为 {stride}", field='stride', value=stride)


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """im2col 视图 (N, C, Ho, Wo, kh, kw)，不复制数据"""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, :(ho - 1) * stride + 1:stride, :(wo - 1) * stride + 1:stride]


def _is_depthwise(cin: int, weight: np.ndarray, groups: int) -> bool:
    return groups == cin and weight.shape[1] == 1 and groups > 1


def conv2d(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None, stride: int = 1,
           padding=0, pad_mode: str = 'zero', groups: int = 1) -> np.ndarray:
    """
    二维互相关（不翻转卷积核）

    Args:
        x: 输入 (N, Cin, H, W)
        weight: 卷积核 (Cout, Cin/groups, kH, kW)
        bias: 偏置 (Cout,)，可选
        stride: 步长
        padding: 填充宽度，整数或 (上, 下, 左, 右)
        pad_mode: 'zero' 或 'reflect'
        groups: 分组数

    Returns:
        np.ndarray: (N, Cout, Ho, Wo)，Ho = floor((H + 2p - kH) / stride) + 1
    """
    _check_conv(x, weight, stride, groups)
    pads = _as_pads(padding)
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    ho = conv_output_size(h, kh, stride, pads[0], pads[1])
    wo = conv_output_size(w, kw, stride, pads[2], pads[3])
    if ho < 1 or wo < 1:
        raise ShapeError("卷积输出尺寸为空", x.shape, weight.shape)

    win = _windows(pad2d(x, pads, pad_mode), kh, kw, stride, ho, wo)

    if groups == 1:
        y = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    elif _is_depthwise(cin, weight, groups):
        m = cout // cin
        y = np.einsum('nchwij,cmij->ncmhw', win, weight.reshape(cin, m, kh, kw)).reshape(n, cout, ho, wo)
    else:
        og = cout // groups
        parts = []
        for g in range(groups):
            wg = weight[g * og:(g + 1) * og]
            xg = win[:, g * cin_g:(g + 1) * cin_g]
            parts.append(np.tensordot(xg, wg, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
        y = np.concatenate(parts, axis=1)

    y = np.ascontiguousarray(y, dtype=x.dtype)
    if bias is not None:
        y += bias.reshape(1, -1, 1, 1)
    return y


def _input_grad_padded(grad: np.ndarray, weight: np.ndarray, stride: int, groups: int,
                       padded_hw: Tuple[int, int]) -> np.ndarray:
    """对填充后输入的梯度（col2im）"""
    n, cout, ho, wo = grad.shape
    _, cin_g, kh, kw = weight.shape
    cin = cin_g * groups
    hp, wp = padded_hw
    dxp = np.zeros((n, cin, hp, wp), dtype=grad.dtype)
    rows = (ho - 1) * stride + 1
    cols = (wo - 1) * stride + 1

    if groups == 1:
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(grad, weight[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                dxp[:, :, i:i + rows:stride, j:j + cols:stride] += contrib
    elif cin_g == 1 and groups == cin:
        m = cout // cin
        gr = grad.reshape(n, cin, m, ho, wo)
        wr = weight.reshape(cin, m, kh, kw)
        for i in range(kh):
            for j in range(kw):
                contrib = np.einsum('ncmhw,cm->nchw', gr, wr[:, :, i, j])
                dxp[:, :, i:i + rows:stride, j:j + cols:stride] += contrib
    else:
        og = cout // groups
        for g in range(groups):
            gg = grad[:, g * og:(g + 1) * og]
            wg = weight[g * og:(g + 1) * og]
            sl = slice(g * cin_g, (g + 1) * cin_g)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(gg, wg[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                    dxp[:, sl, i:i + rows:stride, j:j + cols:stride] += contrib
    return dxp


def conv2d_backward(grad: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int = 1, padding=0,
                    pad_mode: str = 'zero', groups: int = 1, need_input_grad: bool = True
                    ) -> Tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
    """
    conv2d 的反向传播

    Returns:
        (dx, dweight, dbias)；need_input_grad=False 时 dx 为 None
    """
    pads = _as_pads(padding)
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    _, _, ho, wo = grad.shape
    xp = pad2d(x, pads, pad_mode)
    win = _windows(xp, kh, kw, stride, ho, wo)

    if groups == 1:
        dw = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
    elif _is_depthwise(cin, weight, groups):
        m = cout // cin
        dw = np.einsum('ncmhw,nchwij->cmij', grad.reshape(n, cin, m, ho, wo), win).reshape(weight.shape)
    else:
        og = cout // groups
        dw = np.concatenate([
            np.tensordot(grad[:, g * og:(g + 1) * og], win[:, g * cin_g:(g + 1) * cin_g],
                         axes=([0, 2, 3], [0, 2, 3]))
            for g in range(groups)
        ], axis=0)
    dw = dw.astype(weight.dtype, copy=False)
    db = grad.sum(axis=(0, 2, 3))

    dx = None
    if need_input_grad:
        dxp = _input_grad_padded(grad, weight, stride, groups, xp.shape[2:])
        dx = pad2d_backward(dxp, pads, pad_mode, (h, w))
    return dx, dw, db


def conv_transpose2d(y: np.ndarray, weight: np.ndarray, stride: int = 1, groups: int = 1) -> np.ndarray:
    """
    转置卷积：无填充 conv2d 关于输入的伴随算子

    输出尺寸 (H - 1) * stride + kH，卷积核形状与对应的 conv2d 相同 (Cout, Cin/groups, kH, kW)。
    """
    if y.ndim != 4 or weight.ndim != 4 or y.shape[1] != weight.shape[0]:
        raise ShapeError("转置卷积的输入通道与卷积核输出通道不一致", y.shape, weight.shape)
    _, _, kh, kw = weight.shape
    hp = (y.shape[2] - 1) * stride + kh
    wp = (y.shape[3] - 1) * stride + kw
    return _input_grad_padded(y, weight, stride, groups, (hp, wp))
