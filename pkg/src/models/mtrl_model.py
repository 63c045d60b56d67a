# -*- coding: utf-8 -*-
"""
多尺度小波编码器 + 双路解码器的眼底增强网络

编码器：3→base 的 3×3 主干卷积，随后 L 个小波特征提取层（MFE），每层分辨率减半、通道加倍。
解码器：高频路径与结构路径同步上采样，结构路径经组注意力后与高频路径在每个尺度做
选择性通道融合；两个 3×3 + sigmoid 输出头分别给出高频图 P_h 与重建图 P_r。
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import LAMBDA_ABLATION_VALUES, REFERENCE_PARAM_BAND, REFERENCE_PARAM_COUNT, ModelConfig
from ..core.exceptions import ShapeError
from ..core.interfaces import DifferentiableBlock
from ..numerics.conv import pad2d, pad2d_backward
from ..numerics.tensor import ParamStore
from ..utils.logger_config import get_logger
from .layers import (Conv2d, DepthwiseSeparableConv, GroupAttention, SelectiveChannelFusion, Sigmoid,
                     UpsampleBlock, upsample2x, upsample2x_backward)
from .wavelet import SubBands, split_bands, wt_forward, wt_inverse

logger = get_logger(__name__)

STEM_KERNEL = 3
HEAD_KERNEL = 3


def space_to_depth(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) → (N, 4C, H/2, W/2)，按 2×2 块展开"""
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, 4 * c, h // 2, w // 2)


def depth_to_space(x: np.ndarray) -> np.ndarray:
    n, c4, h, w = x.shape
    c = c4 // 4
    return x.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, 2 * h, 2 * w)


class MFELevel(DifferentiableBlock):
    """
    单个小波特征提取层

    S = WT(X)；细节子带经深度可分离卷积细化后与全局子带拼成 X_e（跳连特征，4C 通道）；
    X_r = IWT(X_e)，X_o = X_r + DWC(X)；最后用步长 2 的深度可分离卷积下采样并把通道加倍。
    """

    def __init__(self, store, name: str, channels: int, kernel_size: int = 3):
        super().__init__(store, name)
        c = channels
        self.channels = c
        self.detail = self.add_child(DepthwiseSeparableConv(store, f"{name}.detail", 3 * c, 3 * c, kernel_size, bias=False))
        self.residual = self.add_child(DepthwiseSeparableConv(store, f"{name}.residual", c, c, kernel_size, bias=False))
        self.down = self.add_child(DepthwiseSeparableConv(store, f"{name}.down", c, 2 * c, kernel_size,
                                                          stride=2, bias=False))

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"{self.name}: 输入高宽必须为偶数", x.shape)
        bands = wt_forward(x)
        refined = self.detail(bands.details)
        skip = np.concatenate([bands.g, refined], axis=1)
        x_o = wt_inverse(split_bands(skip)) + self.residual(x)
        return self.down(x_o), skip

    def backward(self, grad):
        g_out, g_skip = grad
        c = self.channels
        d_xo = self.down.backward(g_out)
        dx = self.residual.backward(d_xo)
        d_skip = np.concatenate(list(wt_forward(d_xo)), axis=1)
        if g_skip is not None:
            d_skip = d_skip + g_skip
        d_details = self.detail.backward(d_skip[:, c:])
        d_bands = SubBands(d_skip[:, :c], d_details[:, :c], d_details[:, c:2 * c], d_details[:, 2 * c:])
        return dx + wt_inverse(d_bands)


class PlainLevel(DifferentiableBlock):
    """去掉小波分支的消融层：步长 2 的 3×3 卷积，跳连为 space-to-depth 展开"""

    def __init__(self, store, name: str, channels: int):
        super().__init__(store, name)
        self.conv = self.add_child(Conv2d(store, f"{name}.conv", channels, 2 * channels, 3, stride=2, bias=False))

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"{self.name}: 输入高宽必须为偶数", x.shape)
        return self.conv(x), space_to_depth(x)

    def backward(self, grad):
        g_out, g_skip = grad
        dx = self.conv.backward(g_out)
        if g_skip is not None:
            dx = dx + depth_to_space(g_skip)
        return dx


@dataclass
class EncoderFeatures:
    """编码器输出：每层的 X_enc 与跳连特征 X_e，以及裁剪信息"""
    outputs: List[np.ndarray]
    skips: List[np.ndarray]
    crop: Tuple[int, int]
    padded: Tuple[int, int]

    @property
    def deepest(self) -> np.ndarray:
        return self.outputs[-1]

    def __len__(self) -> int:
        return len(self.skips)


def _bottom_right_pad(h: int, w: int, multiple: int) -> Tuple[int, int, int, int]:
    return (0, (-h) % multiple, 0, (-w) % multiple)


class Encoder(DifferentiableBlock):
    """主干卷积 + L 个编码层；输入右下反射填充到 2^(L+1) 的倍数"""

    def __init__(self, store, cfg: ModelConfig, name: str = 'enc'):
        super().__init__(store, name)
        self.cfg = cfg
        b = cfg.base_channels
        self.stem = self.add_child(Conv2d(store, f"{name}.stem", 3, b, STEM_KERNEL))
        self.levels: List[DifferentiableBlock] = []
        for i in range(cfg.levels):
            c = b * 2 ** i
            level = MFELevel(store, f"{name}.{i}", c, cfg.kernel_size) if cfg.use_mfe else PlainLevel(store, f"{name}.{i}", c)
            self.levels.append(self.add_child(level))

    def forward(self, image):
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError("编码器需要 3 通道图像 (N, 3, H, W)", image.shape)
        h, w = image.shape[2:]
        pads = _bottom_right_pad(h, w, self.cfg.pad_multiple)
        x = self.stem(pad2d(image, pads, 'reflect'))
        padded = x.shape[2:]
        outputs, skips = [], []
        for level in self.levels:
            x, skip = level(x)
            outputs.append(x)
            skips.append(skip)
        self.save_for_backward(shape=(h, w), pads=pads)
        return EncoderFeatures(outputs=outputs, skips=skips, crop=(h, w), padded=tuple(padded))

    def backward(self, grad):
        d_deep, d_skips = grad
        cache = self.saved()
        g = d_deep
        for level, g_skip in zip(reversed(self.levels), reversed(list(d_skips))):
            g = level.backward((g, g_skip))
        return pad2d_backward(self.stem.backward(g), cache['pads'], 'reflect', cache['shape'])


def decoder_width(cfg: ModelConfig, i: int) -> int:
    """第 i 个解码层（0 为最浅）的输出通道数"""
    return cfg.base_channels * 2 ** (i + 1)


def decoder_input_width(cfg: ModelConfig, i: int) -> int:
    return cfg.base_channels * 2 ** min(i + 2, cfg.levels)


def skip_width(cfg: ModelConfig, i: int) -> int:
    return 4 * cfg.base_channels * 2 ** i


class DecoderLevel(DifferentiableBlock):
    """
    单尺度解码：两路同步 ×2 上采样，结构路径做组注意力，
    跳连经 1×1 投影并最近邻放大后加到高频路径，再做选择性通道融合
    """

    def __init__(self, store, name: str, cfg: ModelConfig, i: int):
        super().__init__(store, name)
        w, w_in = decoder_width(cfg, i), decoder_input_width(cfg, i)
        k = cfg.kernel_size
        self.hf_up = self.add_child(UpsampleBlock(store, f"{name}.hf_up", w_in, w, k, cfg.upsample_mode))
        self.st_up = self.add_child(UpsampleBlock(store, f"{name}.st_up", w_in, w, k, cfg.upsample_mode))
        self.skip = self.add_child(Conv2d(store, f"{name}.skip", skip_width(cfg, i), w, 1))
        self.attn = None
        if cfg.use_shd:
            self.attn = self.add_child(GroupAttention(store, f"{name}.attn", w, cfg.groups, cfg.reduction))
        self.fuse = self.add_child(SelectiveChannelFusion(store, f"{name}.fuse", w, cfg.reduction))

    def forward(self, hf, st, skip):
        i_h = self.hf_up(hf)
        x_up = self.st_up(st)
        x_ga = self.attn(x_up) if self.attn is not None else x_up
        projected = upsample2x(self.skip(skip), 'nearest')
        if projected.shape != i_h.shape:
            raise ShapeError(f"{self.name}: 跳连与高频路径形状不一致", projected.shape, i_h.shape)
        i_h = i_h + projected
        return i_h, self.fuse(i_h, x_ga)

    def backward(self, grad):
        d_hf, d_st = grad
        d_ih, d_xga = self.fuse.backward(d_st)
        d_ih = d_ih + d_hf
        d_skip = self.skip.backward(upsample2x_backward(d_ih, 'nearest'))
        d_xup = self.attn.backward(d_xga) if self.attn is not None else d_xga
        return self.hf_up.backward(d_ih), self.st_up.backward(d_xup), d_skip


class Decoder(DifferentiableBlock):
    """
    双路解码器

    forward(deepest, *skips) 返回填充尺寸下的 (P_h, P_r)；裁剪由模型完成。
    """

    def __init__(self, store, cfg: ModelConfig, name: str = 'dec'):
        super().__init__(store, name)
        self.cfg = cfg
        # 由深到浅
        self.levels = [self.add_child(DecoderLevel(store, f"{name}.{i}", cfg, i))
                       for i in reversed(range(cfg.levels))]
        w0 = decoder_width(cfg, 0)
        self.head_hf = self.add_child(Conv2d(store, 'head.hf', w0, 3, HEAD_KERNEL))
        self.head_rec = self.add_child(Conv2d(store, 'head.rec', w0, 3, HEAD_KERNEL))
        self.act_hf = self.add_child(Sigmoid(store, 'head.hf_act'))
        self.act_rec = self.add_child(Sigmoid(store, 'head.rec_act'))

    def forward(self, deepest, *skips):
        if len(skips) != self.cfg.levels:
            raise ShapeError(f"解码器需要 {self.cfg.levels} 个跳连特征，实际为 {len(skips)} 个")
        hf = st = deepest
        for level, skip in zip(self.levels, reversed(skips)):
            hf, st = level(hf, st, skip)
        return self.act_hf(self.head_hf(hf)), self.act_rec(self.head_rec(st))

    def backward(self, grad):
        d_ph, d_pr = grad
        d_hf = self.head_hf.backward(self.act_hf.backward(d_ph))
        d_st = self.head_rec.backward(self.act_rec.backward(d_pr))
        d_skips = []
        for level in reversed(self.levels):
            d_hf, d_st, d_skip = level.backward((d_hf, d_st))
            d_skips.append(d_skip)
        return (d_hf + d_st, *d_skips)


class MTRLModel(DifferentiableBlock):
    """
    完整增强网络

    Args:
        cfg: 模型配置
        store: 参数仓库，缺省时按 cfg.seed 新建
        dtype: 新建参数仓库时的精度
    """

    def __init__(self, cfg: ModelConfig, store: Optional[ParamStore] = None, dtype=np.float32):
        super().__init__(store if store is not None else ParamStore(seed=cfg.seed, dtype=dtype), '')
        self.cfg = cfg
        self.encoder = self.add_child(Encoder(self.store, cfg))
        self.decoder = self.add_child(Decoder(self.store, cfg))
        logger.debug(f"模型构建完成: L={cfg.levels}, base={cfg.base_channels}, 参数量={self.num_parameters()}")

    def encode(self, image: np.ndarray) -> EncoderFeatures:
        return self.encoder(image)

    def decode(self, features: EncoderFeatures) -> Tuple[np.ndarray, np.ndarray]:
        p_h, p_r = self.decoder(features.deepest, *features.skips)
        h, w = features.crop
        self.save_for_backward(crop=(h, w), padded=p_h.shape)
        return p_h[:, :, :h, :w], p_r[:, :, :h, :w]

    def forward(self, image):
        """返回 (P_h, P_r)，与输入同尺寸；交付给用户的增强结果是 P_r"""
        return self.decode(self.encode(image))

    def enhance(self, image: np.ndarray) -> np.ndarray:
        return self.forward(image)[1]

    def backward(self, grad):
        d_ph, d_pr = grad
        cache = self.saved()
        h, w = cache['crop']

        def uncrop(g):
            full = np.zeros(cache['padded'], dtype=g.dtype)
            full[:, :, :h, :w] = g
            return full

        d_deep, *d_skips = self.decoder.backward((uncrop(d_ph), uncrop(d_pr)))
        return self.encoder.backward((d_deep, d_skips))


# ---------------------------------------------------------------------------
# 参数量（闭式）
# ---------------------------------------------------------------------------

def _conv_params(cin: int, cout: int, k: int, groups: int = 1, bias: bool = True) -> int:
    return cout * (cin // groups) * k * k + (cout if bias else 0)


def _dsconv_params(cin: int, cout: int, k: int, bias: bool = True) -> int:
    return _conv_params(cin, cin, k, groups=cin, bias=False) + _conv_params(cin, cout, 1, bias=bias)


def param_count(cfg: ModelConfig) -> int:
    """按模块形状公式计算参数总数，与构建出的 ParamStore 逐项一致"""
    b, k = cfg.base_channels, cfg.kernel_size
    total = _conv_params(3, b, STEM_KERNEL)
    for i in range(cfg.levels):
        c = b * 2 ** i
        if cfg.use_mfe:
            total += (_dsconv_params(3 * c, 3 * c, k, bias=False) + _dsconv_params(c, c, k, bias=False)
                      + _dsconv_params(c, 2 * c, k, bias=False))
        else:
            total += _conv_params(c, 2 * c, 3, bias=False)

    for i in range(cfg.levels):
        w, w_in = decoder_width(cfg, i), decoder_input_width(cfg, i)
        total += 2 * _dsconv_params(w_in, w, k)
        total += _conv_params(skip_width(cfg, i), w, 1)
        if cfg.use_shd:
            g = cfg.groups
            hidden = g * max(1, (w // g) // cfg.reduction)
            total += _conv_params(w, hidden, 1, groups=g) + _conv_params(hidden, w, 1, groups=g) + _conv_params(w, w, 1)
        r = w // cfg.reduction
        total += (_conv_params(2, 1, 7) + _conv_params(w, r, 1) + _conv_params(r, w, 1)
                  + _conv_params(w + 1, w, 3) + _conv_params(w, w, 1))

    total += 2 * _conv_params(decoder_width(cfg, 0), 3, HEAD_KERNEL)
    return total


def param_budget(cfg: ModelConfig) -> Dict[str, object]:
    """参数预算报告：与参考规模 6.95M 的对比及验收区间"""
    count = param_count(cfg)
    low, high = REFERENCE_PARAM_BAND
    return {
        'param_count': count,
        'reference_count': REFERENCE_PARAM_COUNT,
        'band': [low, high],
        'in_band': bool(low <= count <= high),
        'ratio_to_reference': count / REFERENCE_PARAM_COUNT,
        'caveat': '参考结构无法从公开描述完全推导，本实现为结构重建，因此采用宽容差区间',
    }


def ablation_variants(cfg: ModelConfig) -> Dict[str, ModelConfig]:
    """模块消融的四种配置：完整 / 去 SHD / 去 MFE / 两者都去"""
    return {
        'full': cfg.model_copy(update={'use_mfe': True, 'use_shd': True}),
        'no_shd': cfg.model_copy(update={'use_mfe': True, 'use_shd': False}),
        'no_mfe': cfg.model_copy(update={'use_mfe': False, 'use_shd': True}),
        'plain': cfg.model_copy(update={'use_mfe': False, 'use_shd': False}),
    }


def lambda_ablation_values() -> Tuple[float, ...]:
    """损失权重 λ 的消融取值"""
    return LAMBDA_ABLATION_VALUES
