# -*- coding: utf-8 -*-
"""
可学习模块单元测试

测试覆盖：
1. 深度可分离卷积与上采样模块
2. 通道混洗
3. 组注意力、空间/通道注意力
4. 选择性通道融合
5. 各模块的有限差分梯度检验
"""
import itertools

import numpy as np
import pytest

from src.core.exceptions import ShapeError, ValidationError
from src.models.layers import (ChannelAttention, DepthwiseSeparableConv, GroupAttention, SelectiveChannelFusion,
                               SpatialAttention, UpsampleBlock, channel_shuffle, upsample2x)
from src.numerics.gradcheck import grad_check
from src.numerics.tensor import ParamStore
from tests.conftest import GRAD_EPS, GRAD_FLOOR, GRAD_KINK_TOL, GRAD_ORDER, GRAD_TOL


def impulse(channels, k=3, dtype=np.float64):
    w = np.zeros((channels, 1, k, k), dtype=dtype)
    w[:, 0, k // 2, k // 2] = 1.0
    return w


def identity_1x1(channels, dtype=np.float64):
    return np.eye(channels, dtype=dtype).reshape(channels, channels, 1, 1)


def check(block, inputs, **kwargs):
    return grad_check(block, inputs, eps=GRAD_EPS, abs_floor=GRAD_FLOOR, order=GRAD_ORDER, kink_tol=GRAD_KINK_TOL,
                      **kwargs)


class TestDepthwiseSeparableConv:
    """测试深度可分离卷积"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_identity_factorization(self, rng):
        store = ParamStore(dtype=np.float32)
        dwc = DepthwiseSeparableConv(store, 'dwc', 3, 3)
        store['dwc.depthwise.weight'] = impulse(3, dtype=np.float32)
        store['dwc.pointwise.weight'] = identity_1x1(3, np.float32)
        x = rng.random((1, 3, 6, 7)).astype(np.float32)
        np.testing.assert_allclose(dwc(x), x, atol=1e-7)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_channel_sum(self, rng, store64):
        dwc = DepthwiseSeparableConv(store64, 'dwc', 2, 1)
        store64['dwc.depthwise.weight'] = impulse(2)
        store64['dwc.pointwise.weight'] = np.ones((1, 2, 1, 1))
        x = rng.random((1, 2, 5, 5))
        np.testing.assert_allclose(dwc(x), x.sum(axis=1, keepdims=True), atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_parameter_shapes(self):
        store = ParamStore()
        DepthwiseSeparableConv(store, 'dwc', 4, 6, kernel_size=5)
        assert store['dwc.depthwise.weight'].shape == (4, 1, 5, 5)
        assert store['dwc.pointwise.weight'].shape == (6, 4, 1, 1)
        assert store['dwc.pointwise.bias'].shape == (6,)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_channel_mismatch(self, rng):
        dwc = DepthwiseSeparableConv(ParamStore(), 'dwc', 3, 3)
        with pytest.raises(ShapeError):
            dwc(rng.random((1, 2, 4, 4)))

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_even_kernel_rejected(self):
        with pytest.raises(ValidationError):
            DepthwiseSeparableConv(ParamStore(), 'dwc', 3, 3, kernel_size=4)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check(self, rng, store64):
        dwc = DepthwiseSeparableConv(store64, 'dwc', 4, 4)
        assert check(dwc, rng.standard_normal((1, 4, 8, 8))) <= GRAD_TOL

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check_strided(self, rng, store64):
        dwc = DepthwiseSeparableConv(store64, 'down', 3, 6, stride=2, bias=False)
        assert check(dwc, rng.standard_normal((1, 3, 8, 8))) <= GRAD_TOL


class TestChannelShuffle:
    """测试通道混洗"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_single_group_identity(self, rng):
        x = rng.random((1, 6, 2, 2))
        np.testing.assert_array_equal(channel_shuffle(x, 1), x)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_four_channels_two_groups(self):
        x = np.arange(4, dtype=np.float64).reshape(1, 4, 1, 1)
        assert channel_shuffle(x, 2).reshape(-1).tolist() == [0.0, 2.0, 1.0, 3.0]

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_inverse_permutation(self):
        """以 G 混洗后再以 C/G 混洗还原（C ≤ 12 穷举）"""
        for c in range(1, 13):
            x = np.arange(c, dtype=np.float64).reshape(1, c, 1, 1)
            for g in range(1, c + 1):
                if c % g:
                    continue
                np.testing.assert_array_equal(channel_shuffle(channel_shuffle(x, g), c // g), x)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_indivisible(self):
        with pytest.raises(ShapeError):
            channel_shuffle(np.zeros((1, 6, 1, 1)), 4)


class TestGroupAttention:
    """测试组注意力"""

    def _zero_gate(self, store, name, channels):
        for part in ('squeeze', 'excite'):
            store[f'{name}.{part}.weight'] = np.zeros_like(store[f'{name}.{part}.weight'])
            store[f'{name}.{part}.bias'] = np.zeros_like(store[f'{name}.{part}.bias'])
        store[f'{name}.mix.weight'] = identity_1x1(channels)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_zero_gate_halves_input(self, rng, store64):
        ga = GroupAttention(store64, 'ga', 8, 2, 2)
        self._zero_gate(store64, 'ga', 8)
        x = rng.standard_normal((1, 8, 4, 4))
        np.testing.assert_allclose(ga(x), channel_shuffle(0.5 * x, 2), atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_saturated_gate_passes_input(self, rng, store64):
        ga = GroupAttention(store64, 'ga', 8, 4, 1)
        self._zero_gate(store64, 'ga', 8)
        store64['ga.excite.bias'] = np.full(8, 50.0)
        x = rng.standard_normal((2, 8, 3, 3))
        np.testing.assert_allclose(ga(x), channel_shuffle(x, 4), atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_shape_preserved(self, rng):
        ga = GroupAttention(ParamStore(), 'ga', 16, 4, 4)
        x = rng.random((2, 16, 5, 7)).astype(np.float32)
        assert ga(x).shape == x.shape

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_indivisible_channels(self):
        with pytest.raises(ShapeError):
            GroupAttention(ParamStore(), 'ga', 6, 4, 1)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_hidden_width_clamped(self):
        """C/(G·r) < 1 时瓶颈宽度取 1"""
        ga = GroupAttention(ParamStore(), 'ga', 8, 4, 4)
        assert ga.hidden == 1

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check(self, rng, store64):
        ga = GroupAttention(store64, 'ga', 8, 2, 2)
        assert check(ga, rng.standard_normal((1, 8, 4, 4))) <= GRAD_TOL


class TestSpatialAttention:
    """测试空间注意力"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_zero_weights(self, rng, store64):
        sa = SpatialAttention(store64, 'sa')
        store64['sa.conv.weight'] = np.zeros_like(store64['sa.conv.weight'])
        out = sa(rng.standard_normal((1, 4, 8, 8)))
        assert out.shape == (1, 1, 8, 8)
        np.testing.assert_allclose(out, 0.5)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_constant_input_uniform_map(self, store64):
        sa = SpatialAttention(store64, 'sa')
        out = sa(np.full((1, 3, 9, 9), 0.4))
        np.testing.assert_allclose(out, out[0, 0, 0, 0], atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check(self, rng, store64):
        sa = SpatialAttention(store64, 'sa')
        assert check(sa, rng.standard_normal((1, 4, 6, 6))) <= GRAD_TOL


class TestChannelAttention:
    """测试通道注意力"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_zero_weights(self, rng, store64):
        ca = ChannelAttention(store64, 'ca', 8, 4)
        for name in store64.names():
            store64[name] = np.zeros_like(store64[name])
        out = ca(rng.standard_normal((2, 8, 5, 5)))
        assert out.shape == (2, 8, 1, 1)
        np.testing.assert_allclose(out, 0.5)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_values_in_open_interval(self, rng):
        out = ChannelAttention(ParamStore(), 'ca', 8, 2)(rng.standard_normal((1, 8, 4, 4)).astype(np.float32))
        assert np.all((out > 0) & (out < 1))

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_bottleneck_too_narrow(self):
        with pytest.raises(ValidationError):
            ChannelAttention(ParamStore(), 'ca', 4, 8)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check(self, rng, store64):
        ca = ChannelAttention(store64, 'ca', 8, 2)
        assert check(ca, rng.standard_normal((1, 8, 4, 4))) <= GRAD_TOL


class TestSelectiveChannelFusion:
    """测试选择性通道融合"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_closed_gate_returns_structure(self, rng, store64):
        scf = SelectiveChannelFusion(store64, 'scf', 4, 2)
        store64['scf.refine.weight'] = np.zeros_like(store64['scf.refine.weight'])
        store64['scf.refine.bias'] = np.full(4, -50.0)
        i_h = rng.standard_normal((1, 4, 6, 6))
        x_ga = rng.standard_normal((1, 4, 6, 6))
        np.testing.assert_allclose(scf(i_h, x_ga), x_ga, atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_open_gate_returns_high_frequency(self, rng, store64):
        scf = SelectiveChannelFusion(store64, 'scf', 4, 2)
        store64['scf.refine.weight'] = np.zeros_like(store64['scf.refine.weight'])
        store64['scf.refine.bias'] = np.full(4, 50.0)
        store64['scf.proj.weight'] = identity_1x1(4)
        i_h = rng.standard_normal((1, 4, 6, 6))
        x_ga = rng.standard_normal((1, 4, 6, 6))
        np.testing.assert_allclose(scf(i_h, x_ga), i_h, atol=1e-12)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_shape_mismatch(self, rng, store64):
        scf = SelectiveChannelFusion(store64, 'scf', 4, 2)
        with pytest.raises(ShapeError):
            scf(rng.standard_normal((1, 4, 6, 6)), rng.standard_normal((1, 4, 6, 4)))

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_grad_check_both_inputs(self, rng, store64):
        scf = SelectiveChannelFusion(store64, 'scf', 4, 2)
        inputs = (rng.standard_normal((1, 4, 6, 6)), rng.standard_normal((1, 4, 6, 6)))
        assert check(scf, inputs) <= GRAD_TOL


class TestUpsampleBlock:
    """测试上采样模块"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_nearest_of_single_pixel(self, store64):
        up = UpsampleBlock(store64, 'up', 1, 1)
        store64['up.dwc.depthwise.weight'] = impulse(1)
        store64['up.dwc.pointwise.weight'] = identity_1x1(1)
        out = up(np.full((1, 1, 1, 1), 0.7))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(out, 0.7)

    @pytest.mark.unit
    @pytest.mark.blocks
    @pytest.mark.parametrize('mode', ['nearest', 'bilinear'])
    def test_upsample_of_constant(self, mode):
        out = upsample2x(np.full((1, 2, 3, 5), 0.25), mode)
        assert out.shape == (1, 2, 6, 10)
        np.testing.assert_allclose(out, 0.25)

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_unknown_mode(self, store64):
        with pytest.raises(ValidationError):
            UpsampleBlock(store64, 'up', 2, 2, mode='cubic')

    @pytest.mark.unit
    @pytest.mark.blocks
    @pytest.mark.parametrize('mode', ['nearest', 'bilinear'])
    def test_grad_check(self, rng, store64, mode):
        up = UpsampleBlock(store64, 'up', 4, 2, mode=mode)
        assert check(up, rng.standard_normal((1, 4, 3, 4))) <= GRAD_TOL


class TestBlockDeterminism:
    """同一种子的参数初始化与前向逐比特一致"""

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_same_seed_same_output(self, rng):
        x = rng.random((1, 8, 6, 6)).astype(np.float32)
        outputs = []
        for _ in range(2):
            store = ParamStore(seed=9)
            outputs.append(GroupAttention(store, 'ga', 8, 2, 2)(x).tobytes())
        assert outputs[0] == outputs[1]

    @pytest.mark.unit
    @pytest.mark.blocks
    def test_parameter_names_are_paths(self):
        store = ParamStore()
        SelectiveChannelFusion(store, 'dec.0.fuse', 8, 4)
        expected = {'dec.0.fuse.spatial.conv', 'dec.0.fuse.channel.fc1', 'dec.0.fuse.channel.fc2',
                    'dec.0.fuse.refine', 'dec.0.fuse.proj'}
        prefixes = {name.rsplit('.', 1)[0] for name in store.names()}
        assert prefixes == expected
        assert all(a < b for a, b in itertools.pairwise(store.names()))
