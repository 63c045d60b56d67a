# -*- coding: utf-8 -*-
"""
测试配置文件 - 提供测试fixtures和工具函数

主要功能：
1. 固定种子的随机数生成器
2. 玩具规模 / 微型模型配置
3. 合成眼底图像目录
4. 双精度参数仓库（梯度检验用）
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.core.config import ModelConfig, TrainConfig
from src.numerics.tensor import ParamStore
from src.services.phantom import make_phantom, write_phantoms
from src.utils.logger_config import get_logger

logger = get_logger('test_conftest')

# 梯度检验统一使用双精度五点差分，相对误差上限 1e-6；
# 梯度绝对值低于 GRAD_FLOOR 时等价于绝对误差 GRAD_TOL·GRAD_FLOOR
GRAD_EPS = 2e-5
GRAD_FLOOR = 1e-2
GRAD_TOL = 1e-6
GRAD_ORDER = 4
GRAD_KINK_TOL = 1e-6


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """测试默认单线程，保证结果可复现"""
    monkeypatch.setenv('MTRL_THREADS', '1')


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def toy_config():
    """桌面规模模型配置：L=3, base=8, G=4, r=4"""
    return ModelConfig.toy()


@pytest.fixture
def tiny_config():
    """梯度检验与快速训练用的微型配置"""
    return ModelConfig(levels=2, base_channels=4, groups=2, reduction=2, highpass_sigma=1.0, seed=7)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=2, batch_size=2, decay_window=1, image_size=16, save_every=1, seed=42)


@pytest.fixture
def store64():
    """双精度参数仓库"""
    return ParamStore(seed=3, dtype=np.float64)


@pytest.fixture
def phantom():
    """一张 32×32 的合成眼底图"""
    return make_phantom(seed=5, size=32)


@pytest.fixture
def image_dir(tmp_path):
    """包含 4 张 32×32 合成眼底图的目录"""
    directory = tmp_path / 'hq'
    write_phantoms(directory, count=4, size=32, seed=100)
    return directory
