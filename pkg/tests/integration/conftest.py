# -*- coding: utf-8 -*-
"""
集成测试配置文件 - 提供命令行流程共用的fixtures

主要功能：
1. 微型模型/训练配置文件
2. 已训练的微型检查点（会话级复用）
3. 命令行调用辅助函数
"""
import json

import pytest

from src.api.cli import cli_main
from src.core.config import ModelConfig, TrainConfig
from src.services.phantom import write_phantoms
from src.services.trainer import train
from src.utils.logger_config import get_logger

logger = get_logger('integration_test_conftest')

TINY_MODEL = {'levels': 2, 'base_channels': 4, 'groups': 2, 'reduction': 2, 'lambda': 0.67,
              'highpass_sigma': 1.0, 'seed': 7}
TINY_TRAIN = {'epochs': 2, 'batch_size': 2, 'decay_window': 1, 'image_size': 16, 'save_every': 1, 'seed': 42}


def run_cli(*argv) -> int:
    """以字符串参数调用命令行主函数"""
    return cli_main([str(a) for a in argv])


@pytest.fixture
def config_files(tmp_path):
    """写出模型与训练配置 JSON，返回 (model_path, train_path)"""
    model_path = tmp_path / 'model.json'
    train_path = tmp_path / 'train.json'
    model_path.write_text(json.dumps(TINY_MODEL), encoding='utf-8')
    train_path.write_text(json.dumps(TINY_TRAIN), encoding='utf-8')
    return model_path, train_path


@pytest.fixture(scope='session')
def trained_checkpoint(tmp_path_factory):
    """在 4 张合成图上训练 2 轮得到的检查点"""
    root = tmp_path_factory.mktemp('trained')
    data = root / 'hq'
    write_phantoms(data, count=4, size=32, seed=100)
    result = train(data, ModelConfig(**TINY_MODEL), TrainConfig(**TINY_TRAIN), root / 'model.ckpt', threads=1)
    logger.info(f"集成测试检查点: {result.checkpoint}")
    return result.checkpoint
