# -*- coding: utf-8 -*-
"""
集中配置管理系统

模型/训练配置使用 pydantic 校验并以 UTF-8 JSON 存储；
运行时配置（线程数、日志级别、环境）从环境变量与 .env 文件读取。
"""
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from .exceptions import ConfigurationError
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

# λ 消融扫描的取值（L_h:L_r = 3:1, 2:1, 1:1, 1:2, 1:3）
LAMBDA_ABLATION_VALUES: Tuple[float, ...] = (0.75, 0.67, 0.50, 0.33, 0.25)

# 参考规模配置（L=4, base=32）的参数量验收区间
REFERENCE_PARAM_BAND: Tuple[float, float] = (5.5e6, 8.5e6)
REFERENCE_PARAM_COUNT = 6.95e6


class ModelConfig(BaseModel):
    """模型结构配置，完全决定参数形状"""

    model_config = ConfigDict(extra='forbid', frozen=True, populate_by_name=True)

    levels: int = Field(3, ge=1, description="编码层数 L")
    base_channels: int = Field(8, ge=1, description="基础通道数")
    groups: int = Field(4, ge=1, description="组注意力分组数 G")
    reduction: int = Field(4, ge=1, description="注意力瓶颈压缩比 r")
    loss_lambda: float = Field(0.67, alias='lambda', description="高频损失权重 λ")
    highpass_sigma: float = Field(2.0, gt=0, description="高斯高通 σ")
    upsample_mode: Literal['nearest', 'bilinear'] = 'nearest'
    kernel_size: int = Field(3, ge=1, description="深度可分离卷积核大小")
    use_mfe: bool = True
    use_shd: bool = True
    seed: int = 42

    @field_validator('loss_lambda')
    @classmethod
    def _check_lambda(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"λ 必须位于 [0, 1]，当前为 {value}")
        return value

    @field_validator('kernel_size')
    @classmethod
    def _check_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"卷积核大小必须为奇数，当前为 {value}")
        return value

    @model_validator(mode='after')
    def _check_widths(self) -> 'ModelConfig':
        if self.base_channels % self.groups != 0:
            raise ValueError(f"base_channels={self.base_channels} 不能被 groups={self.groups} 整除")
        # 解码器最窄一层为 2*base
        if (2 * self.base_channels) // self.reduction < 1:
            raise ValueError(f"reduction={self.reduction} 对 base_channels={self.base_channels} 过大")
        return self

    @property
    def pad_multiple(self) -> int:
        """输入尺寸需补齐到的倍数 2^(L+1)"""
        return 2 ** (self.levels + 1)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True)

    @classmethod
    def toy(cls, **overrides) -> 'ModelConfig':
        """桌面规模配置：L=3, base=8, G=4, r=4"""
        return cls(**{'levels': 3, 'base_channels': 8, 'groups': 4, 'reduction': 4, **overrides})

    @classmethod
    def reference_scale(cls, **overrides) -> 'ModelConfig':
        """参考规模配置：L=4, base=32"""
        return cls(**{'levels': 4, 'base_channels': 32, 'groups': 4, 'reduction': 4, **overrides})


class TrainConfig(BaseModel):
    """训练配置（AdamW + 线性衰减）"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    epochs: int = Field(100, ge=1)
    batch_size: int = Field(16, ge=1)
    lr0: float = Field(2e-4, ge=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    weight_decay: float = Field(1e-4, ge=0)
    decay_window: int = Field(50, ge=1)
    seed: int = 42
    image_size: int = Field(512, ge=8)
    save_every: int = Field(10, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    degradation: Union[str, Dict[str, Any]] = 'random'

    @model_validator(mode='after')
    def _check_window(self) -> 'TrainConfig':
        if self.decay_window > self.epochs:
            raise ValueError(f"decay_window={self.decay_window} 不能大于 epochs={self.epochs}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump()

    @classmethod
    def toy(cls, **overrides) -> 'TrainConfig':
        """桌面规模训练：64 像素，100 轮，最后 50 轮衰减"""
        return cls(**{'image_size': 64, 'batch_size': 4, 'epochs': 100, 'decay_window': 50, **overrides})


@dataclass
class RuntimeSettings:
    """运行时配置"""
    environment: str = "development"
    threads: int = 1
    log_level: str = "INFO"
    file_logging: bool = False

    def __post_init__(self):
        load_dotenv()
        self.environment = os.environ.get('MTRL_ENV', self.environment)
        self.log_level = os.environ.get('LOG_LEVEL', self.log_level).upper()
        self.file_logging = os.environ.get('ENABLE_FILE_LOGGING', '').lower() == 'true'
        try:
            self.threads = max(1, int(os.environ.get('MTRL_THREADS', self.threads)))
        except ValueError:
            raise ConfigurationError("MTRL_THREADS 必须为正整数", config_key='MTRL_THREADS')


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    """读取 UTF-8 JSON 配置文件"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"配置文件不存在: {path}", config_key=str(path))
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"配置文件不是合法的JSON {path}: {e}", config_key=str(path))
    if not isinstance(data, dict):
        raise ConfigurationError(f"配置文件顶层必须是对象: {path}", config_key=str(path))
    return data


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    """分节文件取对应节，扁平文件原样返回"""
    if name in data and isinstance(data[name], dict):
        return data[name]
    return data


def load_model_config(path: Union[str, Path]) -> ModelConfig:
    """从JSON文件加载模型配置（支持扁平或带 "model" 节的文件）"""
    data = _section(_read_json(path), 'model')
    try:
        return ModelConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigurationError(f"模型配置无效 {path}: {e}", config_key='model')


def load_train_config(path: Union[str, Path]) -> TrainConfig:
    """从JSON文件加载训练配置（支持扁平或带 "train" 节的文件）"""
    data = _section(_read_json(path), 'train')
    try:
        return TrainConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigurationError(f"训练配置无效 {path}: {e}", config_key='train')


class ConfigService:
    """配置服务：按环境加载 config/<env>.json"""

    def __init__(self, config_file: Optional[str] = None):
        self.runtime = RuntimeSettings()
        self.config_file = config_file
        self.sections: Dict[str, Dict[str, Any]] = {}
        self._load_config()

    def _load_config(self):
        """加载配置"""
        if not self.config_file:
            env_config_file = Path(__file__).resolve().parents[2] / 'config' / f'{self.runtime.environment}.json'
            if env_config_file.exists():
                self.config_file = str(env_config_file)

        if self.config_file:
            self.sections = _read_json(self.config_file)

        logger.debug(f"配置加载完成，环境: {self.runtime.environment}, 配置文件: {self.config_file or 'None'}")

    @property
    def model(self) -> ModelConfig:
        try:
            return ModelConfig.model_validate(self.sections.get('model', {}))
        except PydanticValidationError as e:
            raise ConfigurationError(f"模型配置无效: {e}", config_key='model')

    @property
    def train(self) -> TrainConfig:
        try:
            return TrainConfig.model_validate(self.sections.get('train', {}))
        except PydanticValidationError as e:
            raise ConfigurationError(f"训练配置无效: {e}", config_key='train')

    def get(self, key: str, default: Any = None) -> Any:
        """获取配置值，支持 "model.levels" 形式的点号路径"""
        value: Any = self.sections
        for part in key.split('.'):
            if isinstance(value, dict) and part in value:
                value = value[part]
            else:
                return default
        return value
