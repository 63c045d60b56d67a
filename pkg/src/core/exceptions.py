# -*- coding: utf-8 -*-
"""
自定义异常类
"""
from typing import Optional, Sequence


class MTRLError(Exception):
    """基础异常类"""

    def __init__(self, message: str, error_code: str = None, details: dict = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}

    def to_dict(self) -> dict:
        """转换为字典格式"""
        return {
            'error': self.message,
            'error_code': self.error_code,
            'details': self.details
        }


class ValidationError(MTRLError):
    """数据验证异常"""

    def __init__(self, message: str, field: str = None, value=None):
        super().__init__(message, 'VALIDATION_ERROR')
        self.field = field
        self.value = value
        if field:
            self.details['field'] = field
        if value is not None:
            self.details['value'] = str(value)


class ShapeError(MTRLError):
    """张量形状不匹配异常"""

    def __init__(self, message: str, *shapes: Sequence[int]):
        if shapes:
            message = f"{message} (形状: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message, 'SHAPE_ERROR')
        self.shapes = [tuple(s) for s in shapes]
        if shapes:
            self.details['shapes'] = [list(s) for s in self.shapes]


class ConfigurationError(MTRLError):
    """配置异常"""

    def __init__(self, message: str = "配置错误", config_key: str = None):
        super().__init__(message, 'CONFIGURATION_ERROR')
        if config_key:
            self.details['config_key'] = config_key


class GradientError(MTRLError):
    """梯度异常（非有限值等）"""

    def __init__(self, message: str, parameter: str = None):
        super().__init__(message, 'GRADIENT_ERROR')
        self.parameter = parameter
        if parameter:
            self.details['parameter'] = parameter


class CheckpointError(MTRLError):
    """检查点读写异常"""

    def __init__(self, message: str, path: str = None, expected: int = None, actual: int = None):
        super().__init__(message, 'CHECKPOINT_ERROR')
        if path:
            self.details['path'] = str(path)
        if expected is not None:
            self.details['expected_bytes'] = expected
        if actual is not None:
            self.details['actual_bytes'] = actual


class ImageFormatError(MTRLError):
    """图像读取/格式异常"""

    def __init__(self, message: str, path: str = None):
        super().__init__(message, 'IMAGE_FORMAT_ERROR')
        if path:
            self.details['path'] = str(path)


class DatasetError(MTRLError):
    """数据集异常"""

    def __init__(self, message: str, missing: Optional[Sequence[str]] = None):
        super().__init__(message, 'DATASET_ERROR')
        self.missing = list(missing or [])
        if self.missing:
            self.details['missing'] = self.missing


class DegradationError(MTRLError):
    """退化流程异常"""

    def __init__(self, message: str, op: str = None):
        super().__init__(message, 'DEGRADATION_ERROR')
        if op:
            self.details['op'] = op


class TrainingError(MTRLError):
    """训练过程异常"""

    def __init__(self, message: str, step: int = None):
        super().__init__(message, 'TRAINING_ERROR')
        self.step = step
        if step is not None:
            self.details['step'] = step


class UsageError(MTRLError):
    """命令行用法异常"""

    def __init__(self, message: str, token: str = None):
        super().__init__(message, 'USAGE_ERROR')
        self.token = token
        if token:
            self.details['token'] = token
