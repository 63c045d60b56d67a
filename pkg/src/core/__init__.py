# -*- coding: utf-8 -*-
"""
核心架构层
"""
from .exceptions import *

__all__ = [
    'MTRLError',
    'ValidationError',
    'ShapeError',
    'ConfigurationError',
    'GradientError',
    'CheckpointError',
    'ImageFormatError',
    'DatasetError',
    'DegradationError',
    'TrainingError',
    'UsageError'
]
