"""
网络结构：小波变换、可学习模块与完整增强模型
"""
from .mtrl_model import MTRLModel, param_count
from .wavelet import SubBands, wt_forward, wt_inverse

__all__ = ['MTRLModel', 'param_count', 'SubBands', 'wt_forward', 'wt_inverse']
