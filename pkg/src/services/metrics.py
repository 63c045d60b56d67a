# -*- coding: utf-8 -*-
"""
图像质量指标与评分表

SSIM：11×11 高斯窗（σ = 1.5），K1 = 0.01，K2 = 0.03，动态范围 1.0，边界镜像延拓，
对所有像素和通道取平均。PSNR：峰值 1.0，MSE 为 0 时返回 +inf。
"""
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import ShapeError, ValidationError
from ..numerics.filters import gaussian_kernel1d, separable_filter
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0

SCORE_COLUMNS = ['image_id', 'method', 'ssim', 'psnr']


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError("指标计算要求两幅图像形状一致", a.shape, b.shape)


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """逐像素 SSIM 图（float64）"""
    _check_pair(a, b)
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    window = gaussian_kernel1d(SSIM_SIGMA, radius=SSIM_RADIUS)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2

    mu_x = separable_filter(x, window)
    mu_y = separable_filter(y, window)
    var_x = separable_filter(x * x, window) - mu_x * mu_x
    var_y = separable_filter(y * y, window) - mu_y * mu_y
    cov = separable_filter(x * y, window) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """结构相似度，返回全图均值"""
    return float(np.mean(ssim_map(a, b)))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """峰值信噪比（dB），完全相同时返回 +inf"""
    _check_pair(a, b)
    mse = float(np.mean(np.square(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE ** 2 / mse)


class ScoreTable:
    """
    逐图像评分表：(image_id, method, ssim, psnr)

    CSV 为 UTF-8、带表头；行按 (method, image_id) 排序，PSNR 无穷大写作 inf。
    """

    def __init__(self, rows: Optional[List[Dict]] = None):
        self._rows: List[Dict] = []
        for row in rows or []:
            self.add(row['image_id'], row['method'], row['ssim'], row['psnr'])

    def add(self, image_id: str, method: str, ssim_value: float, psnr_value: float) -> None:
        if not -1.0 - 1e-9 <= ssim_value <= 1.0 + 1e-9:
            raise ValidationError(f"SSIM 超出 [-1, 1]: {ssim_value}", field='ssim', value=ssim_value)
        if not (psnr_value > 0 or math.isinf(psnr_value)):
            raise ValidationError(f"PSNR 必须为正或无穷: {psnr_value}", field='psnr', value=psnr_value)
        self._rows.append({'image_id': str(image_id), 'method': str(method),
                           'ssim': float(ssim_value), 'psnr': float(psnr_value)})

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self._rows, columns=SCORE_COLUMNS)
        return df.sort_values(['method', 'image_id'], kind='mergesort').reset_index(drop=True)

    def methods(self) -> List[str]:
        return sorted({r['method'] for r in self._rows})

    def values(self, metric: str, method: Optional[str] = None) -> pd.Series:
        """按 image_id 索引的指标序列"""
        if metric not in ('ssim', 'psnr'):
            raise ValidationError(f"未知指标: {metric}", field='metric', value=metric)
        df = self.frame
        if method is None:
            methods = df['method'].unique()
            if len(methods) != 1:
                raise ValidationError("评分表包含多个方法，请指定 method", field='method')
            method = methods[0]
        sub = df[df['method'] == method]
        return sub.set_index('image_id')[metric]

    def summary(self) -> pd.DataFrame:
        """每个方法的 mean ± std（总体标准差）；PSNR 只统计有限值"""
        records = []
        for method, sub in self.frame.groupby('method', sort=True):
            finite_psnr = sub['psnr'][np.isfinite(sub['psnr'])]
            rec = {
                'method': method,
                'n': int(len(sub)),
                'ssim_mean': float(sub['ssim'].mean()),
                'ssim_std': float(sub['ssim'].std(ddof=0)),
                'psnr_mean': float(finite_psnr.mean()) if len(finite_psnr) else math.inf,
                'psnr_std': float(finite_psnr.std(ddof=0)) if len(finite_psnr) else 0.0,
                'psnr_infinite': int(len(sub) - len(finite_psnr)),
            }
            rec['ssim'] = f"{rec['ssim_mean']:.3f} ± {rec['ssim_std']:.3f}"
            rec['psnr'] = f"{rec['psnr_mean']:.2f} ± {rec['psnr_std']:.2f}"
            records.append(rec)
        return pd.DataFrame(records)

    def to_csv(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, encoding='utf-8')

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'ScoreTable':
        try:
            df = pd.read_csv(path, encoding='utf-8', dtype={'image_id': str, 'method': str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ValidationError(f"无法读取评分表 {path}: {e}", field='scores')
        missing = [c for c in SCORE_COLUMNS if c not in df.columns]
        if missing:
            raise ValidationError(f"评分表缺少列: {', '.join(missing)}", field='scores')
        return cls(df[SCORE_COLUMNS].to_dict('records'))


def align_scores(a: pd.Series, b: pd.Series) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """按 image_id 对齐两组分数，返回共同图像上的数组"""
    common = sorted(set(a.index) & set(b.index))
    if not common:
        raise ValidationError("两组分数没有共同的图像", field='image_id')
    return a.loc[common].to_numpy(dtype=float), b.loc[common].to_numpy(dtype=float), common
