# -*- coding: utf-8 -*-
"""
配对显著性检验

- 双侧配对 t 检验：t = mean(d) / (sd(d)/√n)，p 由正则化不完全 beta 函数给出
- Wilcoxon 符号秩检验：去掉零差值，平均秩处理并列；n ≤ 25 用精确分布，
  否则用带并列修正的正态近似（不做连续性修正）
- 显著性星号由 t 检验 p 值决定：< 0.05 "*"，< 0.01 "**"，< 0.001 "***"
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import norm, rankdata

from ..core.exceptions import ValidationError

EXACT_WILCOXON_MAX_N = 25
STAR_THRESHOLDS = ((0.001, '***'), (0.01, '**'), (0.05, '*'))


@dataclass
class PairedTestResult:
    """配对检验结果"""
    n: int
    mean_difference: float
    t_statistic: float
    t_p: float
    wilcoxon_statistic: float
    wilcoxon_p: float
    wilcoxon_method: str
    stars: str
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


def significance_stars(p: float) -> str:
    for threshold, stars in STAR_THRESHOLDS:
        if p < threshold:
            return stars
    return ''


def paired_t_test(d: np.ndarray):
    """返回 (t, 双侧 p)"""
    n = d.size
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        return (math.copysign(math.inf, mean), 0.0) if mean != 0.0 else (0.0, 1.0)
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(1.0, p)


def _exact_wilcoxon_p(ranks: np.ndarray, r_plus: float) -> float:
    """以两倍秩（整数）做动态规划枚举全部符号组合"""
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    dist = counts / counts.sum()
    t = int(round(r_plus * 2))
    p_low = float(dist[:t + 1].sum())
    p_high = float(dist[t:].sum())
    return min(1.0, 2.0 * min(p_low, p_high))


def wilcoxon_signed_rank(d: np.ndarray):
    """返回 (统计量 min(T+, T-), 双侧 p, 方法)"""
    nz = d[d != 0]
    n = nz.size
    if n == 0:
        return 0.0, 1.0, 'degenerate'
    ranks = rankdata(np.abs(nz))
    r_plus = float(ranks[nz > 0].sum())
    r_minus = float(ranks[nz < 0].sum())
    stat = min(r_plus, r_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        return stat, _exact_wilcoxon_p(ranks, r_plus), 'exact'

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1)
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= 0.5 * float(np.sum(tie_counts * (tie_counts * tie_counts - 1)))
    se = math.sqrt(var / 24.0)
    z = (stat - mean) / se
    return stat, float(min(1.0, 2.0 * norm.sf(abs(z)))), 'normal'


def paired_tests(a: Sequence[float], b: Sequence[float]) -> PairedTestResult:
    """
    对两组配对分数做 t 检验与 Wilcoxon 检验

    Args:
        a, b: 等长分数序列，n ≥ 2

    Returns:
        PairedTestResult: 差值全为 0 时两个 p 均为 1.0 且 degenerate=True
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"配对检验要求等长一维序列: {x.shape} vs {y.shape}", field='scores')
    if x.size < 2:
        raise ValidationError("配对检验至少需要 2 对样本", field='scores', value=x.size)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("配对检验的分数必须是有限值", field='scores')

    d = x - y
    if np.all(d == 0):
        return PairedTestResult(n=int(d.size), mean_difference=0.0, t_statistic=0.0, t_p=1.0,
                                wilcoxon_statistic=0.0, wilcoxon_p=1.0, wilcoxon_method='degenerate',
                                stars='', degenerate=True)

    t, t_p = paired_t_test(d)
    w, w_p, method = wilcoxon_signed_rank(d)
    return PairedTestResult(n=int(d.size), mean_difference=float(np.mean(d)), t_statistic=float(t), t_p=t_p,
                            wilcoxon_statistic=w, wilcoxon_p=w_p, wilcoxon_method=method,
                            stars=significance_stars(t_p))
