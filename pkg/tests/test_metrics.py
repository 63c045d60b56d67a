# -*- coding: utf-8 -*-
"""
图像质量指标与配对检验单元测试
"""
import math

import numpy as np
import pytest
from scipy import stats

from src.core.exceptions import ShapeError, ValidationError
from src.services.metrics import SSIM_K1, SSIM_K2, ScoreTable, align_scores, psnr, ssim
from src.services.statistics import paired_tests, significance_stars, wilcoxon_signed_rank


def brute_force_ssim(a, b):
    """逐像素窗口求和的 SSIM（镜像延拓，单通道）"""
    r = 5
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / 1.5) ** 2)
    g /= g.sum()
    w = np.outer(g, g)
    pa = np.pad(a, r, mode='reflect')
    pb = np.pad(b, r, mode='reflect')
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    values = []
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            x = pa[i:i + 2 * r + 1, j:j + 2 * r + 1]
            y = pb[i:i + 2 * r + 1, j:j + 2 * r + 1]
            mx, my = np.sum(w * x), np.sum(w * y)
            vx = np.sum(w * x * x) - mx * mx
            vy = np.sum(w * y * y) - my * my
            cxy = np.sum(w * x * y) - mx * my
            values.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(values))


# 固定参考值：分数以 1/64 为单位（差值精确、并列可控），p 值由闭式 t 分布级数与
# 正态尾概率独立算出，与 scipy 版本无关
# (a·64, b·64, t, 双侧 t 检验 p, Wilcoxon 统计量, Wilcoxon 正态近似 p)
REFERENCE_PAIRED_TESTS = [
    ([28, 40, 52, 32, 44, 56, 45, 48, 47, 40, 52, 32, 44, 43, 36, 48, 47, 40, 52, 41, 44, 43, 36, 48, 47, 40],
     [32, 39, 46, 34, 41, 48, 36, 43, 50, 38, 45, 33, 40, 47, 35, 42, 49, 37, 44, 32, 39, 46, 34, 41, 48, 36],
     3.26660859414119, 0.00315480837893956, 68.0, 0.00623330250895),
    ([42, 41, 53, 33, 45, 38, 37, 49, 42, 50, 53, 33, 45, 57, 37, 49, 29, 41, 53, 33, 45, 57, 46, 49, 29, 41, 53,
      33, 45],
     [35, 42, 49, 37, 44, 32, 39, 46, 34, 41, 48, 36, 43, 50, 38, 45, 33, 40, 47, 35, 42, 49, 37, 44, 32, 39, 46,
      34, 41],
     3.60563175921402, 0.00119647871673001, 79.0, 0.00269287031191),
    ([43, 42, 35, 47, 46, 39, 38, 50, 43, 42, 35, 47, 55, 39, 38, 50, 43, 42, 54, 34, 46, 39, 38, 50, 43, 51, 54,
      34, 46, 39, 38, 50],
     [38, 45, 33, 40, 47, 35, 42, 49, 37, 44, 32, 39, 46, 34, 41, 48, 36, 43, 50, 38, 45, 33, 40, 47, 35, 42, 49,
      37, 44, 32, 39, 46],
     3.64850478237732, 0.000959998780290738, 100.0, 0.00212101221224),
    ([44, 56, 45, 48, 47, 40, 52, 32, 44, 43, 36, 48, 47, 40, 52, 41, 44, 43, 36, 48, 47, 40, 39, 51, 44, 43, 36,
      48, 56, 40, 39, 51, 44, 43, 36],
     [41, 48, 36, 43, 50, 38, 45, 33, 40, 47, 35, 42, 49, 37, 44, 32, 39, 46, 34, 41, 48, 36, 43, 50, 38, 45, 33,
      40, 47, 35, 42, 49, 37, 44, 32],
     4.26000598669901, 0.000152768766009892, 103.5, 0.000519079169526),
    ([45, 38, 37, 49, 42, 50, 53, 33, 45, 57, 37, 49, 29, 41, 53, 33, 45, 57, 46, 49, 29, 41, 53, 33, 45, 44, 37,
      49, 48, 41, 53, 42, 45, 44, 37, 49, 48, 41],
     [44, 32, 39, 46, 34, 41, 48, 36, 43, 50, 38, 45, 33, 40, 47, 35, 42, 49, 37, 44, 32, 39, 46, 34, 41, 48, 36,
      43, 50, 38, 45, 33, 40, 47, 35, 42, 49, 37],
     4.33236105266854, 0.000108392599732499, 127.5, 0.00041432202563),
]


class TestSSIM:
    """测试 SSIM"""

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_self_similarity(self, phantom):
        assert ssim(phantom, phantom) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_zeros_vs_ones(self):
        c1 = SSIM_K1 ** 2
        value = ssim(np.zeros((1, 3, 16, 16)), np.ones((1, 3, 16, 16)))
        assert value == pytest.approx(c1 / (1 + c1), rel=1e-6)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_matches_brute_force(self, rng):
        a = rng.random((8, 8))
        b = np.clip(a + 0.1 * rng.standard_normal((8, 8)), 0, 1)
        got = ssim(a[None, None], b[None, None])
        assert got == pytest.approx(brute_force_ssim(a, b), abs=1e-6)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_symmetric_and_bounded(self, rng):
        a = rng.random((1, 3, 20, 20))
        b = rng.random((1, 3, 20, 20))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert -1.0 <= ssim(a, b) < 1.0

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 9)))


class TestPSNR:
    """测试 PSNR"""

    @pytest.mark.unit
    @pytest.mark.metrics
    @pytest.mark.parametrize('offset,expected', [(0.1, 20.0), (0.05, 26.0206)])
    def test_constant_offset(self, offset, expected):
        a = np.full((1, 3, 8, 8), 0.5)
        assert psnr(a + offset, a) == pytest.approx(expected, abs=1e-4)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_identical_is_infinite(self, phantom):
        assert psnr(phantom, phantom) == math.inf

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_monotonic_in_noise(self, rng, phantom):
        noise = rng.standard_normal(phantom.shape)
        values = [psnr(phantom + s * noise, phantom) for s in (0.01, 0.05, 0.1)]
        assert values[0] > values[1] > values[2]


class TestScoreTable:
    """测试评分表"""

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_validation(self):
        table = ScoreTable()
        with pytest.raises(ValidationError):
            table.add('a', 'mtrl', 1.5, 20.0)
        with pytest.raises(ValidationError):
            table.add('a', 'mtrl', 0.5, -1.0)
        table.add('a', 'mtrl', 0.5, math.inf)
        assert len(table) == 1

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_csv_sorted_with_inf(self, tmp_path):
        table = ScoreTable()
        table.add('b', 'mtrl', 0.9, 30.0)
        table.add('a', 'mtrl', 1.0, math.inf)
        table.add('a', 'degraded', 0.7, 18.5)
        path = tmp_path / 'scores.csv'
        table.to_csv(path)
        lines = path.read_text(encoding='utf-8').splitlines()
        assert lines[0] == 'image_id,method,ssim,psnr'
        assert lines[1].startswith('a,degraded')
        assert lines[2] == 'a,mtrl,1.0,inf'
        restored = ScoreTable.from_csv(path)
        assert math.isinf(restored.values('psnr', 'mtrl')['a'])
        assert restored.values('ssim', 'mtrl')['b'] == 0.9

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_summary_population_std(self):
        table = ScoreTable()
        for image_id, s, p in (('a', 0.8, 20.0), ('b', 0.9, 30.0), ('c', 0.85, math.inf)):
            table.add(image_id, 'mtrl', s, p)
        row = table.summary().iloc[0]
        assert row['n'] == 3
        assert row['ssim_mean'] == pytest.approx(0.85)
        assert row['ssim_std'] == pytest.approx(np.std([0.8, 0.9, 0.85]))
        assert row['psnr_mean'] == pytest.approx(25.0)
        assert row['psnr_std'] == pytest.approx(5.0)
        assert row['psnr_infinite'] == 1
        assert row['ssim'] == '0.850 ± 0.041'

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_values_require_method(self):
        table = ScoreTable([{'image_id': 'a', 'method': 'x', 'ssim': 0.5, 'psnr': 20.0},
                            {'image_id': 'a', 'method': 'y', 'ssim': 0.6, 'psnr': 21.0}])
        with pytest.raises(ValidationError):
            table.values('ssim')
        with pytest.raises(ValidationError):
            table.values('mae', 'x')

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_align_scores(self):
        table = ScoreTable()
        for image_id in ('a', 'b', 'c'):
            table.add(image_id, 'x', 0.5, 20.0)
        for image_id in ('b', 'c', 'd'):
            table.add(image_id, 'y', 0.6, 21.0)
        a, b, common = align_scores(table.values('ssim', 'x'), table.values('ssim', 'y'))
        assert common == ['b', 'c']
        assert a.tolist() == [0.5, 0.5]
        assert b.tolist() == [0.6, 0.6]


class TestPairedTests:
    """测试配对显著性检验"""

    @pytest.mark.unit
    @pytest.mark.metrics
    @pytest.mark.parametrize('seed', range(5))
    def test_t_test_matches_scipy(self, seed):
        rng = np.random.default_rng(seed)
        n = 8 + 4 * seed
        a = rng.normal(0.8, 0.05, n)
        b = a - rng.normal(0.02, 0.03, n)
        result = paired_tests(a, b)
        expected = stats.ttest_rel(a, b)
        assert result.t_statistic == pytest.approx(expected.statistic, rel=1e-9)
        assert result.t_p == pytest.approx(expected.pvalue, rel=1e-7, abs=1e-12)

    @pytest.mark.unit
    @pytest.mark.metrics
    @pytest.mark.parametrize('a64,b64,t,t_p,w,w_p', REFERENCE_PAIRED_TESTS)
    def test_matches_reference_values(self, a64, b64, t, t_p, w, w_p):
        result = paired_tests(np.array(a64) / 64.0, np.array(b64) / 64.0)
        assert result.n == len(a64)
        assert result.t_statistic == pytest.approx(t, rel=1e-9)
        assert result.t_p == pytest.approx(t_p, abs=1e-6, rel=1e-6)
        assert result.wilcoxon_method == 'normal'
        assert result.wilcoxon_statistic == w
        assert result.wilcoxon_p == pytest.approx(w_p, abs=1e-3, rel=1e-6)

    @pytest.mark.unit
    @pytest.mark.metrics
    @pytest.mark.parametrize('seed', range(5))
    def test_exact_wilcoxon_matches_scipy(self, seed):
        rng = np.random.default_rng(100 + seed)
        d = rng.normal(0.1, 0.3, 6 + 3 * seed)
        stat, p, method = wilcoxon_signed_rank(d)
        expected = stats.wilcoxon(d, method='exact')
        assert method == 'exact'
        assert stat == pytest.approx(expected.statistic)
        assert p == pytest.approx(expected.pvalue, rel=1e-9)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_all_positive_five(self):
        _, p, method = wilcoxon_signed_rank(np.array([0.1, 0.2, 0.3, 0.4, 0.5]))
        assert method == 'exact'
        assert p == pytest.approx(0.0625)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_exact_with_ties(self):
        """并列差值：精确分布按平均秩枚举"""
        stat, p, _ = wilcoxon_signed_rank(np.array([1.0, 1.0, -2.0, 3.0]))
        # 秩 1.5, 1.5, 3, 4；T- = 3，16 种符号组合中 T ≤ 3 的有 5 种
        assert stat == 3.0
        assert p == pytest.approx(2 * 5 / 16)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_normal_approximation(self):
        d = np.array([(k + 1) * (-1 if k % 4 == 0 else 1) for k in range(30)], dtype=float)
        stat, p, method = wilcoxon_signed_rank(d)
        n = 30
        t_minus = sum(k + 1 for k in range(30) if k % 4 == 0)
        z = (t_minus - n * (n + 1) / 4) / math.sqrt(n * (n + 1) * (2 * n + 1) / 24)
        assert method == 'normal'
        assert stat == t_minus
        assert p == pytest.approx(2 * stats.norm.sf(abs(z)), rel=1e-12)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_zero_differences_dropped(self):
        stat, p, _ = wilcoxon_signed_rank(np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5]))
        assert stat == 0.0
        assert p == pytest.approx(0.0625)

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_clear_improvement_three_stars(self, rng):
        b = rng.random(30)
        a = b + rng.normal(1.0, 0.1, 30)
        result = paired_tests(a, b)
        assert result.stars == '***'
        assert result.n == 30
        assert result.wilcoxon_method == 'normal'
        assert result.wilcoxon_p < 1e-3

    @pytest.mark.unit
    @pytest.mark.metrics
    @pytest.mark.parametrize('p,stars', [(0.2, ''), (0.05, ''), (0.03, '*'), (0.004, '**'), (0.0005, '***')])
    def test_significance_stars(self, p, stars):
        assert significance_stars(p) == stars

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_degenerate(self):
        result = paired_tests([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
        assert result.degenerate is True
        assert result.t_p == 1.0 and result.wilcoxon_p == 1.0
        assert result.stars == ''

    @pytest.mark.unit
    @pytest.mark.metrics
    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            paired_tests([0.1, 0.2], [0.1])
        with pytest.raises(ValidationError):
            paired_tests([0.1], [0.2])
        with pytest.raises(ValidationError):
            paired_tests([0.1, math.nan], [0.2, 0.3])
