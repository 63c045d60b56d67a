# -*- coding: utf-8 -*-
"""
目录级工作流：批量退化、批量增强、评估与报告

每个文件的处理互不依赖，可按 MTRL_THREADS 并行；输出只写入指定目录。
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.exceptions import DatasetError, ValidationError
from ..models.mtrl_model import MTRLModel, param_budget
from ..numerics.prng import derive_seed
from ..storage.checkpoint import load_checkpoint
from ..storage.dataset import DatasetManifest, split_paths
from ..storage.image_io import list_images, load_image, save_image
from ..utils.decorators import log_operation
from ..utils.logger_config import get_logger
from ..utils.parallel import parallel_map
from .degradation import DegradationSpec, degrade, eval8_specs, random_spec
from .metrics import ScoreTable, align_scores, psnr, ssim
from .statistics import PairedTestResult, paired_tests

logger = get_logger(__name__)

EVAL8 = 'eval8'
VARIANT_SEPARATOR = '__'
SUPPORTED_TESTS = ('t', 'wilcoxon')
METRICS = ('ssim', 'psnr')


def _require_images(directory: Union[str, Path]) -> List[Path]:
    paths = list_images(directory)
    if not paths:
        raise DatasetError(f"目录中没有可读取的图像: {directory}")
    return paths


def _image_manifest(paths: List[Path], seed: int) -> Dict[str, str]:
    """源图像 -> 划分；不足 2 张时全部记为 train"""
    if len(paths) < 2:
        return {p.name: 'train' for p in paths}
    manifest = split_paths(paths, seed=seed)
    return {Path(r['path']).name: r['split'] for r in manifest.rows}


@log_operation('批量退化')
def degrade_directory(input_dir: Union[str, Path], output_dir: Union[str, Path], seed: int,
                      preset: Optional[str] = None, spec_path: Optional[Union[str, Path]] = None,
                      manifest_path: Optional[Union[str, Path]] = None,
                      threads: Optional[int] = None) -> List[Path]:
    """
    退化目录下的所有图像

    Args:
        input_dir: 高质量图像目录
        output_dir: 输出目录
        seed: 主种子；每张图像的种子由 (seed, 文件名) 派生
        preset: "eval8" 时每张图输出 8 个变体 base__d0..d7.png
        spec_path: 退化规格 JSON；与 preset 互斥；都缺省时使用随机组合
        manifest_path: 输出清单 CSV（path, split, seed）
        threads: 线程数

    Returns:
        List[Path]: 写出的文件（按输入顺序）
    """
    if preset is not None and spec_path is not None:
        raise ValidationError("--preset 与 --spec 只能二选一", field='preset')
    if preset is not None and preset != EVAL8:
        raise ValidationError(f"未知的退化预设: {preset}", field='preset', value=preset)
    base_spec = DegradationSpec.from_file(spec_path) if spec_path is not None else None
    sources = _require_images(input_dir)
    output_dir = Path(output_dir)
    splits = _image_manifest(sources, seed)

    def one(src: Path) -> List[dict]:
        image = load_image(src)
        image_seed = derive_seed(seed, 'image', src.name)
        if preset == EVAL8:
            jobs = [(output_dir / f"{src.stem}{VARIANT_SEPARATOR}d{k}.png", spec)
                    for k, spec in enumerate(eval8_specs(image_seed))]
        elif base_spec is not None:
            jobs = [(output_dir / f"{src.stem}.png", base_spec.with_seed(image_seed))]
        else:
            jobs = [(output_dir / f"{src.stem}.png", random_spec(image_seed))]
        rows = []
        for target, spec in jobs:
            save_image(degrade(image, spec), target)
            rows.append({'path': str(target), 'split': splits[src.name], 'seed': spec.seed})
        return rows

    rows = [row for rows in parallel_map(one, sources, threads) for row in rows]
    if manifest_path is not None:
        DatasetManifest(rows=rows).to_csv(manifest_path)
    logger.info(f"退化完成: {len(sources)} 张输入 -> {len(rows)} 张输出")
    return [Path(r['path']) for r in rows]


@log_operation('批量增强')
def enhance_directory(ckpt_path: Union[str, Path], input_dir: Union[str, Path], output_dir: Union[str, Path],
                      save_hf: bool = False, threads: Optional[int] = None) -> List[Path]:
    """
    用检查点增强目录下所有图像（原始尺寸，内部补齐后裁回）

    输出与输入同名的 PNG；save_hf 时额外写出 <stem>_hf.png（P_h）。
    """
    ckpt = load_checkpoint(ckpt_path)
    model = MTRLModel(ckpt.model_config, ckpt.store).eval()
    sources = _require_images(input_dir)
    output_dir = Path(output_dir)

    def one(src: Path) -> List[Path]:
        p_h, p_r = model(load_image(src))
        written = [save_image(p_r, output_dir / f"{src.stem}.png")]
        if save_hf:
            written.append(save_image(p_h, output_dir / f"{src.stem}_hf.png"))
        return written

    outputs = [p for written in parallel_map(one, sources, threads) for p in written]
    logger.info(f"增强完成: {len(sources)} 张图像 -> {output_dir}")
    return outputs


def reference_id(stem: str) -> str:
    """预测文件名到参考图像名：base__dK -> base"""
    return stem.split(VARIANT_SEPARATOR, 1)[0]


@log_operation('评估')
def evaluate_directories(pred_dir: Union[str, Path], ref_dir: Union[str, Path], method: str = 'pred',
                         threads: Optional[int] = None) -> ScoreTable:
    """
    逐图像计算 SSIM/PSNR

    预测图像按文件名与参考图像配对（base__dK 变体对应 base）；
    找不到参考的预测图像会一次性列出并报错。
    """
    preds = _require_images(pred_dir)
    refs = {p.stem: p for p in _require_images(ref_dir)}
    missing = [p.name for p in preds if reference_id(p.stem) not in refs]
    if missing:
        raise DatasetError(f"{len(missing)} 张预测图像找不到对应的参考图像", missing=missing)

    def one(pred: Path):
        a = load_image(pred)
        b = load_image(refs[reference_id(pred.stem)])
        return pred.stem, ssim(a, b), psnr(a, b)

    table = ScoreTable()
    for image_id, s, p in parallel_map(one, preds, threads):
        table.add(image_id, method, s, p)
    return table


@dataclass
class Comparison:
    """某一指标上与基线的配对比较"""
    metric: str
    n: int
    method_mean: float
    baseline_mean: float
    result: Optional[PairedTestResult] = None
    skipped: Optional[str] = None

    def to_dict(self, tests: Sequence[str] = SUPPORTED_TESTS) -> Dict:
        out = {'metric': self.metric, 'n': self.n, 'method_mean': self.method_mean,
               'baseline_mean': self.baseline_mean}
        if self.result is None:
            out['skipped'] = self.skipped
            return out
        r = self.result
        out.update({'mean_difference': r.mean_difference, 'stars': r.stars, 'degenerate': r.degenerate})
        if 't' in tests:
            out.update({'t_statistic': r.t_statistic, 't_p': r.t_p})
        if 'wilcoxon' in tests:
            out.update({'wilcoxon_statistic': r.wilcoxon_statistic, 'wilcoxon_p': r.wilcoxon_p,
                        'wilcoxon_method': r.wilcoxon_method})
        return out


def parse_tests(value: Optional[str]) -> List[str]:
    """解析 "t,wilcoxon" 形式的检验列表"""
    if not value:
        return list(SUPPORTED_TESTS)
    tests = [t.strip() for t in value.split(',') if t.strip()]
    unknown = [t for t in tests if t not in SUPPORTED_TESTS]
    if unknown:
        raise ValidationError(f"未知的检验: {', '.join(unknown)}", field='tests', value=value)
    return tests


def compare_with_baseline(table: ScoreTable, baseline: ScoreTable) -> List[Comparison]:
    """
    在 SSIM 与 PSNR 上做配对检验

    两表按 image_id 对齐；PSNR 为无穷的样本对不参与检验。
    """
    comparisons = []
    for metric in METRICS:
        a, b, _ = align_scores(table.values(metric), baseline.values(metric))
        finite = [i for i in range(len(a)) if math.isfinite(a[i]) and math.isfinite(b[i])]
        a, b = a[finite], b[finite]
        comp = Comparison(metric=metric, n=len(a),
                          method_mean=float(a.mean()) if len(a) else math.nan,
                          baseline_mean=float(b.mean()) if len(b) else math.nan)
        if len(a) < 2:
            comp.skipped = '有限值样本对少于 2 个'
            logger.warning(f"{metric}: 有限值样本对少于 2 个，跳过显著性检验")
        else:
            comp.result = paired_tests(a, b)
        comparisons.append(comp)
    return comparisons


def _json_safe(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return 'inf' if value > 0 else ('-inf' if value < 0 else 'nan')
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def build_report(table: ScoreTable, comparisons: Optional[List[Comparison]] = None,
                 tests: Sequence[str] = SUPPORTED_TESTS, ckpt_path: Optional[Union[str, Path]] = None) -> Dict:
    """评估报告：各方法 mean ± std、配对检验、以及（给定检查点时）参数预算"""
    report = {'summary': table.summary().to_dict('records'), 'images': len(table)}
    if comparisons:
        report['comparisons'] = [c.to_dict(tests) for c in comparisons]
    if ckpt_path is not None:
        report['param_budget'] = param_budget(load_checkpoint(ckpt_path).model_config)
    return _json_safe(report)


def write_report(report: Dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info(f"评估报告已写出: {path}")
    return path
