# -*- coding: utf-8 -*-
"""
数据集划分与清单

清单为 UTF-8 CSV：path, split, seed。相对路径相对于清单文件所在目录解析。
"""
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import pandas as pd

from ..core.exceptions import DatasetError, ValidationError
from ..numerics.prng import derive_seed, stream
from ..utils.logger_config import get_logger
from .image_io import list_images

logger = get_logger(__name__)

MANIFEST_COLUMNS = ['path', 'split', 'seed']
SPLITS = ('train', 'test')
DEFAULT_RATIO = 0.7


def train_count(n: int, ratio: float) -> int:
    """训练集数量 = round(ratio·n)（四舍五入，0.5 进位），两边至少各留一张"""
    count = int(math.floor(ratio * n + 0.5))
    return min(max(count, 1), n - 1)


@dataclass
class DatasetManifest:
    """数据集清单"""
    rows: List[dict] = field(default_factory=list)
    ratio: float = DEFAULT_RATIO
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=MANIFEST_COLUMNS)

    def counts(self) -> dict:
        return {split: sum(1 for r in self.rows if r['split'] == split) for split in SPLITS}

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def paths(self, split: Optional[str] = None) -> List[Path]:
        """某个划分（或全部）的图像路径，保持清单顺序"""
        if split is not None and split not in SPLITS:
            raise ValidationError(f"未知的数据划分: {split}", field='split', value=split)
        return [self.resolve(r['path']) for r in self.rows if split is None or r['split'] == split]

    def check_exists(self) -> None:
        """所有路径必须存在，否则一次性列出全部缺失文件"""
        missing = [r['path'] for r in self.rows if not self.resolve(r['path']).exists()]
        if missing:
            raise DatasetError(f"清单中有 {len(missing)} 个文件不存在", missing=missing)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        base = path.parent.resolve()
        rows = []
        for r in self.rows:
            p = self.resolve(r['path']).resolve()
            try:
                rel = os.path.relpath(p, base)
            except ValueError:
                rel = str(p)
            rows.append({**r, 'path': Path(rel).as_posix()})
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False, encoding='utf-8')
        logger.info(f"数据清单已写出: {path} ({self.counts()})")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], check_exists: bool = True) -> 'DatasetManifest':
        path = Path(path)
        try:
            df = pd.read_csv(path, encoding='utf-8', dtype={'path': str, 'split': str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DatasetError(f"无法读取数据清单 {path}: {e}")
        missing_cols = [c for c in MANIFEST_COLUMNS if c not in df.columns]
        if missing_cols:
            raise DatasetError(f"数据清单缺少列: {', '.join(missing_cols)}")
        bad = sorted(set(df['split']) - set(SPLITS))
        if bad:
            raise DatasetError(f"数据清单包含未知划分: {bad}")
        rows = [{'path': r['path'], 'split': r['split'], 'seed': int(r['seed'])}
                for r in df[MANIFEST_COLUMNS].to_dict('records')]
        manifest = cls(rows=rows, root=path.parent)
        if check_exists:
            manifest.check_exists()
        return manifest


def split_paths(paths: List[Path], ratio: float = DEFAULT_RATIO, seed: int = 42) -> DatasetManifest:
    """对给定路径做确定性打乱划分；每行附带由主种子派生的图像种子"""
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"划分比例必须位于 (0, 1)，当前为 {ratio}", field='ratio', value=ratio)
    paths = sorted(Path(p) for p in paths)
    n = len(paths)
    if n < 2:
        raise DatasetError(f"划分数据集至少需要 2 张图像，当前只有 {n} 张")
    order = stream(seed, 'split').permutation(n)
    n_train = train_count(n, ratio)
    train_idx = set(int(i) for i in order[:n_train])
    rows = [{'path': str(p), 'split': 'train' if i in train_idx else 'test',
             'seed': derive_seed(seed, 'image', p.name)} for i, p in enumerate(paths)]
    return DatasetManifest(rows=rows, ratio=ratio)


def split_dataset(directory: Union[str, Path], ratio: float = DEFAULT_RATIO, seed: int = 42) -> DatasetManifest:
    """
    把目录下的图像按比例划分为 train/test

    Args:
        directory: 图像目录
        ratio: 训练集比例，默认 7:3
        seed: 划分种子

    Returns:
        DatasetManifest: 行顺序按文件名排序
    """
    manifest = split_paths(list_images(directory), ratio, seed)
    logger.info(f"数据集划分完成: {directory} -> {manifest.counts()}")
    return manifest
