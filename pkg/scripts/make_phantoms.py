#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成眼底图像生成脚本

生成 phantom_000.png ... 作为桌面规模实验的高质量图像目录。

使用方法：
python scripts/make_phantoms.py --output data/hq --count 40 --size 96 --seed 42
python scripts/make_phantoms.py --output data/hq --manifest data/hq_manifest.csv --split-seed 1
"""
import argparse
import os
import sys

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.core.exceptions import MTRLError
from src.services.phantom import write_phantoms
from src.storage.dataset import split_dataset
from src.utils.logger_config import get_logger

logger = get_logger('make_phantoms')


def main() -> int:
    parser = argparse.ArgumentParser(description='生成合成眼底图像')
    parser.add_argument('--output', required=True, help='输出目录')
    parser.add_argument('--count', type=int, default=40, help='图像数量')
    parser.add_argument('--size', type=int, default=96, help='边长（像素）')
    parser.add_argument('--seed', type=int, default=42, help='起始种子')
    parser.add_argument('--manifest', help='同时写出 7:3 划分清单 CSV')
    parser.add_argument('--split-seed', type=int, default=42, help='划分种子（与 degrade --seed 相同时划分一致）')
    args = parser.parse_args()

    try:
        paths = write_phantoms(args.output, args.count, size=args.size, seed=args.seed)
        if args.manifest:
            split_dataset(args.output, seed=args.split_seed).to_csv(args.manifest)
    except MTRLError as e:
        logger.error(f"[{e.error_code}] {e.message}")
        return 2
    print(f"已写出 {len(paths)} 张图像到 {args.output}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
