# -*- coding: utf-8 -*-
"""
合成眼底图像

生成带圆形视野、视盘、黄斑暗区和分叉血管的类眼底图像，
用于桌面规模实验与测试。完全由种子决定。
"""
from pathlib import Path
from typing import List, Union

import numpy as np
from scipy.special import expit

from ..core.exceptions import ValidationError
from ..numerics.filters import gaussian_blur
from ..numerics.prng import stream
from ..storage.image_io import save_image
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

BACKGROUND_RGB = np.array([0.78, 0.36, 0.16])
DISC_RGB = np.array([0.20, 0.28, 0.22])
VESSEL_RGB = np.array([0.38, 0.26, 0.10])
MIN_SIZE = 16


def _vessel_points(rng: np.random.Generator, start: np.ndarray, angle: float, steps: int,
                   step: float, depth: int = 0) -> List[np.ndarray]:
    """随机游走的血管中心线，途中最多分叉一次"""
    segments = []
    pos = start.copy()
    points = [pos.copy()]
    branch_at = int(rng.integers(steps // 3, max(steps // 3 + 1, 2 * steps // 3)))
    for s in range(steps):
        angle += rng.normal(0.0, 0.18)
        pos = pos + step * np.array([np.sin(angle), np.cos(angle)])
        points.append(pos.copy())
        if depth == 0 and s == branch_at:
            side = 1.0 if rng.random() < 0.5 else -1.0
            segments.extend(_vessel_points(rng, pos, angle + side * rng.uniform(0.4, 0.8),
                                           steps // 2, step, depth + 1))
    segments.insert(0, np.array(points))
    return segments


def make_phantom(seed: int, size: int = 64, vessels: int = 8) -> np.ndarray:
    """
    生成一张合成眼底图

    Args:
        seed: 种子
        size: 边长（像素）
        vessels: 从视盘出发的主血管数

    Returns:
        np.ndarray: (1, 3, size, size) float32，值域 [0, 1]
    """
    if size < MIN_SIZE:
        raise ValidationError(f"合成图像边长至少为 {MIN_SIZE}", field='size', value=size)
    rng = stream(seed, 'phantom')
    coords = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing='ij')
    r = np.sqrt(yy ** 2 + xx ** 2)

    texture = gaussian_blur(rng.normal(0.0, 1.0, size=(1, 1, size, size)), sigma=size / 16.0)[0, 0]
    texture = texture / (np.abs(texture).max() + 1e-12)
    shade = (1.0 - 0.35 * r ** 2) * (1.0 + 0.06 * texture)
    image = BACKGROUND_RGB[:, None, None] * shade[None]

    side = 1.0 if rng.random() < 0.5 else -1.0
    disc_center = np.array([rng.uniform(-0.1, 0.1), side * rng.uniform(0.3, 0.4)])
    disc_radius = rng.uniform(0.10, 0.14)
    d2 = (yy - disc_center[0]) ** 2 + (xx - disc_center[1]) ** 2
    disc = np.exp(-d2 / (2.0 * disc_radius ** 2))
    image = image + DISC_RGB[:, None, None] * disc[None]

    macula_center = np.array([rng.uniform(-0.05, 0.05), -side * rng.uniform(0.05, 0.15)])
    m2 = (yy - macula_center[0]) ** 2 + (xx - macula_center[1]) ** 2
    image = image * (1.0 - 0.25 * np.exp(-m2 / (2.0 * 0.12 ** 2)))[None]

    mask = np.zeros((size, size))
    grid = np.stack([yy, xx], axis=-1)
    for v in range(vessels):
        angle = 2.0 * np.pi * (v + rng.random()) / vessels
        width = rng.uniform(0.012, 0.025)
        for k, line in enumerate(_vessel_points(rng, disc_center, angle, steps=28, step=0.045)):
            w = width if k == 0 else 0.6 * width
            diff = grid[:, :, None, :] - line[None, None, :, :]
            dist2 = np.min(np.sum(diff ** 2, axis=-1), axis=-1)
            mask = np.maximum(mask, np.exp(-dist2 / (2.0 * w ** 2)))
    image = image - VESSEL_RGB[:, None, None] * mask[None]

    fov = expit((0.92 - r) * 60.0)
    image = np.clip(image * fov[None], 0.0, 1.0)
    return image[None].astype(np.float32)


def write_phantoms(directory: Union[str, Path], count: int, size: int = 64, seed: int = 42) -> List[Path]:
    """把 count 张合成图像写成 phantom_XXX.png"""
    directory = Path(directory)
    paths = []
    for i in range(count):
        paths.append(save_image(make_phantom(seed + i, size), directory / f"phantom_{i:03d}.png"))
    logger.info(f"已生成 {count} 张合成眼底图像: {directory}")
    return paths
