# -*- coding: utf-8 -*-
"""
合成退化流程

由高质量眼底图生成低质量图：光照（亮度/对比度/饱和度）、圆形斑点、各向异性高斯模糊、
白内障光晕。每个操作从 (主种子, 操作序号, 批内序号) 派生独立的随机流，
因此在末尾追加操作不会扰动已有操作的抽样；同一 (图像, 规格, 种子) 的输出逐比特一致。
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator

from ..core.exceptions import DegradationError, ShapeError
from ..numerics.filters import anisotropic_gaussian_kernel, filter2d, gaussian_blur
from ..numerics.prng import stream
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

Range = Tuple[float, float]
RangeLike = Union[float, Sequence[float]]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

DEFAULT_RANGES: Dict[str, Dict[str, Range]] = {
    'light': {
        'brightness': (0.5, 1.4),
        'contrast': (0.6, 1.4),
        'saturation': (0.5, 1.5),
    },
    'spots': {
        'count': (5, 20),
        'radius': (0.01, 0.05),
        'opacity': (0.3, 0.8),
    },
    'blur': {
        'sigma_major': (0.5, 3.0),
        'theta': (0.0, math.pi),
    },
    'cataract': {
        'sigma': (1.0, 3.0),
        'gamma': (1.0, 3.0),
        'strength': (0.2, 0.5),
        'tint': (0.7, 0.9),
        'contrast': (0.9, 1.1),
        'brightness': (0.9, 1.1),
        'balance': (0.95, 1.05),
    },
}

OP_NAMES = tuple(DEFAULT_RANGES)

# 评估用的 8 种固定组合：4 个单操作 + 4 个双操作
EVAL8_PRESET: Tuple[Tuple[str, ...], ...] = (
    ('light',), ('spots',), ('blur',), ('cataract',),
    ('light', 'blur'), ('light', 'spots'), ('blur', 'cataract'), ('spots', 'cataract'),
)


def _as_range(value: RangeLike, key: str) -> Range:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise DegradationError(f"参数 {key} 的区间下界大于上界: [{lo}, {hi}]", op=key)
    return (lo, hi)


def _uniform(rng: np.random.Generator, bounds: Range) -> float:
    lo, hi = bounds
    return lo + (hi - lo) * rng.random()


class DegradationOp(BaseModel):
    """单个退化操作：名称 + 覆盖默认取值区间的参数"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str
    params: Dict[str, Union[float, Tuple[float, float]]] = Field(default_factory=dict)

    def ranges(self) -> Dict[str, Range]:
        if self.name not in DEFAULT_RANGES:
            raise DegradationError(f"未知的退化操作: {self.name}", op=self.name)
        defaults = DEFAULT_RANGES[self.name]
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise DegradationError(f"退化操作 {self.name} 不支持参数: {', '.join(unknown)}", op=self.name)
        merged = dict(defaults)
        merged.update({k: _as_range(v, k) for k, v in self.params.items()})
        return merged


class DegradationSpec(BaseModel):
    """有序退化操作列表 + 主种子；空列表即恒等变换"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    ops: List[DegradationOp] = Field(default_factory=list)
    seed: int = 0

    @field_validator('ops', mode='before')
    @classmethod
    def _expand_names(cls, value):
        # 允许 ["light", {"name": "blur", ...}] 这样的简写
        if isinstance(value, (list, tuple)):
            return [{'name': v} if isinstance(v, str) else v for v in value]
        return value

    @classmethod
    def of(cls, *names: str, seed: int = 0, **params: Dict[str, RangeLike]) -> 'DegradationSpec':
        """按名称构造，params 以操作名为键覆盖参数区间"""
        return cls(ops=[{'name': n, 'params': params.get(n, {})} for n in names], seed=seed)

    @classmethod
    def from_dict(cls, data: Dict) -> 'DegradationSpec':
        try:
            spec = cls.model_validate(data)
        except PydanticValidationError as e:
            raise DegradationError(f"退化规格无效: {e}")
        spec.validate_ops()
        return spec

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'DegradationSpec':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DegradationError(f"无法读取退化规格 {path}: {e}")
        return cls.from_dict(data)

    def with_seed(self, seed: int) -> 'DegradationSpec':
        return self.model_copy(update={'seed': int(seed)})

    def validate_ops(self) -> None:
        for op in self.ops:
            op.ranges()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), ensure_ascii=False, sort_keys=True)


# ---------------------------------------------------------------------------
# 基础操作
# ---------------------------------------------------------------------------

def _check_image(x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError("退化操作需要 (N, 3, H, W) 图像", x.shape)


def _clamp(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0).astype(np.float32, copy=False)


def adjust_light(image: np.ndarray, brightness: float, contrast: float, saturation: float) -> np.ndarray:
    """
    亮度、对比度、饱和度调整（按此顺序），结果截断到 [0, 1]

    对比度以每张图的均值为中心；饱和度在亮度灰度图与原图之间线性插值。
    因子恰为 1 时跳过对应步骤，保证恒等情形逐比特不变。
    """
    _check_image(image)
    x = image * np.float32(brightness)
    if contrast != 1.0:
        mean = x.mean(axis=(1, 2, 3), keepdims=True)
        x = (x - mean) * np.float32(contrast) + mean
    if saturation != 1.0:
        gray = np.tensordot(LUMA_WEIGHTS.astype(x.dtype), x, axes=([0], [1]))[:, None]
        x = gray + (x - gray) * np.float32(saturation)
    return _clamp(x)


@dataclass(frozen=True)
class Spot:
    """单个斑点：整数像素中心、半径（像素）、极性 ±1、不透明度"""
    cy: int
    cx: int
    radius: float
    polarity: float
    opacity: float


def draw_spots(rng: np.random.Generator, height: int, width: int, ranges: Dict[str, Range]) -> List[Spot]:
    """按固定顺序抽取斑点参数；测试可用同一随机流重放"""
    lo, hi = ranges['count']
    count = int(rng.integers(int(lo), int(hi) + 1))
    spots = []
    for _ in range(count):
        cy = int(rng.integers(0, height))
        cx = int(rng.integers(0, width))
        radius = min(height, width) * _uniform(rng, ranges['radius'])
        polarity = 1.0 if rng.random() < 0.5 else -1.0
        opacity = _uniform(rng, ranges['opacity'])
        spots.append(Spot(cy, cx, radius, polarity, opacity))
    return spots


def add_spots(image: np.ndarray, rng: np.random.Generator, ranges: Dict[str, Range] = None) -> np.ndarray:
    """
    随机圆形斑点：高斯衰减圆盘，随机明暗极性与不透明度，叠加后截断

    斑点中心处的像素变化量恰为 polarity × opacity（截断前）。
    """
    _check_image(image)
    ranges = ranges or DEFAULT_RANGES['spots']
    h, w = image.shape[2:]
    spots = draw_spots(rng, h, w, ranges)
    yy, xx = np.mgrid[0:h, 0:w]
    delta = np.zeros((h, w), dtype=np.float64)
    for s in spots:
        rho = max(s.radius / 2.0, 1e-6)
        d2 = (yy - s.cy) ** 2 + (xx - s.cx) ** 2
        delta += s.polarity * s.opacity * np.exp(-d2 / (2.0 * rho * rho))
    return _clamp(image + delta.astype(np.float32))


def gaussian_blur_deg(image: np.ndarray, rng: np.random.Generator, ranges: Dict[str, Range] = None) -> np.ndarray:
    """
    各向异性高斯模糊，模拟对焦偏差

    σ_major ∈ 区间，σ_minor ∈ [区间下界, σ_major]，方向 θ ∈ [0, π)，核长 2·ceil(3σ_major)+1。
    """
    _check_image(image)
    ranges = ranges or DEFAULT_RANGES['blur']
    sigma_major = _uniform(rng, ranges['sigma_major'])
    low = min(ranges['sigma_major'][0], sigma_major)
    sigma_minor = low + (sigma_major - low) * rng.random()
    theta = _uniform(rng, ranges['theta'])
    kernel = anisotropic_gaussian_kernel(sigma_major, sigma_minor, theta)
    return _clamp(filter2d(image, kernel))


def radial_map(height: int, width: int, gamma: float) -> np.ndarray:
    """以图像中心为圆心的径向图 clamp(1 - r/r_max, 0, 1)^γ，r_max 为中心到角点距离"""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.mgrid[0:height, 0:width]
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    r_max = math.sqrt(cy * cy + cx * cx) or 1.0
    return np.clip(1.0 - r / r_max, 0.0, 1.0) ** gamma


def cataract(image: np.ndarray, rng: np.random.Generator, ranges: Dict[str, Range] = None) -> np.ndarray:
    """
    白内障光晕

    全局高斯模糊 → 中心加权的暖灰光晕混合 I·(1 - βm) + h·βm →
    对比度/亮度微调与逐通道色彩平衡 → 截断。
    """
    _check_image(image)
    ranges = ranges or DEFAULT_RANGES['cataract']
    sigma = _uniform(rng, ranges['sigma'])
    gamma = _uniform(rng, ranges['gamma'])
    beta = _uniform(rng, ranges['strength'])
    tint = np.array([_uniform(rng, ranges['tint']) for _ in range(3)])
    contrast = _uniform(rng, ranges['contrast'])
    brightness = _uniform(rng, ranges['brightness'])
    balance = np.array([_uniform(rng, ranges['balance']) for _ in range(3)])

    x = image
    if sigma > 1e-6:
        x = gaussian_blur(x, sigma)
    h, w = x.shape[2:]
    m = (beta * radial_map(h, w, gamma)).astype(np.float32)
    x = x * (1.0 - m) + tint.astype(np.float32).reshape(1, 3, 1, 1) * m
    if contrast != 1.0:
        mean = x.mean(axis=(1, 2, 3), keepdims=True)
        x = (x - mean) * np.float32(contrast) + mean
    x = x * np.float32(brightness) * balance.astype(np.float32).reshape(1, 3, 1, 1)
    return _clamp(x)


def _light_op(x: np.ndarray, rng: np.random.Generator, ranges: Dict[str, Range]) -> np.ndarray:
    b = _uniform(rng, ranges['brightness'])
    c = _uniform(rng, ranges['contrast'])
    s = _uniform(rng, ranges['saturation'])
    return adjust_light(x, b, c, s)


OPERATIONS: Dict[str, Callable[[np.ndarray, np.random.Generator, Dict[str, Range]], np.ndarray]] = {
    'light': _light_op,
    'spots': add_spots,
    'blur': gaussian_blur_deg,
    'cataract': cataract,
}


def degrade(image: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """
    按规格依次施加退化操作

    Args:
        image: (N, 3, H, W)，值域 [0, 1]
        spec: 退化规格

    Returns:
        np.ndarray: float32，值域 [0, 1]
    """
    _check_image(image)
    plan = [(op.name, op.ranges()) for op in spec.ops]
    image = image.astype(np.float32, copy=False)
    if not plan:
        return image.copy()
    items = []
    for n in range(image.shape[0]):
        x = image[n:n + 1]
        for index, (name, ranges) in enumerate(plan):
            x = OPERATIONS[name](x, stream(spec.seed, index, n), ranges)
        items.append(x)
    return np.concatenate(items, axis=0)


def eval8_specs(seed: int) -> List[DegradationSpec]:
    """评估预设：8 个固定组合，各自使用从主种子派生的种子"""
    return [DegradationSpec.of(*names, seed=int(stream(seed, 'eval8', k).integers(0, 2 ** 62)))
            for k, names in enumerate(EVAL8_PRESET)]


def random_spec(seed: int) -> DegradationSpec:
    """随机组合：非空子集、随机顺序"""
    rng = stream(seed, 'combination')
    k = int(rng.integers(1, len(OP_NAMES) + 1))
    order = rng.permutation(len(OP_NAMES))[:k]
    return DegradationSpec.of(*(OP_NAMES[i] for i in order), seed=seed)


def resolve_spec(setting: Union[str, Dict, DegradationSpec], seed: int) -> DegradationSpec:
    """把训练配置中的退化设置解析为规格：'random' 预设或内联规格"""
    if isinstance(setting, DegradationSpec):
        return setting.with_seed(seed)
    if isinstance(setting, str):
        if setting == 'random':
            return random_spec(seed)
        if setting in OP_NAMES:
            return DegradationSpec.of(setting, seed=seed)
        raise DegradationError(f"未知的退化预设: {setting}", op=setting)
    return DegradationSpec.from_dict(setting).with_seed(seed)
