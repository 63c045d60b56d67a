# -*- coding: utf-8 -*-
"""
图像读写

读取：8/16 位 PNG、8 位 JPEG，灰度复制为 3 通道，像素映射到 [0, 1]。
写出：只写 8 位 PNG，v·255 四舍五入（.5 向上进位）并截断到 [0, 255]。
所有张量形状为 (1, C, H, W)，float32。
"""
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core.exceptions import DatasetError, ImageFormatError
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

READ_SUFFIXES = ('.png', '.jpg', '.jpeg')
WRITE_SUFFIXES = ('.png',)

# Pillow 模式 -> (转换目标模式, 满量程)
_EIGHT_BIT_MODES = {
    'L': ('L', 255.0),
    '1': ('L', 255.0),
    'LA': ('L', 255.0),
    'P': ('RGB', 255.0),
    'RGB': ('RGB', 255.0),
    'RGBA': ('RGB', 255.0),
    'CMYK': ('RGB', 255.0),
    'YCbCr': ('RGB', 255.0),
}
_SIXTEEN_BIT_MODES = ('I;16', 'I;16L', 'I;16B', 'I')


def load_image(path: Union[str, Path]) -> np.ndarray:
    """
    读取图像为 (1, 3, H, W) 的 float32 张量

    Args:
        path: 图像路径

    Returns:
        np.ndarray: 值域 [0, 1]
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in _EIGHT_BIT_MODES:
                target, scale = _EIGHT_BIT_MODES[mode]
                pixels = np.asarray(img.convert(target), dtype=np.float64)
            elif mode in _SIXTEEN_BIT_MODES:
                scale = 65535.0
                pixels = np.asarray(img, dtype=np.float64)
                if pixels.min() < 0 or pixels.max() > 65535:
                    raise ImageFormatError(f"不支持的位深（像素超出 16 位范围）: {path}", path=str(path))
            else:
                raise ImageFormatError(f"不支持的图像模式/位深 {mode}: {path}", path=str(path))
    except ImageFormatError:
        raise
    except FileNotFoundError:
        raise ImageFormatError(f"图像文件不存在: {path}", path=str(path))
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"无法读取图像 {path}: {e}", path=str(path))

    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    tensor = (pixels / scale).transpose(2, 0, 1)[None].astype(np.float32)
    logger.debug(f"读取图像 {path.name}: {mode} {tensor.shape[2]}x{tensor.shape[3]}")
    return tensor


def _as_hwc(tensor: np.ndarray) -> np.ndarray:
    x = np.asarray(tensor)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ImageFormatError(f"一次只能保存一张图像，当前批大小为 {x.shape[0]}")
        x = x[0]
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ImageFormatError(f"图像张量必须为 1 或 3 通道，当前形状 {tuple(np.shape(tensor))}")
    return x.transpose(1, 2, 0)


def quantize(tensor: np.ndarray) -> np.ndarray:
    """[0, 1] -> uint8：v·255 四舍五入（.5 向上进位）后截断到 [0, 255]"""
    return np.clip(np.floor(np.asarray(tensor, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(tensor: np.ndarray, path: Union[str, Path]) -> Path:
    """把 (1, C, H, W) 张量保存为 8 位 PNG"""
    path = Path(path)
    if path.suffix.lower() not in WRITE_SUFFIXES:
        raise ImageFormatError(f"只支持写出 PNG: {path}", path=str(path))
    pixels = quantize(_as_hwc(tensor))
    if pixels.shape[2] == 1:
        img = Image.fromarray(pixels[:, :, 0])
    else:
        img = Image.fromarray(pixels)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        img.save(path, format='PNG')
    except OSError as e:
        raise ImageFormatError(f"保存图像失败 {path}: {e}", path=str(path))
    return path


def resize_image(tensor: np.ndarray, size: int) -> np.ndarray:
    """双线性缩放到 size×size（逐通道，32 位浮点精度）"""
    if tensor.shape[2] == size and tensor.shape[3] == size:
        return tensor.astype(np.float32, copy=True)
    out = np.empty(tensor.shape[:2] + (size, size), dtype=np.float32)
    for n in range(tensor.shape[0]):
        for c in range(tensor.shape[1]):
            plane = Image.fromarray(np.ascontiguousarray(tensor[n, c], dtype=np.float32))
            out[n, c] = np.asarray(plane.resize((size, size), Image.BILINEAR), dtype=np.float32)
    return np.clip(out, 0.0, 1.0)


def list_images(directory: Union[str, Path]) -> List[Path]:
    """目录下可读取的图像（按文件名排序，不递归）"""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"图像目录不存在: {directory}", missing=[str(directory)])
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in READ_SUFFIXES)
