# -*- coding: utf-8 -*-
"""
可分裂的计数器型随机数流

每条流由 (主种子, 路径...) 唯一确定，底层为 numpy 的 Philox 计数器生成器。
路径元素可以是整数或字符串（字符串经 blake2b 摘要映射为 64 位整数），
不同路径的流互不相关，某条流的抽样次数不会影响其它流。
"""
import hashlib
from typing import Union

import numpy as np

PathPart = Union[int, str]

_MASK32 = 0xFFFFFFFF


def _words(value: int) -> list:
    """把任意非负整数拆成 32 位字（低位在前）"""
    if value < 0:
        value &= (1 << 64) - 1
    words = [value & _MASK32, (value >> 32) & _MASK32]
    value >>= 64
    while value:
        words.append(value & _MASK32)
        value >>= 32
    return words


def _part_to_int(part: PathPart) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part)
    digest = hashlib.blake2b(str(part).encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def derive_seed(seed: int, *path: PathPart) -> int:
    """由主种子和路径派生一个 63 位子种子"""
    return int(stream(seed, *path).integers(0, 2 ** 63 - 1, dtype=np.int64))


def stream(seed: int, *path: PathPart) -> np.random.Generator:
    """
    返回 (seed, *path) 对应的独立随机流

    Args:
        seed: 主种子（64 位）
        *path: 流的命名路径，如 ("param", "enc.0.dwc.depthwise.weight")

    Returns:
        np.random.Generator: Philox 计数器生成器
    """
    entropy = []
    for part in (seed, *path):
        entropy.extend(_words(_part_to_int(part)))
        # 分隔符，避免 (1, 23) 与 (12, 3) 之类的拼接碰撞
        entropy.append(len(entropy))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
