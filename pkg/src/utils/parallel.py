# -*- coding: utf-8 -*-
"""
按文件并行的线程池

结果顺序与输入顺序一致；线程数为 1 时直接串行执行。
numpy/scipy 的大部分内核会释放 GIL，线程池足以覆盖逐文件的批处理。
"""
import concurrent.futures
from typing import Callable, Iterable, List, Optional, TypeVar

from ..core.config import RuntimeSettings

T = TypeVar('T')
R = TypeVar('R')


def worker_count(threads: Optional[int] = None) -> int:
    """显式参数优先，否则读取 MTRL_THREADS（默认 1）"""
    if threads is not None:
        return max(1, int(threads))
    return RuntimeSettings().threads


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    有序并行映射

    Args:
        fn: 作用于每个元素的函数（必须只写自己的输出）
        items: 输入序列
        threads: 线程数，缺省读取环境

    Returns:
        List: 与输入同序的结果；任一任务抛出的异常原样向上传播
    """
    items = list(items)
    workers = min(worker_count(threads), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
