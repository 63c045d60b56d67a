# -*- coding: utf-8 -*-
"""
装饰器模块

- log_operation：记录一次工作单元的开始、耗时与失败
- exit_code_on_error：把异常映射为命令行退出码
"""
import functools
import time
from typing import Callable

from ..core.exceptions import MTRLError, UsageError
from .logger_config import get_logger

logger = get_logger('decorators')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def log_operation(operation: str):
    """
    操作日志装饰器

    Args:
        operation: 操作名称，出现在日志中

    Returns:
        Callable: 装饰器函数
    """
    def decorator(f: Callable) -> Callable:
        @functools.wraps(f)
        def decorated_function(*args, **kwargs):
            start = time.perf_counter()
            logger.info(f"开始 {operation}")
            try:
                result = f(*args, **kwargs)
            except Exception as e:
                duration_ms = int((time.perf_counter() - start) * 1000)
                logger.error(f"{operation} 失败 ({duration_ms} ms): {e}")
                raise
            duration_ms = int((time.perf_counter() - start) * 1000)
            logger.info(f"完成 {operation} ({duration_ms} ms)")
            return result

        return decorated_function
    return decorator


def exit_code_on_error(f: Callable[..., int]) -> Callable[..., int]:
    """用法错误 -> 1，其它业务异常与文件错误 -> 2"""
    @functools.wraps(f)
    def decorated_function(*args, **kwargs) -> int:
        try:
            return f(*args, **kwargs)

        except UsageError as e:
            logger.error(f"[{e.error_code}] {e.message}")
            return EXIT_USAGE

        except MTRLError as e:
            logger.error(f"[{e.error_code}] {e.message}")
            if e.details:
                logger.debug(f"错误详情: {e.details}")
            return EXIT_RUNTIME

        except OSError as e:
            logger.error(f"文件错误: {e}")
            return EXIT_RUNTIME

    return decorated_function
