# -*- coding: utf-8 -*-
"""
日志配置模块

所有模块共用同一个控制台处理器（stdout）。文件日志写入单个按天命名的轮转文件
mtrl_<日期>.log，仅在 MTRL_ENV=production 或 ENABLE_FILE_LOGGING=true 时于首次取用日志记录器时创建。

本模块只读取环境变量，不依赖 src.core.config（后者自身也通过这里获取日志记录器）。
"""

import inspect
import logging
import os
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from typing import Dict, Optional

CONSOLE_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
FILE_FORMAT = '%(asctime)s [%(levelname)s] %(name)s:%(lineno)d [%(threadName)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

LOG_FILE_MAX_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5


def parse_level(value: Optional[str], default: int = logging.INFO) -> int:
    """把 'debug' / 'INFO' 等级别名解析为 logging 常量，无法识别时返回 default"""
    if not value:
        return default
    level = logging.getLevelName(value.strip().upper())
    return level if isinstance(level, int) else default


def file_logging_requested() -> bool:
    if os.environ.get('MTRL_ENV', '').lower() == 'production':
        return True
    return os.environ.get('ENABLE_FILE_LOGGING', '').lower() in ('1', 'true', 'yes')


class LoggerConfig:
    """
    日志记录器注册表

    记录器级别统一由 level 决定，处理器本身不过滤，因此 set_level 只需更新已登记的记录器。
    记录器保持向上传播，测试中的 caplog 依赖这一点。
    """

    def __init__(self, level: Optional[int] = None, log_dir: Optional[str] = None):
        self.level = level if level is not None else parse_level(os.environ.get('LOG_LEVEL'))
        self.log_dir = log_dir or os.environ.get('MTRL_LOG_DIR', 'logs')
        self._loggers: Dict[str, logging.Logger] = {}
        self._console: Optional[logging.Handler] = None
        self._file: Optional[logging.Handler] = None
        self._file_unavailable = False

    def _console_handler(self) -> logging.Handler:
        if self._console is None:
            handler = logging.StreamHandler(sys.stdout)
            handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
            self._console = handler
        return self._console

    def _file_handler(self) -> Optional[logging.Handler]:
        if self._file is not None or self._file_unavailable or not file_logging_requested():
            return self._file
        path = os.path.join(self.log_dir, f"mtrl_{datetime.now():%Y-%m-%d}.log")
        try:
            os.makedirs(self.log_dir, exist_ok=True)
            handler = RotatingFileHandler(path, maxBytes=LOG_FILE_MAX_BYTES,
                                          backupCount=LOG_FILE_BACKUPS, encoding='utf-8')
        except OSError as e:
            # 只报告一次，之后仅输出到控制台
            self._file_unavailable = True
            sys.stderr.write(f"无法写入日志文件 {path}，仅输出到控制台: {e}\n")
            return None
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        self._file = handler
        return handler

    def get_logger(self, name: str) -> logging.Logger:
        """返回已配置的日志记录器，同名记录器只配置一次"""
        logger = self._loggers.get(name)
        if logger is not None:
            return logger

        logger = logging.getLogger(name)
        logger.setLevel(self.level)
        attached = set(map(id, logger.handlers))
        for handler in (self._console_handler(), self._file_handler()):
            if handler is not None and id(handler) not in attached:
                logger.addHandler(handler)
        logger.propagate = True

        self._loggers[name] = logger
        return logger

    def set_level(self, level: str) -> bool:
        """调整全部记录器的级别；级别名无法识别时保持不变并返回 False"""
        resolved = parse_level(level, default=-1)
        if resolved < 0:
            return False
        self.level = resolved
        for logger in self._loggers.values():
            logger.setLevel(resolved)
        return True


_registry = LoggerConfig()


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    获取日志记录器

    Args:
        name: 记录器名称；省略时取调用方模块的 __name__

    Returns:
        logging.Logger: 已挂好处理器的记录器
    """
    if name is None:
        caller = inspect.currentframe().f_back
        name = caller.f_globals.get('__name__', 'mtrl') if caller else 'mtrl'
    return _registry.get_logger(name)


def set_log_level(level: str) -> bool:
    return _registry.set_level(level)
