# -*- coding: utf-8 -*-
"""
接口层（命令行）
"""
from .cli import build_parser, cli_main

__all__ = [
    'build_parser',
    'cli_main'
]
