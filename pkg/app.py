# -*- coding: utf-8 -*-
"""
眼底图像增强工具 - 命令行入口

用法: python app.py <degrade|train|enhance|eval|params> [选项]
"""
import sys

from dotenv import load_dotenv

from src.api.cli import cli_main

# 加载环境变量
load_dotenv()


if __name__ == '__main__':
    sys.exit(cli_main(sys.argv[1:]))
