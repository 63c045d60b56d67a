# -*- coding: utf-8 -*-
"""
集成测试包 - 命令行端到端流程

退化 -> 训练 -> 增强 -> 评估，全部在临时目录中以微型配置运行。
"""
