# -*- coding: utf-8 -*-
"""
眼底图像增强工具测试包
"""
