"""
存储层：图像、检查点、数据清单
"""
