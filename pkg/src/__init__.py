"""
MTRL 眼底图像增强源代码包
"""
