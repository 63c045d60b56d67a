"""
数值基础：张量、卷积、滤波、随机流与梯度检验
"""
