"""
业务服务：退化、损失、优化、训练、评估
"""
