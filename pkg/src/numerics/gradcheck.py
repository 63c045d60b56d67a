# -*- coding: utf-8 -*-
"""
有限差分梯度检查

把模块输出与固定随机系数做内积得到标量损失，分别用解析反向传播和有限差分
求梯度，返回逐元素最大相对误差 max(|a - n| / max(|a|, |n|, floor))。

order=2 为中心差分，order=4 为五点差分（由步长 eps 与 2·eps 的两个中心差分外推）。
设置 kink_tol 时，两个中心差分不一致的坐标视为落在 ReLU / 取最大值的折点附近，不参与比较。
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import GradientError, ShapeError
from ..utils.logger_config import get_logger
from .prng import stream

logger = get_logger(__name__)

Inputs = Union[np.ndarray, Sequence[np.ndarray]]


def _as_tuple(value) -> Tuple:
    return tuple(value) if isinstance(value, (tuple, list)) else (value,)


def _projected_loss(outputs: Tuple[np.ndarray, ...], coeffs: Tuple[np.ndarray, ...]) -> float:
    return float(sum(np.sum(o.astype(np.float64) * c) for o, c in zip(outputs, coeffs)))


def _sample_indices(size: int, max_checks: Optional[int], rng) -> np.ndarray:
    if max_checks is None or size <= max_checks:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_checks, replace=False))


def _relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


FD_ORDERS = (2, 4)


def grad_check(block, inputs: Inputs, eps: float = 1e-3, max_checks: Optional[int] = None,
               abs_floor: float = 1e-8, seed: int = 0, check_inputs: bool = True, order: int = 2,
               kink_tol: Optional[float] = None) -> float:
    """
    比较解析梯度与有限差分梯度

    Args:
        block: DifferentiableBlock，forward(*inputs) / backward(grad)
        inputs: 单个输入张量或输入张量序列
        eps: 差分步长
        max_checks: 每个张量最多抽查的元素数，None 表示全部检查
        abs_floor: 相对误差分母的下限
        seed: 投影系数与抽样所用的随机种子
        check_inputs: 是否同时检查对输入的梯度
        order: 差分阶数，2（中心差分）或 4（五点差分）
        kink_tol: 步长 eps 与 2·eps 的中心差分相对差超过该值时视为折点并跳过，None 表示不跳过

    Returns:
        float: 最大相对误差

    Raises:
        GradientError: 解析梯度含非有限值，或全部抽查坐标都被判为折点
    """
    if eps <= 0:
        raise ValueError(f"eps 必须 > 0，当前为 {eps}")
    if order not in FD_ORDERS:
        raise ValueError(f"order 只能是 2 或 4，当前为 {order}")

    xs = tuple(np.array(x, copy=True) for x in _as_tuple(inputs))
    store = block.store
    rng = stream(seed, 'grad_check')

    block.train(True)
    outputs = _as_tuple(block.forward(*xs))
    coeffs = tuple(rng.standard_normal(o.shape) for o in outputs)

    store.zero_grad()
    dys = tuple(c.astype(o.dtype) for c, o in zip(coeffs, outputs))
    input_grads = _as_tuple(block.backward(dys if len(dys) > 1 else dys[0]))
    if len(input_grads) != len(xs):
        raise ShapeError(f"backward 返回了 {len(input_grads)} 个输入梯度，期望 {len(xs)} 个")

    names = block.param_names()
    for name in names:
        if not np.all(np.isfinite(store.grad(name))):
            raise GradientError(f"参数 {name} 的解析梯度含有非有限值", parameter=name)
    for k, g in enumerate(input_grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise GradientError(f"输入 {k} 的解析梯度含有非有限值", parameter=f"input[{k}]")

    def loss() -> float:
        return _projected_loss(_as_tuple(block.forward(*xs)), coeffs)

    def loss_at(flat: np.ndarray, idx: int, original, offset: float) -> float:
        flat[idx] = original + offset * eps
        return loss()

    worst = 0.0
    worst_name = None
    checked = 0
    skipped = 0
    wide = order == 4 or kink_tol is not None

    def check(target: np.ndarray, analytic: np.ndarray, label: str) -> None:
        nonlocal worst, worst_name, checked, skipped
        flat = target.reshape(-1)
        grad_flat = analytic.reshape(-1)
        for idx in _sample_indices(flat.size, max_checks, rng):
            original = flat[idx]
            near = (loss_at(flat, idx, original, 1.0) - loss_at(flat, idx, original, -1.0)) / (2.0 * eps)
            if wide:
                far = (loss_at(flat, idx, original, 2.0) - loss_at(flat, idx, original, -2.0)) / (4.0 * eps)
            flat[idx] = original
            # 两种步长的中心差分不一致：差分区间内有折点（ReLU / 取最大值）
            if kink_tol is not None and abs(far - near) > kink_tol * max(abs(near), abs(far), abs_floor):
                skipped += 1
                continue
            numeric = (4.0 * near - far) / 3.0 if order == 4 else near
            checked += 1
            err = _relative_error(float(grad_flat[idx]), numeric, abs_floor)
            if err > worst:
                worst, worst_name = err, f"{label}[{idx}]"

    # 解析梯度先复制，后续前向会覆盖缓存
    param_grads = {name: store.grad(name).copy() for name in names}
    for name in names:
        check(store[name], param_grads[name], name)
    if check_inputs:
        for k, (x, g) in enumerate(zip(xs, input_grads)):
            if g is not None:
                check(x, np.asarray(g), f"input[{k}]")

    block.train(False)
    if skipped and not checked:
        raise GradientError(f"{type(block).__name__} 的 {skipped} 个抽查坐标全部落在折点附近，无法比较梯度",
                            parameter=type(block).__name__)
    logger.debug(f"梯度检查完成: {type(block).__name__} 最大相对误差 {worst:.3e} ({worst_name}), "
                 f"比较 {checked} 个坐标，跳过折点 {skipped} 个")
    return worst
