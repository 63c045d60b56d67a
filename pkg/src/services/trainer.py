# -*- coding: utf-8 -*-
"""
自监督训练

每一步：取一批高质量图像 P_g，逐张用派生种子退化得到 D(P_g)，前向得到 (P_h, P_r)，
计算 L_t = λ·L_h + (1 - λ)·L_r，反向传播并执行 AdamW。
每轮的打乱顺序由 (seed, "shuffle", epoch) 决定，第 i 张图的退化种子由
(seed, "degrade", epoch, i) 决定，因此同种子的两次训练得到完全相同的损失日志。
"""
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.config import ModelConfig, TrainConfig
from ..core.exceptions import ConfigurationError, DatasetError, TrainingError
from ..models.mtrl_model import MTRLModel
from ..numerics.prng import derive_seed, stream
from ..numerics.tensor import ParamStore
from ..storage.checkpoint import load_checkpoint, save_checkpoint
from ..storage.dataset import DatasetManifest
from ..storage.image_io import list_images, load_image, resize_image
from ..utils.logger_config import get_logger
from ..utils.parallel import parallel_map
from .degradation import degrade, resolve_spec
from .losses import highpass_target, loss_h_with_grad, loss_r_with_grad, loss_total
from .optimizer import OptState, lr_schedule, optimizer_step

logger = get_logger(__name__)

LOSS_COLUMNS = ['epoch', 'step', 'L_h', 'L_r', 'L_t', 'lr']


@dataclass
class LossRecord:
    epoch: int
    step: int
    L_h: float
    L_r: float
    L_t: float
    lr: float


@dataclass
class TrainResult:
    """训练结果"""
    checkpoint: Path
    loss_log: Path
    records: List[LossRecord] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.records[0].L_t if self.records else math.nan

    @property
    def final_loss(self) -> float:
        return self.records[-1].L_t if self.records else math.nan


class Trainer:
    """
    训练器

    Args:
        model_config: 模型配置
        train_config: 训练配置
        store: 已有参数（断点续训），缺省按模型种子初始化
        opt_state: 已有优化器状态
        epoch, step: 已完成的轮数与全局步数
        threads: 退化预处理的线程数（不影响结果）
    """

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, store: Optional[ParamStore] = None,
                 opt_state: Optional[OptState] = None, epoch: int = 0, step: int = 0,
                 threads: Optional[int] = None):
        self.model_config = model_config
        self.train_config = train_config
        self.model = MTRLModel(model_config, store)
        self.store = self.model.store
        self.opt_state = opt_state or OptState()
        self.epoch = epoch
        self.step = step
        self.threads = threads
        self.records: List[LossRecord] = []

    def compute_loss(self, p_h: np.ndarray, p_r: np.ndarray, target: np.ndarray
                     ) -> Tuple[Tuple[float, float, float], np.ndarray, np.ndarray]:
        """
        计算三项损失以及对 P_h、P_r 的梯度

        Returns:
            ((L_h, L_r, L_t), dL_t/dP_h, dL_t/dP_r)
        """
        lam = self.model_config.loss_lambda
        lh, g_h = loss_h_with_grad(p_h, highpass_target(target, self.model_config.highpass_sigma))
        lr, g_r = loss_r_with_grad(p_r, target)
        lt = loss_total(lh, lr, lam)
        return (lh, lr, lt), (lam * g_h).astype(p_h.dtype), ((1.0 - lam) * g_r).astype(p_r.dtype)

    def evaluate_loss(self, degraded: np.ndarray, clean: np.ndarray) -> float:
        """不更新参数的 L_t"""
        self.model.train(False)
        p_h, p_r = self.model(degraded)
        return self.compute_loss(p_h, p_r, clean)[0][2]

    def train_step(self, degraded: np.ndarray, clean: np.ndarray, lr: float) -> Tuple[float, float, float]:
        """单步前向、反向与 AdamW 更新"""
        self.model.train(True)
        self.store.zero_grad()
        p_h, p_r = self.model(degraded)
        (lh, lr_loss, lt), d_ph, d_pr = self.compute_loss(p_h, p_r, clean)
        if not math.isfinite(lt):
            raise TrainingError(f"第 {self.step} 步损失为 NaN/Inf，训练中止", step=self.step)
        self.model.backward((d_ph, d_pr))
        optimizer_step(self.store, self.opt_state, lr, self.train_config)
        self.model.train(False)
        self.step += 1
        return lh, lr_loss, lt

    def degrade_batch(self, clean: np.ndarray, indices: np.ndarray, epoch: int) -> np.ndarray:
        """按 (epoch, 图像索引) 派生种子逐张退化"""
        cfg = self.train_config

        def one(k: int) -> np.ndarray:
            spec = resolve_spec(cfg.degradation, derive_seed(cfg.seed, 'degrade', epoch, int(indices[k])))
            return degrade(clean[k:k + 1], spec)

        return np.concatenate(parallel_map(one, range(len(indices)), self.threads), axis=0)

    def steps_per_epoch(self, n: int) -> int:
        return math.ceil(n / self.train_config.batch_size)

    def _done(self) -> bool:
        max_steps = self.train_config.max_steps
        return max_steps is not None and self.step >= max_steps

    def fit(self, images: np.ndarray, checkpoint_path: Optional[Union[str, Path]] = None) -> List[LossRecord]:
        """
        在给定的高质量图像上训练至 epochs 或 max_steps

        Args:
            images: (N, 3, S, S) float32
            checkpoint_path: 每 save_every 轮及结束时写出检查点

        Returns:
            List[LossRecord]: 本次调用新增的损失记录
        """
        cfg = self.train_config
        n = images.shape[0]
        if n == 0:
            raise DatasetError("训练集为空")
        spe = self.steps_per_epoch(n)
        new_records: List[LossRecord] = []

        while self.epoch < cfg.epochs and not self._done():
            epoch = self.epoch
            lr = lr_schedule(epoch, cfg)
            order = stream(cfg.seed, 'shuffle', epoch).permutation(n)
            # 从中途停下的检查点恢复时跳过本轮已完成的批次
            first_batch = max(0, self.step - epoch * spe)
            for b in range(first_batch, spe):
                if self._done():
                    break
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                clean = images[idx]
                degraded = self.degrade_batch(clean, idx, epoch)
                lh, lr_loss, lt = self.train_step(degraded, clean, lr)
                record = LossRecord(epoch=epoch, step=self.step, L_h=lh, L_r=lr_loss, L_t=lt, lr=lr)
                new_records.append(record)
                logger.debug(f"epoch {epoch} step {self.step}: L_h={lh:.6f} L_r={lr_loss:.6f} L_t={lt:.6f}")
            else:
                self.epoch += 1
                logger.info(f"第 {epoch + 1}/{cfg.epochs} 轮完成, lr={lr:.3g}, L_t={new_records[-1].L_t:.6f}"
                            if new_records else f"第 {epoch + 1}/{cfg.epochs} 轮完成")
                if checkpoint_path is not None and self.epoch % cfg.save_every == 0:
                    self.save(checkpoint_path)

        self.records.extend(new_records)
        return new_records

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(self.store, self.model_config, path, train_config=self.train_config,
                               opt_state=self.opt_state, epoch=self.epoch, step=self.step)


def write_loss_log(records: List[LossRecord], path: Union[str, Path], append: bool = False) -> Path:
    """损失日志 CSV：epoch, step, L_h, L_r, L_t, lr"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([asdict(r) for r in records], columns=LOSS_COLUMNS)
    if append and path.exists():
        df.to_csv(path, mode='a', header=False, index=False, encoding='utf-8')
    else:
        df.to_csv(path, index=False, encoding='utf-8')
    return path


def read_loss_log(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, encoding='utf-8')


def load_training_images(paths: List[Path], size: int) -> np.ndarray:
    """读取并双线性缩放到 size×size"""
    if not paths:
        raise DatasetError("训练集为空，至少需要 1 张可读取的图像")
    return np.concatenate([resize_image(load_image(p), size) for p in paths], axis=0)


def train(data_dir: Union[str, Path], model_config: ModelConfig, train_config: TrainConfig,
          out: Union[str, Path], resume: Optional[Union[str, Path]] = None,
          manifest: Optional[Union[str, Path]] = None, loss_log: Optional[Union[str, Path]] = None,
          threads: Optional[int] = None) -> TrainResult:
    """
    训练入口

    Args:
        data_dir: 高质量图像目录
        model_config: 模型配置
        train_config: 训练配置
        out: 检查点输出路径
        resume: 续训的检查点
        manifest: 数据清单，只使用其中的 train 划分
        loss_log: 损失日志路径，缺省为 <out>.losses.csv
        threads: 退化预处理线程数

    Returns:
        TrainResult
    """
    out = Path(out)
    loss_log = Path(loss_log) if loss_log else out.with_name(out.stem + '.losses.csv')
    if manifest is not None:
        paths = DatasetManifest.from_csv(manifest).paths('train')
    else:
        paths = list_images(data_dir)
    images = load_training_images(paths, train_config.image_size)
    logger.info(f"训练数据: {len(paths)} 张图像, {train_config.image_size}x{train_config.image_size}")

    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.model_config != model_config:
            raise ConfigurationError("续训检查点的模型配置与当前配置不一致", config_key='model')
        trainer = Trainer(model_config, train_config, store=ckpt.store, opt_state=ckpt.opt_state,
                          epoch=ckpt.epoch, step=ckpt.step, threads=threads)
        logger.info(f"从检查点续训: {resume} (epoch={ckpt.epoch}, step={ckpt.step})")
    else:
        trainer = Trainer(model_config, train_config, threads=threads)

    try:
        trainer.fit(images, checkpoint_path=out)
    finally:
        write_loss_log(trainer.records, loss_log, append=resume is not None)
    trainer.save(out)

    result = TrainResult(checkpoint=out, loss_log=loss_log, records=trainer.records)
    logger.info(f"训练结束: {trainer.step} 步, 初始 L_t={result.initial_loss:.6f}, 最终 L_t={result.final_loss:.6f}")
    return result
