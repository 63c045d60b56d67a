# -*- coding: utf-8 -*-
"""
检查点二进制格式（全部多字节整数为小端）

    magic      5 字节 b"MTRL1"
    version    u16
    crc32      u32，覆盖其后全部字节
    config     u32 长度 + UTF-8 JSON（model / train / state）
    count      u32
    每个张量:  u32 名称长度 + UTF-8 名称, u8 dtype(0=f32, 1=f64), u8 rank, rank 个 u32 维度, 原始小端数据

张量按名称字典序写出；优化器一阶/二阶矩以 "optim/m/<name>"、"optim/v/<name>" 命名。
"""
import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from ..core.config import ModelConfig, TrainConfig
from ..core.exceptions import CheckpointError
from ..numerics.tensor import ParamStore
from ..services.optimizer import OptState
from ..utils.logger_config import get_logger

logger = get_logger(__name__)

MAGIC = b'MTRL1'
VERSION = 1
HEADER = struct.Struct('<5sHI')
DTYPE_CODES = {np.dtype('<f4'): 0, np.dtype('<f8'): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}
MOMENT_PREFIXES = ('optim/m/', 'optim/v/')


@dataclass
class Checkpoint:
    """检查点内容；可解包为 (store, model_config)"""
    store: ParamStore
    model_config: ModelConfig
    train_config: Optional[TrainConfig] = None
    opt_state: Optional[OptState] = None
    epoch: int = 0
    step: int = 0

    def __iter__(self) -> Iterator:
        return iter((self.store, self.model_config))


def _config_blob(model_config: ModelConfig, train_config: Optional[TrainConfig], state: Dict) -> bytes:
    payload = {
        'model': model_config.to_dict(),
        'train': train_config.to_dict() if train_config is not None else None,
        'state': state,
    }
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(',', ':')).encode('utf-8')


def _pack_tensor(name: str, value: np.ndarray) -> bytes:
    dtype = np.dtype(value.dtype).newbyteorder('<')
    if dtype not in DTYPE_CODES:
        raise CheckpointError(f"张量 {name} 的数据类型 {value.dtype} 不能写入检查点")
    encoded = name.encode('utf-8')
    parts = [struct.pack('<I', len(encoded)), encoded, struct.pack('<BB', DTYPE_CODES[dtype], value.ndim)]
    parts.append(struct.pack(f'<{value.ndim}I', *value.shape))
    parts.append(np.ascontiguousarray(value, dtype=dtype).tobytes())
    return b''.join(parts)


def encode_checkpoint(store: ParamStore, model_config: ModelConfig, train_config: Optional[TrainConfig] = None,
                      opt_state: Optional[OptState] = None, epoch: int = 0, step: int = 0) -> bytes:
    """序列化为字节串（同样的内容总是得到同样的字节）"""
    tensors: Dict[str, np.ndarray] = dict(store.items())
    state = {'epoch': int(epoch), 'step': int(step), 'optimizer_step': 0}
    if opt_state is not None:
        state['optimizer_step'] = int(opt_state.step)
        for name in opt_state.m:
            tensors[MOMENT_PREFIXES[0] + name] = opt_state.m[name]
            tensors[MOMENT_PREFIXES[1] + name] = opt_state.v[name]

    body = [_config_blob(model_config, train_config, state)]
    body.insert(0, struct.pack('<I', len(body[0])))
    body.append(struct.pack('<I', len(tensors)))
    body.extend(_pack_tensor(name, tensors[name]) for name in sorted(tensors))
    body = b''.join(body)
    return HEADER.pack(MAGIC, VERSION, zlib.crc32(body)) + body


class _Reader:
    """带边界检查的顺序读取器"""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        remaining = len(self.data) - self.pos
        if n > remaining:
            raise CheckpointError(f"检查点被截断：读取{what}需要 {n} 字节，实际只剩 {remaining} 字节",
                                  path=self.path, expected=n, actual=remaining)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, path: str = '<memory>') -> Checkpoint:
    """从字节串解析检查点并校验结构与 CRC"""
    if len(data) < HEADER.size or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"不是检查点文件: {path}", path=path)
    _, version, crc = HEADER.unpack_from(data)
    if version != VERSION:
        raise CheckpointError(f"不支持的检查点版本 {version}（当前支持 {VERSION}）: {path}", path=path)

    reader = _Reader(data, path)
    reader.pos = HEADER.size
    try:
        (blob_len,) = reader.unpack('<I', '配置长度')
        meta = json.loads(reader.take(blob_len, '配置').decode('utf-8'))
        (count,) = reader.unpack('<I', '张量数量')
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = reader.unpack('<I', '名称长度')
            name = reader.take(name_len, '张量名称').decode('utf-8')
            code, rank = reader.unpack('<BB', '张量头')
            if code not in CODE_DTYPES:
                raise CheckpointError(f"未知的数据类型代码 {code}（张量 {name}）", path=path)
            shape = reader.unpack(f'<{rank}I', '张量维度')
            dtype = CODE_DTYPES[code]
            nbytes = math.prod(shape) * dtype.itemsize
            payload = reader.take(nbytes, f'张量 {name} 的数据')
            tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点内容损坏 {path}: {e}", path=path)

    if reader.pos != len(data):
        raise CheckpointError(f"检查点末尾有 {len(data) - reader.pos} 字节多余数据: {path}",
                              path=path, expected=reader.pos, actual=len(data))
    if zlib.crc32(data[HEADER.size:]) != crc:
        raise CheckpointError(f"检查点校验和不匹配，文件已损坏: {path}", path=path)

    try:
        model_config = ModelConfig.model_validate(meta['model'])
        train_config = TrainConfig.model_validate(meta['train']) if meta.get('train') else None
    except (KeyError, TypeError, PydanticValidationError) as e:
        raise CheckpointError(f"检查点中的配置无效 {path}: {e}", path=path)
    state = meta.get('state') or {}

    params = {k: v for k, v in tensors.items() if not k.startswith(MOMENT_PREFIXES)}
    dtype = next(iter(params.values())).dtype if params else np.dtype(np.float32)
    store = ParamStore(seed=model_config.seed, dtype=dtype)
    for name in sorted(params):
        store[name] = params[name]

    opt_state = None
    m_keys = [k for k in tensors if k.startswith(MOMENT_PREFIXES[0])]
    if m_keys or state.get('optimizer_step'):
        opt_state = OptState(step=int(state.get('optimizer_step', 0)))
        for key in sorted(m_keys):
            name = key[len(MOMENT_PREFIXES[0]):]
            opt_state.m[name] = tensors[key]
            opt_state.v[name] = tensors[MOMENT_PREFIXES[1] + name]

    return Checkpoint(store=store, model_config=model_config, train_config=train_config, opt_state=opt_state,
                      epoch=int(state.get('epoch', 0)), step=int(state.get('step', 0)))


def save_checkpoint(store: ParamStore, model_config: ModelConfig, path: Union[str, Path], *,
                    train_config: Optional[TrainConfig] = None, opt_state: Optional[OptState] = None,
                    epoch: int = 0, step: int = 0) -> Path:
    """
    写出检查点

    Args:
        store: 参数仓库
        model_config: 模型配置
        path: 目标文件
        train_config: 训练配置（可选）
        opt_state: AdamW 状态（可选，用于断点续训）
        epoch, step: 已完成的轮数与步数

    Returns:
        Path: 写出的文件路径
    """
    path = Path(path)
    data = encode_checkpoint(store, model_config, train_config, opt_state, epoch, step)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise CheckpointError(f"写入检查点失败 {path}: {e}", path=str(path))
    logger.info(f"检查点已保存: {path} ({len(store)} 个参数张量, {len(data)} 字节)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """读取并校验检查点"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"无法读取检查点 {path}: {e}", path=str(path))
    checkpoint = decode_checkpoint(data, str(path))
    logger.debug(f"检查点已加载: {path}, epoch={checkpoint.epoch}, step={checkpoint.step}")
    return checkpoint
