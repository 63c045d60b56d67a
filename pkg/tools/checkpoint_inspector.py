#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
检查点检查工具
校验 MTRL 检查点文件的完整性与一致性，并打印配置和张量清单

使用方法：
python tools/checkpoint_inspector.py model.ckpt [--tensors] [--report report.json]
"""
import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.core.exceptions import CheckpointError
from src.models.mtrl_model import MTRLModel, param_budget, param_count
from src.storage.checkpoint import load_checkpoint


class CheckpointInspector:
    """检查点检查器"""

    def __init__(self, path: str):
        self.path = Path(path)
        self.test_results = []
        self.checkpoint = None

    def log_test(self, test_name: str, success: bool, message: str = ""):
        """记录检查结果"""
        status = "✅ 通过" if success else "❌ 失败"
        self.test_results.append({
            "test": test_name,
            "status": status,
            "success": success,
            "message": message,
            "timestamp": datetime.now().isoformat()
        })
        print(f"{status} {test_name}: {message}")

    def test_file_exists(self) -> bool:
        exists = self.path.is_file()
        self.log_test("文件存在性检查", exists, f"{self.path} ({self.path.stat().st_size} 字节)"
                      if exists else f"{self.path} 不存在")
        return exists

    def test_decode(self) -> bool:
        """魔数、版本、CRC 与配置解析"""
        try:
            self.checkpoint = load_checkpoint(self.path)
        except CheckpointError as e:
            self.log_test("格式与校验和", False, e.message)
            return False
        self.log_test("格式与校验和", True, f"{len(self.checkpoint.store)} 个参数张量")
        return True

    def test_parameter_shapes(self) -> bool:
        """张量集合与按配置新建的模型一致"""
        ckpt = self.checkpoint
        expected = MTRLModel(ckpt.model_config).store
        missing = sorted(set(expected.names()) - set(ckpt.store.names()))
        extra = sorted(set(ckpt.store.names()) - set(expected.names()))
        wrong = [name for name in expected.names()
                 if name in ckpt.store and ckpt.store[name].shape != expected[name].shape]
        ok = not (missing or extra or wrong)
        if ok:
            message = f"{param_count(ckpt.model_config)} 个参数，与模型配置一致"
        else:
            message = f"缺少 {missing[:3]}，多余 {extra[:3]}，形状不符 {wrong[:3]}"
        self.log_test("参数形状检查", ok, message)
        return ok

    def test_finite(self) -> bool:
        bad = [name for name, value in self.checkpoint.store.items() if not np.all(np.isfinite(value))]
        self.log_test("数值有限性检查", not bad, "全部为有限值" if not bad else f"含 NaN/Inf: {bad[:5]}")
        return not bad

    def test_optimizer_state(self) -> bool:
        ckpt = self.checkpoint
        if ckpt.opt_state is None:
            self.log_test("优化器状态检查", True, "无优化器状态（仅推理检查点）")
            return True
        names = set(ckpt.store.names())
        ok = set(ckpt.opt_state.m) <= names and set(ckpt.opt_state.m) == set(ckpt.opt_state.v)
        self.log_test("优化器状态检查", ok,
                      f"AdamW 步数 {ckpt.opt_state.step}, 轮次 {ckpt.epoch}, 全局步数 {ckpt.step}")
        return ok

    def print_summary(self, show_tensors: bool):
        ckpt = self.checkpoint
        print("\n模型配置:")
        print(json.dumps(ckpt.model_config.to_dict(), ensure_ascii=False, indent=2))
        if ckpt.train_config is not None:
            print("训练配置:")
            print(json.dumps(ckpt.train_config.to_dict(), ensure_ascii=False, indent=2))
        budget = param_budget(ckpt.model_config)
        print(f"参数量: {budget['param_count']} (参考规模比 {budget['ratio_to_reference']:.3f})")
        if show_tensors:
            df = pd.DataFrame([{'name': name, 'dtype': str(value.dtype), 'shape': 'x'.join(map(str, value.shape)),
                                'size': int(value.size), 'abs_max': float(np.max(np.abs(value))) if value.size else 0.0}
                               for name, value in ckpt.store.items()])
            print(df.to_string(index=False))

    def run(self, show_tensors: bool = False) -> bool:
        print("=" * 60)
        print("MTRL 检查点检查工具")
        print("=" * 60)
        if not self.test_file_exists() or not self.test_decode():
            return False
        checks = [self.test_parameter_shapes(), self.test_finite(), self.test_optimizer_state()]
        self.print_summary(show_tensors)
        return all(checks)

    def save_report(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({"checkpoint": str(self.path), "results": self.test_results}, f, ensure_ascii=False, indent=2)
        print(f"\n检查报告已保存: {path}")


def main() -> int:
    parser = argparse.ArgumentParser(description='MTRL 检查点检查工具')
    parser.add_argument('checkpoint', help='检查点路径')
    parser.add_argument('--tensors', action='store_true', help='打印张量清单')
    parser.add_argument('--report', help='JSON 报告输出路径')
    args = parser.parse_args()

    inspector = CheckpointInspector(args.checkpoint)
    passed = inspector.run(show_tensors=args.tensors)
    if args.report:
        inspector.save_report(args.report)
    print("\n✅ 检查通过" if passed else "\n❌ 检查未通过")
    return 0 if passed else 1


if __name__ == '__main__':
    sys.exit(main())
