# -*- coding: utf-8 -*-
"""
命令行入口

子命令: degrade / train / enhance / eval / params
退出码: 0 成功，1 用法错误，2 运行错误
"""
import argparse
import json
from typing import List, Optional

from ..core.config import ModelConfig, load_model_config, load_train_config
from ..core.exceptions import UsageError, ValidationError
from ..models.mtrl_model import param_budget
from ..services.metrics import ScoreTable
from ..services.trainer import train
from ..services.workflows import (EVAL8, build_report, compare_with_baseline, degrade_directory,
                                  enhance_directory, evaluate_directories, parse_tests, write_report)
from ..utils.decorators import EXIT_OK, EXIT_USAGE, exit_code_on_error
from ..utils.logger_config import get_logger, set_log_level

logger = get_logger('cli')

PROG = 'mtrl'


class CLIArgumentParser(argparse.ArgumentParser):
    """用法错误抛出 UsageError，而不是直接退出进程"""

    def error(self, message: str):
        token = None
        if ':' in message and 'unrecognized arguments' in message:
            token = message.split(':', 1)[1].strip()
        elif 'invalid choice' in message:
            token = message.split("'")[1] if message.count("'") >= 2 else None
        raise UsageError(f"{self.prog}: {message}", token=token)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-v', '--verbose', action='store_true', help='输出调试日志')
    parser.add_argument('--threads', type=int, default=None, help='并行线程数（默认读取 MTRL_THREADS）')


def build_parser() -> CLIArgumentParser:
    parser = CLIArgumentParser(prog=PROG, description='眼底图像增强工具')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('degrade', help='批量合成低质量图像')
    p.add_argument('--input', required=True, help='高质量图像目录')
    p.add_argument('--output', required=True, help='输出目录')
    p.add_argument('--seed', required=True, type=int, help='主种子')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--preset', choices=[EVAL8], help='评估预设：每张图 8 种退化')
    group.add_argument('--spec', help='退化规格 JSON 文件')
    p.add_argument('--manifest', help='输出清单 CSV')
    _add_common(p)

    p = sub.add_parser('train', help='自监督训练')
    p.add_argument('--data', required=True, help='高质量图像目录')
    p.add_argument('--model-config', required=True, help='模型配置 JSON')
    p.add_argument('--train-config', required=True, help='训练配置 JSON')
    p.add_argument('--out', required=True, help='检查点输出路径')
    p.add_argument('--resume', help='续训的检查点')
    p.add_argument('--manifest', help='数据清单 CSV，只使用 train 划分')
    p.add_argument('--loss-log', help='损失日志 CSV（默认 <out>.losses.csv）')
    _add_common(p)

    p = sub.add_parser('enhance', help='批量增强')
    p.add_argument('--ckpt', required=True, help='检查点')
    p.add_argument('--input', required=True, help='低质量图像目录')
    p.add_argument('--output', required=True, help='输出目录')
    p.add_argument('--save-hf', action='store_true', help='同时保存高频分支输出 <stem>_hf.png')
    _add_common(p)

    p = sub.add_parser('eval', help='计算 SSIM/PSNR 与显著性检验')
    p.add_argument('--pred', required=True, help='待评估图像目录')
    p.add_argument('--ref', required=True, help='参考图像目录')
    p.add_argument('--out', required=True, help='评分表 CSV')
    p.add_argument('--method', default='pred', help='评分表中的方法名')
    p.add_argument('--baseline', help='基线评分表 CSV')
    p.add_argument('--tests', default='t,wilcoxon', help='检验列表，逗号分隔：t,wilcoxon')
    p.add_argument('--report', help='JSON 评估报告')
    p.add_argument('--ckpt', help='写入报告参数预算所用的检查点')
    _add_common(p)

    p = sub.add_parser('params', help='统计模型参数量')
    p.add_argument('--model-config', help='模型配置 JSON（缺省为参考规模配置）')
    _add_common(p)
    return parser


def _run_degrade(args) -> int:
    degrade_directory(args.input, args.output, args.seed, preset=args.preset, spec_path=args.spec,
                      manifest_path=args.manifest, threads=args.threads)
    return EXIT_OK


def _run_train(args) -> int:
    result = train(args.data, load_model_config(args.model_config), load_train_config(args.train_config),
                   args.out, resume=args.resume, manifest=args.manifest, loss_log=args.loss_log,
                   threads=args.threads)
    print(f"checkpoint: {result.checkpoint}")
    print(f"loss log:   {result.loss_log}")
    return EXIT_OK


def _run_enhance(args) -> int:
    enhance_directory(args.ckpt, args.input, args.output, save_hf=args.save_hf, threads=args.threads)
    return EXIT_OK


def _run_eval(args) -> int:
    try:
        tests = parse_tests(args.tests)
    except ValidationError as e:
        raise UsageError(e.message, token=args.tests)
    table = evaluate_directories(args.pred, args.ref, method=args.method, threads=args.threads)
    table.to_csv(args.out)
    comparisons = None
    if args.baseline:
        comparisons = compare_with_baseline(table, ScoreTable.from_csv(args.baseline))
        for comp in comparisons:
            if comp.result is not None:
                r = comp.result
                print(f"{comp.metric}: n={comp.n} Δ={r.mean_difference:+.4f} "
                      f"t_p={r.t_p:.3g} wilcoxon_p={r.wilcoxon_p:.3g} {r.stars}")
    summary = table.summary()
    for row in summary.to_dict('records'):
        print(f"{row['method']}: SSIM {row['ssim']}  PSNR {row['psnr']}  (n={row['n']})")
    if args.report:
        write_report(build_report(table, comparisons, tests, args.ckpt), args.report)
    return EXIT_OK


def _run_params(args) -> int:
    cfg = load_model_config(args.model_config) if args.model_config else ModelConfig.reference_scale()
    print(json.dumps(param_budget(cfg), ensure_ascii=False, indent=2))
    return EXIT_OK


COMMANDS = {
    'degrade': _run_degrade,
    'train': _run_train,
    'enhance': _run_enhance,
    'eval': _run_eval,
    'params': _run_params,
}


@exit_code_on_error
def _dispatch(argv: Optional[List[str]]) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_log_level('DEBUG')
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads 必须为正整数", token=str(args.threads))
    return COMMANDS[args.command](args)


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    命令行主函数

    Args:
        argv: 参数列表，缺省使用 sys.argv[1:]

    Returns:
        int: 退出码
    """
    try:
        return _dispatch(argv)
    except SystemExit as e:
        # --help / --version
        return e.code if isinstance(e.code, int) else (EXIT_OK if e.code is None else EXIT_USAGE)
