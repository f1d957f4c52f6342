"""
命令行入口：verify / train / bench / partition / report
"""

import argparse
import asyncio
from dataclasses import replace
from pathlib import Path
import sys
from typing import List, Optional

from loguru import logger

from cli.models import ErrorResponse, ExperimentConfig
from config import BENCH_CONFIG, get_output_root, get_verify_config
from core.batch_scheduler import read_graph_file
from core.exceptions import B2MAPOError, InputError, ResultIOError
from core.experiment_orchestrator import ExperimentOrchestrator, ExperimentPlan
from core.partitioners import PartitionerFactory
from core.result_aggregator import ResultAggregator, bench_directions
from core.utils import setup_logging, write_manifest
from core.verify_suite import run_suite, summarize_reports, write_bounds_csv

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def _output_dir(
    args: argparse.Namespace, command: str, configured: Optional[str] = None
) -> Path:
    """--output 优先，其次配置文件中的 output_dir，最后是输出根目录下的子目录"""
    if getattr(args, "output", None):
        return Path(args.output)
    if configured:
        return Path(configured)
    return get_output_root() / command


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config:
        return ExperimentConfig()
    return ExperimentConfig.from_ini(args.config)


def cmd_verify(args: argparse.Namespace) -> int:
    if args.scale <= 0:
        raise InputError(f"--scale 必须 > 0: {args.scale}")
    config = get_verify_config()
    for key in list(config):
        if key.endswith("_trials") or key.endswith("_chains") or key == "distill_seeds":
            config[key] = max(1, int(round(config[key] * args.scale)))

    reports = run_suite(config, seed=args.seed)
    out = _output_dir(args, "verify")
    write_bounds_csv(reports, out / "bounds.csv")
    write_manifest(out, "verify", {"seed": args.seed, "scale": args.scale, **config})

    for statement, entry in sorted(summarize_reports(reports).items()):
        status = "PASS" if entry["failures"] == 0 else "FAIL"
        print(
            f"{status} {statement:<32} {entry['checks']:>6} 次, "
            f"最小松弛 {entry['min_slack']:.3e}"
        )
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def _plan(
    config: ExperimentConfig, args: argparse.Namespace, command: str
) -> ExperimentPlan:
    base_dir = Path(args.config).parent if args.config else None
    game, truth = config.game.build(base_dir)
    experiment = config.experiment
    if getattr(args, "seeds", None):
        experiment = experiment.model_copy(update={"seeds": args.seeds})
    if getattr(args, "rounds", None):
        experiment = experiment.model_copy(update={"rounds": args.rounds})
    scheme = config.scheme.to_scheme_config(game.n_agents, experiment.oracle)
    return ExperimentPlan(
        game=game,
        scheme=scheme,
        seeds=list(experiment.seeds),
        rounds=experiment.rounds,
        output_dir=_output_dir(args, command, experiment.output_dir),
        init_scale=experiment.init_scale,
        encoder=experiment.build_encoder(),
        truth=truth,
        config_dump={
            "game": config.game.model_dump(),
            "scheme": config.scheme.model_dump(mode="json"),
            "experiment": experiment.model_dump(),
        },
    )


def cmd_train(args: argparse.Namespace) -> int:
    plan = _plan(_load_config(args), args, "train")
    orchestrator = ExperimentOrchestrator(args.log_level)
    results = asyncio.run(orchestrator.run_experiment(plan))
    for result in results:
        final = result.reports[-1]
        print(
            f"种子 {result.seed}: 最终 J_mc={final.j_mc:.6g}"
            + (f", J={final.j_after:.6g}" if final.j_after is not None else "")
            + f", 序列 {final.batch_sequence.to_text()}"
        )
    print(f"结果已写入 {plan.output_dir}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if not args.config:
        # 未给配置时使用依赖链博弈
        config.game.n_agents = BENCH_CONFIG["n_agents"]
    plan = _plan(config, args, "bench")
    bench_config = {}
    if args.rounds:
        bench_config["measured_rounds"] = args.rounds
    orchestrator = ExperimentOrchestrator(args.log_level, bench_config)
    records = orchestrator.bench(
        plan.game,
        replace(plan.scheme, oracle=False),
        plan.seeds[0],
        plan.output_dir,
        plan.encoder,
    )
    manifest_config = {**plan.config_dump, **orchestrator.bench_config}
    write_manifest(plan.output_dir, "bench", manifest_config)
    for record in records:
        print(
            f"{record.mode:<14} 批次 {record.batch_count:>3}  每轮 {record.train_time:.4g}秒  "
            f"决策 {record.decision_time_joint:.3g} / {record.decision_time_independent:.3g}秒"
        )
    for check in bench_directions(records):
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name:<14}{check.detail}")
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    n_agents, edges, weights = read_graph_file(args.graph)
    kwargs = {"weights": weights} if args.method == "layered" else {}
    partitioner = PartitionerFactory.create_partitioner(args.method, **kwargs)
    sequence = partitioner.partition(n_agents, edges)
    print(sequence.to_text())
    print(f"批次数: {len(sequence)}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    aggregator = ResultAggregator(args.directory)
    print(aggregator.render())
    return EXIT_OK


def _seed_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"种子应为逗号分隔的整数: {text}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="b2mapo", description="B2MAPO 实验与验证工具")
    parser.add_argument("--log-level", default="INFO", help="日志级别")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="数值检验全部理论陈述")
    verify.add_argument("--seed", type=int, default=0, help="主种子")
    verify.add_argument("--output", help="输出目录")
    verify.add_argument("--scale", type=float, default=1.0, help="试验次数缩放系数")
    verify.set_defaults(handler=cmd_verify)

    for name, handler, help_text in (
        ("train", cmd_train, "多种子训练并写出指标与曲线"),
        ("bench", cmd_bench, "三种方案的训练与决策计时"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("--config", help="INI 实验配置")
        command.add_argument("--output", help="输出目录")
        command.add_argument("--seeds", type=_seed_list, help="覆盖配置中的种子，如 0,1,2")
        command.add_argument("--rounds", type=int, help="覆盖轮数（bench 为计时轮数）")
        command.set_defaults(handler=handler)

    partition = sub.add_parser("partition", help="对依赖图文件求批次划分")
    partition.add_argument("graph", help="图文件")
    partition.add_argument(
        "--method", choices=("bruteforce", "greedy", "layered"), default="layered"
    )
    partition.set_defaults(handler=cmd_partition)

    report = sub.add_parser("report", help="汇总输出目录中的结果")
    report.add_argument("directory", help="输出目录")
    report.set_defaults(handler=cmd_report)
    return parser


def _fail(error: B2MAPOError) -> None:
    response = ErrorResponse(error=error.error_type, message=str(error))
    print(response.model_dump_json(), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        if getattr(args, "rounds", None) is not None and args.rounds < 1:
            raise InputError(f"--rounds 必须 ≥ 1: {args.rounds}")
        return args.handler(args)
    except (InputError, ResultIOError) as e:
        logger.error(f"{args.command} 失败: {e}")
        _fail(e)
        return EXIT_INPUT_ERROR
    except B2MAPOError as e:
        logger.error(f"{args.command} 运行出错: {e}")
        _fail(e)
        return EXIT_INPUT_ERROR
