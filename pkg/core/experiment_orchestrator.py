"""
实验协调器 - 多种子训练、计时基准与结果文件输出
"""

import asyncio
from dataclasses import dataclass, field, replace
from pathlib import Path
import time
from typing import Any, Dict, List, Optional

from loguru import logger
import numpy as np

from config import get_bench_config
from core.b2mapo_optimizer import B2MAPOTrainer, SchemeConfig
from core.batch_scheduler import dependence_auc
from core.exact_oracle import get_table_cache
from core.exceptions import InputError
from core.game_core import MarkovGame
from core.models import BenchRecord, GroundTruthDependence, RoundReport, SchemeMode
from core.policies import ObservationEncoder, PolicySet
from core.utils import derive_rng, setup_logging, write_csv, write_curve, write_manifest

METRICS_HEADER = (
    "round",
    "j_exact",
    "j_mc",
    "batch_count",
    "alpha",
    "kl",
    "sequence",
    "auc",
)
TIMINGS_HEADER = ("round", "update_time", "batch_times")
BENCH_HEADER = (
    "mode",
    "n_agents",
    "batch_count",
    "train_time",
    "decision_time_joint",
    "decision_time_independent",
)
BENCH_MODES = (SchemeMode.MAPPO, SchemeMode.B2MAPO_DAG, SchemeMode.A2PO)


@dataclass
class ExperimentPlan:
    """一次实验：同一博弈与方案下的若干种子"""

    game: MarkovGame
    scheme: SchemeConfig
    seeds: List[int]
    rounds: int
    output_dir: Path
    init_scale: float = 0.0
    encoder: Optional[ObservationEncoder] = None
    truth: Optional[GroundTruthDependence] = None
    scheduler_config: Optional[dict] = None
    config_dump: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise InputError("至少需要一个种子")
        if len(set(self.seeds)) != len(self.seeds):
            raise InputError(f"种子重复: {self.seeds}")
        if self.rounds < 1:
            raise InputError(f"轮数必须 ≥ 1: {self.rounds}")
        self.output_dir = Path(self.output_dir)


@dataclass
class SeedResult:
    seed: int
    reports: List[RoundReport]
    files: List[Path]


def _auc(trainer: B2MAPOTrainer, truth: Optional[GroundTruthDependence]) -> str:
    decision = trainer.pending_decision
    if truth is None or decision is None:
        return ""
    try:
        return format(dependence_auc(decision.graph, truth), ".12g")
    except InputError:
        # 真实依赖全是边或全是非边时 AUC 无定义
        return ""


def _metrics_row(report: RoundReport, auc: str) -> list:
    return [
        report.round_index,
        "" if report.j_after is None else report.j_after,
        report.j_mc,
        report.batch_count,
        ";".join(format(a, ".12g") for a in report.alphas),
        "" if report.distill_kl is None else report.distill_kl,
        report.batch_sequence.to_text(),
        auc,
    ]


class ExperimentOrchestrator:
    """实验协调器"""

    def __init__(self, log_level: str = "INFO", bench_config: Optional[dict] = None):
        setup_logging(log_level)
        self.bench_config = {**get_bench_config(), **(bench_config or {})}
        logger.info("实验协调器初始化完成")

    async def run_experiment(self, plan: ExperimentPlan) -> List[SeedResult]:
        """各种子并发运行，每个种子写自己的文件；全部结束后再抛出第一个失败"""
        start_time = time.monotonic()
        logger.info(
            f"开始实验: 方案 {plan.scheme.mode.value}, 种子 {plan.seeds}, "
            f"{plan.rounds} 轮, 输出 {plan.output_dir}"
        )
        plan.output_dir.mkdir(parents=True, exist_ok=True)

        loop = asyncio.get_running_loop()
        tasks = [
            loop.run_in_executor(None, self._run_seed, plan, seed)
            for seed in plan.seeds
        ]
        outcomes = await asyncio.gather(*tasks, return_exceptions=True)

        results: List[SeedResult] = []
        failures: List[BaseException] = []
        for seed, outcome in zip(plan.seeds, outcomes):
            if isinstance(outcome, BaseException):
                logger.error(f"种子 {seed} 运行失败: {outcome}")
                failures.append(outcome)
            else:
                results.append(outcome)
        if failures:
            raise failures[0]

        write_manifest(plan.output_dir, "train", plan.config_dump)
        stats = get_table_cache().get_stats()
        logger.info(
            f"实验完成，耗时 {time.monotonic() - start_time:.2f}秒，"
            f"精确表缓存命中率 {stats['hit_rate']}%"
        )
        return results

    def _run_seed(self, plan: ExperimentPlan, seed: int) -> SeedResult:
        trainer = B2MAPOTrainer(
            plan.game,
            plan.scheme,
            seed=seed,
            encoder=plan.encoder,
            init_scale=plan.init_scale,
            scheduler_config=plan.scheduler_config,
        )
        reports: List[RoundReport] = []
        metrics, timings = [], []
        for _ in range(plan.rounds):
            report = trainer.run_round()
            reports.append(report)
            metrics.append(_metrics_row(report, _auc(trainer, plan.truth)))
            timings.append(
                [
                    report.round_index,
                    report.update_time,
                    ";".join(format(t, ".12g") for t in report.batch_times),
                ]
            )

        out = plan.output_dir
        files = [
            write_csv(out / f"metrics_seed{seed}.csv", METRICS_HEADER, metrics),
            write_csv(out / f"timings_seed{seed}.csv", TIMINGS_HEADER, timings),
            write_curve(
                out / f"curve_j_mc_seed{seed}.dat",
                ("round", "j_mc"),
                [(r.round_index, r.j_mc) for r in reports],
            ),
        ]
        if plan.scheme.oracle:
            files.append(
                write_curve(
                    out / f"curve_j_exact_seed{seed}.dat",
                    ("round", "j_exact"),
                    [(r.round_index, r.j_after) for r in reports],
                )
            )
        logger.info(f"种子 {seed} 完成: 最终 J_mc={reports[-1].j_mc:.6g}")
        return SeedResult(seed, reports, files)

    def bench(
        self,
        game: MarkovGame,
        scheme: SchemeConfig,
        seed: int,
        output_dir: Path,
        encoder: Optional[ObservationEncoder] = None,
    ) -> List[BenchRecord]:
        """同一博弈与种子上依次测量三种方案的每轮耗时与每步决策耗时"""
        warmup = int(self.bench_config["warmup_rounds"])
        measured = int(self.bench_config["measured_rounds"])
        steps = int(self.bench_config["decision_steps"])
        if measured < 1 or warmup < 0 or steps < 1:
            raise InputError("基准轮数与决策步数必须 ≥ 1，预热轮数必须 ≥ 0")

        records = []
        for mode in BENCH_MODES:
            config = replace(scheme, mode=mode, fixed_sequence=None, oracle=False)
            trainer = B2MAPOTrainer(game, config, seed=seed, encoder=encoder)
            durations = []
            for index in range(1, warmup + measured + 1):
                started = time.monotonic()
                report = trainer.run_round()
                elapsed = time.monotonic() - started
                if index > warmup:
                    durations.append(elapsed)
            joint, independent = self._decision_times(
                game, trainer.policy_set, seed, steps
            )
            record = BenchRecord(
                mode=mode.value,
                n_agents=game.n_agents,
                batch_count=report.batch_count,
                train_time=float(np.median(durations)),
                decision_time_joint=joint,
                decision_time_independent=independent,
            )
            logger.info(
                f"基准 {mode.value}: 批次数 {record.batch_count}, "
                f"每轮 {record.train_time:.4g}秒, 决策 {joint:.3g}/{independent:.3g}秒"
            )
            records.append(record)

        write_csv(
            Path(output_dir) / "bench.csv",
            BENCH_HEADER,
            [
                [
                    r.mode,
                    r.n_agents,
                    r.batch_count,
                    r.train_time,
                    r.decision_time_joint,
                    r.decision_time_independent,
                ]
                for r in records
            ],
        )
        return records

    @staticmethod
    def _decision_times(
        game: MarkovGame, policy_set: PolicySet, seed: int, steps: int
    ):
        """条件策略按批次顺序采样与独立策略并行采样的每步耗时"""
        rng = derive_rng(seed, 0xBE7C)
        states = rng.integers(game.n_states, size=steps)
        keys = [
            [
                policy_set.encoder.encode(game, i, int(s), ())
                for i in range(game.n_agents)
            ]
            for s in states
        ]
        conditioned = [p.probs_table() for p in policy_set.conditioned]
        independent = [p.probs_table() for p in policy_set.independent]

        started = time.monotonic()
        for obs in keys:
            policy_set.sample(obs, rng, conditioned)
        joint = (time.monotonic() - started) / steps

        started = time.monotonic()
        for obs in keys:
            policy_set.sample_independent(obs, rng, independent)
        return joint, (time.monotonic() - started) / steps
