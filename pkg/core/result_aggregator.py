"""
结果聚合器
"""

from pathlib import Path
import re
from typing import Dict, List, Optional, Sequence, Union

from loguru import logger
import numpy as np

from .exceptions import InputError, ResultIOError
from .models import BenchRecord, DirectionCheck
from .utils import format_number, read_csv

METRIC_COLUMNS = ("j_exact", "j_mc", "batch_count", "auc")
BOUNDS_FILE = "bounds.csv"
BENCH_FILE = "bench.csv"

_SEED_PATTERN = re.compile(r"metrics_seed(-?\d+)\.csv$")
DECISION_RATIO = 2.0


def bench_directions(records: Sequence[BenchRecord]) -> List[DirectionCheck]:
    """每轮耗时 mappo ≤ b2mapo-dag ≤ a2po；π_ind 每步决策耗时不超过 mappo 的 2 倍"""
    by_mode = {record.mode: record for record in records}
    missing = {"mappo", "b2mapo-dag", "a2po"} - set(by_mode)
    if missing:
        raise InputError(f"计时基准缺少方案: {', '.join(sorted(missing))}")
    mappo, dag, a2po = by_mode["mappo"], by_mode["b2mapo-dag"], by_mode["a2po"]
    independent = dag.decision_time_independent
    return [
        DirectionCheck(
            "train_time",
            mappo.train_time <= dag.train_time <= a2po.train_time,
            f"mappo {mappo.train_time:.4g} ≤ b2mapo-dag {dag.train_time:.4g} "
            f"≤ a2po {a2po.train_time:.4g}",
        ),
        DirectionCheck(
            "decision_time",
            independent <= DECISION_RATIO * mappo.decision_time_joint,
            f"π_ind {independent:.3g} ≤ {DECISION_RATIO:g} × mappo "
            f"{mappo.decision_time_joint:.3g}",
        ),
    ]


def _bench_record(row: dict) -> BenchRecord:
    return BenchRecord(
        mode=row["mode"],
        n_agents=int(row["n_agents"]),
        batch_count=int(row["batch_count"]),
        train_time=float(row["train_time"]),
        decision_time_joint=float(row["decision_time_joint"]),
        decision_time_independent=float(row["decision_time_independent"]),
    )


class ResultAggregator:
    """把输出目录里的 CSV 汇总成中位数与四分位距"""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ResultIOError(f"输出目录不存在: {self.directory}")
        self.metrics = self._load_metrics()
        self.bounds = self._load_optional(BOUNDS_FILE)
        self.bench = self._load_optional(BENCH_FILE)
        if not self.metrics and self.bounds is None and self.bench is None:
            raise ResultIOError(
                f"{self.directory} 中缺少结果文件: metrics_seed<N>.csv, "
                f"{BOUNDS_FILE}, {BENCH_FILE}"
            )

    def _load_metrics(self) -> Dict[int, List[dict]]:
        runs = {}
        for path in sorted(self.directory.glob("metrics_seed*.csv")):
            match = _SEED_PATTERN.search(path.name)
            if not match:
                continue
            rows = read_csv(path)
            if not rows:
                logger.warning(f"跳过空的结果文件: {path}")
                continue
            runs[int(match.group(1))] = rows
        return runs

    def _load_optional(self, name: str) -> Optional[List[dict]]:
        path = self.directory / name
        return read_csv(path) if path.exists() else None

    def final_values(self, column: str) -> List[float]:
        """每个种子最后一轮的取值，空单元格跳过"""
        values = []
        for seed in sorted(self.metrics):
            cell = self.metrics[seed][-1].get(column, "")
            if cell not in ("", None):
                values.append(float(cell))
        return values

    @staticmethod
    def get_statistics(values: Sequence[float]) -> Dict:
        """获取统计信息"""
        if not len(values):
            return {"count": 0}
        data = np.asarray(values, dtype=np.float64)
        q1, median, q3 = np.percentile(data, [25, 50, 75])
        return {
            "count": int(data.size),
            "median": float(median),
            "iqr": float(q3 - q1),
            "min": float(data.min()),
            "max": float(data.max()),
        }

    def metric_summary(self) -> Dict[str, Dict]:
        return {
            column: self.get_statistics(self.final_values(column))
            for column in METRIC_COLUMNS
        }

    def bounds_summary(self) -> Dict[str, Dict[str, float]]:
        """按陈述汇总检查数、失败数与最小松弛量"""
        summary: Dict[str, Dict[str, float]] = {}
        for row in self.bounds or []:
            entry = summary.setdefault(
                row["statement"], {"checks": 0, "failures": 0, "min_slack": np.inf}
            )
            entry["checks"] += 1
            if row["pass"] != "1":
                entry["failures"] += 1
            entry["min_slack"] = min(entry["min_slack"], float(row["slack"]))
        return summary

    @property
    def all_passed(self) -> bool:
        return all(row["pass"] == "1" for row in self.bounds or [])

    def render(self) -> str:
        """人类可读的汇总文本"""
        lines = [f"结果目录: {self.directory}"]
        if self.metrics:
            lines.append(f"训练结果（{len(self.metrics)} 个种子的最终轮）:")
            lines.append(f"  {'指标':<12}{'中位数':>16}{'IQR':>16}{'种子数':>8}")
            for column, stats in self.metric_summary().items():
                if not stats["count"]:
                    continue
                lines.append(
                    f"  {column:<12}{format_number(stats['median']):>16}"
                    f"{format_number(stats['iqr']):>16}{stats['count']:>8}"
                )
        if self.bounds is not None:
            verdict = "全部通过" if self.all_passed else "存在失败"
            lines.append(f"理论检验（{verdict}）:")
            for statement, entry in sorted(self.bounds_summary().items()):
                status = "PASS" if entry["failures"] == 0 else "FAIL"
                lines.append(
                    f"  {status} {statement:<32}{int(entry['checks']):>7} 次, "
                    f"失败 {int(entry['failures'])}, "
                    f"最小松弛 {format_number(entry['min_slack'])}"
                )
        if self.bench is not None:
            lines.append("计时基准（秒）:")
            for row in self.bench:
                lines.append(
                    f"  {row['mode']:<14}批次 {row['batch_count']:>3}  "
                    f"每轮 {row['train_time']}  "
                    f"决策 {row['decision_time_joint']} / {row['decision_time_independent']}"
                )
            try:
                checks = self.bench_checks()
            except InputError as e:
                logger.warning(f"跳过计时方向检查: {e}")
                checks = []
            for check in checks:
                status = "PASS" if check.passed else "FAIL"
                lines.append(f"  {status} {check.name:<14}{check.detail}")
        return "\n".join(lines)

    def bench_checks(self) -> List[DirectionCheck]:
        if self.bench is None:
            return []
        return bench_directions([_bench_record(row) for row in self.bench])
