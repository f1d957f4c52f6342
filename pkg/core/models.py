"""
数据模型定义
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InputError


class SchemeMode(Enum):
    """下层更新方案"""

    MAPPO = "mappo"
    A2PO = "a2po"
    B2MAPO_DAG = "b2mapo-dag"
    B2MAPO_FIXED = "b2mapo-fixed"


class SurrogateMeasure(Enum):
    """代理目标的状态分布"""

    REALIZED = "realized"  # 中间策略 π̂^{b_k} 自身的访问分布
    BEHAVIOR = "behavior"  # 本轮采样策略 π 的访问分布


@dataclass(frozen=True)
class BatchSequence:
    """有序批次划分 (B, ≺)，智能体编号从 0 开始"""

    batches: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        normalized = tuple(
            tuple(sorted(int(a) for a in batch)) for batch in self.batches
        )
        object.__setattr__(self, "batches", normalized)

    @classmethod
    def single(cls, n_agents: int) -> "BatchSequence":
        return cls((tuple(range(n_agents)),))

    @classmethod
    def singletons(cls, order: Iterable[int]) -> "BatchSequence":
        return cls(tuple((int(a),) for a in order))

    @property
    def n_agents(self) -> int:
        return sum(len(batch) for batch in self.batches)

    def __len__(self) -> int:
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)

    def __getitem__(self, k: int) -> Tuple[int, ...]:
        return self.batches[k]

    def preceding(self, k: int) -> Tuple[int, ...]:
        """批次 k 之前所有批次的智能体（按编号排序）"""
        return tuple(sorted(a for batch in self.batches[:k] for a in batch))

    def batch_index(self, agent: int) -> int:
        for k, batch in enumerate(self.batches):
            if agent in batch:
                return k
        raise InputError(f"智能体 {agent} 不在批次序列中")

    def validate(
        self, n_agents: int, edges: Optional[Iterable[Tuple[int, int]]] = None
    ) -> "BatchSequence":
        """检查划分合法性；edges 为 (j, i) 依赖边，要求 j 所在批次严格在前"""
        seen = [a for batch in self.batches for a in batch]
        if any(len(batch) == 0 for batch in self.batches):
            raise InputError(f"批次序列含空批次: {self.to_text()}")
        if len(seen) != len(set(seen)):
            raise InputError(f"批次之间存在重叠: {self.to_text()}")
        if set(seen) != set(range(n_agents)):
            raise InputError(
                f"批次序列未覆盖全部 {n_agents} 个智能体: {self.to_text()}"
            )
        if edges is not None:
            for src, dst in edges:
                if self.batch_index(src) >= self.batch_index(dst):
                    raise InputError(
                        f"依赖边 {src + 1}→{dst + 1} 违反批次顺序: {self.to_text()}"
                    )
        return self

    def to_text(self) -> str:
        """展示用，编号从 1 开始"""
        return "[" + ",".join(
            "{" + ",".join(str(a + 1) for a in batch) + "}" for batch in self.batches
        ) + "]"


@dataclass
class GroundTruthDependence:
    """真实依赖关系：adjacency[j][i] 为真表示 j→i（i 的收益依赖 j 的动作）"""

    adjacency: np.ndarray

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool)
        if np.any(np.diag(self.adjacency)):
            raise InputError("依赖图不允许自环")

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> List[Tuple[int, int]]:
        return [tuple(int(x) for x in e) for e in np.argwhere(self.adjacency)]


@dataclass
class ExactTables:
    """精确值表"""

    V: np.ndarray
    Q: np.ndarray
    A: np.ndarray
    J: float
    d: np.ndarray

    @property
    def epsilon(self) -> float:
        """ε^π = max|A^π|"""
        return float(np.max(np.abs(self.A)))


@dataclass
class TrajectoryBatch:
    """一次采样的轨迹数据，所有回合长度相同（horizon）"""

    states: np.ndarray  # (E, T+1)，末列为截断处的下一状态
    observations: np.ndarray  # (E, T, n) 策略使用的观测键
    actions: np.ndarray  # (E, T, n)
    joint_actions: np.ndarray  # (E, T) 行优先联合动作编号
    rewards: np.ndarray  # (E, T)
    behavior_logp: np.ndarray  # (E, T)
    agent_logp: np.ndarray  # (E, T, n)
    behavior_id: str
    seed: int
    horizon: int
    batch_sequence: BatchSequence

    @property
    def n_episodes(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[2]

    def discounted_returns(self, gamma: float) -> np.ndarray:
        """每个回合的折扣回报"""
        discounts = gamma ** np.arange(self.n_steps)
        return self.rewards @ discounts


@dataclass
class AdvantageEstimate:
    """优势估计"""

    values: np.ndarray  # (E, T)
    gamma: float
    lam: float
    mode: str = "corrected"
    normalized: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise InputError("优势估计含非有限值")


@dataclass
class DependenceGraph:
    """依赖图：weights[i][j] 为智能体 i 依赖 j 的程度（已阈值化）"""

    weights: np.ndarray
    raw: np.ndarray  # 阈值化之前的 softmax 行
    threshold: float

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def edges(self) -> List[Tuple[int, int]]:
        """权重为正的依赖边 (j, i)：i 依赖 j，j 需先更新"""
        return [(int(j), int(i)) for i, j in np.argwhere(self.weights > 0)]

    def edge_weight(self, edge: Tuple[int, int]) -> float:
        src, dst = edge
        return float(self.weights[dst, src])


@dataclass
class RoundReport:
    """单轮训练报告"""

    round_index: int
    mode: SchemeMode
    batch_sequence: BatchSequence
    surrogate_before: List[float]
    surrogate_after: List[float]
    alphas: List[float]
    batch_times: List[float]
    j_mc: float
    j_before: Optional[float] = None
    j_after: Optional[float] = None
    distill_kl: Optional[float] = None
    step_scales: List[float] = field(default_factory=list)
    next_sequence: Optional[BatchSequence] = None
    chain: Optional[List[np.ndarray]] = None
    value_tables: Optional[List[Any]] = None
    behavior_table: Optional[np.ndarray] = None
    requested_sequence: Optional[BatchSequence] = None
    rebind_shift: Optional[float] = None

    def __post_init__(self):
        if any(t < 0 for t in self.batch_times):
            raise InputError("计时不能为负")

    @property
    def batch_count(self) -> int:
        return len(self.batch_sequence)

    @property
    def update_time(self) -> float:
        return float(sum(self.batch_times))


@dataclass
class BoundReport:
    """单个实例上某条理论陈述的数值检验结果"""

    statement: str
    seed: int
    lhs: float
    rhs: float
    tolerance: float
    extras: Dict[str, Any] = field(default_factory=dict)
    slack: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.slack = self.rhs - self.lhs
        self.passed = bool(self.slack >= -self.tolerance)


@dataclass
class BenchRecord:
    """计时基准记录"""

    mode: str
    n_agents: int
    batch_count: int
    train_time: float  # 每轮训练耗时中位数（秒）
    decision_time_joint: float  # 条件策略每步决策耗时（秒）
    decision_time_independent: float  # 独立策略每步决策耗时（秒）

    def __post_init__(self):
        times: Sequence[float] = (
            self.train_time,
            self.decision_time_joint,
            self.decision_time_independent,
        )
        if any(t < 0 for t in times):
            raise InputError("计时不能为负")


@dataclass
class DirectionCheck:
    """计时基准的方向检查"""

    name: str
    passed: bool
    detail: str
