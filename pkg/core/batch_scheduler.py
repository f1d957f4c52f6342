"""
上层调度：轨迹特征 → 依赖打分 → 采样边集 → 破环 → 分层得到批次序列
"""

from dataclasses import dataclass, field
from pathlib import Path
import re
from typing import Dict, Iterable, List, Optional, Tuple, Union

from loguru import logger
import numpy as np
from sklearn.metrics import roc_auc_score

from config import get_scheduler_config

from .dag_generator import (
    AttentionScorer,
    GeneratorSample,
    dag_advantage,
    dag_critic_update,
    dag_generator_update,
    dag_period_reward,
    default_threshold,
    edge_mask,
    period_rewards,
    sample_edge_set,
    score_dependence,
)
from .exceptions import InputError
from .models import (
    BatchSequence,
    DependenceGraph,
    GroundTruthDependence,
    TrajectoryBatch,
)
from .partitioners import (
    BruteForcePartitioner,
    GreedyPartitioner,
    layer_topological,
    to_dag,
)

Edge = Tuple[int, int]

__all__ = [
    "BatchScheduler",
    "SchedulerDecision",
    "dag_advantage",
    "dag_critic_update",
    "dag_generator_update",
    "dag_period_reward",
    "dependence_auc",
    "format_batch_sequence",
    "layer_topological",
    "min_batches_bruteforce",
    "min_batches_greedy",
    "parse_batch_sequence",
    "read_graph_file",
    "sample_edge_set",
    "score_dependence",
    "to_dag",
    "trajectory_feature_dim",
    "trajectory_features",
]


def min_batches_bruteforce(n_agents: int, edges: Iterable[Edge]) -> BatchSequence:
    return BruteForcePartitioner().partition(n_agents, edges)


def min_batches_greedy(n_agents: int, edges: Iterable[Edge]) -> BatchSequence:
    return GreedyPartitioner().partition(n_agents, edges)


def _step_windows(step: np.ndarray, window: int) -> np.ndarray:
    """(E, T, n, D) → (E, T, n, W, D)：第 l 块是 t-l 步的 one-hot，回合开头补零"""
    n_steps = step.shape[1]
    lags = []
    for lag in range(window):
        shifted = np.zeros_like(step)
        if lag < n_steps:
            shifted[:, lag:] = step[:, : n_steps - lag]
        lags.append(shifted)
    return np.stack(lags, axis=3)


def trajectory_features(
    traj: TrajectoryBatch, n_keys: int, n_actions: int, window: int
) -> np.ndarray:
    """每个智能体一行：自身 (观测 ⊕ 动作) one-hot 的均值、共现强度、智能体 one-hot

    每个时间步的窗口是各智能体最近 W 步 (观测 ⊕ 动作) one-hot 的拼接，与当前动作按时间对齐。
    共现强度 c[i, j, l] 是 i 在 t 步的动作与 j 在 t-l 步窗口块的中心化互协方差的 Frobenius 范数。
    """
    n = traj.n_agents
    acted = np.eye(n_actions)[traj.actions]  # (E, T, n, A)
    step = np.concatenate([np.eye(n_keys)[traj.observations], acted], axis=-1)
    windows = _step_windows(step, window).reshape(-1, n, window, step.shape[-1])
    current = acted.reshape(-1, n, n_actions)
    current = current - current.mean(axis=0)
    windows = windows - windows.mean(axis=0)
    cross = np.einsum("xia,xjld->ijlad", current, windows) / current.shape[0]
    cooccurrence = np.linalg.norm(cross, axis=(3, 4))  # (n, n, W)
    marginal = step.mean(axis=(0, 1))
    return np.concatenate(
        [marginal, cooccurrence.reshape(n, -1), np.eye(n)], axis=1
    )


def trajectory_feature_dim(
    n_agents: int, n_keys: int, n_actions: int, window: int
) -> int:
    """均值块 + 共现块 (n·W) + 身份块"""
    return n_keys + n_actions + n_agents * window + n_agents


@dataclass
class SchedulerDecision:
    """一次规划：特征、依赖图、采样边集、DAG 与批次序列"""

    features: np.ndarray
    graph: DependenceGraph
    edges: List[Edge]
    log_prob: float
    dag: List[Edge]
    batch_sequence: BatchSequence
    stats: Dict[str, float] = field(default_factory=dict)


class BatchScheduler:
    """上层调度器：提出下一轮的批次序列，并用下一轮回报训练生成器与评论家"""

    def __init__(
        self,
        n_agents: int,
        n_states: int,
        n_keys: int,
        n_actions: int,
        gamma: float,
        seed: int = 0,
        config: Optional[dict] = None,
        threshold: Optional[float] = None,
    ):
        self.config = {**get_scheduler_config(), **(config or {})}
        self.n_agents = n_agents
        self.n_keys = n_keys
        self.n_actions = n_actions
        self.gamma = gamma
        self.window = int(self.config["window"])
        self.period = int(self.config["period"])
        if self.period < 1 or self.window < 1:
            raise InputError("重新规划周期与特征窗口都必须 ≥ 1")
        self.threshold = default_threshold(n_agents) if threshold is None else threshold
        feature_dim = trajectory_feature_dim(n_agents, n_keys, n_actions, self.window)
        self.scorer = AttentionScorer.create(
            feature_dim,
            int(self.config["d_k"]),
            n_states,
            seed=seed,
            init_scale=float(self.config["init_scale"]),
        )
        logger.info(
            f"批次调度器初始化完成: {n_agents} 个智能体, 特征维度 {feature_dim}, "
            f"δ_dep={self.threshold:.4g}"
        )

    def features(self, traj: TrajectoryBatch) -> np.ndarray:
        return trajectory_features(traj, self.n_keys, self.n_actions, self.window)

    def propose(
        self, traj: TrajectoryBatch, rng: np.random.Generator
    ) -> SchedulerDecision:
        """依据本轮轨迹为下一轮规划批次序列"""
        X = self.features(traj)
        graph = score_dependence(self.scorer, X, self.threshold)
        edges, log_prob = sample_edge_set(graph, rng)
        dag = to_dag(edges, graph)
        sequence = layer_topological(dag, self.n_agents)
        logger.debug(
            f"调度器提案: {len(edges)} 条采样边, DAG {len(dag)} 条, 序列 {sequence.to_text()}"
        )
        return SchedulerDecision(X, graph, edges, log_prob, dag, sequence)

    def learn(
        self, decision: SchedulerDecision, next_traj: TrajectoryBatch
    ) -> Dict[str, float]:
        """用执行该决策那一轮的周期回报更新生成器与评论家"""
        T = self.period
        returns = period_rewards(next_traj.rewards, self.gamma, T)
        s = next_traj.states[:, :-1]
        values = self.scorer.phi[s]
        advantages = dag_advantage(returns, values, self.gamma, T)
        starts = advantages[:, ::T].ravel()

        sample = GeneratorSample(
            features=decision.features,
            candidates=decision.graph.weights > 0,
            mask=edge_mask(decision.edges, self.n_agents),
            old_probs=decision.graph.raw.copy(),
            old_log_prob=decision.log_prob,
            advantages=starts,
        )
        dag_generator_update(
            self.scorer,
            [sample],
            float(self.config["clip_eps"]),
            float(self.config["kl_coef"]),
            float(self.config["learning_rate"]),
            int(self.config["epochs"]),
        )
        self.scorer.phi, critic_loss = dag_critic_update(
            self.scorer.phi, s, returns, float(self.config["critic_lr"])
        )
        stats = {
            "dag_advantage": float(starts.mean()) if starts.size else 0.0,
            "critic_loss": critic_loss,
        }
        decision.stats.update(stats)
        return stats


def dependence_auc(graph: DependenceGraph, truth: GroundTruthDependence) -> float:
    """依赖分数对真实依赖边的 ROC AUC（分数取阈值化之前的 softmax）"""
    n = graph.n_agents
    if truth.n_agents != n:
        raise InputError("依赖图与真实依赖的智能体数不一致")
    off_diagonal = ~np.eye(n, dtype=bool)
    # raw[i, j] 为 i 依赖 j；真实边 j→i 记在 adjacency[j, i]
    labels = truth.adjacency.T[off_diagonal]
    scores = graph.raw[off_diagonal]
    if labels.all() or not labels.any():
        raise InputError("真实依赖图必须同时包含边与非边")
    return float(roc_auc_score(labels.astype(int), scores))


def read_graph_file(
    path: Union[str, Path]
) -> Tuple[int, List[Edge], Dict[Edge, float]]:
    """读取图文件：首行 `agents N`，其后每行 `i j [w]` 表示 j 依赖 i，编号从 1 开始"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise InputError(f"无法读取图文件 {path}: {e}") from e

    n_agents: Optional[int] = None
    weights: Dict[Edge, float] = {}
    for number, line in enumerate(lines, start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        fields = content.split()
        try:
            if n_agents is None:
                if fields[0] != "agents" or len(fields) != 2:
                    raise InputError(f"{path}:{number}: 首行应为 `agents N`")
                n_agents = int(fields[1])
                if n_agents < 1:
                    raise InputError(f"{path}:{number}: 智能体数必须 ≥ 1")
                continue
            if len(fields) not in (2, 3):
                raise InputError(f"{path}:{number}: 边应写成 `i j [w]`")
            src, dst = int(fields[0]) - 1, int(fields[1]) - 1
            weight = float(fields[2]) if len(fields) == 3 else 1.0
        except InputError:
            raise
        except ValueError as e:
            raise InputError(f"{path}:{number}: 无法解析 `{content}`") from e
        if not (0 <= src < n_agents and 0 <= dst < n_agents) or src == dst:
            raise InputError(f"{path}:{number}: 边 {src + 1} {dst + 1} 越界或为自环")
        weights[(src, dst)] = weight
    if n_agents is None:
        raise InputError(f"图文件为空: {path}")
    return n_agents, sorted(weights), weights


def format_batch_sequence(sequence: BatchSequence) -> str:
    return sequence.to_text()


def parse_batch_sequence(text: str, n_agents: Optional[int] = None) -> BatchSequence:
    """解析 `[{1},{2,3}]` 形式的批次序列（编号从 1 开始）"""
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise InputError(f"批次序列应写成 [{{1}},{{2,3}}]: {text}")
    groups = re.findall(r"\{([^{}]*)\}", body)
    if not groups or re.sub(r"\{[^{}]*\}|[\s,\[\]]", "", body):
        raise InputError(f"无法解析批次序列: {text}")
    try:
        batches = tuple(
            tuple(int(a) - 1 for a in group.split(",") if a.strip()) for group in groups
        )
    except ValueError as e:
        raise InputError(f"批次序列含非整数编号: {text}") from e
    sequence = BatchSequence(batches)
    return sequence.validate(n_agents if n_agents is not None else sequence.n_agents)
