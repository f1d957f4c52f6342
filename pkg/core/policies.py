"""
softmax 表格策略：批次条件策略 π 与独立策略 π_ind
"""

from abc import ABC, abstractmethod
import copy
from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from loguru import logger
import numpy as np
from pydantic import ValidationError

from .exact_oracle import exact_tables, visitation
from .exceptions import InputError, NumericDomainError, ResultIOError
from .game_core import MarkovGame
from .models import BatchSequence
from .schemas import (
    ConditionedTableFile,
    IndependentTableFile,
    PolicyCheckpointFile,
)
from .utils import generate_cache_key, softmax

_LOG_FLOOR = 1e-300


class ObservationEncoder(ABC):
    """观测编码器基类：把智能体的局部信息映射为策略表的行号"""

    state_based = True

    @abstractmethod
    def n_keys(self, game: MarkovGame, agent: int) -> int:
        pass

    @abstractmethod
    def encode(
        self,
        game: MarkovGame,
        agent: int,
        state: int,
        history: Sequence[Tuple[int, int]],
    ) -> int:
        """history 为该智能体之前的 (观测, 动作) 序列"""
        pass


class StateObservationEncoder(ObservationEncoder):
    """以当前观测编号为键（完全可观测时即状态）"""

    state_based = True

    def n_keys(self, game: MarkovGame, agent: int) -> int:
        return game.n_observations[agent]

    def encode(self, game, agent, state, history) -> int:
        return int(game.observation[agent, state])


class WindowObservationEncoder(ObservationEncoder):
    """最近 W 个 (观测, 动作) 与当前观测经 md5 散列到固定桶数"""

    state_based = False

    def __init__(self, window: int = 4, n_buckets: int = 64):
        if window < 0 or n_buckets < 1:
            raise InputError("窗口长度必须 ≥ 0，桶数必须 ≥ 1")
        self.window = window
        self.n_buckets = n_buckets

    def n_keys(self, game: MarkovGame, agent: int) -> int:
        return self.n_buckets

    def encode(self, game, agent, state, history) -> int:
        recent = tuple(history[-self.window :]) if self.window else ()
        payload = f"{agent}|{int(game.observation[agent, state])}|{recent}"
        digest = hashlib.md5(payload.encode()).hexdigest()
        return int(digest, 16) % self.n_buckets


class ConditionedPolicy:
    """条件策略 π^i(·|o, a^{B_k})，上下文按智能体编号排序"""

    def __init__(
        self,
        agent: int,
        n_actions: int,
        n_observations: int,
        preceding: Sequence[int] = (),
        context_counts: Sequence[int] = (),
        logits: Optional[np.ndarray] = None,
    ):
        self.agent = int(agent)
        self.n_actions = int(n_actions)
        self.n_observations = int(n_observations)
        self.preceding = tuple(int(a) for a in preceding)
        self.context_counts = tuple(int(c) for c in context_counts)
        if len(self.preceding) != len(self.context_counts):
            raise InputError("上下文智能体与动作数长度不一致")
        self.n_contexts = int(np.prod(self.context_counts)) if self.preceding else 1
        shape = (self.n_observations, self.n_contexts, self.n_actions)
        if logits is None:
            logits = np.zeros(shape)
        if logits.shape != shape:
            raise InputError(f"logit 表形状应为 {shape}，实际 {logits.shape}")
        self.logits = logits

    def context_index(self, context: Sequence[int]) -> int:
        context = tuple(int(a) for a in context)
        if len(context) != len(self.preceding):
            raise InputError(
                f"智能体 {self.agent} 的上下文应包含 {len(self.preceding)} 个动作，实际 {len(context)}"
            )
        for action, count in zip(context, self.context_counts):
            if not 0 <= action < count:
                raise InputError(f"上下文动作 {action} 越界")
        if not context:
            return 0
        return int(np.ravel_multi_index(context, self.context_counts))

    def context_indices(self, actions: np.ndarray) -> np.ndarray:
        """actions 最后一维为全体智能体动作，返回对应上下文编号"""
        actions = np.asarray(actions)
        if not self.preceding:
            return np.zeros(actions.shape[:-1], dtype=np.int64)
        columns = tuple(actions[..., p] for p in self.preceding)
        return np.ravel_multi_index(columns, self.context_counts)

    def probs_table(self) -> np.ndarray:
        return softmax(self.logits)


class IndependentPolicy:
    """独立策略 π_ind^i(·|o)"""

    def __init__(
        self,
        agent: int,
        n_actions: int,
        n_observations: int,
        logits: Optional[np.ndarray] = None,
    ):
        self.agent = int(agent)
        self.n_actions = int(n_actions)
        self.n_observations = int(n_observations)
        shape = (self.n_observations, self.n_actions)
        if logits is None:
            logits = np.zeros(shape)
        if logits.shape != shape:
            raise InputError(f"logit 表形状应为 {shape}，实际 {logits.shape}")
        self.logits = logits

    def probs_table(self) -> np.ndarray:
        return softmax(self.logits)


Policy = Union[ConditionedPolicy, IndependentPolicy]


def _row(policy: Policy, observation: int, context: Sequence[int]) -> Tuple:
    if not 0 <= int(observation) < policy.n_observations:
        raise InputError(f"观测 {observation} 越界 (共 {policy.n_observations} 个)")
    if isinstance(policy, IndependentPolicy):
        if len(tuple(context)) != 0:
            raise InputError("独立策略没有上下文")
        return (int(observation),)
    return int(observation), policy.context_index(context)


def action_probs(
    policy: Policy, observation: int, context: Sequence[int] = ()
) -> np.ndarray:
    """寻址行的 softmax"""
    return softmax(policy.logits[_row(policy, observation, context)])


def logprob_gradient(
    policy: Policy, observation: int, context: Sequence[int], action: int
) -> np.ndarray:
    """∂ log π(a|o,c) / ∂ logits：寻址行为 one-hot(a) - probs，其余为 0"""
    row = _row(policy, observation, context)
    if not 0 <= int(action) < policy.n_actions:
        raise InputError(f"动作 {action} 越界")
    gradient = np.zeros_like(policy.logits)
    gradient[row] = -softmax(policy.logits[row])
    gradient[row + (int(action),)] += 1.0
    return gradient


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p‖q) = Σ p log(p/q)，0·log(0/q) 记为 0"""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    support = p > 0
    if np.any(q[support] <= 0):
        raise NumericDomainError("KL 散度要求 p 绝对连续于 q")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


@dataclass
class PolicySet:
    """两套联合策略：条件策略 π 与独立策略 π_ind"""

    conditioned: List[ConditionedPolicy]
    independent: List[IndependentPolicy]
    batch_sequence: BatchSequence
    parameter_sharing: bool = False
    encoder: ObservationEncoder = field(default_factory=StateObservationEncoder)

    def __post_init__(self):
        if len(self.conditioned) != len(self.independent):
            raise InputError("条件策略与独立策略数量不一致")
        self.batch_sequence.validate(len(self.conditioned))
        for k, batch in enumerate(self.batch_sequence):
            expected = self.batch_sequence.preceding(k)
            for agent in batch:
                if self.conditioned[agent].preceding != expected:
                    raise InputError(f"智能体 {agent} 的上下文与批次序列不匹配")

    @classmethod
    def create(
        cls,
        game: MarkovGame,
        batch_sequence: BatchSequence,
        parameter_sharing: bool = False,
        init_scale: float = 0.0,
        seed: int = 0,
        encoder: Optional[ObservationEncoder] = None,
    ) -> "PolicySet":
        encoder = encoder or StateObservationEncoder()
        batch_sequence.validate(game.n_agents)
        rng = np.random.default_rng(seed)
        conditioned = _build_conditioned(game, batch_sequence, encoder)
        independent = [
            IndependentPolicy(i, game.action_counts[i], encoder.n_keys(game, i))
            for i in range(game.n_agents)
        ]
        if init_scale > 0:
            for policy in conditioned + independent:
                policy.logits = init_scale * rng.standard_normal(policy.logits.shape)
        policy_set = cls(
            conditioned, independent, batch_sequence, parameter_sharing, encoder
        )
        if parameter_sharing:
            policy_set._share_parameters()
        return policy_set

    @property
    def n_agents(self) -> int:
        return len(self.conditioned)

    def copy(self) -> "PolicySet":
        """深拷贝，保持共享参数之间的别名关系"""
        return copy.deepcopy(self)

    def fingerprint(self) -> str:
        arrays = [p.logits for p in self.conditioned + self.independent]
        return generate_cache_key(*arrays, tag=self.batch_sequence.to_text())

    def _share_parameters(self, average: bool = False):
        """同一批次内形状相同的条件策略共享 logit 表；独立策略按形状共享

        average=True 时共享表取组内各成员概率的均值，否则沿用组内第一个成员的参数。
        """
        for batch in self.batch_sequence:
            groups = {}
            for agent in batch:
                policy = self.conditioned[agent]
                groups.setdefault(policy.logits.shape, []).append(policy)
            for members in groups.values():
                shared = members[0].logits
                if average and len(members) > 1:
                    mean = np.mean([p.probs_table() for p in members], axis=0)
                    shared = np.log(np.maximum(mean, _LOG_FLOOR))
                for policy in members:
                    policy.logits = shared
        groups = {}
        for policy in self.independent:
            groups.setdefault(policy.logits.shape, policy.logits)
            policy.logits = groups[policy.logits.shape]

    def _require_state_based(self):
        if not self.encoder.state_based:
            raise InputError("窗口编码的策略没有按状态索引的联合表")

    def joint_table(self, game: MarkovGame) -> np.ndarray:
        """π(a|s)，形状 (S, J)"""
        self._require_state_based()
        ja = game.joint_actions
        table = np.ones((game.n_states, game.n_joint))
        for policy in self.conditioned:
            probs = policy.probs_table()
            ctx = policy.context_indices(ja)
            obs = game.observation[policy.agent]
            table *= probs[obs[:, None], ctx[None, :], ja[None, :, policy.agent]]
        return table

    def independent_joint_table(self, game: MarkovGame) -> np.ndarray:
        """π_ind(a|s)，形状 (S, J)"""
        self._require_state_based()
        ja = game.joint_actions
        table = np.ones((game.n_states, game.n_joint))
        for policy in self.independent:
            probs = policy.probs_table()
            obs = game.observation[policy.agent]
            table *= probs[obs[:, None], ja[None, :, policy.agent]]
        return table

    def sample(
        self,
        obs_keys: Sequence[int],
        rng: np.random.Generator,
        tables: Optional[List[np.ndarray]] = None,
    ) -> Tuple[List[int], List[float]]:
        """按批次顺序依次采样，后续批次以前序动作为上下文"""
        tables = tables or [p.probs_table() for p in self.conditioned]
        actions = [0] * self.n_agents
        logps = [0.0] * self.n_agents
        for k, batch in enumerate(self.batch_sequence):
            for agent in batch:
                policy = self.conditioned[agent]
                ctx = policy.context_index([actions[p] for p in policy.preceding])
                probs = tables[agent][obs_keys[agent], ctx]
                action = _draw(probs, rng)
                actions[agent] = action
                logps[agent] = float(np.log(probs[action]))
        return actions, logps

    def sample_independent(
        self,
        obs_keys: Sequence[int],
        rng: np.random.Generator,
        tables: Optional[List[np.ndarray]] = None,
    ) -> Tuple[List[int], List[float]]:
        tables = tables or [p.probs_table() for p in self.independent]
        actions, logps = [], []
        for agent in range(self.n_agents):
            probs = tables[agent][obs_keys[agent]]
            action = _draw(probs, rng)
            actions.append(action)
            logps.append(float(np.log(probs[action])))
        return actions, logps

    def agent_logged_probs(self, agent: int, observations, actions) -> np.ndarray:
        """按记录的观测键与动作求智能体 i 的条件概率"""
        policy = self.conditioned[agent]
        probs = policy.probs_table()
        ctx = policy.context_indices(actions)
        return probs[observations[..., agent], ctx, actions[..., agent]]

    def logged_probs(self, observations, actions) -> np.ndarray:
        """记录数据上的联合概率"""
        result = np.ones(np.asarray(actions).shape[:-1])
        for agent in range(self.n_agents):
            result = result * self.agent_logged_probs(agent, observations, actions)
        return result

    def rebind(self, batch_sequence: BatchSequence, game: MarkovGame) -> "PolicySet":
        """切换批次序列：重新枚举上下文，新行取旧联合策略下给定新上下文的条件分布"""
        batch_sequence.validate(game.n_agents)
        if batch_sequence == self.batch_sequence:
            return self
        old_table = self.joint_table(game) if self.encoder.state_based else None
        new_conditioned = _build_conditioned(game, batch_sequence, self.encoder)
        for policy in new_conditioned:
            if old_table is not None:
                probs = _conditional_rows(game, old_table, policy)
            else:
                old_probs = self.conditioned[policy.agent].probs_table().mean(axis=1)
                probs = np.repeat(old_probs[:, None, :], policy.n_contexts, axis=1)
            policy.logits = np.log(np.maximum(probs, _LOG_FLOOR))
        logger.debug(
            f"批次序列切换: {self.batch_sequence.to_text()} → {batch_sequence.to_text()}"
        )
        self.conditioned = new_conditioned
        self.batch_sequence = batch_sequence
        if self.parameter_sharing:
            self._share_parameters(average=True)
        return self


def _build_conditioned(
    game: MarkovGame, batch_sequence: BatchSequence, encoder: ObservationEncoder
) -> List[ConditionedPolicy]:
    policies: List[Optional[ConditionedPolicy]] = [None] * game.n_agents
    for k, batch in enumerate(batch_sequence):
        preceding = batch_sequence.preceding(k)
        counts = [game.action_counts[p] for p in preceding]
        for agent in batch:
            policies[agent] = ConditionedPolicy(
                agent,
                game.action_counts[agent],
                encoder.n_keys(game, agent),
                preceding,
                counts,
            )
    return policies


def _state_weights(
    game: MarkovGame, joint_policy: np.ndarray, agent: int
) -> np.ndarray:
    """同一观测下各状态的聚合权重：访问分布，全零时退化为均匀"""
    weights = visitation(game, joint_policy).copy()
    obs = game.observation[agent]
    for o in np.unique(obs):
        members = obs == o
        if weights[members].sum() <= 0:
            weights[members] = 1.0
    return weights


def _conditional_rows(
    game: MarkovGame, joint_policy: np.ndarray, policy: ConditionedPolicy
) -> np.ndarray:
    """Pr_π(a^i | o, a^{B_k})；零概率上下文取边缘分布，仍为零时取均匀"""
    ja = game.joint_actions
    obs = game.observation[policy.agent]
    weights = _state_weights(game, joint_policy, policy.agent)
    ctx = policy.context_indices(ja)
    counts = np.zeros((policy.n_observations, policy.n_contexts, policy.n_actions))
    np.add.at(
        counts,
        (
            np.broadcast_to(obs[:, None], joint_policy.shape),
            np.broadcast_to(ctx[None, :], joint_policy.shape),
            np.broadcast_to(ja[None, :, policy.agent], joint_policy.shape),
        ),
        weights[:, None] * joint_policy,
    )
    marginal = counts.sum(axis=1)
    marginal_mass = marginal.sum(axis=1, keepdims=True)
    uniform = np.full(policy.n_actions, 1.0 / policy.n_actions)
    safe_mass = np.where(marginal_mass > 0, marginal_mass, 1.0)
    fallback = np.where(marginal_mass > 0, marginal / safe_mass, uniform)
    mass = counts.sum(axis=2, keepdims=True)
    conditional = counts / np.where(mass > 0, mass, 1.0)
    return np.where(mass > 0, conditional, fallback[:, None, :])


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    """逆累积分布采样"""
    index = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(index, len(probs) - 1)


def joint_prob(
    policy_set: PolicySet,
    s: int,
    joint_action: Sequence[int],
    batch_sequence: BatchSequence,
    game: Optional[MarkovGame] = None,
) -> float:
    """联合概率：按批次顺序解析上下文后各智能体条件概率之积"""
    if batch_sequence != policy_set.batch_sequence:
        raise InputError(
            f"批次序列 {batch_sequence.to_text()} 与策略上下文 {policy_set.batch_sequence.to_text()} 不匹配"
        )
    joint_action = tuple(int(a) for a in joint_action)
    if len(joint_action) != policy_set.n_agents:
        raise InputError("联合动作长度与智能体数不符")
    result = 1.0
    for k, batch in enumerate(batch_sequence):
        for agent in batch:
            policy = policy_set.conditioned[agent]
            observation = s if game is None else game.observe(agent, s)
            context = [joint_action[p] for p in policy.preceding]
            probs = action_probs(policy, observation, context)
            result *= float(probs[joint_action[agent]])
    return result


def marginalize(
    policy_set: PolicySet,
    game: MarkovGame,
    batch_sequence: Optional[BatchSequence] = None,
) -> List[IndependentPolicy]:
    """条件联合策略诱导的各智能体边缘动作分布（用于初始化 π_ind）"""
    if batch_sequence is not None and batch_sequence != policy_set.batch_sequence:
        raise InputError("批次序列与策略上下文不匹配")
    joint = None
    result = []
    for policy in policy_set.conditioned:
        if not policy.preceding:
            logits = policy.logits[:, 0, :].copy()
        else:
            policy_set._require_state_based()
            if joint is None:
                joint = policy_set.joint_table(game)
            logits = np.log(np.maximum(_marginal_rows(game, joint, policy), _LOG_FLOOR))
        result.append(
            IndependentPolicy(
                policy.agent, policy.n_actions, policy.n_observations, logits
            )
        )
    return result


def _marginal_rows(
    game: MarkovGame, joint_policy: np.ndarray, policy: ConditionedPolicy
) -> np.ndarray:
    ja = game.joint_actions
    obs = game.observation[policy.agent]
    weights = _state_weights(game, joint_policy, policy.agent)
    counts = np.zeros((policy.n_observations, policy.n_actions))
    np.add.at(
        counts,
        (
            np.broadcast_to(obs[:, None], joint_policy.shape),
            np.broadcast_to(ja[None, :, policy.agent], joint_policy.shape),
        ),
        weights[:, None] * joint_policy,
    )
    mass = counts.sum(axis=1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / policy.n_actions)
    return np.where(mass > 0, counts / np.where(mass > 0, mass, 1.0), uniform)


def construct_product_equivalent(
    game: MarkovGame, joint_policy: np.ndarray, iterations: int = 200
) -> List[np.ndarray]:
    """构造与 π 值函数相同的乘积策略

    每个状态取 Q^π 的最小、最大联合动作，令各智能体在两者之间按同一参数 t 混合；
    E_t[Q^π(s,·)] 关于 t 连续且两端夹住 V^π(s)，二分得到 t。
    返回各智能体 (S, A_i) 分布表。
    """
    tables = exact_tables(game, joint_policy)
    factors = [np.zeros((game.n_states, c)) for c in game.action_counts]
    for s in range(game.n_states):
        low = game.joint_actions[int(np.argmin(tables.Q[s]))]
        high = game.joint_actions[int(np.argmax(tables.Q[s]))]

        def mixed(t: float) -> List[np.ndarray]:
            rows = []
            for agent, count in enumerate(game.action_counts):
                row = np.zeros(count)
                row[low[agent]] += 1.0 - t
                row[high[agent]] += t
                rows.append(row)
            return rows

        def value(t: float) -> float:
            joint = np.ones(1)
            for row in mixed(t):
                joint = np.outer(joint, row).ravel()
            return float(joint @ tables.Q[s])

        lo, hi = 0.0, 1.0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if value(mid) < tables.V[s]:
                lo = mid
            else:
                hi = mid
        t = lo if abs(value(lo) - tables.V[s]) <= abs(value(hi) - tables.V[s]) else hi
        for agent, row in enumerate(mixed(t)):
            factors[agent][s] = row
    return factors


def save_checkpoint(policy_set: PolicySet, path: Union[str, Path]) -> Path:
    """保存策略检查点（JSON）"""
    model = PolicyCheckpointFile(
        batches=[list(batch) for batch in policy_set.batch_sequence],
        parameter_sharing=policy_set.parameter_sharing,
        conditioned=[
            ConditionedTableFile(
                agent=p.agent,
                n_actions=p.n_actions,
                preceding=list(p.preceding),
                context_counts=list(p.context_counts),
                logits=p.logits.tolist(),
            )
            for p in policy_set.conditioned
        ],
        independent=[
            IndependentTableFile(
                agent=p.agent, n_actions=p.n_actions, logits=p.logits.tolist()
            )
            for p in policy_set.independent
        ],
    )
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(model.model_dump()), encoding="utf-8")
    except OSError as e:
        raise ResultIOError(f"无法写入检查点 {path}: {e}") from e
    return path


def load_checkpoint(path: Union[str, Path]) -> PolicySet:
    """读取策略检查点（仅支持按观测索引的策略）"""
    path = Path(path)
    try:
        model = PolicyCheckpointFile.model_validate(
            json.loads(path.read_text(encoding="utf-8"))
        )
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise InputError(f"无法读取检查点 {path}: {e}") from e
    conditioned = [
        ConditionedPolicy(
            p.agent,
            p.n_actions,
            len(p.logits),
            p.preceding,
            p.context_counts,
            np.array(p.logits, dtype=np.float64),
        )
        for p in model.conditioned
    ]
    independent = [
        IndependentPolicy(
            p.agent, p.n_actions, len(p.logits), np.array(p.logits, dtype=np.float64)
        )
        for p in model.independent
    ]
    policy_set = PolicySet(
        conditioned,
        independent,
        BatchSequence(tuple(tuple(b) for b in model.batches)),
        model.parameter_sharing,
    )
    if policy_set.parameter_sharing:
        policy_set._share_parameters()
    return policy_set
