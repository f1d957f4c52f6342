"""
带种子的轨迹采样、TD 误差、GAE 与截断重要性加权的离策略优势修正
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

from loguru import logger
import numpy as np

from .exceptions import InputError, NumericDomainError
from .game_core import MarkovGame, sample_next_state
from .models import AdvantageEstimate, BatchSequence, TrajectoryBatch
from .policies import PolicySet
from .utils import derive_rng, write_csv

LOGP_TOL = 1e-10

JointPolicy = Union[np.ndarray, PolicySet]


@dataclass
class ValueTable:
    """表格评论家：按状态（可选再按前序批次动作）索引"""

    values: np.ndarray  # (S, C)
    context_agents: Tuple[int, ...] = ()
    context_counts: Tuple[int, ...] = ()

    @classmethod
    def from_states(cls, values: np.ndarray) -> "ValueTable":
        return cls(np.asarray(values, dtype=np.float64).reshape(-1, 1))

    @property
    def state_values(self) -> np.ndarray:
        if self.values.shape[1] != 1:
            raise InputError("条件评论家没有纯状态值表")
        return self.values[:, 0]

    def context_index(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions)
        if not self.context_agents:
            return np.zeros(actions.shape[:-1], dtype=np.int64)
        columns = tuple(actions[..., a] for a in self.context_agents)
        return np.ravel_multi_index(columns, self.context_counts)

    def lookup(self, states: np.ndarray, actions: Optional[np.ndarray] = None):
        states = np.asarray(states)
        if not self.context_agents:
            return self.values[states, 0]
        if actions is None:
            raise InputError("条件评论家需要动作上下文")
        return self.values[states, self.context_index(actions)]


def _as_value_table(V: Union[np.ndarray, ValueTable]) -> ValueTable:
    return V if isinstance(V, ValueTable) else ValueTable.from_states(V)


def collect_rollouts(
    game: MarkovGame,
    policy_set: PolicySet,
    batch_sequence: BatchSequence,
    n_episodes: int,
    horizon: int,
    seed: int,
    use_independent: bool = False,
) -> TrajectoryBatch:
    """在行为策略 π 下采样一批回合，每个回合的随机数流由 (种子, 回合编号) 派生"""
    if batch_sequence != policy_set.batch_sequence:
        raise InputError(
            f"批次序列 {batch_sequence.to_text()} 与策略上下文 {policy_set.batch_sequence.to_text()} 不匹配"
        )
    if n_episodes < 1 or horizon < 1:
        raise InputError("回合数与时间步长都必须 ≥ 1")

    n = game.n_agents
    E, T = int(n_episodes), int(horizon)
    states = np.zeros((E, T + 1), dtype=np.int64)
    observations = np.zeros((E, T, n), dtype=np.int64)
    actions = np.zeros((E, T, n), dtype=np.int64)
    rewards = np.zeros((E, T))
    agent_logp = np.zeros((E, T, n))

    if use_independent:
        tables = [p.probs_table() for p in policy_set.independent]
        sampler = policy_set.sample_independent
    else:
        tables = [p.probs_table() for p in policy_set.conditioned]
        sampler = policy_set.sample
    encoder = policy_set.encoder
    initial_cdf = np.cumsum(game.initial_dist)

    for episode in range(E):
        rng = derive_rng(seed, episode)
        s = int(np.searchsorted(initial_cdf, rng.random(), side="right"))
        s = min(s, game.n_states - 1)
        histories = [[] for _ in range(n)]
        for t in range(T):
            keys = [encoder.encode(game, i, s, histories[i]) for i in range(n)]
            joint, logps = sampler(keys, rng, tables)
            j = int(np.ravel_multi_index(joint, game.action_counts))
            states[episode, t] = s
            observations[episode, t] = keys
            actions[episode, t] = joint
            agent_logp[episode, t] = logps
            rewards[episode, t] = game.reward[s, j]
            for i in range(n):
                histories[i].append((int(game.observation[i, s]), joint[i]))
            s = sample_next_state(game, s, j, rng)
        states[episode, T] = s

    joint_actions = np.ravel_multi_index(
        tuple(actions[..., i] for i in range(n)), game.action_counts
    )
    return TrajectoryBatch(
        states=states,
        observations=observations,
        actions=actions,
        joint_actions=joint_actions,
        rewards=rewards,
        behavior_logp=agent_logp.sum(axis=2),
        agent_logp=agent_logp,
        behavior_id=policy_set.fingerprint() + ("/ind" if use_independent else ""),
        seed=int(seed),
        horizon=T,
        batch_sequence=batch_sequence,
    )


def logged_joint_probs(traj: TrajectoryBatch, policy: JointPolicy) -> np.ndarray:
    """记录数据上 (E, T) 的联合动作概率；policy 可为 (S, J) 表或 PolicySet"""
    if isinstance(policy, PolicySet):
        return policy.logged_probs(traj.observations, traj.actions)
    table = np.asarray(policy)
    return table[traj.states[:, :-1], traj.joint_actions]


def td_errors(
    traj: TrajectoryBatch,
    V: Union[np.ndarray, ValueTable],
    gamma: float,
) -> np.ndarray:
    """δ_t = r_t + γV(s_{t+1}) - V(s_t)，截断处自举值为 0"""
    table = _as_value_table(V)
    s = traj.states[:, :-1]
    current = table.lookup(s, traj.actions)
    following = np.zeros_like(current)
    following[:, :-1] = current[:, 1:]
    return traj.rewards + gamma * following - current


def _backward_trace(
    deltas: np.ndarray, weights: np.ndarray, gamma: float
) -> np.ndarray:
    """Â_t = δ_t + γ c_{t+1} Â_{t+1}，回合末尾截断"""
    advantages = np.zeros_like(deltas)
    running = np.zeros(deltas.shape[0])
    for t in range(deltas.shape[1] - 1, -1, -1):
        if t == deltas.shape[1] - 1:
            running = deltas[:, t].copy()
        else:
            running = deltas[:, t] + gamma * weights[:, t + 1] * running
        advantages[:, t] = running
    return advantages


def truncated_weights(
    traj: TrajectoryBatch, behavior: JointPolicy, target: JointPolicy, lam: float
) -> np.ndarray:
    """c_t = λ·min(1, π̂(a_t|s_t)/π(a_t|s_t))"""
    behavior_probs = logged_joint_probs(traj, behavior)
    if np.any(behavior_probs <= 0):
        raise NumericDomainError("行为策略对记录动作的概率为 0")
    drift = np.max(np.abs(np.log(behavior_probs) - traj.behavior_logp))
    if isinstance(behavior, PolicySet) and drift > LOGP_TOL:
        raise InputError(f"行为策略与采样记录不一致 (对数概率偏差 {drift:.3e})")
    target_probs = logged_joint_probs(traj, target)
    weights = lam * np.minimum(1.0, target_probs / behavior_probs)
    if np.any(weights < 0) or np.any(weights > 1):
        raise NumericDomainError("截断权重越出 [0, 1]")
    return weights


def corrected_advantage(
    traj: TrajectoryBatch,
    V: Union[np.ndarray, ValueTable],
    behavior: JointPolicy,
    target: JointPolicy,
    gamma: float,
    lam: float,
) -> AdvantageEstimate:
    """Â_t = δ_t + Σ_{n≥1} γ^n (Π_{j=1}^n λ·min(1, π̂/π)) δ_{t+n}，在回合末尾截断"""
    deltas = td_errors(traj, V, gamma)
    weights = truncated_weights(traj, behavior, target, lam)
    values = _backward_trace(deltas, weights, gamma)
    return AdvantageEstimate(values=values, gamma=gamma, lam=lam, mode="corrected")


def gae(
    traj: TrajectoryBatch, V: Union[np.ndarray, ValueTable], gamma: float, lam: float
) -> AdvantageEstimate:
    """GAE(λ)：权重恒为 λ 的同一递推"""
    deltas = td_errors(traj, V, gamma)
    weights = np.full_like(deltas, lam * 1.0)
    values = _backward_trace(deltas, weights, gamma)
    return AdvantageEstimate(values=values, gamma=gamma, lam=lam, mode="gae")


def normalize_advantages(estimate: AdvantageEstimate) -> AdvantageEstimate:
    """零均值、单位方差（仅训练模式）"""
    values = estimate.values
    std = float(values.std())
    centered = values - values.mean()
    normalized = centered / std if std > 1e-12 else centered
    return AdvantageEstimate(
        values=normalized,
        gamma=estimate.gamma,
        lam=estimate.lam,
        mode=estimate.mode,
        normalized=True,
    )


def returns_to_go(traj: TrajectoryBatch, gamma: float) -> np.ndarray:
    """每个时间步到回合截断处的折扣回报"""
    returns = np.zeros_like(traj.rewards)
    running = np.zeros(traj.n_episodes)
    for t in range(traj.n_steps - 1, -1, -1):
        running = traj.rewards[:, t] + gamma * running
        returns[:, t] = running
    return returns


def fit_value_table(
    traj: TrajectoryBatch,
    gamma: float,
    n_states: Optional[int] = None,
    context_agents: Sequence[int] = (),
    action_counts: Sequence[int] = (),
) -> ValueTable:
    """经验折扣回报的分组均值；未访问的键取 0"""
    n_states = n_states or int(traj.states.max()) + 1
    context_agents = tuple(int(a) for a in context_agents)
    counts = tuple(int(action_counts[a]) for a in context_agents)
    n_contexts = int(np.prod(counts)) if context_agents else 1
    table = ValueTable(np.zeros((n_states, n_contexts)), context_agents, counts)

    returns = returns_to_go(traj, gamma)
    s = traj.states[:, :-1]
    c = table.context_index(traj.actions)
    sums = np.zeros((n_states, n_contexts))
    visits = np.zeros((n_states, n_contexts))
    np.add.at(sums, (s, c), returns)
    np.add.at(visits, (s, c), 1.0)
    np.divide(sums, visits, out=table.values, where=visits > 0)
    return table


def per_agent_advantage_magnitude(
    traj: TrajectoryBatch, estimate: AdvantageEstimate
) -> np.ndarray:
    """每个智能体动作边缘优势 E[Â|o,a^i] - E[Â|o] 的平均绝对值"""
    values = estimate.values.ravel()
    magnitudes = np.zeros(traj.n_agents)
    for agent in range(traj.n_agents):
        obs = traj.observations[..., agent].ravel()
        act = traj.actions[..., agent].ravel()
        n_obs, n_act = int(obs.max()) + 1, int(act.max()) + 1
        sums = np.zeros((n_obs, n_act))
        visits = np.zeros((n_obs, n_act))
        np.add.at(sums, (obs, act), values)
        np.add.at(visits, (obs, act), 1.0)
        action_mean = sums / np.maximum(visits, 1.0)
        obs_mean = sums.sum(axis=1) / np.maximum(visits.sum(axis=1), 1.0)
        marginal = action_mean[obs, act] - obs_mean[obs]
        magnitudes[agent] = float(np.mean(np.abs(marginal)))
    return magnitudes


def dump_trajectories(traj: TrajectoryBatch, path: Union[str, Path]) -> Path:
    """列式导出：episode, t, s, a_1..a_n, r, logp"""
    header = ["episode", "t", "s"]
    header += [f"a_{i + 1}" for i in range(traj.n_agents)] + ["r", "logp"]
    rows = []
    for e in range(traj.n_episodes):
        for t in range(traj.n_steps):
            rows.append(
                [e, t, int(traj.states[e, t])]
                + [int(a) for a in traj.actions[e, t]]
                + [float(traj.rewards[e, t]), float(traj.behavior_logp[e, t])]
            )
    path = write_csv(path, header, rows)
    logger.debug(f"轨迹已导出: {path}")
    return path
