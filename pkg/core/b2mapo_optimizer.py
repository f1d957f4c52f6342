"""
下层优化器：逐批次双裁剪代理目标更新、MAPPO/A2PO 特例、独立策略蒸馏与多轮训练
"""

from dataclasses import dataclass, fields
import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

from loguru import logger
import numpy as np

from config import get_scheme_config

from .batch_scheduler import BatchScheduler, SchedulerDecision
from .exact_oracle import (
    batch_tv,
    exact_tables,
    expected_return,
    max_tv,
    state_action_expectation,
)
from .exceptions import InputError, NumericDomainError
from .game_core import MarkovGame
from .models import (
    AdvantageEstimate,
    BatchSequence,
    RoundReport,
    SchemeMode,
    TrajectoryBatch,
)
from .policies import (
    IndependentPolicy,
    ObservationEncoder,
    PolicySet,
    kl,
    marginalize,
)
from .rollout_advantage import (
    collect_rollouts,
    corrected_advantage,
    fit_value_table,
    normalize_advantages,
    per_agent_advantage_magnitude,
)
from .utils import derive_rng, softmax

_REBIND_TOLERANCE = 1e-10


@dataclass
class SchemeConfig:
    """下层更新方案配置"""

    mode: SchemeMode = SchemeMode.B2MAPO_DAG
    clip_eps: Union[float, Sequence[float]] = 0.2  # 每个批次的 ε^{b_k}，序列不够长时沿用最后一个
    learning_rate: float = 0.05
    epochs: int = 4
    distill_period: int = 5
    distill_coef: float = 1.0
    distill_lr: float = 1.0
    distill_steps: int = 10
    lam: float = 0.95
    gamma: Optional[float] = None  # None 表示使用博弈自身的折扣
    n_episodes: int = 16
    horizon: int = 64
    oracle: bool = False
    normalize_advantages: bool = True
    fixed_sequence: Optional[BatchSequence] = None
    independent_update: bool = True
    conditioned_critic: bool = True
    parameter_sharing: bool = False
    oracle_guard: bool = True
    guard_backtracks: int = 12
    record_chain: bool = False

    def __post_init__(self):
        try:
            self.mode = SchemeMode(self.mode)
        except ValueError as e:
            raise InputError(f"未知的更新方案: {self.mode}") from e
        clips = [self.clip_eps] if np.isscalar(self.clip_eps) else list(self.clip_eps)
        if not clips or any(not 0.0 < float(c) < 1.0 for c in clips):
            raise InputError(f"裁剪参数必须在 (0, 1) 内: {self.clip_eps}")
        if self.learning_rate <= 0 or self.distill_lr <= 0:
            raise InputError("学习率必须 > 0")
        if self.distill_period < 1:
            raise InputError(f"蒸馏周期 K 必须 ≥ 1: {self.distill_period}")
        if self.epochs < 1 or self.distill_steps < 0 or self.guard_backtracks < 0:
            raise InputError("epochs 必须 ≥ 1，蒸馏步数与回溯次数必须 ≥ 0")
        if self.distill_coef < 0:
            raise InputError("蒸馏系数必须 ≥ 0")
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"λ 必须在 [0, 1] 内: {self.lam}")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise InputError(f"折扣因子必须在 [0, 1) 内: {self.gamma}")
        if self.n_episodes < 1 or self.horizon < 1:
            raise InputError("回合数与时间步长都必须 ≥ 1")
        if self.mode is SchemeMode.B2MAPO_FIXED and self.fixed_sequence is None:
            raise InputError("b2mapo-fixed 方案需要给定批次序列")

    @classmethod
    def from_defaults(cls, **overrides) -> "SchemeConfig":
        """以 SCHEME_CONFIG（含环境变量覆盖）为默认值"""
        known = {f.name for f in fields(cls)}
        known.discard("gamma")
        defaults = {k: v for k, v in get_scheme_config().items() if k in known}
        return cls(**{**defaults, **overrides})

    def clip_for(self, k: int) -> float:
        if np.isscalar(self.clip_eps):
            return float(self.clip_eps)
        clips = list(self.clip_eps)
        return float(clips[min(k, len(clips) - 1)])

    def discount(self, game: MarkovGame) -> float:
        if self.oracle or self.gamma is None:
            return game.gamma
        return float(self.gamma)


@dataclass
class BatchUpdateResult:
    """单个批次的更新结果"""

    surrogate_before: float
    surrogate_after: float
    alpha: float
    step_scale: float = 1.0
    elapsed: float = 0.0
    joint_alpha: Optional[float] = None


def plan_round(
    config: SchemeConfig,
    n_agents: int,
    scheduler_sequence: Optional[BatchSequence] = None,
    advantage_magnitudes: Optional[Sequence[float]] = None,
) -> BatchSequence:
    """按方案给出下一轮的批次序列"""
    mode = config.mode
    if mode is SchemeMode.MAPPO:
        return BatchSequence.single(n_agents)
    if mode is SchemeMode.A2PO:
        if advantage_magnitudes is None:
            return BatchSequence.singletons(range(n_agents))
        magnitudes = np.asarray(advantage_magnitudes, dtype=np.float64)
        if magnitudes.shape != (n_agents,):
            raise InputError(f"优势幅度长度应为 {n_agents}")
        order = sorted(range(n_agents), key=lambda i: (-magnitudes[i], i))
        return BatchSequence.singletons(order)
    if mode is SchemeMode.B2MAPO_DAG:
        if scheduler_sequence is None:
            return BatchSequence.single(n_agents)
        return scheduler_sequence.validate(n_agents)
    return config.fixed_sequence.validate(n_agents)


def _logged_old_probs(
    behavior: PolicySet, agent: int, traj: TrajectoryBatch
) -> np.ndarray:
    probs = behavior.agent_logged_probs(agent, traj.observations, traj.actions)
    if np.any(probs <= 0):
        raise NumericDomainError(f"智能体 {agent} 的旧策略对记录动作的概率为 0")
    return probs


def _product_ratio(
    current: PolicySet,
    old: PolicySet,
    agents: Sequence[int],
    observations: np.ndarray,
    actions: np.ndarray,
) -> np.ndarray:
    ratio = np.ones(np.asarray(actions).shape[:-1])
    for agent in sorted(agents):
        old_probs = old.agent_logged_probs(agent, observations, actions)
        if np.any(old_probs <= 0):
            raise NumericDomainError(f"智能体 {agent} 的旧策略概率为 0")
        new_probs = current.agent_logged_probs(agent, observations, actions)
        ratio = ratio * new_probs / old_probs
    return ratio


def batch_ratio(
    new_set: PolicySet,
    old_set: PolicySet,
    observations: np.ndarray,
    actions: np.ndarray,
    batch: Sequence[int],
    preceding: Sequence[int],
    clip_eps: float,
) -> np.ndarray:
    """l = Π_{i∈b_k} π̂^i/π^i · clip(Π_{j∈B_k} π̂^j/π^j, 1 ± ε/2)

    observations/actions 最后一维为智能体，可以是单个样本也可以是整批数据。
    """
    own = _product_ratio(new_set, old_set, batch, observations, actions)
    before = _product_ratio(new_set, old_set, preceding, observations, actions)
    return own * np.clip(before, 1.0 - clip_eps / 2.0, 1.0 + clip_eps / 2.0)


def batch_surrogate_loss(
    advantages: np.ndarray, ratios: np.ndarray, clip_eps: float
) -> float:
    """mean(min(l·Â, clip(l, 1±ε)·Â))"""
    advantages = np.asarray(advantages, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps)
    return float(np.mean(np.minimum(ratios * advantages, clipped * advantages)))


def _ppo_ascent(
    logits: List[np.ndarray],
    rows: List[Tuple[np.ndarray, ...]],
    actions: List[np.ndarray],
    old_probs: List[np.ndarray],
    advantages: np.ndarray,
    fixed_factor: np.ndarray,
    clip_eps: float,
    learning_rate: float,
    epochs: int,
):
    """对一组 logit 表做裁剪代理目标的梯度上升

    样本 t 的比率为 fixed_factor_t·Π_a π_a(act|row)/old_a；先算出所有表的梯度再统一更新，
    共享同一数组的表因此会累积各自的梯度。
    """
    n = advantages.size
    if n == 0:
        return
    index = np.arange(n)
    for _ in range(epochs):
        probs = [softmax(table[row]) for table, row in zip(logits, rows)]
        ratio = fixed_factor.copy()
        for p, act, old in zip(probs, actions, old_probs):
            ratio = ratio * p[index, act] / old
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        active = ratio * advantages <= clipped * advantages
        coef = np.where(active, advantages * ratio, 0.0) / n

        gradients = []
        for table, row, p, act in zip(logits, rows, probs, actions):
            contribution = -coef[:, None] * p
            contribution[index, act] += coef
            gradient = np.zeros_like(table)
            np.add.at(gradient, row, contribution)
            if not np.all(np.isfinite(gradient)):
                raise NumericDomainError("代理目标梯度非有限")
            gradients.append(gradient)
        for table, gradient in zip(logits, gradients):
            table += learning_rate * gradient


def _flat(traj: TrajectoryBatch):
    observations = traj.observations.reshape(-1, traj.n_agents)
    actions = traj.actions.reshape(-1, traj.n_agents)
    return observations, actions


def mappo_update(
    independent: List[IndependentPolicy],
    traj: TrajectoryBatch,
    advantage: Union[AdvantageEstimate, np.ndarray],
    clip_eps: float,
    learning_rate: float = 0.05,
    epochs: int = 4,
    old_probs: Optional[List[np.ndarray]] = None,
) -> List[IndependentPolicy]:
    """所有 π_ind^i 同时以联合比率 Π_i π̂^i/π^i 做裁剪代理目标更新"""
    values = advantage.values if isinstance(advantage, AdvantageEstimate) else advantage
    advantages = np.asarray(values, dtype=np.float64).ravel()
    observations, actions = _flat(traj)
    rows, acts, olds = [], [], []
    for i, policy in enumerate(independent):
        row = (observations[:, policy.agent],)
        act = actions[:, policy.agent]
        if old_probs is None:
            old = softmax(policy.logits[row])[np.arange(act.size), act]
        else:
            old = np.asarray(old_probs[i]).ravel()
        if np.any(old <= 0):
            raise NumericDomainError(f"独立策略 {policy.agent} 的旧概率为 0")
        rows.append(row)
        acts.append(act)
        olds.append(old)
    _ppo_ascent(
        [p.logits for p in independent],
        rows,
        acts,
        olds,
        advantages,
        np.ones(advantages.size),
        clip_eps,
        learning_rate,
        epochs,
    )
    return independent


def _batch_alpha(
    game: MarkovGame,
    before: Dict[int, np.ndarray],
    policy_set: PolicySet,
    batch: Sequence[int],
) -> float:
    """α^{b_k}：批次乘积分布在 (状态, 上下文) 上的最大 TV；窗口编码时退化为各智能体 TV 之和"""
    if not policy_set.encoder.state_based:
        total = sum(
            max_tv(before[a], policy_set.conditioned[a].probs_table()) for a in batch
        )
        return min(1.0, total)
    prev_rows, next_rows = [], []
    for agent in batch:
        policy = policy_set.conditioned[agent]
        obs = game.observation[agent]
        contexts = np.arange(policy.n_contexts)
        index = (obs[:, None], contexts[None, :])
        prev_rows.append(before[agent][index].reshape(-1, policy.n_actions))
        next_rows.append(policy.probs_table()[index].reshape(-1, policy.n_actions))
    return batch_tv(prev_rows, next_rows)


def _unique_tables(policy_set: PolicySet, batch: Sequence[int]) -> List[np.ndarray]:
    seen, tables = set(), []
    for agent in batch:
        table = policy_set.conditioned[agent].logits
        if id(table) not in seen:
            seen.add(id(table))
            tables.append(table)
    return tables


def _guard_penalty(
    epsilon: float, alpha: float, alpha_sum: float, gamma: float
) -> float:
    """4ε·α·(1/(1-γ) - 1/(1-γ(1-Σα)))，Σα 截断到 1"""
    total = min(alpha_sum, 1.0)
    horizon_gap = 1.0 / (1.0 - gamma) - 1.0 / (1.0 - gamma * (1.0 - total))
    return 4.0 * epsilon * alpha * horizon_gap


def update_batch(
    game: MarkovGame,
    policy_set: PolicySet,
    k: int,
    traj: TrajectoryBatch,
    advantage: AdvantageEstimate,
    behavior: PolicySet,
    config: SchemeConfig,
    prior_alpha_sum: float = 0.0,
) -> BatchUpdateResult:
    """只更新批次 b_k 的参数：对双裁剪代理目标做若干轮梯度上升

    预言机模式下每一步都要用精确下界认证 𝒥 不下降，否则向更新前参数折半回溯，最终放弃。
    """
    started = time.perf_counter()
    sequence = policy_set.batch_sequence
    batch, preceding = sequence[k], sequence.preceding(k)
    clip_eps = config.clip_for(k)
    observations, actions = _flat(traj)
    advantages = advantage.values.ravel()

    fixed_factor = np.clip(
        _product_ratio(policy_set, behavior, preceding, observations, actions),
        1.0 - clip_eps / 2.0,
        1.0 + clip_eps / 2.0,
    )
    rows, acts, olds = [], [], []
    for agent in batch:
        policy = policy_set.conditioned[agent]
        rows.append((observations[:, agent], policy.context_indices(actions)))
        acts.append(actions[:, agent])
        olds.append(_logged_old_probs(behavior, agent, traj).ravel())

    def surrogate() -> float:
        ratios = batch_ratio(
            policy_set, behavior, observations, actions, batch, preceding, clip_eps
        )
        return batch_surrogate_loss(advantages, ratios, clip_eps)

    before_value = surrogate()
    before_probs = {a: policy_set.conditioned[a].probs_table() for a in batch}
    tables = _unique_tables(policy_set, batch)
    snapshot = [t.copy() for t in tables]
    guarded = config.oracle and config.oracle_guard
    prev_joint = policy_set.joint_table(game) if guarded else None

    # 每个智能体的 logit 表（共享时是同一个数组）
    _ppo_ascent(
        [policy_set.conditioned[a].logits for a in batch],
        rows,
        acts,
        olds,
        advantages,
        fixed_factor,
        clip_eps,
        config.learning_rate,
        config.epochs,
    )

    step_scale, joint_alpha = 1.0, None
    if guarded:
        step_scale, joint_alpha = _certify_step(
            game,
            policy_set,
            behavior,
            tables,
            snapshot,
            prev_joint,
            prior_alpha_sum,
            config,
        )

    result = BatchUpdateResult(
        surrogate_before=before_value,
        surrogate_after=surrogate(),
        alpha=_batch_alpha(game, before_probs, policy_set, batch),
        step_scale=step_scale,
        joint_alpha=joint_alpha,
    )
    result.elapsed = time.perf_counter() - started
    logger.debug(
        f"批次 {k + 1} {sequence.to_text()} 更新: 代理 {result.surrogate_before:.6g} → "
        f"{result.surrogate_after:.6g}, α={result.alpha:.4g}, 步长比例 {step_scale:g}"
    )
    return result


def _certify_step(
    game: MarkovGame,
    policy_set: PolicySet,
    behavior: PolicySet,
    tables: List[np.ndarray],
    snapshot: List[np.ndarray],
    prev_joint: np.ndarray,
    prior_alpha_sum: float,
    config: SchemeConfig,
) -> Tuple[float, float]:
    """下界认证：J' + E_{d^π, π̂}[A']/(1-γ) - 罚项 ≥ J' 才接受，返回 (步长比例, 联合 α)"""
    gamma = game.gamma
    prev = exact_tables(game, prev_joint)
    behavior_joint = behavior.joint_table(game)
    proposed = [t.copy() for t in tables]
    scale = 1.0
    for attempt in range(config.guard_backtracks + 1):
        if attempt:
            scale *= 0.5
            for table, old, new in zip(tables, snapshot, proposed):
                table[...] = old + scale * (new - old)
        joint = policy_set.joint_table(game)
        alpha = max_tv(prev_joint, joint)
        gain = state_action_expectation(game, behavior_joint, joint, prev.A)
        gain /= 1.0 - gamma
        penalty = _guard_penalty(prev.epsilon, alpha, prior_alpha_sum + alpha, gamma)
        if gain - penalty >= 0.0:
            return scale, alpha
    for table, old in zip(tables, snapshot):
        table[...] = old
    logger.debug("批次更新未通过下界认证，已回退")
    return 0.0, 0.0


def batch_advantage(
    game: MarkovGame,
    traj: TrajectoryBatch,
    policy_set: PolicySet,
    behavior: PolicySet,
    k: int,
    config: SchemeConfig,
):
    """以 π̂^{b_{k-1}}（当前参数）为修正目标重新计算优势，返回 (估计, 值表)"""
    gamma = config.discount(game)
    if config.oracle:
        exact = exact_tables(game, policy_set.joint_table(game))
        values = exact.A[traj.states[:, :-1], traj.joint_actions]
        estimate = AdvantageEstimate(
            values=values, gamma=gamma, lam=config.lam, mode="exact"
        )
        return estimate, exact.V
    context_agents = (
        policy_set.batch_sequence.preceding(k) if config.conditioned_critic else ()
    )
    V = fit_value_table(traj, gamma, game.n_states, context_agents, game.action_counts)
    estimate = corrected_advantage(traj, V, behavior, policy_set, gamma, config.lam)
    if config.normalize_advantages:
        estimate = normalize_advantages(estimate)
    return estimate, V


def _marginal_targets(policy_set: PolicySet, traj: TrajectoryBatch, agent: int):
    """π̄^i(·|o)：按经验上下文分布边缘化的条件策略，以及观测的经验权重 w(o)"""
    policy = policy_set.conditioned[agent]
    obs = traj.observations[..., agent].ravel()
    ctx = policy.context_indices(traj.actions).reshape(-1)
    counts = np.zeros((policy.n_observations, policy.n_contexts))
    np.add.at(counts, (obs, ctx), 1.0)
    mass = counts.sum(axis=1, keepdims=True)
    context_dist = np.where(
        mass > 0, counts / np.where(mass > 0, mass, 1.0), 1.0 / policy.n_contexts
    )
    target = np.einsum("oc,oca->oa", context_dist, policy.probs_table())
    return target, mass.ravel() / obs.size


def distill_loss(policy_set: PolicySet, traj: TrajectoryBatch) -> float:
    """Σ_i Σ_o w(o)·KL(π̄^i(·|o) ‖ π_ind^i(·|o))"""
    total = 0.0
    for agent, independent in enumerate(policy_set.independent):
        target, weights = _marginal_targets(policy_set, traj, agent)
        probs = independent.probs_table()
        for o in np.flatnonzero(weights):
            total += weights[o] * kl(target[o], probs[o])
    return float(total)


def distill_step(
    policy_set: PolicySet,
    traj: TrajectoryBatch,
    coefficient: float,
    learning_rate: float = 1.0,
    steps: int = 1,
) -> float:
    """最小化 coef·E[KL(π^i ‖ π_ind^i)]，返回更新后的 KL"""
    if coefficient < 0:
        raise InputError("蒸馏系数必须 ≥ 0")
    targets = [
        _marginal_targets(policy_set, traj, a) for a in range(policy_set.n_agents)
    ]
    for _ in range(steps):
        gradients = []
        for independent, (target, weights) in zip(policy_set.independent, targets):
            gradients.append(
                coefficient * weights[:, None] * (independent.probs_table() - target)
            )
        for independent, gradient in zip(policy_set.independent, gradients):
            independent.logits -= learning_rate * gradient
    return distill_loss(policy_set, traj)


def switch_sequence(
    game: MarkovGame,
    policy_set: PolicySet,
    sequence: BatchSequence,
    config: SchemeConfig,
) -> Tuple[bool, Optional[float]]:
    """把策略切换到新的批次序列，返回 (是否切换, 联合表最大变化)

    切换会重新枚举上下文，批次合并或重排时依赖关系可能丢失，联合策略随之改变。
    预言机认证模式下只接受不降低 𝒥 的切换，否则保留原序列。
    """
    if sequence == policy_set.batch_sequence:
        return True, 0.0
    if not policy_set.encoder.state_based:
        policy_set.rebind(sequence, game)
        return True, None
    old_joint = policy_set.joint_table(game)
    candidate = policy_set.copy().rebind(sequence, game)
    new_joint = candidate.joint_table(game)
    shift = float(np.max(np.abs(new_joint - old_joint)))
    if config.oracle and config.oracle_guard:
        j_old = expected_return(game, old_joint)
        j_new = expected_return(game, new_joint)
        if j_new < j_old - _REBIND_TOLERANCE:
            logger.debug(
                f"序列切换 {policy_set.batch_sequence.to_text()} → "
                f"{sequence.to_text()} 会使 J 从 {j_old:.6g} 降到 {j_new:.6g}，保留原序列"
            )
            return False, shift
    policy_set.conditioned = candidate.conditioned
    policy_set.batch_sequence = candidate.batch_sequence
    if shift > _REBIND_TOLERANCE:
        logger.debug(f"序列切换改变了联合策略，最大变化 {shift:.4g}")
    return True, shift


def _execute_round(
    game: MarkovGame,
    policy_set: PolicySet,
    config: SchemeConfig,
    seed: int,
    round_index: int,
    batch_sequence: Optional[BatchSequence],
) -> Tuple[RoundReport, TrajectoryBatch, AdvantageEstimate]:
    requested = batch_sequence or policy_set.batch_sequence
    gamma = config.discount(game)
    state_based = policy_set.encoder.state_based

    j_before = None
    if config.oracle:
        j_before = expected_return(game, policy_set.joint_table(game))
    switched, rebind_shift = switch_sequence(game, policy_set, requested, config)
    sequence = policy_set.batch_sequence
    behavior = policy_set.copy()
    behavior_table = None
    if config.record_chain and state_based:
        behavior_table = behavior.joint_table(game)
    traj = collect_rollouts(
        game, policy_set, sequence, config.n_episodes, config.horizon, seed
    )
    results: List[BatchUpdateResult] = []
    chain: List[np.ndarray] = []
    value_tables = []
    first_estimate = None
    alpha_sum = 0.0
    for k in range(len(sequence)):
        estimate, V = batch_advantage(game, traj, policy_set, behavior, k, config)
        if first_estimate is None:
            first_estimate = estimate
        result = update_batch(
            game,
            policy_set,
            k,
            traj,
            estimate,
            behavior,
            config,
            prior_alpha_sum=alpha_sum,
        )
        if result.joint_alpha is not None:
            alpha_sum += result.joint_alpha
        results.append(result)
        if config.record_chain and state_based:
            chain.append(policy_set.joint_table(game))
            value_tables.append(V)

    if config.independent_update:
        mappo_update(
            policy_set.independent,
            traj,
            first_estimate,
            config.clip_for(0),
            config.learning_rate,
            config.epochs,
        )
    distill_kl = None
    if round_index % config.distill_period == 0:
        distill_kl = distill_step(
            policy_set,
            traj,
            config.distill_coef,
            config.distill_lr,
            config.distill_steps,
        )

    j_after = None
    if config.oracle:
        j_after = expected_return(game, policy_set.joint_table(game))
    report = RoundReport(
        round_index=round_index,
        mode=config.mode,
        batch_sequence=sequence,
        surrogate_before=[r.surrogate_before for r in results],
        surrogate_after=[r.surrogate_after for r in results],
        alphas=[r.alpha for r in results],
        batch_times=[r.elapsed for r in results],
        j_mc=float(traj.discounted_returns(gamma).mean()),
        j_before=j_before,
        j_after=j_after,
        distill_kl=distill_kl,
        step_scales=[r.step_scale for r in results],
        chain=chain if config.record_chain and state_based else None,
        value_tables=value_tables if config.record_chain and state_based else None,
        behavior_table=behavior_table,
        requested_sequence=None if switched else requested,
        rebind_shift=rebind_shift,
    )
    return report, traj, first_estimate


def run_round(
    game: MarkovGame,
    policy_set: PolicySet,
    config: SchemeConfig,
    seed: int,
    round_index: int = 1,
    batch_sequence: Optional[BatchSequence] = None,
) -> RoundReport:
    """一轮：单次采样，逐批次重算修正优势并更新，按周期蒸馏"""
    report, _, _ = _execute_round(
        game, policy_set, config, seed, round_index, batch_sequence
    )
    return report


class B2MAPOTrainer:
    """多轮训练驱动：持有策略、调度器与待执行的批次序列"""

    def __init__(
        self,
        game: MarkovGame,
        config: SchemeConfig,
        seed: int = 0,
        encoder: Optional[ObservationEncoder] = None,
        init_scale: float = 0.0,
        scheduler_config: Optional[dict] = None,
    ):
        self.game = game
        self.config = config
        self.seed = int(seed)
        self.round_index = 0
        sequence = plan_round(config, game.n_agents)
        self.policy_set = PolicySet.create(
            game, sequence, config.parameter_sharing, init_scale, seed, encoder
        )
        if self.policy_set.encoder.state_based:
            for independent, marginal in zip(
                self.policy_set.independent, marginalize(self.policy_set, game)
            ):
                independent.logits[...] = marginal.logits
        self.pending_sequence = sequence
        self.pending_decision: Optional[SchedulerDecision] = None
        self.scheduler: Optional[BatchScheduler] = None
        if config.mode is SchemeMode.B2MAPO_DAG:
            encoder = self.policy_set.encoder
            self.scheduler = BatchScheduler(
                n_agents=game.n_agents,
                n_states=game.n_states,
                n_keys=max(encoder.n_keys(game, i) for i in range(game.n_agents)),
                n_actions=max(game.action_counts),
                gamma=config.discount(game),
                seed=seed,
                config=scheduler_config,
            )
        logger.info(
            f"训练器初始化完成: 方案 {config.mode.value}, 博弈 {game.name}, 种子 {seed}"
        )

    def round_seed(self, round_index: int) -> int:
        return int(derive_rng(self.seed, round_index).integers(2**31 - 1))

    def run_round(self) -> RoundReport:
        self.round_index += 1
        report, traj, estimate = _execute_round(
            self.game,
            self.policy_set,
            self.config,
            self.round_seed(self.round_index),
            self.round_index,
            self.pending_sequence,
        )
        report.next_sequence = self._plan_next(traj, estimate)
        self.pending_sequence = report.next_sequence
        logger.info(
            f"第 {self.round_index} 轮完成: 序列 {report.batch_sequence.to_text()}, "
            f"J_mc={report.j_mc:.6g}"
            + (f", J={report.j_after:.6g}" if report.j_after is not None else "")
        )
        return report

    def _plan_next(
        self, traj: TrajectoryBatch, estimate: AdvantageEstimate
    ) -> BatchSequence:
        n = self.game.n_agents
        if self.config.mode is SchemeMode.B2MAPO_DAG:
            if self.pending_decision is not None:
                self.scheduler.learn(self.pending_decision, traj)
            rng = derive_rng(self.seed, self.round_index, 1)
            self.pending_decision = self.scheduler.propose(traj, rng)
            sequence = self.pending_decision.batch_sequence
            return plan_round(self.config, n, scheduler_sequence=sequence)
        if self.config.mode is SchemeMode.A2PO:
            magnitudes = per_agent_advantage_magnitude(traj, estimate)
            return plan_round(self.config, n, advantage_magnitudes=magnitudes)
        return plan_round(self.config, n)

    def train(self, rounds: int) -> List[RoundReport]:
        if rounds < 1:
            raise InputError(f"轮数必须 ≥ 1: {rounds}")
        return [self.run_round() for _ in range(rounds)]
