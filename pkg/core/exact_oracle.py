"""
动态规划精确预言机：值函数、优势函数、回报、访问分布、TV 距离与精确代理目标
"""

from typing import Iterable, Optional, Sequence, Union

from loguru import logger
import numpy as np

from .cache_manager import ExactTableCache
from .exceptions import InputError, InternalError
from .game_core import MarkovGame
from .models import ExactTables, SurrogateMeasure
from .utils import generate_cache_key

RESIDUAL_TOL = 1e-10
DIST_TOL = 1e-9

_table_cache = ExactTableCache()


def get_table_cache() -> ExactTableCache:
    return _table_cache


def _check_policy(game: MarkovGame, joint_policy: np.ndarray) -> np.ndarray:
    joint_policy = np.asarray(joint_policy, dtype=np.float64)
    if joint_policy.shape != (game.n_states, game.n_joint):
        raise InputError(
            f"联合策略表形状应为 {(game.n_states, game.n_joint)}，实际 {joint_policy.shape}"
        )
    row_error = np.max(np.abs(joint_policy.sum(axis=1) - 1))
    if np.any(joint_policy < 0) or row_error > DIST_TOL:
        raise InputError("联合策略每个状态下必须是合法分布")
    return joint_policy


def _policy_dynamics(game: MarkovGame, joint_policy: np.ndarray):
    P_pi = np.einsum("sj,sjt->st", joint_policy, game.transition)
    R_pi = np.sum(joint_policy * game.reward, axis=1)
    return P_pi, R_pi


def _solve(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """部分主元 LU 求解，并检查残差"""
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as e:
        logger.error(f"{what} 线性系统求解失败: {e}")
        raise InternalError(f"{what} 线性系统奇异") from e
    residual = np.max(np.abs(matrix @ solution - rhs)) if rhs.size else 0.0
    scale = max(1.0, float(np.max(np.abs(solution))) if solution.size else 1.0)
    if residual > RESIDUAL_TOL * scale:
        raise InternalError(f"{what} 残差过大: {residual:.3e}")
    return solution


def exact_value(game: MarkovGame, joint_policy: np.ndarray) -> np.ndarray:
    """求解 (I - γP_π)V = R_π"""
    joint_policy = _check_policy(game, joint_policy)
    P_pi, R_pi = _policy_dynamics(game, joint_policy)
    system = np.eye(game.n_states) - game.gamma * P_pi
    return _solve(system, R_pi, "Bellman")


def exact_q_advantage(game: MarkovGame, joint_policy: np.ndarray):
    """Q(s,a) = R(s,a) + γ Σ P(s'|s,a) V(s')，A = Q - V"""
    V = exact_value(game, joint_policy)
    Q = game.reward + game.gamma * (game.transition @ V)
    return Q, Q - V[:, None]


def expected_return(game: MarkovGame, joint_policy: np.ndarray) -> float:
    return float(game.initial_dist @ exact_value(game, joint_policy))


def visitation(game: MarkovGame, joint_policy: np.ndarray) -> np.ndarray:
    """归一化折扣状态访问分布 d(s) = (1-γ) Σ_t γ^t Pr(s_t = s)"""
    joint_policy = _check_policy(game, joint_policy)
    P_pi, _ = _policy_dynamics(game, joint_policy)
    system = (np.eye(game.n_states) - game.gamma * P_pi).T
    d = (1.0 - game.gamma) * _solve(system, game.initial_dist, "访问分布")
    # 消去求解带来的微小负值
    return np.clip(d, 0.0, None)


def state_distribution_at(
    game: MarkovGame, joint_policy: np.ndarray, t: int
) -> np.ndarray:
    """第 t 步的状态分布 Pr(s_t | π)，矩阵幂精确计算"""
    joint_policy = _check_policy(game, joint_policy)
    P_pi, _ = _policy_dynamics(game, joint_policy)
    return game.initial_dist @ np.linalg.matrix_power(P_pi, int(t))


def exact_tables(game: MarkovGame, joint_policy: np.ndarray) -> ExactTables:
    """V、Q、A、J、d 一次算齐，结果缓存"""
    joint_policy = _check_policy(game, joint_policy)
    key = generate_cache_key(joint_policy, tag=game.fingerprint)
    cached = _table_cache.get(key)
    if cached is not None:
        return cached

    V = exact_value(game, joint_policy)
    Q = game.reward + game.gamma * (game.transition @ V)
    A = Q - V[:, None]
    tables = ExactTables(
        V=V,
        Q=Q,
        A=A,
        J=float(game.initial_dist @ V),
        d=visitation(game, joint_policy),
    )
    for array in (tables.V, tables.Q, tables.A, tables.d):
        array.flags.writeable = False
    _table_cache.set(key, tables)
    return tables


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """½ Σ|p - q|"""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InputError(f"分布形状不一致: {p.shape} vs {q.shape}")
    return float(0.5 * np.sum(np.abs(p - q)))


def max_tv(policy_a: np.ndarray, policy_b: np.ndarray) -> float:
    """逐行（状态或状态-上下文）TV 距离的最大值，最后一维为动作"""
    policy_a = np.asarray(policy_a, dtype=np.float64)
    policy_b = np.asarray(policy_b, dtype=np.float64)
    if policy_a.shape != policy_b.shape:
        raise InputError(f"策略表形状不一致: {policy_a.shape} vs {policy_b.shape}")
    if policy_a.size == 0:
        return 0.0
    rows = 0.5 * np.sum(np.abs(policy_a - policy_b), axis=-1)
    return float(np.max(rows))


def state_action_expectation(
    game: MarkovGame,
    measure_policy: np.ndarray,
    action_policy: np.ndarray,
    table: np.ndarray,
) -> float:
    """E_{s∼d^{measure}, a∼action}[table(s, a)]"""
    d = visitation(game, measure_policy)
    return float(d @ np.sum(np.asarray(action_policy) * table, axis=1))


def estimator_advantage_table(
    game: MarkovGame,
    behavior: np.ndarray,
    target: np.ndarray,
    V: np.ndarray,
    lam: float,
) -> np.ndarray:
    """截断重要性加权修正估计量在 (s, a) 上的期望值表

    Ā(s,a) = D(s,a) + γ Σ_{s',a'} P(s'|s,a)·λ·min(π(a'|s'), π̂(a'|s'))·Ā(s',a')，
    D(s,a) = R(s,a) + γ Σ P(s'|s,a)V(s') - V(s)。不动点直接线性求解。
    """
    behavior = _check_policy(game, behavior)
    target = _check_policy(game, target)
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (game.n_states,):
        raise InputError("V 表应按状态索引")
    S, J = game.n_states, game.n_joint
    D = game.reward + game.gamma * (game.transition @ V) - V[:, None]
    continuation = lam * np.minimum(behavior, target)  # (S', J')
    # M[(s,a),(s',a')] = P(s'|s,a)·c(s',a')
    M = (game.transition[:, :, :, None] * continuation[None, None, :, :]).reshape(
        S * J, S * J
    )
    system = np.eye(S * J) - game.gamma * M
    return _solve(system, D.reshape(-1), "估计量表").reshape(S, J)


def exact_batch_surrogate(
    game: MarkovGame,
    behavior: np.ndarray,
    prev_policy: np.ndarray,
    next_policy: np.ndarray,
    advantage: Union[str, np.ndarray] = "exact",
    measure: SurrogateMeasure = SurrogateMeasure.REALIZED,
) -> float:
    """𝓛_{π̂_prev}(π̂_next) = 𝒥(π̂_prev) + 1/(1-γ)·E_{(d, π̂_next)}[A]"""
    if isinstance(advantage, str) and advantage != "exact":
        raise InputError(f"未知的优势来源: {advantage}")
    prev_tables = exact_tables(game, prev_policy)
    A = prev_tables.A if isinstance(advantage, str) else np.asarray(advantage)
    realized = SurrogateMeasure(measure) is SurrogateMeasure.REALIZED
    measure_policy = next_policy if realized else behavior
    gain = state_action_expectation(game, measure_policy, next_policy, A)
    return prev_tables.J + gain / (1.0 - game.gamma)


def exact_joint_surrogate(
    game: MarkovGame,
    behavior: np.ndarray,
    batch_chain: Sequence[np.ndarray],
    advantages: Optional[Iterable[np.ndarray]] = None,
    measure: SurrogateMeasure = SurrogateMeasure.REALIZED,
) -> float:
    """𝒢_π(π̂) = 𝒥(π) + 1/(1-γ)·Σ_k E_{(d, π̂^{b_k})}[A_k]

    A_k 缺省为 A^{π̂^{b_{k-1}}}（π̂^{b_0} = π）。
    """
    total = exact_tables(game, behavior).J
    chain = [np.asarray(p) for p in batch_chain]
    tables = list(advantages) if advantages is not None else None
    if tables is not None and len(tables) != len(chain):
        raise InputError("优势表数量与更新链长度不符")
    realized = SurrogateMeasure(measure) is SurrogateMeasure.REALIZED
    previous = behavior
    for k, policy in enumerate(chain):
        A = tables[k] if tables is not None else exact_tables(game, previous).A
        measure_policy = policy if realized else behavior
        total += state_action_expectation(game, measure_policy, policy, A) / (
            1.0 - game.gamma
        )
        previous = policy
    return float(total)


def product_table(factors: Sequence[np.ndarray]) -> np.ndarray:
    """各智能体分布 (S, A_i) 的乘积联合表 (S, J)，行优先"""
    table = np.ones((factors[0].shape[0], 1))
    for factor in factors:
        table = (table[:, :, None] * factor[:, None, :]).reshape(table.shape[0], -1)
    return table


def batch_tv(
    prev_factors: Sequence[np.ndarray], next_factors: Sequence[np.ndarray]
) -> float:
    """批次乘积分布的最大 TV：各智能体行 (R, A_i) 按行对齐（行为 状态×上下文）"""
    if len(prev_factors) != len(next_factors):
        raise InputError("前后批次的智能体数不一致")
    if not prev_factors:
        return 0.0
    return max_tv(product_table(prev_factors), product_table(next_factors))
