"""
上层 DAG 生成器：注意力依赖打分、伯努利边集策略、PPO 更新与周期评论家
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from loguru import logger
import numpy as np

from .exceptions import InputError, NumericDomainError
from .models import DependenceGraph

Edge = Tuple[int, int]


@dataclass
class AttentionScorer:
    """双线性注意力打分器：q = XW_q，k = XW_k；W_v 只产出检查用的嵌入"""

    W_q: np.ndarray  # (D, d_k)
    W_k: np.ndarray
    W_v: np.ndarray
    phi: np.ndarray  # V^dag 的状态表

    def __post_init__(self):
        if self.W_q.shape != self.W_k.shape or self.W_q.shape != self.W_v.shape:
            raise InputError("W_q、W_k、W_v 形状必须一致")
        if self.d_k < 1:
            raise InputError("d_k 必须 > 0")

    @classmethod
    def create(
        cls,
        feature_dim: int,
        d_k: int,
        n_states: int,
        seed: int = 0,
        init_scale: float = 0.1,
    ) -> "AttentionScorer":
        if feature_dim < 1 or d_k < 1 or n_states < 1:
            raise InputError("特征维度、d_k 与状态数都必须 ≥ 1")
        rng = np.random.default_rng(seed)
        shape = (feature_dim, d_k)
        return cls(
            W_q=init_scale * rng.standard_normal(shape),
            W_k=init_scale * rng.standard_normal(shape),
            W_v=init_scale * rng.standard_normal(shape),
            phi=np.zeros(n_states),
        )

    @property
    def feature_dim(self) -> int:
        return self.W_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.W_q.shape[1]

    def copy(self) -> "AttentionScorer":
        return AttentionScorer(
            self.W_q.copy(), self.W_k.copy(), self.W_v.copy(), self.phi.copy()
        )

    def embed(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features) @ self.W_v


def default_threshold(n_agents: int) -> float:
    """δ_dep = 1/(2(n-1))，即均匀行质量的一半"""
    return 1.0 / (2.0 * (n_agents - 1)) if n_agents > 1 else 1.0


def _check_features(scorer: AttentionScorer, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != scorer.feature_dim:
        raise InputError(
            f"特征形状应为 (n, {scorer.feature_dim})，实际 {features.shape}"
        )
    return features


def _scores(W_q: np.ndarray, W_k: np.ndarray, X: np.ndarray):
    """返回 (q, k, 行 softmax)，对角线在归一化前屏蔽"""
    q, k = X @ W_q, X @ W_k
    n = X.shape[0]
    z = q @ k.T / np.sqrt(W_q.shape[1])
    z = np.where(np.eye(n, dtype=bool), -np.inf, z)
    if n < 2:
        return q, k, np.zeros((n, n))
    z = z - np.max(z, axis=1, keepdims=True)
    weights = np.exp(z)
    return q, k, weights / weights.sum(axis=1, keepdims=True)


def score_dependence(
    scorer: AttentionScorer, features: np.ndarray, threshold: Optional[float] = None
) -> DependenceGraph:
    """g[i][j] = softmax_j(q_i·k_j/√d_k)（j ≠ i），低于 δ_dep 的项置 0"""
    X = _check_features(scorer, features)
    n = X.shape[0]
    threshold = default_threshold(n) if threshold is None else float(threshold)
    _, _, raw = _scores(scorer.W_q, scorer.W_k, X)
    weights = np.where(raw >= threshold, raw, 0.0)
    return DependenceGraph(weights=weights, raw=raw, threshold=threshold)


def edge_mask(edges: Sequence[Edge], n_agents: int) -> np.ndarray:
    """边 (j, i) 对应 mask[i, j]"""
    mask = np.zeros((n_agents, n_agents), dtype=bool)
    for src, dst in edges:
        mask[dst, src] = True
    return mask


def bernoulli_log_prob(
    probs: np.ndarray, candidates: np.ndarray, mask: np.ndarray
) -> float:
    """候选边上独立伯努利的对数概率，0·log 0 记为 0"""
    chosen = np.where(mask, probs, 1.0 - probs)[candidates]
    if np.any(chosen <= 0):
        raise NumericDomainError("采样边集在当前策略下概率为 0")
    return float(np.sum(np.log(chosen)))


def sample_edge_set(
    graph: DependenceGraph, rng: np.random.Generator
) -> Tuple[List[Edge], float]:
    """每条 g>0 的边独立以概率 g 入选，返回 (边集, 对数概率)"""
    candidates = graph.weights > 0
    draws = rng.random(graph.weights.shape)
    mask = candidates & (draws < graph.weights)
    edges = sorted((int(j), int(i)) for i, j in np.argwhere(mask))
    return edges, bernoulli_log_prob(graph.weights, candidates, mask)


@dataclass
class GeneratorSample:
    """一次生成器决策的训练样本"""

    features: np.ndarray
    candidates: np.ndarray  # 旧策略下的候选边（阈值之后 g>0）
    mask: np.ndarray  # 采样到的边
    old_probs: np.ndarray  # 旧策略的阈值前 softmax
    old_log_prob: float
    advantages: np.ndarray  # 该决策对应的各周期优势


def generator_objective(
    W_q: np.ndarray,
    W_k: np.ndarray,
    samples: Sequence[GeneratorSample],
    clip_eps: float,
    kl_coef: float,
) -> float:
    """L(θ) = E[min(Sr·Â, clip(Sr, 1±ε)·Â)] - c1·E[KL(π_old ‖ π_new)]"""
    surrogate, kl_total, count = 0.0, 0.0, 0
    for sample in samples:
        _, _, probs = _scores(W_q, W_k, sample.features)
        log_prob = bernoulli_log_prob(probs, sample.candidates, sample.mask)
        ratio = np.exp(log_prob - sample.old_log_prob)
        adv = np.asarray(sample.advantages, dtype=np.float64)
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        surrogate += float(np.sum(np.minimum(ratio * adv, clipped * adv)))
        count += adv.size
        kl_total += _bernoulli_kl(sample.old_probs, probs, sample.candidates)
    if count == 0:
        return 0.0
    value = surrogate / count - kl_coef * kl_total / len(samples)
    if not np.isfinite(value):
        raise NumericDomainError("DAG 生成器目标非有限")
    return value


def _bernoulli_kl(old: np.ndarray, new: np.ndarray, candidates: np.ndarray) -> float:
    p, q = old[candidates], new[candidates]
    total = 0.0
    for a, b in ((p, q), (1.0 - p, 1.0 - q)):
        support = a > 0
        if np.any(b[support] <= 0):
            raise NumericDomainError("生成器 KL 要求旧策略绝对连续于新策略")
        total += float(np.sum(a[support] * np.log(a[support] / b[support])))
    return total


def generator_gradient(
    W_q: np.ndarray,
    W_k: np.ndarray,
    samples: Sequence[GeneratorSample],
    clip_eps: float,
    kl_coef: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """generator_objective 对 (W_q, W_k) 的解析梯度"""
    grad_q, grad_k = np.zeros_like(W_q), np.zeros_like(W_k)
    count = sum(np.asarray(s.advantages).size for s in samples)
    if count == 0:
        return grad_q, grad_k
    scale = 1.0 / np.sqrt(W_q.shape[1])
    for sample in samples:
        X = sample.features
        q, k, probs = _scores(W_q, W_k, X)
        C, M = sample.candidates, sample.mask
        ratio = np.exp(bernoulli_log_prob(probs, C, M) - sample.old_log_prob)
        adv = np.asarray(sample.advantages, dtype=np.float64)
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        active = ratio * adv <= clipped * adv
        coef = float(np.sum(adv[active])) * ratio / count

        old = sample.old_probs
        with np.errstate(divide="ignore", invalid="ignore"):
            dlogp = np.where(M, 1.0 / probs, -1.0 / (1.0 - probs))
            dkl = np.where(old > 0, -old / probs, 0.0) + np.where(
                old < 1, (1.0 - old) / (1.0 - probs), 0.0
            )
        u = np.where(C, coef * dlogp - kl_coef * dkl / len(samples), 0.0)

        # 行 softmax 的反向传播；对角线 g=0 不贡献
        dz = probs * (u - np.sum(probs * u, axis=1, keepdims=True))
        dq = dz @ k * scale
        dk = dz.T @ q * scale
        grad_q += X.T @ dq
        grad_k += X.T @ dk
    if not (np.all(np.isfinite(grad_q)) and np.all(np.isfinite(grad_k))):
        raise NumericDomainError("DAG 生成器梯度非有限")
    return grad_q, grad_k


def dag_generator_update(
    scorer: AttentionScorer,
    samples: Sequence[GeneratorSample],
    clip_eps: float,
    kl_coef: float,
    learning_rate: float = 0.05,
    epochs: int = 1,
) -> AttentionScorer:
    """PPO 上升 L(θ)，原地更新 W_q、W_k"""
    if not 0.0 < clip_eps < 1.0:
        raise InputError(f"裁剪参数必须在 (0, 1) 内: {clip_eps}")
    for _ in range(epochs):
        grad_q, grad_k = generator_gradient(
            scorer.W_q, scorer.W_k, samples, clip_eps, kl_coef
        )
        scorer.W_q += learning_rate * grad_q
        scorer.W_k += learning_rate * grad_k
    logger.debug(f"DAG 生成器更新完成 ({len(samples)} 个决策, {epochs} 轮)")
    return scorer


def dag_period_reward(
    rewards: np.ndarray, gamma: float, T: int, t: int = 0
) -> np.ndarray:
    """r_{t:t+T} = Σ_{l=0}^{T} γ^l r_{t+l}，在数据末尾截断；最后一维为时间"""
    rewards = np.asarray(rewards, dtype=np.float64)
    if T < 0:
        raise InputError("周期 T 必须 ≥ 0")
    stop = min(t + T + 1, rewards.shape[-1])
    window = rewards[..., t:stop]
    return window @ (gamma ** np.arange(window.shape[-1]))


def period_rewards(rewards: np.ndarray, gamma: float, T: int) -> np.ndarray:
    """每个起点 t 的周期回报，形状与 rewards 相同"""
    rewards = np.asarray(rewards, dtype=np.float64)
    return np.stack(
        [dag_period_reward(rewards, gamma, T, t) for t in range(rewards.shape[-1])],
        axis=-1,
    )


def dag_advantage(
    period_returns: np.ndarray, values: np.ndarray, gamma: float, T: int
) -> np.ndarray:
    """δ_t = r_{t:t+T} + γV(s_{t+T}) - V(s_t)；Â_t = Σ_{l=0}^{T-1} γ^l δ_{t+l}

    values[..., t] 为 V_φ(s_t)，越过数据末尾的值取 0。
    """
    r = np.asarray(period_returns, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise InputError(f"周期回报与值序列形状不一致: {r.shape} vs {v.shape}")
    L = r.shape[-1]
    following = np.zeros_like(v)
    if T < L:
        following[..., : L - T] = v[..., T:]
    deltas = r + gamma * following - v
    horizon = max(T, 1)
    advantages = np.zeros_like(deltas)
    for t in range(L):
        stop = min(t + horizon, L)
        advantages[..., t] = deltas[..., t:stop] @ (gamma ** np.arange(stop - t))
    return advantages


def dag_critic_update(
    phi: np.ndarray, states: np.ndarray, targets: np.ndarray, learning_rate: float
) -> Tuple[np.ndarray, float]:
    """最小二乘一步：L(φ) = E[(r_{t:t+T} - V_φ(s_t))²]，返回 (新 φ, 更新前损失)"""
    states = np.asarray(states).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if states.shape != targets.shape:
        raise InputError("状态与目标数量不一致")
    if states.size == 0:
        return phi.copy(), 0.0
    residual = targets - phi[states]
    loss = float(np.mean(residual**2))
    gradient = np.zeros_like(phi)
    np.add.at(gradient, states, -2.0 * residual / states.size)
    return phi - learning_rate * gradient, loss
