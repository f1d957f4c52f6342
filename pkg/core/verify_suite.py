"""
数值验证套件：把各条界与恒等式变成随机小实例上的性质检查，输出 BoundReport
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from loguru import logger
import numpy as np

from config import get_verify_config

from .b2mapo_optimizer import B2MAPOTrainer, SchemeConfig, distill_step, run_round
from .exact_oracle import (
    estimator_advantage_table,
    exact_batch_surrogate,
    exact_joint_surrogate,
    exact_tables,
    exact_value,
    expected_return,
    max_tv,
    product_table,
    state_action_expectation,
    state_distribution_at,
    tv_distance,
)
from .exceptions import InputError
from .game_core import MarkovGame, build_dependency_chain_game, build_random_game
from .models import (
    BatchSequence,
    BoundReport,
    RoundReport,
    SchemeMode,
    SurrogateMeasure,
)
from .policies import PolicySet, construct_product_equivalent
from .rollout_advantage import collect_rollouts
from .utils import derive_rng, write_csv

ARITH_TOL = 1e-12
SOLVER_TOL = 1e-9
CONSTRUCTION_TOL = 1e-8

BOUNDS_HEADER = ["statement", "seed", "lhs", "rhs", "slack", "pass", "tolerance"]

__all__ = [
    "ARITH_TOL",
    "BOUNDS_HEADER",
    "CONSTRUCTION_TOL",
    "SOLVER_TOL",
    "UpdateChain",
    "chain_from_report",
    "check_a2po_equivalence",
    "check_advantage_bound",
    "check_advantage_discrepancy",
    "check_corollary1",
    "check_distillation",
    "check_happo_bound",
    "check_incremental_tightening",
    "check_joint_bound",
    "check_lemma1",
    "check_lemma2",
    "check_mappo_bound",
    "check_performance_difference",
    "check_single_batch_bound",
    "check_theorem2_equivalence",
    "check_theorem3_distillation",
    "check_tv_product",
    "check_visitation_series",
    "run_suite",
    "sample_update_chain",
    "single_batch_bound",
    "summarize_reports",
    "tightening_sequence",
    "write_bounds_csv",
]


def _instance_seed(seed: int, trial: int) -> int:
    return int(derive_rng(seed, trial).integers(2**31 - 1))


def _random_game(
    rng: np.random.Generator,
    max_agents: int,
    max_states: int,
    max_actions: int,
    min_agents: int = 1,
    gamma_range=(0.5, 0.95),
) -> MarkovGame:
    n = int(rng.integers(min_agents, max_agents + 1))
    n_states = int(rng.integers(2, max_states + 1))
    counts = [int(c) for c in rng.integers(2, max_actions + 1, size=n)]
    gamma = float(rng.uniform(*gamma_range))
    game_seed = int(rng.integers(2**31 - 1))
    return build_random_game(n, n_states, counts, gamma, seed=game_seed)


def _random_rows(rng: np.random.Generator, rows: int, width: int) -> np.ndarray:
    return rng.dirichlet(np.ones(width), size=rows)


def _random_factors(rng: np.random.Generator, game: MarkovGame) -> List[np.ndarray]:
    return [_random_rows(rng, game.n_states, c) for c in game.action_counts]


def _perturb(
    rng: np.random.Generator, factors: Sequence[np.ndarray], max_mix: float
) -> List[np.ndarray]:
    """π̂^i = (1-η)π^i + η·q^i，η ∈ [0, max_mix]"""
    result = []
    for factor in factors:
        eta = rng.uniform(0.0, max_mix)
        result.append((1.0 - eta) * factor + eta * _random_rows(rng, *factor.shape))
    return result


def _worst(rows):
    """(lhs, rhs, 附加信息) 中松弛量最小的一项"""
    return min(rows, key=lambda row: row[1] - row[0])


def check_tv_product(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """乘积分布：联合 TV ≤ Σ_i 各智能体 TV"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        n = int(rng.integers(1, 5))
        counts = [int(c) for c in rng.integers(2, 6, size=n)]
        p = [rng.dirichlet(np.ones(c)) for c in counts]
        if trial == 0:
            q = [row.copy() for row in p]
        elif trial == 1:
            q = [row.copy() for row in p]
            q[0] = rng.dirichlet(np.ones(counts[0]))
        else:
            q = [rng.dirichlet(np.ones(c)) for c in counts]
        joint = tv_distance(
            product_table([row[None, :] for row in p]),
            product_table([row[None, :] for row in q]),
        )
        per_agent = sum(tv_distance(a, b) for a, b in zip(p, q))
        reports.append(
            BoundReport(
                "tv_product", instance, joint, per_agent, ARITH_TOL, {"n_agents": n}
            )
        )
    return reports


def check_advantage_bound(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """逐状态 |E_{a∼π̂}[A^π(s,a)]| ≤ 2ε·Σ_i α^i"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(rng, max_agents=3, max_states=6, max_actions=3)
        factors = _random_factors(rng, game)
        updated = (
            [f.copy() for f in factors] if trial == 0 else _perturb(rng, factors, 1.0)
        )
        tables = exact_tables(game, product_table(factors))
        alpha_sum = sum(max_tv(a, b) for a, b in zip(factors, updated))
        per_state = np.abs(np.sum(product_table(updated) * tables.A, axis=1))
        worst = int(np.argmax(per_state))
        reports.append(
            BoundReport(
                "advantage_bound",
                instance,
                per_state[worst],
                2.0 * tables.epsilon * alpha_sum,
                SOLVER_TOL,
                {"state": worst, "epsilon": tables.epsilon, "alpha_sum": alpha_sum},
            )
        )
    return reports


def check_advantage_discrepancy(
    n_trials: int, horizon: int, seed: int = 0
) -> List[BoundReport]:
    """|E_{(Pr_t^{π²},π²)}[A^{π¹}] - E_{(Pr_t^{π³},π²)}[A^{π¹}]| ≤ 4ε^{π¹}·α₁₂·(1-(1-α₂₃)^t)，取最差的 t"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(rng, max_agents=2, max_states=5, max_actions=3)
        S, J = game.n_states, game.n_joint
        first, second = _random_rows(rng, S, J), _random_rows(rng, S, J)
        if trial == 0:
            third = second.copy()
        else:
            eta = rng.uniform(0.0, 1.0)
            third = (1.0 - eta) * second + eta * _random_rows(rng, S, J)
        tables = exact_tables(game, first)
        alpha_12, alpha_23 = max_tv(first, second), max_tv(second, third)
        f = np.sum(second * tables.A, axis=1)
        rows = []
        for t in range(horizon + 1):
            lhs = abs(
                state_distribution_at(game, second, t) @ f
                - state_distribution_at(game, third, t) @ f
            )
            rhs = 4.0 * tables.epsilon * alpha_12 * (1.0 - (1.0 - alpha_23) ** t)
            rows.append((lhs, rhs, t))
        lhs, rhs, t = _worst(rows)
        reports.append(
            BoundReport(
                "advantage_discrepancy",
                instance,
                lhs,
                rhs,
                SOLVER_TOL,
                {"t": t, "alpha_12": alpha_12, "alpha_23": alpha_23},
            )
        )
    return reports


def check_visitation_series(
    n_trials: int, horizon: int, seed: int = 0
) -> List[BoundReport]:
    """E_{(d^{π¹},π²)}[f] 与 (1-γ)Σ_{t<H} γ^t E_{(Pr_t^{π¹},π²)}[f] 之差不超过尾项 γ^H·max|f|"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(rng, max_agents=2, max_states=6, max_actions=3)
        S, J, gamma = game.n_states, game.n_joint, game.gamma
        measure, actions = _random_rows(rng, S, J), _random_rows(rng, S, J)
        f = rng.uniform(-1.0, 1.0, size=(S, J))
        exact = state_action_expectation(game, measure, actions, f)

        g = np.sum(actions * f, axis=1)
        P = np.einsum("sj,sjt->st", measure, game.transition)
        dist, series = game.initial_dist.copy(), 0.0
        for t in range(horizon):
            series += gamma**t * float(dist @ g)
            dist = dist @ P
        series *= 1.0 - gamma
        tail = gamma**horizon * float(np.max(np.abs(g)))
        reports.append(
            BoundReport(
                "visitation_series", instance, abs(exact - series), tail, SOLVER_TOL
            )
        )
    return reports


def check_performance_difference(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """𝒥(π̂) - 𝒥(π) = E_{(d^{π̂},π̂)}[A^π]/(1-γ)"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(rng, max_agents=3, max_states=5, max_actions=3)
        old = _random_rows(rng, game.n_states, game.n_joint)
        new = _random_rows(rng, game.n_states, game.n_joint)
        tables = exact_tables(game, old)
        gain = state_action_expectation(game, new, new, tables.A) / (1.0 - game.gamma)
        gap = abs(expected_return(game, new) - tables.J - gain)
        reports.append(
            BoundReport("performance_difference", instance, gap, 0.0, SOLVER_TOL)
        )
    return reports


def single_batch_bound(
    epsilon: float, alpha: float, alpha_total: float, xi: float, gamma: float
) -> float:
    """4ε·α·(1/(1-γ) - 1/(1-γ(1-Σα))) + ξ/(1-γ)，Σα 截断到 1"""
    total = min(alpha_total, 1.0)
    drift = 1.0 / (1.0 - gamma) - 1.0 / (1.0 - gamma * (1.0 - total))
    return 4.0 * epsilon * alpha * drift + xi / (1.0 - gamma)


@dataclass
class UpdateChain:
    """一轮逐批次更新的精确量

    tables[k] 为批次 k 更新后的联合表 π̂^{b_{k+1}}；estimates[k] 为该批次所用估计量的期望表，
    exact[k] 为 A^{π̂^{b_k}}。
    """

    game: MarkovGame
    sequence: BatchSequence
    behavior: np.ndarray
    tables: List[np.ndarray]
    estimates: List[np.ndarray]
    exact: List[np.ndarray]
    returns: List[float]
    epsilons: List[float]
    alphas: List[float]
    xis: List[float]
    batch_alphas: List[float]
    clip_eps: float

    @property
    def gamma(self) -> float:
        return self.game.gamma

    @property
    def epsilon(self) -> float:
        """ε = max_k ε^{b_k}"""
        return max(self.epsilons, default=0.0)

    def previous(self, k: int) -> np.ndarray:
        return self.behavior if k == 0 else self.tables[k - 1]

    def alpha_total(self, k: int) -> float:
        return float(sum(self.alphas[: k + 1]))

    def surrogate(self, k: int, measure: SurrogateMeasure) -> float:
        return exact_batch_surrogate(
            self.game,
            self.behavior,
            self.previous(k),
            self.tables[k],
            self.estimates[k],
            measure,
        )

    def joint_surrogate(self, measure: SurrogateMeasure) -> float:
        return exact_joint_surrogate(
            self.game, self.behavior, self.tables, self.estimates, measure
        )

    def batch_bound(self, k: int, epsilon: Optional[float] = None) -> float:
        eps = self.epsilons[k] if epsilon is None else epsilon
        return single_batch_bound(
            eps, self.alphas[k], self.alpha_total(k), self.xis[k], self.gamma
        )

    def relaxed_bound(self) -> float:
        """(4γε/(1-γ)²)·Σ_k α^{b_k}·Σ_{j≤k} α^{b_j} + Σ_k ξ^{b_k}/(1-γ)"""
        gamma = self.gamma
        pairs = sum(
            self.alphas[k] * self.alpha_total(k) for k in range(len(self.tables))
        )
        relaxation = 4.0 * gamma * self.epsilon / (1.0 - gamma) ** 2 * pairs
        return relaxation + sum(self.xis) / (1.0 - gamma)

    def extras(self, k: int) -> Dict[str, float]:
        return {
            "batch": k + 1,
            "bound_eps": self.epsilons[k],
            "clip_eps": self.clip_eps,
            "alpha": self.alphas[k],
            "batch_alpha": self.batch_alphas[k],
            "xi": self.xis[k],
        }


def chain_from_report(
    game: MarkovGame, report: RoundReport, config: SchemeConfig, estimated: bool = True
) -> UpdateChain:
    """由记录了更新链的 RoundReport 计算各批次的精确量"""
    if report.chain is None or report.behavior_table is None:
        raise InputError("RoundReport 未记录更新链（需要 record_chain 且策略按状态索引）")
    behavior, tables = report.behavior_table, report.chain
    estimates, exact, epsilons, alphas, xis = [], [], [], [], []
    for k, table in enumerate(tables):
        previous = behavior if k == 0 else tables[k - 1]
        prev_tables = exact_tables(game, previous)
        if estimated:
            V = report.value_tables[k].state_values
            estimate = estimator_advantage_table(
                game, behavior, previous, V, config.lam
            )
        else:
            estimate = np.array(prev_tables.A)
        estimates.append(estimate)
        exact.append(prev_tables.A)
        epsilons.append(prev_tables.epsilon)
        alphas.append(max_tv(previous, table))
        xis.append(float(np.max(np.abs(estimate - prev_tables.A))))
    returns = [expected_return(game, behavior)]
    returns += [expected_return(game, t) for t in tables]
    return UpdateChain(
        game=game,
        sequence=report.batch_sequence,
        behavior=behavior,
        tables=tables,
        estimates=estimates,
        exact=exact,
        returns=returns,
        epsilons=epsilons,
        alphas=alphas,
        xis=xis,
        batch_alphas=list(report.alphas),
        clip_eps=config.clip_for(0),
    )


def _chain_config(sequence: BatchSequence, **overrides) -> SchemeConfig:
    """状态评论家、不归一化、不蒸馏，记录更新链"""
    settings = dict(
        mode=SchemeMode.B2MAPO_FIXED,
        fixed_sequence=sequence,
        learning_rate=0.5,
        epochs=4,
        n_episodes=8,
        horizon=16,
        normalize_advantages=False,
        conditioned_critic=False,
        independent_update=False,
        distill_period=10**9,
        record_chain=True,
    )
    settings.update(overrides)
    return SchemeConfig(**settings)


def sample_update_chain(
    instance_seed: int, n_batches: Optional[int] = None, estimated: bool = True
) -> UpdateChain:
    """随机博弈与随机批次划分上跑一轮 b2mapo-fixed，返回实际的更新链"""
    rng = np.random.default_rng(instance_seed)
    m = int(n_batches) if n_batches is not None else int(rng.integers(1, 4))
    n = int(rng.integers(max(2, m), 5))
    game = build_random_game(
        n,
        int(rng.integers(2, 5)),
        2,
        float(rng.uniform(0.5, 0.9)),
        seed=int(rng.integers(2**31 - 1)),
    )
    order = rng.permutation(n)
    cut_points = rng.choice(np.arange(1, n), size=m - 1, replace=False)
    cuts = sorted(int(c) for c in cut_points)
    parts = np.split(order, cuts)
    sequence = BatchSequence(tuple(tuple(int(a) for a in part) for part in parts))

    config = _chain_config(sequence)
    policy_set = PolicySet.create(game, sequence, init_scale=0.5, seed=instance_seed)
    report = run_round(game, policy_set, config, seed=instance_seed)
    return chain_from_report(game, report, config, estimated)


def check_single_batch_bound(
    n_trials: int, seed: int = 0, estimated: bool = True
) -> List[BoundReport]:
    """|𝒥(π̂^{b_k}) - 𝓛(π̂^{b_k})| ≤ 单批次界，按实现分布与行为分布两种代理目标各报告最差批次"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        chain = sample_update_chain(instance, estimated=estimated)
        for statement, measure in (
            ("single_batch", SurrogateMeasure.REALIZED),
            ("single_batch/behavior", SurrogateMeasure.BEHAVIOR),
        ):
            rows = [
                (
                    abs(chain.returns[k + 1] - chain.surrogate(k, measure)),
                    chain.batch_bound(k),
                    k,
                )
                for k in range(len(chain.tables))
            ]
            lhs, rhs, k = _worst(rows)
            reports.append(
                BoundReport(statement, instance, lhs, rhs, SOLVER_TOL, chain.extras(k))
            )
    return reports


def check_joint_bound(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """|𝒥(π̂) - 𝒢_π(π̂)| ≤ 松弛后的联合界；同时检查松弛前的逐批次求和形式"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        chain = sample_update_chain(instance)
        final = chain.returns[-1]
        realized = abs(final - chain.joint_surrogate(SurrogateMeasure.REALIZED))
        behavior = abs(final - chain.joint_surrogate(SurrogateMeasure.BEHAVIOR))
        relaxed = chain.relaxed_bound()
        summed = sum(chain.batch_bound(k) for k in range(len(chain.tables)))
        extras = {
            "batches": len(chain.tables),
            "bound_eps": chain.epsilon,
            "alpha_sum": float(sum(chain.alphas)),
            "xi_sum": float(sum(chain.xis)),
        }
        for statement, lhs, rhs in (
            ("joint", realized, relaxed),
            ("joint/pre-relaxation", realized, summed),
            ("joint/behavior", behavior, relaxed),
        ):
            reports.append(
                BoundReport(statement, instance, lhs, rhs, SOLVER_TOL, extras)
            )
    return reports


def tightening_sequence(chain: UpdateChain) -> List[float]:
    """E_b = Σ_{k<b} |𝒥(π̂^{b_k}) - 𝓛^b_k| + Σ_{k≥b} 界_k（全局 ε，行为分布），b = 0..m"""
    m = len(chain.tables)
    gaps = [
        abs(chain.returns[k + 1] - chain.surrogate(k, SurrogateMeasure.BEHAVIOR))
        for k in range(m)
    ]
    bounds = [chain.batch_bound(k, chain.epsilon) for k in range(m)]
    return [float(sum(gaps[:b]) + sum(bounds[b:])) for b in range(m + 1)]


def check_incremental_tightening(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """逐个把批次界换成实际误差，表达式单调不增，且最终仍盖住 |𝒥 - 𝒢|"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        chain = sample_update_chain(instance, n_batches=2 + trial % 3)
        expressions = tightening_sequence(chain)
        gap = abs(chain.returns[-1] - chain.joint_surrogate(SurrogateMeasure.BEHAVIOR))
        rows = [
            (expressions[b + 1], expressions[b], b + 1)
            for b in range(len(expressions) - 1)
        ]
        rows.append((gap, expressions[-1], len(expressions)))
        lhs, rhs, step = _worst(rows)
        reports.append(
            BoundReport(
                "tightening",
                instance,
                lhs,
                rhs,
                SOLVER_TOL,
                {"step": step, "batches": len(chain.tables), "loosest": expressions[0]},
            )
        )
    return reports


def _parameter_gap(a: PolicySet, b: PolicySet) -> float:
    gaps = [
        float(np.max(np.abs(p.logits - q.logits)))
        for p, q in zip(a.conditioned + a.independent, b.conditioned + b.independent)
    ]
    return max(gaps, default=0.0)


def check_a2po_equivalence(
    seed: int = 0, n_agents: int = 3, rounds: int = 3
) -> BoundReport:
    """a2po 训练器逐轮按优势幅度规划出逐个智能体的顺序；同顺序、同数据的 b2mapo-fixed
    必须逐参数一致，更新链与界的右端相同"""
    game = build_random_game(n_agents, 3, 2, 0.9, seed)
    a2po_config = _chain_config(
        None, mode=SchemeMode.A2PO, independent_update=True, distill_period=2
    )
    trainer = B2MAPOTrainer(game, a2po_config, seed=seed, init_scale=0.5)
    mirror = trainer.policy_set.copy()

    parameter_gap = chain_gap = bound_gap = 0.0
    bounds: Dict[str, float] = {}
    orders: List[str] = []
    singletons = True
    for round_index in range(1, rounds + 1):
        report = trainer.run_round()
        sequence = report.batch_sequence
        orders.append(sequence.to_text())
        singletons &= all(len(batch) == 1 for batch in sequence)
        config = _chain_config(sequence, independent_update=True, distill_period=2)
        mirrored = run_round(
            game, mirror, config, trainer.round_seed(round_index), round_index, sequence
        )
        chains = {
            "a2po": chain_from_report(game, report, a2po_config),
            "b2mapo": chain_from_report(game, mirrored, config),
        }
        parameter_gap = max(parameter_gap, _parameter_gap(trainer.policy_set, mirror))
        chain_gap = max(
            [chain_gap]
            + [
                float(np.max(np.abs(a - b)))
                for a, b in zip(chains["a2po"].tables, chains["b2mapo"].tables)
            ]
        )
        bounds = {name: chain.relaxed_bound() for name, chain in chains.items()}
        bound_gap = max(bound_gap, abs(bounds["a2po"] - bounds["b2mapo"]))

    gap = max(parameter_gap, chain_gap, bound_gap)
    return BoundReport(
        "a2po_equivalence",
        seed,
        gap if singletons else float("inf"),
        0.0,
        ARITH_TOL,
        {
            "parameter_gap": parameter_gap,
            "chain_gap": chain_gap,
            "bound_a2po": bounds["a2po"],
            "bound_b2mapo": bounds["b2mapo"],
            "orders": orders,
        },
    )


def _distill_gaps(
    game: MarkovGame, seed: int, rounds: int
) -> Tuple[float, float, float]:
    """训练 + 蒸馏一个种子，返回 (构造差, 蒸馏后值函数差, KL)"""
    config = SchemeConfig.from_defaults(
        mode=SchemeMode.B2MAPO_DAG, n_episodes=16, horizon=32
    )
    trainer = B2MAPOTrainer(game, config, seed=seed)
    trainer.train(rounds)
    policy_set = trainer.policy_set

    joint = policy_set.joint_table(game)
    V = exact_value(game, joint)
    constructed = product_table(construct_product_equivalent(game, joint))
    construction_gap = float(np.max(np.abs(V - exact_value(game, constructed))))

    traj = collect_rollouts(
        game,
        policy_set,
        policy_set.batch_sequence,
        64,
        32,
        _instance_seed(seed, rounds + 1),
    )
    kl = distill_step(
        policy_set, traj, config.distill_coef, config.distill_lr, steps=200
    )
    distilled = exact_value(game, policy_set.independent_joint_table(game))
    gap = float(np.max(np.abs(V - distilled)))
    logger.debug(f"蒸馏检查: 种子 {seed}, 值函数差 {gap:.3e}, KL {kl:.3e}")
    return construction_gap, gap, kl


def check_distillation(
    game: Optional[MarkovGame] = None,
    seed: int = 0,
    rounds: int = 10,
    n_seeds: int = 1,
) -> List[BoundReport]:
    """每个种子训练条件策略后检查构造出的乘积策略值函数相同；蒸馏得到的 π_ind
    取各种子值函数差距的中位数，汇总成一条报告"""
    if n_seeds < 1:
        raise InputError(f"蒸馏检查的种子数必须 ≥ 1: {n_seeds}")
    reports, gaps, kls = [], {}, {}
    limit = None
    for current in range(seed, seed + n_seeds):
        seed_game = game
        if seed_game is None:
            seed_game, _ = build_dependency_chain_game(
                2, 0.5, current, n_states=3, gamma=0.9
            )
        construction_gap, gaps[current], kls[current] = _distill_gaps(
            seed_game, current, rounds
        )
        limit = 0.05 * seed_game.r_max / (1.0 - seed_game.gamma)
        reports.append(
            BoundReport(
                "distill/construction",
                current,
                construction_gap,
                0.0,
                CONSTRUCTION_TOL,
            )
        )
    median = float(np.median(list(gaps.values())))
    reports.append(
        BoundReport(
            "distill/trained",
            seed,
            median,
            limit,
            0.0,
            {"gaps": gaps, "kl": kls, "n_seeds": n_seeds},
        )
    )
    return reports


def check_mappo_bound(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """|𝒥(π̂) - 𝒥(π) - Σ_i E_{(d^π,π)}[(π̂^i/π^i)A^π]/(1-γ)| ≤ 4ε^π·Σ_i α^i/(1-γ)"""
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(rng, max_agents=3, max_states=5, max_actions=3)
        factors = _random_factors(rng, game)
        updated = (
            [f.copy() for f in factors] if trial == 0 else _perturb(rng, factors, 1.0)
        )
        old = product_table(factors)
        tables = exact_tables(game, old)
        gain = 0.0
        for agent in range(game.n_agents):
            mixed = [
                updated[j] if j == agent else factors[j] for j in range(game.n_agents)
            ]
            # E_{(d^π,π)}[(π̂^i/π^i)A] = E_{(d^π, π̂^i×π^{-i})}[A]
            gain += state_action_expectation(game, old, product_table(mixed), tables.A)
        gamma = game.gamma
        realized = expected_return(game, product_table(updated)) - tables.J
        lhs = abs(realized - gain / (1.0 - gamma))
        alpha_sum = sum(max_tv(a, b) for a, b in zip(factors, updated))
        rhs = 4.0 * tables.epsilon * alpha_sum / (1.0 - gamma)
        reports.append(
            BoundReport(
                "mappo", instance, lhs, rhs, SOLVER_TOL, {"alpha_sum": alpha_sum}
            )
        )
    return reports


def check_happo_bound(n_trials: int, seed: int = 0) -> List[BoundReport]:
    """逐智能体的顺序代理目标误差界

    α^i 的两项用 ε^{π̂^{i-1}}，前序智能体项 Σ_{j<i} α^j 用 ε^π；该项另行报告，不参与判定。
    """
    reports = []
    for trial in range(n_trials):
        instance = _instance_seed(seed, trial)
        rng = np.random.default_rng(instance)
        game = _random_game(
            rng,
            max_agents=3,
            max_states=4,
            max_actions=3,
            min_agents=2,
            gamma_range=(0.5, 0.8),
        )
        gamma = game.gamma
        factors = _random_factors(rng, game)
        updated = (
            [f.copy() for f in factors] if trial == 0 else _perturb(rng, factors, 0.1)
        )
        alphas = [max_tv(a, b) for a, b in zip(factors, updated)]
        base = exact_tables(game, product_table(factors))

        rows = []
        old = product_table(factors)
        previous = old
        for agent in range(game.n_agents):
            current = product_table(updated[: agent + 1] + factors[agent + 1 :])
            prev_tables = exact_tables(game, previous)
            surrogate_step = (
                state_action_expectation(game, old, current, base.A)
                - state_action_expectation(game, old, previous, base.A)
            ) / (1.0 - gamma)
            lhs = abs(expected_return(game, current) - prev_tables.J - surrogate_step)
            prev_eps, preceding = prev_tables.epsilon, float(sum(alphas[:agent]))
            rhs = single_batch_bound(
                prev_eps, alphas[agent], preceding + alphas[agent], 0.0, gamma
            )
            rhs += 4.0 * alphas[agent] * prev_eps / (1.0 - gamma)
            rhs += 4.0 * preceding * base.epsilon / (1.0 - gamma)
            uncontrollable = preceding * base.epsilon
            rows.append((lhs, rhs, (agent, uncontrollable)))
            previous = current
        lhs, rhs, (agent, uncontrollable) = _worst(rows)
        reports.append(
            BoundReport(
                "happo",
                instance,
                lhs,
                rhs,
                SOLVER_TOL,
                {"agent": agent + 1, "uncontrollable": uncontrollable},
            )
        )
    return reports


# 按陈述命名的入口
check_corollary1 = check_tv_product
check_lemma1 = check_advantage_bound
check_lemma2 = check_advantage_discrepancy
check_theorem2_equivalence = check_a2po_equivalence
check_theorem3_distillation = check_distillation


def run_suite(config: Optional[dict] = None, seed: int = 0) -> List[BoundReport]:
    """按配置的试验次数运行全部检查"""
    cfg = {**get_verify_config(), **(config or {})}
    logger.info(f"验证套件开始: 种子 {seed}")
    reports: List[BoundReport] = []
    reports += check_tv_product(cfg["tv_product_trials"], seed)
    reports += check_advantage_bound(cfg["advantage_bound_trials"], seed)
    reports += check_advantage_discrepancy(
        cfg["discrepancy_trials"], cfg["discrepancy_horizon"], seed
    )
    reports += check_visitation_series(
        cfg["series_trials"], cfg["series_horizon"], seed
    )
    reports += check_performance_difference(cfg["difference_trials"], seed)
    reports += check_single_batch_bound(cfg["single_batch_chains"], seed)
    reports += check_joint_bound(cfg["joint_chains"], seed)
    reports += check_incremental_tightening(cfg["tightening_chains"], seed)
    reports += [
        check_a2po_equivalence(_instance_seed(seed, trial))
        for trial in range(cfg["identity_trials"])
    ]
    reports += check_distillation(seed=seed, n_seeds=cfg["distill_seeds"])
    reports += check_mappo_bound(cfg["mappo_trials"], seed)
    reports += check_happo_bound(cfg["happo_trials"], seed)

    failures = [r for r in reports if not r.passed]
    if failures:
        for report in failures[:10]:
            logger.warning(
                f"检查未通过: {report.statement} 种子 {report.seed}, "
                f"lhs={report.lhs:.6g} rhs={report.rhs:.6g}"
            )
    logger.info(f"验证套件完成: {len(reports)} 项检查, {len(failures)} 项未通过")
    return reports


def summarize_reports(reports: Sequence[BoundReport]) -> Dict[str, Dict[str, float]]:
    """按陈述汇总：检查数、失败数与松弛量分布"""
    grouped: Dict[str, List[BoundReport]] = {}
    for report in reports:
        grouped.setdefault(report.statement, []).append(report)
    summary = {}
    for statement, items in grouped.items():
        slacks = np.array([r.slack for r in items])
        summary[statement] = {
            "checks": len(items),
            "failures": sum(1 for r in items if not r.passed),
            "min_slack": float(slacks.min()),
            "median_slack": float(np.median(slacks)),
            "max_slack": float(slacks.max()),
        }
    return summary


def write_bounds_csv(reports: Sequence[BoundReport], path: Union[str, Path]) -> Path:
    rows = [
        [r.statement, r.seed, r.lhs, r.rhs, r.slack, r.passed, r.tolerance]
        for r in reports
    ]
    return write_csv(Path(path), BOUNDS_HEADER, rows)
