"""
精确预言机测试
"""

import numpy as np
import pytest

from core.exact_oracle import (
    batch_tv,
    estimator_advantage_table,
    exact_joint_surrogate,
    exact_tables,
    exact_value,
    expected_return,
    get_table_cache,
    max_tv,
    product_table,
    state_action_expectation,
    state_distribution_at,
    tv_distance,
    visitation,
)
from core.exceptions import InputError
from core.models import SurrogateMeasure


def _random_policy(game, seed):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(game.n_joint), size=game.n_states)


def test_bandit_value(bandit_game):
    """单状态博弈：V = R/(1-γ)"""
    V = exact_value(bandit_game, np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(V, [2.0], atol=1e-12)
    tables = exact_tables(bandit_game, np.array([[0.5, 0.5]]))
    np.testing.assert_allclose(tables.Q[0], [1.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(tables.A[0], [0.5, -0.5], atol=1e-12)


def test_advantage_has_zero_policy_mean(random_game):
    policy = _random_policy(random_game, 0)
    tables = exact_tables(random_game, policy)
    np.testing.assert_allclose(np.sum(policy * tables.A, axis=1), 0.0, atol=1e-10)
    assert tables.epsilon == pytest.approx(np.max(np.abs(tables.A)))


def test_visitation_is_a_distribution(chain_game):
    game, _ = chain_game
    d = visitation(game, _random_policy(game, 1))
    assert d.min() >= 0.0
    assert d.sum() == pytest.approx(1.0, abs=1e-10)


def test_state_distribution_at_zero_is_initial(random_game):
    dist = state_distribution_at(random_game, _random_policy(random_game, 2), 0)
    np.testing.assert_allclose(dist, random_game.initial_dist)


def test_performance_difference_identity(random_game):
    """𝒥(π̂) - 𝒥(π) = E_{(d^{π̂}, π̂)}[A^π]/(1-γ)"""
    old, new = _random_policy(random_game, 3), _random_policy(random_game, 4)
    tables = exact_tables(random_game, old)
    gain = state_action_expectation(random_game, new, new, tables.A)
    expected = tables.J + gain / (1.0 - random_game.gamma)
    assert expected_return(random_game, new) == pytest.approx(expected, abs=1e-9)


def test_joint_surrogate_with_exact_advantages_telescopes(random_game):
    """实现分布下用各自前一策略的精确优势，联合代理目标等于链末的 𝒥"""
    behavior = _random_policy(random_game, 5)
    chain = [_random_policy(random_game, 6), _random_policy(random_game, 7)]
    value = exact_joint_surrogate(
        random_game, behavior, chain, measure=SurrogateMeasure.REALIZED
    )
    assert value == pytest.approx(expected_return(random_game, chain[-1]), abs=1e-9)


def test_estimator_table_is_exact_on_policy(random_game):
    """V 取精确值且目标等于行为策略时，估计量期望表就是 A^π"""
    policy = _random_policy(random_game, 8)
    tables = exact_tables(random_game, policy)
    table = estimator_advantage_table(random_game, policy, policy, tables.V, 0.9)
    np.testing.assert_allclose(table, tables.A, atol=1e-9)


def test_estimator_table_with_zero_lambda_is_one_step(random_game):
    policy = _random_policy(random_game, 9)
    V = np.linspace(-1.0, 1.0, random_game.n_states)
    table = estimator_advantage_table(random_game, policy, policy, V, 0.0)
    next_values = random_game.transition @ V
    expected = random_game.reward + random_game.gamma * next_values - V[:, None]
    np.testing.assert_allclose(table, expected, atol=1e-12)


def test_tv_distances():
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    a = np.array([[0.5, 0.5], [1.0, 0.0]])
    b = np.array([[0.5, 0.5], [0.75, 0.25]])
    assert max_tv(a, b) == pytest.approx(0.25)
    with pytest.raises(InputError):
        max_tv(a, b[:, :1])


def test_batch_tv_of_product_is_bounded_by_sum():
    rng = np.random.default_rng(0)
    prev = [rng.dirichlet(np.ones(3), size=2) for _ in range(2)]
    new = [rng.dirichlet(np.ones(3), size=2) for _ in range(2)]
    joint = batch_tv(prev, new)
    assert joint <= sum(max_tv(p, q) for p, q in zip(prev, new)) + 1e-12
    assert product_table(prev).shape == (2, 9)


def test_invalid_policy_table(random_game):
    with pytest.raises(InputError):
        exact_value(random_game, np.ones((random_game.n_states, random_game.n_joint)))
    with pytest.raises(InputError):
        exact_value(random_game, np.ones((1, 1)))


def test_table_cache_hits(random_game):
    policy = _random_policy(random_game, 10)
    cache = get_table_cache()
    exact_tables(random_game, policy)
    hits = cache.get_stats()["hits"]
    exact_tables(random_game, policy)
    assert cache.get_stats()["hits"] == hits + 1
