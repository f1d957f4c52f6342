"""
采样与优势估计测试
"""

import numpy as np
import pytest

from core.exceptions import InputError
from core.models import BatchSequence
from core.policies import PolicySet
from core.rollout_advantage import (
    collect_rollouts,
    corrected_advantage,
    dump_trajectories,
    fit_value_table,
    gae,
    logged_joint_probs,
    normalize_advantages,
    per_agent_advantage_magnitude,
    returns_to_go,
    td_errors,
    truncated_weights,
)
from core.utils import read_csv

SEQUENCE = BatchSequence(((0,), (1, 2)))


@pytest.fixture
def rollout(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=0)
    traj = collect_rollouts(
        game, policy_set, SEQUENCE, n_episodes=6, horizon=10, seed=11
    )
    return game, policy_set, traj


def test_rollout_shapes_and_determinism(chain_game, rollout):
    game, policy_set, traj = rollout
    assert traj.states.shape == (6, 11)
    assert traj.actions.shape == (6, 10, 3)
    again = collect_rollouts(game, policy_set, SEQUENCE, 6, 10, seed=11)
    np.testing.assert_array_equal(traj.states, again.states)
    np.testing.assert_array_equal(traj.actions, again.actions)
    np.testing.assert_array_equal(traj.rewards, again.rewards)


def test_logged_probabilities_match_policy(rollout):
    game, policy_set, traj = rollout
    from_set = logged_joint_probs(traj, policy_set)
    from_table = logged_joint_probs(traj, policy_set.joint_table(game))
    np.testing.assert_allclose(np.log(from_set), traj.behavior_logp, atol=1e-12)
    np.testing.assert_allclose(from_set, from_table, atol=1e-12)


def test_rollout_requires_matching_sequence(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE)
    with pytest.raises(InputError):
        collect_rollouts(game, policy_set, BatchSequence.single(3), 2, 2, seed=0)
    with pytest.raises(InputError):
        collect_rollouts(game, policy_set, SEQUENCE, 0, 2, seed=0)


def test_gae_with_zero_lambda_is_td_error(rollout):
    game, _, traj = rollout
    V = np.linspace(0.0, 1.0, game.n_states)
    np.testing.assert_allclose(gae(traj, V, 0.9, 0.0).values, td_errors(traj, V, 0.9))


def test_on_policy_correction_reduces_to_gae(rollout):
    """目标等于行为策略时截断权重恒为 λ"""
    game, policy_set, traj = rollout
    V = np.linspace(-0.5, 0.5, game.n_states)
    weights = truncated_weights(traj, policy_set, policy_set, 0.8)
    np.testing.assert_allclose(weights, 0.8)
    corrected = corrected_advantage(traj, V, policy_set, policy_set, 0.9, 0.8)
    expected = gae(traj, V, 0.9, 0.8).values
    np.testing.assert_allclose(corrected.values, expected, atol=1e-12)


def test_truncated_weights_stay_in_range(rollout):
    game, policy_set, traj = rollout
    target = PolicySet.create(game, SEQUENCE, init_scale=2.0, seed=5)
    weights = truncated_weights(traj, policy_set, target, 0.95)
    assert weights.min() >= 0.0
    assert weights.max() <= 0.95


def test_behavior_must_match_logged_data(rollout):
    game, _, traj = rollout
    other = PolicySet.create(game, SEQUENCE, init_scale=1.0, seed=9)
    with pytest.raises(InputError):
        truncated_weights(traj, other, other, 0.9)


def test_returns_to_go_start_is_episode_return(rollout):
    _, _, traj = rollout
    returns = returns_to_go(traj, 0.9)
    np.testing.assert_allclose(returns[:, 0], traj.discounted_returns(0.9))


def test_fit_value_table_is_group_mean(rollout):
    game, _, traj = rollout
    table = fit_value_table(traj, 0.9, game.n_states)
    returns = returns_to_go(traj, 0.9)
    s = traj.states[:, :-1]
    for state in range(game.n_states):
        visits = s == state
        if visits.any():
            assert table.state_values[state] == pytest.approx(returns[visits].mean())
        else:
            assert table.state_values[state] == 0.0


def test_conditioned_value_table_lookup(rollout):
    game, _, traj = rollout
    table = fit_value_table(traj, 0.9, game.n_states, (0,), game.action_counts)
    assert table.values.shape == (game.n_states, 2)
    with pytest.raises(InputError):
        table.lookup(traj.states[:, :-1])
    with pytest.raises(InputError):
        _ = table.state_values


def test_normalize_advantages(rollout):
    game, policy_set, traj = rollout
    estimate = gae(traj, np.zeros(game.n_states), 0.9, 0.95)
    normalized = normalize_advantages(estimate)
    assert normalized.normalized
    assert normalized.values.mean() == pytest.approx(0.0, abs=1e-12)
    assert normalized.values.std() == pytest.approx(1.0)


def test_advantage_magnitudes_are_non_negative(rollout):
    game, _, traj = rollout
    estimate = gae(traj, np.zeros(game.n_states), 0.9, 0.95)
    magnitudes = per_agent_advantage_magnitude(traj, estimate)
    assert magnitudes.shape == (3,)
    assert np.all(magnitudes >= 0.0)


def test_dump_trajectories(tmp_path, rollout):
    _, _, traj = rollout
    rows = read_csv(dump_trajectories(traj, tmp_path / "traj.csv"))
    assert len(rows) == 60
    assert list(rows[0]) == ["episode", "t", "s", "a_1", "a_2", "a_3", "r", "logp"]
