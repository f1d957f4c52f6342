"""
上层调度器测试
"""

import dataclasses

import numpy as np
import pytest

from core.batch_scheduler import (
    BatchScheduler,
    dag_critic_update,
    dag_period_reward,
    dependence_auc,
    parse_batch_sequence,
    read_graph_file,
    trajectory_feature_dim,
    trajectory_features,
)
from core.dag_generator import (
    AttentionScorer,
    GeneratorSample,
    bernoulli_log_prob,
    dag_advantage,
    edge_mask,
    generator_gradient,
    generator_objective,
    sample_edge_set,
    score_dependence,
)
from core.exceptions import InputError
from core.models import BatchSequence, DependenceGraph, GroundTruthDependence
from core.partitioners import is_acyclic
from core.policies import PolicySet
from core.rollout_advantage import collect_rollouts

SEQUENCE = BatchSequence.single(3)


@pytest.fixture
def traj(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=0)
    return collect_rollouts(
        game, policy_set, SEQUENCE, n_episodes=4, horizon=12, seed=3
    )


def test_parse_batch_sequence():
    assert parse_batch_sequence("[{1},{2,3}]") == BatchSequence(((0,), (1, 2)))
    assert parse_batch_sequence("[ {3}, {2, 1} ]", 3).to_text() == "[{3},{1,2}]"


@pytest.mark.parametrize(
    "text", ["{1},{2}", "[{1},{1,2}]", "[{a}]", "[{1}x{2}]", "[]"]
)
def test_parse_batch_sequence_errors(text):
    with pytest.raises(InputError):
        parse_batch_sequence(text)


def test_parse_batch_sequence_requires_coverage():
    with pytest.raises(InputError):
        parse_batch_sequence("[{1},{3}]", 3)


def test_read_graph_file(tmp_path):
    path = tmp_path / "chain.graph"
    path.write_text("# 依赖链\nagents 3\n1 2 0.7\n2 3  # 默认权重\n", encoding="utf-8")
    n_agents, edges, weights = read_graph_file(path)
    assert n_agents == 3
    assert edges == [(0, 1), (1, 2)]
    assert weights == {(0, 1): 0.7, (1, 2): 1.0}


@pytest.mark.parametrize(
    "content",
    [
        "",
        "agents 0\n",
        "nodes 3\n",
        "agents 3\n1 1\n",
        "agents 3\n1 5\n",
        "agents 3\n1 x\n",
    ],
)
def test_read_graph_file_errors(tmp_path, content):
    path = tmp_path / "bad.graph"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(InputError):
        read_graph_file(path)


def test_read_graph_file_missing(tmp_path):
    with pytest.raises(InputError):
        read_graph_file(tmp_path / "missing.graph")


def test_dependence_auc_separates_true_edges():
    raw = np.array([[0.0, 0.5, 0.5], [0.9, 0.0, 0.1], [0.1, 0.9, 0.0]])
    graph = DependenceGraph(weights=raw, raw=raw, threshold=0.25)
    truth = GroundTruthDependence(np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]]))
    assert dependence_auc(graph, truth) == pytest.approx(1.0)


def test_dependence_auc_needs_both_classes():
    raw = np.full((2, 2), 0.5)
    graph = DependenceGraph(weights=raw, raw=raw, threshold=0.5)
    with pytest.raises(InputError):
        dependence_auc(graph, GroundTruthDependence(np.array([[0, 1], [1, 0]])))


def test_trajectory_features_shape(traj):
    features = trajectory_features(traj, n_keys=3, n_actions=2, window=2)
    assert features.shape == (3, trajectory_feature_dim(3, 3, 2, 2))
    assert features.shape == (3, (3 + 2) + 3 * 2 + 3)
    np.testing.assert_allclose(features[:, -3:], np.eye(3))


def _with_actions(traj, actions):
    return dataclasses.replace(traj, actions=actions)


def test_trajectory_features_see_cross_agent_cooccurrence(traj):
    """同一时刻的共现：把智能体 3 的动作流跨回合打乱，特征随之改变"""
    before = trajectory_features(traj, n_keys=3, n_actions=2, window=2)
    actions = traj.actions.copy()
    actions[:, :, 2] = np.roll(actions[:, :, 2], 1, axis=0)
    after = trajectory_features(_with_actions(traj, actions), 3, 2, 2)
    assert not np.allclose(before, after)


def test_copied_actions_score_higher_than_shuffled(traj):
    """智能体 2 照抄智能体 1 时，对应的零滞后共现项高于打乱后的"""
    copied = traj.actions.copy()
    copied[:, :, 1] = copied[:, :, 0]
    shuffled = copied.copy()
    shuffled[:, :, 1] = np.roll(copied[:, :, 1], 1, axis=0)
    column = (3 + 2) + 0 * 2 + 0  # 智能体 1、滞后 0
    strong = trajectory_features(_with_actions(traj, copied), 3, 2, 2)
    weak = trajectory_features(_with_actions(traj, shuffled), 3, 2, 2)
    assert strong[1, column] > weak[1, column]


def test_score_dependence_rows():
    scorer = AttentionScorer.create(
        feature_dim=4, d_k=3, n_states=2, seed=0, init_scale=1.0
    )
    X = np.random.default_rng(1).standard_normal((4, 4))
    graph = score_dependence(scorer, X)
    np.testing.assert_allclose(np.diag(graph.raw), 0.0)
    np.testing.assert_allclose(graph.raw.sum(axis=1), 1.0)
    assert np.all((graph.weights == 0) | (graph.weights >= graph.threshold))


def test_propose_returns_compatible_sequence(chain_game, traj):
    game, _ = chain_game
    scheduler = BatchScheduler(
        3, game.n_states, 3, 2, game.gamma, seed=0, config={"window": 2}
    )
    decision = scheduler.propose(traj, np.random.default_rng(0))
    assert decision.batch_sequence.n_agents == 3
    assert is_acyclic(decision.dag)
    assert set(decision.dag) <= set(decision.edges)
    decision.batch_sequence.validate(3, decision.dag)
    stats = scheduler.learn(decision, traj)
    assert set(stats) == {"dag_advantage", "critic_loss"}


def test_generator_gradient_matches_finite_difference(numeric_gradient):
    scorer = AttentionScorer.create(
        feature_dim=4, d_k=3, n_states=2, seed=2, init_scale=0.5
    )
    X = np.random.default_rng(3).standard_normal((3, 4))
    graph = score_dependence(scorer, X)
    edges, log_prob = sample_edge_set(graph, np.random.default_rng(4))
    candidates = graph.weights > 0
    mask = edge_mask(edges, 3)
    expected = bernoulli_log_prob(graph.weights, candidates, mask)
    assert log_prob == pytest.approx(expected)
    sample = GeneratorSample(
        features=X,
        candidates=candidates,
        mask=mask,
        old_probs=graph.raw.copy(),
        old_log_prob=bernoulli_log_prob(graph.raw, candidates, mask),
        advantages=np.array([0.7, -0.3]),
    )
    # 小扰动让比率偏离 1 但仍在裁剪区间内
    W_q = scorer.W_q + 0.01 * np.random.default_rng(5).standard_normal(scorer.W_q.shape)
    W_k = scorer.W_k.copy()
    grad_q, grad_k = generator_gradient(W_q, W_k, [sample], 0.2, 0.5)
    objective = lambda: generator_objective(W_q, W_k, [sample], 0.2, 0.5)  # noqa: E731
    np.testing.assert_allclose(grad_q, numeric_gradient(objective, W_q), atol=1e-6)
    np.testing.assert_allclose(grad_k, numeric_gradient(objective, W_k), atol=1e-6)


def test_dag_period_reward():
    assert dag_period_reward(np.array([1.0, 1.0, 1.0]), 0.5, 1) == pytest.approx(1.5)
    assert dag_period_reward(np.array([1.0, 1.0, 1.0]), 0.5, 5) == pytest.approx(1.75)
    with pytest.raises(InputError):
        dag_period_reward(np.ones(3), 0.5, -1)


def test_dag_advantage_with_zero_values_sums_period_returns():
    returns = np.array([1.0, 2.0, 3.0])
    advantages = dag_advantage(returns, np.zeros(3), 0.5, 1)
    np.testing.assert_allclose(advantages, returns)


def test_critic_update_reduces_loss():
    phi = np.zeros(3)
    states = np.array([0, 1, 1, 2])
    targets = np.array([1.0, 2.0, 2.0, -1.0])
    phi, before = dag_critic_update(phi, states, targets, 0.5)
    _, after = dag_critic_update(phi, states, targets, 0.5)
    assert after < before
