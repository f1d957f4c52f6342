"""
策略测试
"""

import numpy as np
import pytest

from core.exact_oracle import exact_value, product_table
from core.exceptions import InputError, NumericDomainError
from core.models import BatchSequence
from core.policies import (
    PolicySet,
    WindowObservationEncoder,
    action_probs,
    construct_product_equivalent,
    joint_prob,
    kl,
    load_checkpoint,
    logprob_gradient,
    marginalize,
    save_checkpoint,
)

SEQUENCE = BatchSequence(((0,), (1, 2)))


def test_uniform_initialization(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE)
    table = policy_set.joint_table(game)
    np.testing.assert_allclose(table, 1.0 / game.n_joint)
    assert policy_set.conditioned[1].preceding == (0,)
    assert policy_set.conditioned[0].preceding == ()


def test_joint_prob_matches_joint_table(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=1)
    table = policy_set.joint_table(game)
    np.testing.assert_allclose(table.sum(axis=1), 1.0, atol=1e-12)
    for s in range(game.n_states):
        for j in range(game.n_joint):
            value = joint_prob(policy_set, s, game.decode(j), SEQUENCE, game)
            assert value == pytest.approx(table[s, j], abs=1e-12)


def test_joint_prob_rejects_other_sequence(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE)
    with pytest.raises(InputError):
        joint_prob(policy_set, 0, (0, 0, 0), BatchSequence.single(3), game)


def test_context_length_is_checked(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE)
    with pytest.raises(InputError):
        action_probs(policy_set.conditioned[1], 0, ())


def test_logprob_gradient_matches_finite_difference(chain_game, numeric_gradient):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.7, seed=2)
    policy = policy_set.conditioned[2]
    analytic = logprob_gradient(policy, 1, (1,), 0)
    numeric = numeric_gradient(
        lambda: float(np.log(action_probs(policy, 1, (1,))[0])), policy.logits
    )
    np.testing.assert_allclose(analytic, numeric, atol=1e-7)


def test_rebind_to_finer_sequence_keeps_joint_policy(chain_game):
    """乘积策略切换到逐个批次时，条件分布就是原来的边缘，联合表不变"""
    game, _ = chain_game
    policy_set = PolicySet.create(game, BatchSequence.single(3), init_scale=0.8, seed=3)
    before = policy_set.joint_table(game)
    policy_set.rebind(BatchSequence.singletons([2, 0, 1]), game)
    assert policy_set.batch_sequence == BatchSequence.singletons([2, 0, 1])
    np.testing.assert_allclose(policy_set.joint_table(game), before, atol=1e-12)


def test_rebind_with_sharing_averages_batch_rows(chain_game):
    """合并进同一批次的共享表取各成员切换后条件分布的均值，而不是第一个成员的"""
    game, _ = chain_game
    policy_set = PolicySet.create(
        game,
        BatchSequence.singletons([0, 1, 2]),
        parameter_sharing=True,
        init_scale=1.0,
        seed=11,
    )
    unshared = policy_set.copy()
    unshared.parameter_sharing = False
    unshared.rebind(BatchSequence.single(3), game)
    expected = np.mean([p.probs_table() for p in unshared.conditioned], axis=0)

    policy_set.rebind(BatchSequence.single(3), game)
    shared = policy_set.conditioned
    assert shared[0].logits is shared[1].logits is shared[2].logits
    np.testing.assert_allclose(shared[0].probs_table(), expected, atol=1e-12)
    assert not np.allclose(expected, unshared.conditioned[0].probs_table())


def test_marginalize_single_batch_is_identity(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, BatchSequence.single(3), init_scale=0.5, seed=4)
    marginals = marginalize(policy_set, game)
    for conditioned, independent in zip(policy_set.conditioned, marginals):
        np.testing.assert_array_equal(conditioned.logits[:, 0, :], independent.logits)


def test_sampling_is_reproducible(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=5)
    first = policy_set.sample([0, 0, 0], np.random.default_rng(9))
    second = policy_set.sample([0, 0, 0], np.random.default_rng(9))
    assert first == second
    actions, logps = first
    expected = np.log(joint_prob(policy_set, 0, actions, SEQUENCE, game))
    assert sum(logps) == pytest.approx(expected, abs=1e-12)


def test_kl():
    p = np.array([0.25, 0.75])
    assert kl(p, p) == pytest.approx(0.0)
    assert kl(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(np.log(2.0))
    with pytest.raises(NumericDomainError):
        kl(p, np.array([1.0, 0.0]))


def test_parameter_sharing_aliases_batch_tables(random_game):
    policy_set = PolicySet.create(
        random_game, BatchSequence.single(2), parameter_sharing=True
    )
    assert policy_set.conditioned[0].logits is policy_set.conditioned[1].logits
    copied = policy_set.copy()
    assert copied.conditioned[0].logits is copied.conditioned[1].logits
    assert copied.conditioned[0].logits is not policy_set.conditioned[0].logits


def test_checkpoint_keeps_probabilities(tmp_path, chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=6)
    loaded = load_checkpoint(save_checkpoint(policy_set, tmp_path / "policy.json"))
    assert loaded.batch_sequence == SEQUENCE
    np.testing.assert_allclose(loaded.joint_table(game), policy_set.joint_table(game))


def test_construct_product_equivalent(chain_game):
    """构造出的乘积策略与条件策略值函数相同"""
    game, _ = chain_game
    policy_set = PolicySet.create(
        game, BatchSequence.singletons([0, 1, 2]), init_scale=1.0, seed=7
    )
    joint = policy_set.joint_table(game)
    factors = construct_product_equivalent(game, joint)
    np.testing.assert_allclose(
        exact_value(game, product_table(factors)), exact_value(game, joint), atol=1e-8
    )


def test_window_encoder_has_no_joint_table(chain_game):
    game, _ = chain_game
    encoder = WindowObservationEncoder(window=2, n_buckets=8)
    policy_set = PolicySet.create(game, SEQUENCE, encoder=encoder)
    assert policy_set.conditioned[0].n_observations == 8
    assert 0 <= encoder.encode(game, 0, 1, [(0, 1), (2, 0)]) < 8
    with pytest.raises(InputError):
        policy_set.joint_table(game)
