"""
下层优化器测试
"""

import numpy as np
import pytest

from core.b2mapo_optimizer import (
    B2MAPOTrainer,
    SchemeConfig,
    batch_advantage,
    batch_ratio,
    batch_surrogate_loss,
    distill_loss,
    distill_step,
    mappo_update,
    plan_round,
    run_round,
    switch_sequence,
    update_batch,
)
from core.exact_oracle import expected_return
from core.exceptions import InputError
from core.game_core import build_dependency_chain_game
from core.models import BatchSequence, SchemeMode
from core.policies import PolicySet
from core.rollout_advantage import collect_rollouts

SEQUENCE = BatchSequence(((0,), (1, 2)))


def _small(**overrides) -> SchemeConfig:
    base = dict(n_episodes=4, horizon=8, epochs=2, distill_period=1, distill_steps=2)
    return SchemeConfig(**{**base, **overrides})


def test_plan_round_per_mode():
    assert plan_round(_small(mode=SchemeMode.MAPPO), 3) == BatchSequence.single(3)
    a2po = plan_round(
        _small(mode=SchemeMode.A2PO), 3, advantage_magnitudes=[0.1, 0.5, 0.3]
    )
    assert a2po == BatchSequence.singletons([1, 2, 0])
    assert plan_round(_small(mode="b2mapo-dag"), 3) == BatchSequence.single(3)
    fixed = _small(mode=SchemeMode.B2MAPO_FIXED, fixed_sequence=SEQUENCE)
    assert plan_round(fixed, 3) == SEQUENCE
    with pytest.raises(InputError):
        plan_round(_small(mode=SchemeMode.A2PO), 3, advantage_magnitudes=[0.1, 0.2])


@pytest.mark.parametrize(
    "overrides",
    [
        {"clip_eps": 1.0},
        {"clip_eps": []},
        {"mode": "bogus"},
        {"mode": SchemeMode.B2MAPO_FIXED},
        {"lam": 1.5},
        {"gamma": 1.0},
        {"distill_period": 0},
        {"n_episodes": 0},
    ],
)
def test_scheme_config_validation(overrides):
    with pytest.raises(InputError):
        _small(**overrides)


def test_clip_for_reuses_last_value():
    config = _small(clip_eps=[0.1, 0.2])
    assert config.clip_for(0) == 0.1
    assert config.clip_for(5) == 0.2


def test_batch_surrogate_loss():
    loss = batch_surrogate_loss(np.array([1.0, -1.0]), np.array([1.5, 0.5]), 0.2)
    assert loss == pytest.approx(0.2)


def test_batch_ratio_is_one_for_unchanged_policies(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=0)
    traj = collect_rollouts(game, policy_set, SEQUENCE, 3, 5, seed=1)
    ratios = batch_ratio(
        policy_set,
        policy_set.copy(),
        traj.observations,
        traj.actions,
        (1, 2),
        (0,),
        0.2,
    )
    np.testing.assert_allclose(ratios, 1.0)


def test_update_batch_changes_only_its_batch(chain_game):
    game, _ = chain_game
    config = _small(learning_rate=0.5)
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=1)
    behavior = policy_set.copy()
    traj = collect_rollouts(game, policy_set, SEQUENCE, 4, 8, seed=2)
    estimate, _ = batch_advantage(game, traj, policy_set, behavior, 1, config)
    before = [p.logits.copy() for p in policy_set.conditioned]
    result = update_batch(game, policy_set, 1, traj, estimate, behavior, config)
    np.testing.assert_array_equal(policy_set.conditioned[0].logits, before[0])
    changed = [
        not np.array_equal(policy_set.conditioned[a].logits, before[a]) for a in (1, 2)
    ]
    assert any(changed)
    assert 0.0 <= result.alpha <= 1.0
    assert result.step_scale == 1.0


def test_run_round_is_deterministic(chain_game):
    game, _ = chain_game
    config = _small()
    first = PolicySet.create(game, SEQUENCE, init_scale=0.3, seed=2)
    second = PolicySet.create(game, SEQUENCE, init_scale=0.3, seed=2)
    report_a = run_round(game, first, config, seed=7)
    report_b = run_round(game, second, config, seed=7)
    assert report_a.j_mc == report_b.j_mc
    assert report_a.alphas == report_b.alphas
    for a, b in zip(first.conditioned, second.conditioned):
        np.testing.assert_array_equal(a.logits, b.logits)


def test_mappo_update_with_logged_old_probs(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, BatchSequence.single(3), init_scale=0.5, seed=3)
    traj = collect_rollouts(game, policy_set, BatchSequence.single(3), 4, 6, seed=4)
    advantages = np.random.default_rng(5).standard_normal(traj.rewards.shape)
    observations = traj.observations.reshape(-1, 3)
    actions = traj.actions.reshape(-1, 3)
    old_probs = [
        p.probs_table()[observations[:, p.agent], actions[:, p.agent]]
        for p in policy_set.independent
    ]
    explicit = policy_set.copy()
    mappo_update(policy_set.independent, traj, advantages, 0.2, 0.1, 3)
    mappo_update(
        explicit.independent, traj, advantages, 0.2, 0.1, 3, old_probs=old_probs
    )
    for a, b in zip(policy_set.independent, explicit.independent):
        np.testing.assert_allclose(a.logits, b.logits, atol=1e-12)


def test_distill_step_reduces_kl(chain_game):
    game, _ = chain_game
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=1.0, seed=6)
    traj = collect_rollouts(game, policy_set, SEQUENCE, 4, 8, seed=7)
    before = distill_loss(policy_set, traj)
    after = distill_step(policy_set, traj, coefficient=1.0, learning_rate=1.0, steps=10)
    assert after < before
    with pytest.raises(InputError):
        distill_step(policy_set, traj, coefficient=-1.0)


def test_oracle_guard_never_lowers_return(chain_game):
    """预言机模式下通过认证的更新使 𝒥 不下降"""
    game, _ = chain_game
    config = _small(oracle=True, learning_rate=2.0, epochs=4)
    policy_set = PolicySet.create(game, SEQUENCE, init_scale=0.5, seed=8)
    for round_index in range(1, 4):
        report = run_round(
            game, policy_set, config, seed=round_index, round_index=round_index
        )
        assert report.j_after >= report.j_before - 1e-9
        assert all(0.0 <= scale <= 1.0 for scale in report.step_scales)


def test_sequence_switch_is_certified_under_oracle(chain_game):
    """批次合并会丢掉依赖，认证模式下只接受不降低 𝒥 的切换"""
    game, _ = chain_game
    merged = BatchSequence(((0, 1), (2,)))
    policy_set = PolicySet.create(
        game, BatchSequence.singletons([0, 1, 2]), init_scale=1.5
    )
    j_old = expected_return(game, policy_set.joint_table(game))

    free = policy_set.copy()
    switched, shift = switch_sequence(
        game, free, merged, _small(oracle=True, oracle_guard=False)
    )
    assert switched and free.batch_sequence == merged
    assert shift > 1e-3

    guarded = policy_set.copy()
    switched, _ = switch_sequence(game, guarded, merged, _small(oracle=True))
    assert expected_return(game, guarded.joint_table(game)) >= j_old - 1e-9
    if not switched:
        assert guarded.batch_sequence == policy_set.batch_sequence
        np.testing.assert_array_equal(
            guarded.joint_table(game), policy_set.joint_table(game)
        )

    same, shift = switch_sequence(
        game, policy_set.copy(), policy_set.batch_sequence, _small(oracle=True)
    )
    assert same and shift == 0.0


@pytest.mark.parametrize("mode", [SchemeMode.B2MAPO_DAG, SchemeMode.A2PO])
def test_oracle_return_is_monotone_across_rounds(mode):
    """跨轮次的序列切换同样不降低 𝒥：本轮结束时的 𝒥 不高于下一轮开始时的"""
    game, _ = build_dependency_chain_game(3, 1.0, seed=0)
    config = _small(mode=mode, oracle=True, clip_eps=0.1, learning_rate=2.0)
    trainer = B2MAPOTrainer(game, config, seed=4, scheduler_config={"window": 2})
    reports = trainer.train(20)
    for report in reports:
        assert report.j_after >= report.j_before - 1e-9
    for previous, current in zip(reports, reports[1:]):
        assert previous.j_after <= current.j_before + 1e-6
    assert reports[-1].j_after >= reports[0].j_before - 1e-9


def test_trainer_with_scheduler(chain_game):
    game, _ = chain_game
    trainer = B2MAPOTrainer(
        game, _small(mode=SchemeMode.B2MAPO_DAG), seed=1, scheduler_config={"window": 2}
    )
    reports = trainer.train(3)
    assert [r.round_index for r in reports] == [1, 2, 3]
    for report in reports:
        report.batch_sequence.validate(3)
        assert report.next_sequence is not None
    assert reports[1].batch_sequence == reports[0].next_sequence


def test_a2po_updates_one_agent_per_batch(chain_game):
    game, _ = chain_game
    trainer = B2MAPOTrainer(game, _small(mode=SchemeMode.A2PO), seed=2)
    reports = trainer.train(2)
    assert all(r.batch_count == 3 for r in reports)


def test_mappo_uses_a_single_batch(chain_game):
    game, _ = chain_game
    trainer = B2MAPOTrainer(game, _small(mode=SchemeMode.MAPPO), seed=3)
    assert trainer.run_round().batch_count == 1


def test_train_requires_rounds(chain_game):
    game, _ = chain_game
    trainer = B2MAPOTrainer(game, _small(mode=SchemeMode.MAPPO), seed=0)
    with pytest.raises(InputError):
        trainer.train(0)
