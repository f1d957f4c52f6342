"""
博弈核心测试
"""

import numpy as np
import pytest

from core.exceptions import InputError, SizeError
from core.game_core import (
    MarkovGame,
    build_dependency_chain_game,
    build_random_game,
    load_game,
    save_game,
    step,
)


def test_chain_game_shapes(chain_game):
    """依赖链博弈的形状、概率与真实依赖"""
    game, truth = chain_game
    assert game.n_agents == 3
    assert game.n_states == 3
    assert game.n_joint == 8
    np.testing.assert_allclose(game.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.max(np.abs(game.reward)) <= game.r_max
    assert truth.edges() == [(0, 1), (1, 2)]


def test_arrays_are_read_only(chain_game):
    game, _ = chain_game
    with pytest.raises(ValueError):
        game.reward[0, 0] = 5.0


def test_encode_decode_agree_with_joint_actions(random_game):
    for index in range(random_game.n_joint):
        joint = random_game.decode(index)
        assert random_game.encode(joint) == index
        assert tuple(random_game.joint_actions[index]) == joint


def test_encode_rejects_bad_actions(random_game):
    with pytest.raises(InputError):
        random_game.encode((0, 2))
    with pytest.raises(InputError):
        random_game.encode((0,))


def test_step_is_deterministic_for_a_seed(random_game):
    first = step(random_game, 0, (1, 0), np.random.default_rng(3))
    second = step(random_game, 0, (1, 0), np.random.default_rng(3))
    assert first == second
    assert first[1] == random_game.reward[0, random_game.encode((1, 0))]


def test_step_rejects_bad_state(random_game):
    with pytest.raises(InputError):
        step(random_game, 7, (0, 0), np.random.default_rng(0))


def test_masked_observation():
    """masked 模式下链首以外的智能体只看到奇偶"""
    game, _ = build_dependency_chain_game(3, 1.0, seed=0, n_states=4, observe="masked")
    np.testing.assert_array_equal(game.observation[0], [0, 1, 2, 3])
    np.testing.assert_array_equal(game.observation[1], [0, 1, 0, 1])
    assert game.n_observations == (4, 2, 2)
    assert not game.is_fully_observed


def test_builder_validation():
    with pytest.raises(InputError):
        build_dependency_chain_game(1, 0.5, seed=0)
    with pytest.raises(InputError):
        build_dependency_chain_game(3, 1.5, seed=0)
    with pytest.raises(InputError):
        build_random_game(2, 3, 2, 1.0, seed=0)
    with pytest.raises(SizeError):
        build_random_game(2, 65, 2, 0.9, seed=0)
    with pytest.raises(SizeError):
        build_random_game(9, 2, 2, 0.9, seed=0)


def test_invalid_transition_rows():
    transition = np.full((1, 2, 1), 0.5)
    with pytest.raises(InputError):
        MarkovGame(
            action_counts=(2,),
            transition=transition,
            reward=np.zeros((1, 2)),
            initial_dist=np.ones(1),
            gamma=0.9,
            observation=np.zeros((1, 1), dtype=np.int64),
            r_max=1.0,
        )


def test_reward_above_r_max():
    with pytest.raises(InputError):
        MarkovGame(
            action_counts=(1,),
            transition=np.ones((1, 1, 1)),
            reward=np.array([[2.0]]),
            initial_dist=np.ones(1),
            gamma=0.9,
            observation=np.zeros((1, 1), dtype=np.int64),
            r_max=1.0,
        )


def test_save_and_load_keep_fingerprint(tmp_path, random_game):
    path = save_game(random_game, tmp_path / "game.json")
    loaded = load_game(path)
    assert loaded.fingerprint == random_game.fingerprint
    assert loaded.name == random_game.name


def test_load_game_errors(tmp_path):
    with pytest.raises(InputError):
        load_game(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(InputError):
        load_game(broken)
    partial = tmp_path / "partial.json"
    partial.write_text('{"n_agents": 1}', encoding="utf-8")
    with pytest.raises(InputError):
        load_game(partial)
