"""
测试公共夹具
"""

from pathlib import Path
import sys

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.game_core import MarkovGame, build_dependency_chain_game, build_random_game
from core.utils import setup_logging

# 会话级 stderr 在整个测试期间有效；capsys 的流在单个测试后关闭
setup_logging("WARNING")


@pytest.fixture
def chain_game():
    """3 个智能体的依赖链博弈及其真实依赖"""
    return build_dependency_chain_game(3, 0.5, seed=0)


@pytest.fixture
def random_game() -> MarkovGame:
    return build_random_game(2, 3, 2, 0.9, seed=1)


@pytest.fixture
def bandit_game() -> MarkovGame:
    """单状态、单智能体、两个动作：动作 0 奖励 1，动作 1 奖励 0"""
    return MarkovGame(
        action_counts=(2,),
        transition=np.ones((1, 2, 1)),
        reward=np.array([[1.0, 0.0]]),
        initial_dist=np.ones(1),
        gamma=0.5,
        observation=np.zeros((1, 1), dtype=np.int64),
        r_max=1.0,
    )


@pytest.fixture
def numeric_gradient():
    """中心差分：f 无参数，读取被原地扰动的数组 x"""

    def gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
        result = np.zeros_like(x)
        for index in np.ndindex(x.shape):
            original = x[index]
            x[index] = original + h
            up = f()
            x[index] = original - h
            down = f()
            x[index] = original
            result[index] = (up - down) / (2.0 * h)
        return result

    return gradient
