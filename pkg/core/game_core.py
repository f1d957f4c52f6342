"""
有限合作马尔可夫博弈（表格型 Dec-POMDP）及带真实依赖关系的合成博弈族
"""

from dataclasses import dataclass
from functools import cached_property
import json
from pathlib import Path
from typing import Sequence, Tuple, Union

from loguru import logger
import numpy as np
from pydantic import ValidationError

from .exceptions import InputError, ResultIOError, SizeError
from .models import GroundTruthDependence
from .schemas import GameFile
from .utils import generate_cache_key

MAX_STATES = 64
MAX_JOINT_ACTIONS = 256
PROB_TOL = 1e-12


def _readonly(array: np.ndarray, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """有限合作博弈：共享奖励，联合动作按智能体顺序行优先编号"""

    action_counts: Tuple[int, ...]
    transition: np.ndarray  # (S, J, S)
    reward: np.ndarray  # (S, J)
    initial_dist: np.ndarray  # (S,)
    gamma: float
    observation: np.ndarray  # (n, S) 状态到观测编号
    r_max: float
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(
            self, "action_counts", tuple(int(c) for c in self.action_counts)
        )
        object.__setattr__(self, "transition", _readonly(self.transition, np.float64))
        object.__setattr__(self, "reward", _readonly(self.reward, np.float64))
        object.__setattr__(
            self, "initial_dist", _readonly(self.initial_dist, np.float64)
        )
        object.__setattr__(self, "observation", _readonly(self.observation, np.int64))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))
        validate_game(self)

    @property
    def n_agents(self) -> int:
        return len(self.action_counts)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_joint(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def n_observations(self) -> Tuple[int, ...]:
        return tuple(int(row.max()) + 1 for row in self.observation)

    @cached_property
    def joint_actions(self) -> np.ndarray:
        """(J, n)：第 j 个联合动作的各智能体动作"""
        grid = np.indices(self.action_counts).reshape(self.n_agents, -1).T
        grid.flags.writeable = False
        return grid

    @cached_property
    def transition_cdf(self) -> np.ndarray:
        return np.cumsum(self.transition, axis=2)

    @cached_property
    def fingerprint(self) -> str:
        return generate_cache_key(
            self.transition,
            self.reward,
            self.initial_dist,
            self.observation,
            np.array(self.action_counts),
            tag=f"{self.gamma!r}",
        )

    @property
    def is_fully_observed(self) -> bool:
        identity = np.arange(self.n_states)
        return all(np.array_equal(row, identity) for row in self.observation)

    def encode(self, joint_action: Sequence[int]) -> int:
        """联合动作 → 行优先编号"""
        joint_action = tuple(int(a) for a in joint_action)
        if len(joint_action) != self.n_agents:
            raise InputError(
                f"联合动作长度 {len(joint_action)} 与智能体数 {self.n_agents} 不符"
            )
        for agent, (action, count) in enumerate(zip(joint_action, self.action_counts)):
            if not 0 <= action < count:
                raise InputError(f"智能体 {agent} 的动作 {action} 越界 (共 {count} 个)")
        return int(np.ravel_multi_index(joint_action, self.action_counts))

    def decode(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < self.n_joint:
            raise InputError(f"联合动作编号 {index} 越界")
        return tuple(int(a) for a in self.joint_actions[index])

    def observe(self, agent: int, state: int) -> int:
        return int(self.observation[agent, state])


def validate_game(game: MarkovGame) -> MarkovGame:
    """检查博弈不变量，失败时抛出输入错误"""
    n, S = game.n_agents, game.transition.shape[0]
    if n < 1 or any(c < 1 for c in game.action_counts):
        raise InputError(f"动作数必须 ≥ 1: {game.action_counts}")
    J = int(np.prod(game.action_counts))
    if S < 1:
        raise InputError("状态数必须 ≥ 1")
    if S > MAX_STATES or J > MAX_JOINT_ACTIONS:
        raise SizeError(
            f"规模超限: {S} 个状态 × {J} 个联合动作 (上限 {MAX_STATES} × {MAX_JOINT_ACTIONS})"
        )
    if game.transition.shape != (S, J, S):
        raise InputError(f"转移张量形状应为 {(S, J, S)}，实际 {game.transition.shape}")
    if game.reward.shape != (S, J):
        raise InputError(f"奖励表形状应为 {(S, J)}，实际 {game.reward.shape}")
    if game.initial_dist.shape != (S,):
        raise InputError("初始分布长度与状态数不符")
    if game.observation.shape != (n, S):
        raise InputError(f"观测表形状应为 {(n, S)}，实际 {game.observation.shape}")
    if np.any(game.observation < 0):
        raise InputError("观测编号必须非负")
    if not np.all(np.isfinite(game.transition)) or np.any(game.transition < 0):
        raise InputError("转移概率必须为非负有限值")
    row_error = np.max(np.abs(game.transition.sum(axis=2) - 1.0))
    if row_error > PROB_TOL:
        raise InputError(f"转移行和偏离 1: {row_error:.3e}")
    if np.any(game.initial_dist < 0) or abs(game.initial_dist.sum() - 1.0) > PROB_TOL:
        raise InputError("初始分布必须非负且和为 1")
    if not np.all(np.isfinite(game.reward)):
        raise InputError("奖励必须为有限值")
    if np.max(np.abs(game.reward)) > game.r_max:
        raise InputError(f"奖励超出上界 R_max={game.r_max}")
    if not 0.0 <= game.gamma < 1.0:
        raise InputError(f"折扣因子必须在 [0, 1) 内: {game.gamma}")
    return game


def step(
    game: MarkovGame, s: int, a: Sequence[int], rng: np.random.Generator
) -> Tuple[int, float]:
    """执行一步：按 P[s][a] 采样下一状态，奖励取 R[s][a]"""
    if not 0 <= int(s) < game.n_states:
        raise InputError(f"状态 {s} 越界 (共 {game.n_states} 个)")
    j = game.encode(a)
    return sample_next_state(game, int(s), j, rng), float(game.reward[s, j])


def sample_next_state(
    game: MarkovGame, s: int, joint_index: int, rng: np.random.Generator
) -> int:
    """按累积分布逆变换采样下一状态"""
    u = rng.random()
    nxt = int(np.searchsorted(game.transition_cdf[s, joint_index], u, side="right"))
    return min(nxt, game.n_states - 1)


def build_dependency_chain_game(
    n_agents: int,
    coupling: float,
    seed: int,
    n_states: int = 3,
    n_actions: int = 2,
    gamma: float = 0.9,
    noise: float = 0.1,
    observe: str = "full",
) -> Tuple[MarkovGame, GroundTruthDependence]:
    """依赖链博弈：智能体 i 的奖励分量取决于 a^i 是否与 a^{i-1} 一致

    每个分量为 (1-coupling)·base_i(s, a^i) + coupling·m_i，其中 m_1 = base_1(s, a^1)，
    m_i = ±1（与前一个智能体动作相同为 +1）。总奖励取分量均值，落在 [-1, 1]。
    状态转移只由第一个智能体决定：以 1-noise 的概率转到 (s + a^1) mod S。
    observe="masked" 时除链首外的智能体只看到状态奇偶。
    """
    if n_agents < 2:
        raise InputError(f"依赖链博弈至少需要 2 个智能体，实际 {n_agents}")
    if not 0.0 <= coupling <= 1.0:
        raise InputError(f"耦合强度必须在 [0, 1] 内: {coupling}")
    if observe not in ("full", "masked"):
        raise InputError(f"未知的观测模式: {observe}")

    rng = np.random.default_rng(seed)
    counts = (n_actions,) * n_agents
    base = rng.uniform(-1.0, 1.0, size=(n_agents, n_states, n_actions))
    joint = np.indices(counts).reshape(n_agents, -1).T
    n_joint = joint.shape[0]

    reward = np.zeros((n_states, n_joint))
    for s in range(n_states):
        components = (1.0 - coupling) * base[np.arange(n_agents), s, joint]
        matches = np.where(joint[:, 1:] == joint[:, :-1], 1.0, -1.0)
        components[:, 0] += coupling * base[0, s, joint[:, 0]]
        components[:, 1:] += coupling * matches
        reward[s] = components.mean(axis=1)

    transition = np.full((n_states, n_joint, n_states), noise / n_states)
    for s in range(n_states):
        targets = (s + joint[:, 0]) % n_states
        transition[s, np.arange(n_joint), targets] += 1.0 - noise
    transition /= transition.sum(axis=2, keepdims=True)

    observation = np.tile(np.arange(n_states), (n_agents, 1))
    if observe == "masked":
        observation[1:] = np.arange(n_states) % 2

    adjacency = np.zeros((n_agents, n_agents), dtype=bool)
    adjacency[np.arange(n_agents - 1), np.arange(1, n_agents)] = True

    game = MarkovGame(
        action_counts=counts,
        transition=transition,
        reward=reward,
        initial_dist=np.full(n_states, 1.0 / n_states),
        gamma=gamma,
        observation=observation,
        r_max=1.0,
        name=f"chain-n{n_agents}-c{coupling:g}",
    )
    logger.debug(f"构建依赖链博弈: {game.name}, seed={seed}")
    return game, GroundTruthDependence(adjacency)


def build_random_game(
    n_agents: int,
    n_states: int,
    n_actions: Union[int, Sequence[int]],
    gamma: float,
    seed: int,
) -> MarkovGame:
    """随机博弈：转移行取自对称 Dirichlet(1)，奖励均匀分布于 [-1, 1]"""
    if not 0.0 <= gamma < 1.0:
        raise InputError(f"折扣因子必须在 [0, 1) 内: {gamma}")
    counts = (
        (int(n_actions),) * n_agents
        if np.isscalar(n_actions)
        else tuple(int(c) for c in n_actions)
    )
    if n_agents < 1 or n_states < 1 or len(counts) != n_agents or min(counts) < 1:
        raise InputError("智能体数、状态数和动作数都必须 ≥ 1")

    rng = np.random.default_rng(seed)
    n_joint = int(np.prod(counts))
    if n_states > MAX_STATES or n_joint > MAX_JOINT_ACTIONS:
        raise SizeError(f"规模超限: {n_states} 个状态 × {n_joint} 个联合动作")
    raw = rng.gamma(1.0, size=(n_states, n_joint, n_states))
    transition = raw / raw.sum(axis=2, keepdims=True)
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_joint))
    initial = rng.gamma(1.0, size=n_states)

    return MarkovGame(
        action_counts=counts,
        transition=transition,
        reward=reward,
        initial_dist=initial / initial.sum(),
        gamma=gamma,
        observation=np.tile(np.arange(n_states), (n_agents, 1)),
        r_max=1.0,
        name=f"random-n{n_agents}-s{n_states}-seed{seed}",
    )


def save_game(game: MarkovGame, path: Union[str, Path]) -> Path:
    """保存为 JSON，浮点数按最短往返表示写出"""
    model = GameFile(
        name=game.name,
        n_agents=game.n_agents,
        action_counts=list(game.action_counts),
        gamma=game.gamma,
        r_max=game.r_max,
        initial_dist=game.initial_dist.tolist(),
        transition=game.transition.tolist(),
        reward=game.reward.tolist(),
        observation=game.observation.tolist(),
    )
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(model.model_dump(), indent=1), encoding="utf-8")
    except OSError as e:
        raise ResultIOError(f"无法写入博弈文件 {path}: {e}") from e
    return path


def load_game(path: Union[str, Path]) -> MarkovGame:
    """读取博弈文件"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"无法读取博弈文件 {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"博弈文件不是合法 JSON: {path}: {e}") from e
    try:
        model = GameFile.model_validate(payload)
    except ValidationError as e:
        raise InputError(f"博弈文件字段错误: {e}") from e
    if len(model.action_counts) != model.n_agents:
        raise InputError("action_counts 长度与 n_agents 不符")
    return MarkovGame(
        action_counts=tuple(model.action_counts),
        transition=np.array(model.transition, dtype=np.float64),
        reward=np.array(model.reward, dtype=np.float64),
        initial_dist=np.array(model.initial_dist, dtype=np.float64),
        gamma=model.gamma,
        observation=np.array(model.observation, dtype=np.int64),
        r_max=model.r_max,
        name=model.name,
    )
