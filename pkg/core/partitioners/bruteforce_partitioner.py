"""
穷举划分：最少批次数（无向视图的色数）
"""

from typing import Iterable, Iterator, List, Optional, Set, Tuple

from loguru import logger

from ..exceptions import SizeError
from ..models import BatchSequence
from .base_partitioner import BasePartitioner
from .dag_layering import order_batches, undirected_neighbors

MAX_AGENTS = 10
MAX_ORDER_CANDIDATES = 20000


def _colorings(neighbors: List[Set[int]], k: int) -> Iterator[List[int]]:
    """枚举至多 k 色的规范着色（颜色按首次出现编号），回溯搜索"""
    n = len(neighbors)
    colors = [-1] * n

    def assign(v: int, used: int) -> Iterator[List[int]]:
        if v == n:
            yield list(colors)
            return
        for c in range(min(k, used + 1)):
            if all(colors[u] != c for u in neighbors[v] if u < v):
                colors[v] = c
                yield from assign(v + 1, max(used, c + 1))
                colors[v] = -1

    yield from assign(0, 0)


def _batches_from(colors: List[int]) -> List[Tuple[int, ...]]:
    k = max(colors) + 1 if colors else 0
    return [tuple(v for v, c in enumerate(colors) if c == b) for b in range(k)]


class BruteForcePartitioner(BasePartitioner):
    """穷举集合划分，得到批次数最少的独立集划分（n ≤ 10）"""

    def __init__(self):
        super().__init__("bruteforce")

    def chromatic_number(self, n_agents: int, edges: Iterable[Tuple[int, int]]) -> int:
        neighbors = self._neighbors(n_agents, edges)
        for k in range(1, n_agents + 1):
            if next(_colorings(neighbors, k), None) is not None:
                return k
        return 0

    def _neighbors(self, n_agents: int, edges) -> List[Set[int]]:
        if n_agents > MAX_AGENTS:
            raise SizeError(f"穷举划分最多支持 {MAX_AGENTS} 个智能体，实际 {n_agents}")
        return undirected_neighbors(n_agents, edges)

    def partition(
        self, n_agents: int, edges: Iterable[Tuple[int, int]]
    ) -> BatchSequence:
        edges = list(edges)
        neighbors = self._neighbors(n_agents, edges)
        if n_agents == 0:
            return BatchSequence(())

        k = self.chromatic_number(n_agents, edges)
        first: Optional[List[Tuple[int, ...]]] = None
        for index, colors in enumerate(_colorings(neighbors, k)):
            batches = _batches_from(colors)
            if first is None:
                first = batches
            if not edges:
                break
            ordered = order_batches(batches, edges)
            if ordered is not None:
                logger.debug(f"穷举划分: {k} 个批次 {ordered.to_text()}")
                return ordered.validate(n_agents, edges)
            if index + 1 >= MAX_ORDER_CANDIDATES:
                break

        sequence = BatchSequence(tuple(sorted(first, key=min)))
        if edges:
            logger.warning(f"没有与依赖方向相容的 {k} 批次划分，按最小编号排序批次")
        return sequence.validate(n_agents)
