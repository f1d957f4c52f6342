"""
贪心划分：反复取最大独立集
"""

from typing import FrozenSet, Iterable, List, Set, Tuple

from loguru import logger

from ..models import BatchSequence
from .base_partitioner import BasePartitioner
from .dag_layering import order_batches, undirected_neighbors

EXACT_LIMIT = 16


def _maximum_independent_set(
    candidates: FrozenSet[int], neighbors: List[Set[int]]
) -> Tuple[int, ...]:
    """精确最大独立集；同样大小时取字典序最小的集合"""
    if not candidates:
        return ()
    v = min(candidates)
    rest = candidates - {v}
    if not (neighbors[v] & candidates):
        return (v,) + _maximum_independent_set(rest, neighbors)
    with_v = (v,) + _maximum_independent_set(rest - neighbors[v], neighbors)
    without_v = _maximum_independent_set(rest, neighbors)
    return with_v if len(with_v) >= len(without_v) else without_v


def _min_degree_independent_set(
    candidates: Set[int], neighbors: List[Set[int]]
) -> Tuple[int, ...]:
    """近似：每次取剩余子图中度最小的顶点（同度取编号小者）"""
    remaining = set(candidates)
    chosen = []
    while remaining:
        v = min(remaining, key=lambda u: (len(neighbors[u] & remaining), u))
        chosen.append(v)
        remaining -= neighbors[v] | {v}
    return tuple(sorted(chosen))


class GreedyPartitioner(BasePartitioner):
    """最大独立集优先的贪心划分，结果总是合法，批次数不少于最优值"""

    def __init__(self, exact_limit: int = EXACT_LIMIT):
        super().__init__("greedy")
        self.exact_limit = exact_limit

    def partition(
        self, n_agents: int, edges: Iterable[Tuple[int, int]]
    ) -> BatchSequence:
        edges = list(edges)
        neighbors = undirected_neighbors(n_agents, edges)
        remaining = set(range(n_agents))
        batches = []
        while remaining:
            if len(remaining) <= self.exact_limit:
                batch = _maximum_independent_set(frozenset(remaining), neighbors)
            else:
                batch = _min_degree_independent_set(remaining, neighbors)
            batches.append(tuple(sorted(batch)))
            remaining -= set(batch)

        ordered = order_batches(batches, edges) if edges else None
        sequence = ordered or BatchSequence(tuple(batches))
        logger.debug(f"贪心划分: {len(sequence)} 个批次 {sequence.to_text()}")
        return sequence.validate(n_agents, edges if ordered is not None else None)
