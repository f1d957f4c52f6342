"""
分层划分：先破环，再按 Kahn 最长路径分层
"""

from typing import Dict, Iterable, Optional, Tuple

from ..models import BatchSequence
from .base_partitioner import BasePartitioner
from .dag_layering import layer_topological, to_dag


class LayeredPartitioner(BasePartitioner):
    """拓扑分层划分，批次顺序总与 DAG 相容"""

    def __init__(self, weights: Optional[Dict[Tuple[int, int], float]] = None):
        super().__init__("layered")
        self.weights = weights

    def partition(
        self, n_agents: int, edges: Iterable[Tuple[int, int]]
    ) -> BatchSequence:
        edges = list(edges)
        weights = self.weights if self.weights is not None else {e: 1.0 for e in edges}
        return layer_topological(to_dag(edges, weights), n_agents)
