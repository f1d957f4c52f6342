"""
批次划分模块
"""

from .base_partitioner import BasePartitioner
from .bruteforce_partitioner import BruteForcePartitioner
from .dag_layering import find_cycle, is_acyclic, layer_topological, to_dag
from .factory import PartitionerFactory
from .greedy_partitioner import GreedyPartitioner
from .layered_partitioner import LayeredPartitioner

__all__ = [
    "BasePartitioner",
    "BruteForcePartitioner",
    "GreedyPartitioner",
    "LayeredPartitioner",
    "PartitionerFactory",
    "find_cycle",
    "is_acyclic",
    "layer_topological",
    "to_dag",
]
