"""
批次划分器工厂
"""

from ..exceptions import InputError
from .base_partitioner import BasePartitioner
from .bruteforce_partitioner import BruteForcePartitioner
from .greedy_partitioner import GreedyPartitioner
from .layered_partitioner import LayeredPartitioner


class PartitionerFactory:
    """批次划分器工厂"""

    @staticmethod
    def create_partitioner(name: str, **kwargs) -> BasePartitioner:
        """创建划分器实例"""
        if name == "bruteforce":
            return BruteForcePartitioner()
        elif name == "greedy":
            return GreedyPartitioner(**kwargs)
        elif name == "layered":
            return LayeredPartitioner(**kwargs)
        else:
            raise InputError(f"未知的划分器: {name}")
