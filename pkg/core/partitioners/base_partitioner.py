"""
批次划分器抽象类
"""

from abc import ABC, abstractmethod
from typing import Iterable, Tuple

from ..models import BatchSequence


class BasePartitioner(ABC):
    """批次划分器基类：把依赖图划分为有序批次序列"""

    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def partition(
        self, n_agents: int, edges: Iterable[Tuple[int, int]]
    ) -> BatchSequence:
        """edges 为 (j, i) 依赖边，编号从 0 开始"""
        pass

    def get_name(self) -> str:
        """获取划分器名称"""
        return self.name
