"""
批次划分器测试
"""

import numpy as np
import pytest

from core.exceptions import InputError, InternalError, SizeError
from core.partitioners import (
    BruteForcePartitioner,
    GreedyPartitioner,
    LayeredPartitioner,
    PartitionerFactory,
    find_cycle,
    is_acyclic,
    layer_topological,
    to_dag,
)

CHAIN = [(0, 1), (1, 2)]
DIAMOND = [(0, 1), (0, 2), (1, 3), (2, 3)]


def test_layered_chain():
    sequence = LayeredPartitioner().partition(3, CHAIN)
    assert sequence.to_text() == "[{1},{2},{3}]"


def test_layered_diamond():
    sequence = PartitionerFactory.create_partitioner("layered").partition(4, DIAMOND)
    assert sequence.to_text() == "[{1},{2,3},{4}]"


@pytest.mark.parametrize("name", ["bruteforce", "greedy", "layered"])
def test_edgeless_graph_is_one_batch(name):
    sequence = PartitionerFactory.create_partitioner(name).partition(3, [])
    assert sequence.to_text() == "[{1,2,3}]"


def test_bruteforce_uses_chromatic_number():
    """链的 2 色划分与依赖方向不相容时退回按最小编号排序"""
    partitioner = BruteForcePartitioner()
    sequence = partitioner.partition(3, CHAIN)
    assert len(sequence) == 2
    assert sequence.to_text() == "[{1,3},{2}]"
    assert len(partitioner.partition(4, DIAMOND)) == 2
    assert partitioner.chromatic_number(4, DIAMOND) == 2


def test_bruteforce_size_limit():
    with pytest.raises(SizeError):
        BruteForcePartitioner().partition(11, [])


def test_layered_breaks_lowest_weight_edge():
    weights = {(0, 1): 0.9, (1, 2): 0.8, (2, 0): 0.1}
    sequence = LayeredPartitioner(weights).partition(3, list(weights))
    assert sequence.to_text() == "[{1},{2},{3}]"


def test_to_dag_breaks_ties_by_edge_order():
    assert to_dag([(0, 1), (1, 0)], {(0, 1): 1.0, (1, 0): 1.0}) == [(1, 0)]


def test_cycle_helpers():
    assert find_cycle([(0, 1), (1, 2), (2, 0)]) == [(0, 1), (1, 2), (2, 0)]
    assert is_acyclic(DIAMOND)
    with pytest.raises(InputError):
        find_cycle([(1, 1)])


def test_layer_topological_rejects_cycle():
    with pytest.raises(InternalError):
        layer_topological([(0, 1), (1, 0)], 2)


def test_layer_topological_rejects_out_of_range_edge():
    with pytest.raises(InputError):
        layer_topological([(0, 3)], 2)


def test_unknown_partitioner():
    with pytest.raises(InputError):
        PartitionerFactory.create_partitioner("spectral")


@pytest.mark.parametrize("seed", range(5))
def test_greedy_is_valid_and_never_beats_optimum(seed):
    rng = np.random.default_rng(seed)
    n = 6
    edges = [(j, i) for j in range(n) for i in range(j + 1, n) if rng.random() < 0.4]
    sequence = GreedyPartitioner().partition(n, edges)
    sequence.validate(n)
    for batch in sequence:
        assert not any(src in batch and dst in batch for src, dst in edges)
    assert len(sequence) >= BruteForcePartitioner().chromatic_number(n, edges)
