"""
有向图工具：环检测、破环得到 DAG、Kahn 分层
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from loguru import logger

from ..exceptions import InputError, InternalError
from ..models import BatchSequence, DependenceGraph

Edge = Tuple[int, int]


def _normalize_edges(edges: Iterable[Edge]) -> List[Edge]:
    result = sorted({(int(src), int(dst)) for src, dst in edges})
    for src, dst in result:
        if src == dst:
            raise InputError(f"依赖边不允许自环: {src + 1}")
    return result


def _successors(edges: Sequence[Edge]) -> Dict[int, List[int]]:
    successors: Dict[int, List[int]] = {}
    for src, dst in edges:
        successors.setdefault(src, []).append(dst)
    for targets in successors.values():
        targets.sort()
    return successors


def find_cycle(edges: Iterable[Edge]) -> Optional[List[Edge]]:
    """深度优先（节点与后继均按编号升序）找出第一个有向环，返回环上的边"""
    edges = _normalize_edges(edges)
    successors = _successors(edges)
    nodes = sorted({v for edge in edges for v in edge})
    color: Dict[int, int] = {v: 0 for v in nodes}  # 0 未访问, 1 栈中, 2 完成
    stack: List[int] = []

    def visit(node: int) -> Optional[List[Edge]]:
        color[node] = 1
        stack.append(node)
        for nxt in successors.get(node, []):
            if color[nxt] == 1:
                path = stack[stack.index(nxt) :] + [nxt]
                return list(zip(path[:-1], path[1:]))
            if color[nxt] == 0:
                found = visit(nxt)
                if found is not None:
                    return found
        stack.pop()
        color[node] = 2
        return None

    for node in nodes:
        if color[node] == 0:
            found = visit(node)
            if found is not None:
                return found
    return None


def is_acyclic(edges: Iterable[Edge]) -> bool:
    return find_cycle(edges) is None


def _weight_of(
    weights: Union[DependenceGraph, Mapping[Edge, float]], edge: Edge
) -> float:
    if isinstance(weights, DependenceGraph):
        return weights.edge_weight(edge)
    return float(weights.get(edge, 0.0))


def to_dag(
    edge_set: Iterable[Edge], weights: Union[DependenceGraph, Mapping[Edge, float]]
) -> List[Edge]:
    """反复删除某个环上权重最小的边（同权重按 (src, dst) 字典序取最小），直到无环"""
    remaining: Set[Edge] = set(_normalize_edges(edge_set))
    removed = 0
    while True:
        cycle = find_cycle(remaining)
        if cycle is None:
            break
        victim = min(cycle, key=lambda e: (_weight_of(weights, e), e))
        remaining.discard(victim)
        removed += 1
    if removed:
        logger.debug(f"破环删除了 {removed} 条边")
    return sorted(remaining)


def layer_topological(dag: Iterable[Edge], n_agents: int) -> BatchSequence:
    """Kahn 分层：批次 k 为最长入路径长度为 k-1 的全部智能体"""
    edges = _normalize_edges(dag)
    for src, dst in edges:
        if not (0 <= src < n_agents and 0 <= dst < n_agents):
            raise InputError(f"依赖边 {src + 1}→{dst + 1} 越界 (共 {n_agents} 个智能体)")
    successors = _successors(edges)
    in_degree = [0] * n_agents
    for _, dst in edges:
        in_degree[dst] += 1

    level = [0] * n_agents
    frontier = [v for v in range(n_agents) if in_degree[v] == 0]
    processed = 0
    while frontier:
        node = frontier.pop(0)
        processed += 1
        for nxt in successors.get(node, []):
            level[nxt] = max(level[nxt], level[node] + 1)
            in_degree[nxt] -= 1
            if in_degree[nxt] == 0:
                frontier.append(nxt)
    if processed != n_agents:
        raise InternalError("分层输入含有向环")

    n_layers = max(level) + 1 if n_agents else 0
    batches = tuple(
        tuple(v for v in range(n_agents) if level[v] == k) for k in range(n_layers)
    )
    return BatchSequence(batches).validate(n_agents, edges)


def undirected_neighbors(n_agents: int, edges: Iterable[Edge]) -> List[Set[int]]:
    """独立性只看无向视图：任一方向有边即不能同批"""
    neighbors: List[Set[int]] = [set() for _ in range(n_agents)]
    for src, dst in _normalize_edges(edges):
        if not (0 <= src < n_agents and 0 <= dst < n_agents):
            raise InputError(f"依赖边 {src + 1}→{dst + 1} 越界 (共 {n_agents} 个智能体)")
        neighbors[src].add(dst)
        neighbors[dst].add(src)
    return neighbors


def order_batches(
    batches: Sequence[Sequence[int]], edges: Iterable[Edge]
) -> Optional[BatchSequence]:
    """按商图的拓扑分层给批次排序；商图有环时返回 None"""
    batches = [tuple(sorted(b)) for b in batches]
    owner = {agent: k for k, batch in enumerate(batches) for agent in batch}
    quotient = {(owner[src], owner[dst]) for src, dst in _normalize_edges(edges)}
    if any(a == b for a, b in quotient) or not is_acyclic(quotient):
        return None
    layers = layer_topological(quotient, len(batches))
    ordered = []
    for layer in layers:
        ordered.extend(sorted((batches[k] for k in layer), key=min))
    return BatchSequence(tuple(ordered))
