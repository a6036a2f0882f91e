"""Directed-graph helpers over hashable nodes: Tarjan SCCs, bottom SCCs, reachability."""

from collections import deque
from collections.abc import Hashable, Iterable, Mapping
from typing import TypeAlias

Graph: TypeAlias = Mapping[Hashable, Iterable[Hashable]]
Component: TypeAlias = frozenset


def strongly_connected_components(graph: Graph) -> list[Component]:
    """
    Tarjan's algorithm, iterative so that long chains do not hit the
    recursion limit. Components come out in reverse topological order:
    every component is emitted after all components reachable from it.
    Nodes that only occur as successors are treated as sinks.
    """
    index: dict = {}
    lowlink: dict = {}
    on_stack: set = set()
    stack: list = []
    components: list[Component] = []
    counter = 0

    nodes = list(graph)
    seen_nodes = set(nodes)
    for succs in list(graph.values()):
        for s in succs:
            if s not in seen_nodes:
                seen_nodes.add(s)
                nodes.append(s)

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(graph.get(root, ())))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = lowlink[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(graph.get(succ, ()))))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                scc = set()
                while True:
                    x = stack.pop()
                    on_stack.discard(x)
                    scc.add(x)
                    if x == node:
                        break
                components.append(frozenset(scc))
    return components


def bottom_components(graph: Graph) -> list[Component]:
    """SCCs without edges leaving them."""
    result = []
    for comp in strongly_connected_components(graph):
        if all(s in comp for n in comp for s in graph.get(n, ())):
            result.append(comp)
    return result


def backward_reachable(graph: Graph, targets: Iterable[Hashable]) -> set:
    reverse: dict = {}
    for n, succs in graph.items():
        for s in succs:
            reverse.setdefault(s, []).append(n)
    seen = set(targets)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for pred in reverse.get(n, ()):
            if pred not in seen:
                seen.add(pred)
                queue.append(pred)
    return seen
