"""Conventional routing policies used as comparison points for the learner.

A routing policy is any callable ``policy(t, state, flow) -> Path | None``
with a ``name`` attribute; None means the flow is rejected. The simulator and
the evaluation helpers treat the learned greedy policy, the shortest-path
baseline and the random strawman uniformly through this interface.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .netsim import Flow, LinkState
from .topology import Path, Topology, shortest_path


@runtime_checkable
class RoutingPolicy(Protocol):
    name: str

    def __call__(self, t: Topology, state: LinkState, flow: Flow) -> Path | None: ...


class _ShortestPathPolicy:
    """Static Dijkstra routing; ignores observed link state entirely."""

    def __init__(self, metric: str):
        if metric not in ("hops", "delay"):
            raise ValueError(f"unknown SPR metric {metric!r}")
        self.metric = metric
        self.name = f"spr-{metric}"
        self._cache: dict[tuple[int, int], Path | None] = {}
        self._cached_topology: Topology | None = None

    def __call__(self, t: Topology, state: LinkState, flow: Flow) -> Path | None:
        if t is not self._cached_topology:
            self._cache = {}
            self._cached_topology = t
        key = (flow.src, flow.dst)
        if key not in self._cache:
            self._cache[key] = shortest_path(t, flow.src, flow.dst, self.metric)
        return self._cache[key]


def spr_policy(metric: str = "hops") -> _ShortestPathPolicy:
    """Shortest path routing on hop count (default) or propagation delay."""
    return _ShortestPathPolicy(metric)


class _RandomWalkPolicy:
    """Loop-free uniform random walk, capped at |V|-1 moves. Sanity lower bound."""

    def __init__(self, seed: int):
        self._seed = seed
        self.rng = np.random.default_rng(seed)
        self.name = "random"

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def __call__(self, t: Topology, state: LinkState, flow: Flow) -> Path | None:
        if flow.src == flow.dst:
            return Path((flow.src,), ())
        current = flow.src
        visited = {flow.src}
        nodes = [flow.src]
        links: list[int] = []
        for _ in range(t.n_nodes - 1):
            choices = [
                lid for lid in t.out_links[current] if t.link(lid).dst not in visited
            ]
            if not choices:
                return None
            lid = choices[int(self.rng.integers(len(choices)))]
            current = t.link(lid).dst
            visited.add(current)
            nodes.append(current)
            links.append(lid)
            if current == flow.dst:
                return Path(tuple(nodes), tuple(links))
        return None


def random_policy(seed: int = 0) -> _RandomWalkPolicy:
    """Uniform random valid-walk policy; deterministic under a fixed seed."""
    return _RandomWalkPolicy(seed)
