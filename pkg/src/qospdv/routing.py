"""Static shortest-path routing (OSPF abstracted as one SPF run at t=0)."""

from __future__ import annotations

import heapq
import math
from typing import Mapping, Optional

from .netmodel import Topology


class Disconnected(ValueError):
    pass


ForwardingTable = dict[str, str]  # destination node -> next-hop node


def _distances(adj: dict[str, list[tuple[str, float]]], source: str) -> dict[str, float]:
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist[n]:
            continue
        for m, c in adj[n]:
            nd = d + c
            if nd < dist.get(m, math.inf):
                dist[m] = nd
                heapq.heappush(heap, (nd, m))
    return dist


def compute_spf(topology: Topology,
                costs: Optional[Mapping[tuple[str, str], float]] = None) -> dict[str, ForwardingTable]:
    """One next hop per (node, destination); no ECMP.

    Equal-cost candidates are broken by the lexicographically smallest
    next-hop id. ``costs`` overrides link costs, keyed by either endpoint order.
    """
    adj: dict[str, list[tuple[str, float]]] = {n: [] for n in topology.nodes}
    for link in topology.links:
        c = link.cost
        if costs is not None:
            c = costs.get((link.a, link.b), costs.get((link.b, link.a), c))
        if c <= 0:
            raise ValueError(f"link {link.name}: cost must be positive")
        adj[link.a].append((link.b, c))
        adj[link.b].append((link.a, c))

    # undirected and symmetric, so distance-to-dst equals distance-from-dst
    dist_to = {dst: _distances(adj, dst) for dst in topology.nodes}
    tables: dict[str, ForwardingTable] = {n: {} for n in topology.nodes}
    for dst, dist in dist_to.items():
        missing = set(topology.nodes) - set(dist)
        if missing:
            raise Disconnected(f"{sorted(missing)} cannot reach {dst}")
        for node in topology.nodes:
            if node == dst:
                continue
            best = None
            for m, c in adj[node]:
                if math.isclose(c + dist[m], dist[node], rel_tol=1e-12, abs_tol=1e-12):
                    if best is None or m < best:
                        best = m
            tables[node][dst] = best
    return tables


def route_path(tables: dict[str, ForwardingTable], src: str, dst: str) -> list[str]:
    path = [src]
    while path[-1] != dst:
        path.append(tables[path[-1]][dst])
        if len(path) > len(tables) + 1:
            raise RuntimeError(f"routing loop from {src} to {dst}")
    return path
