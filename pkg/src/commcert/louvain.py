"""Deterministic Louvain community detection (Blondel et al. two-phase scheme).

Each level runs local moving until a full pass makes no improvement above
``tol``, then collapses communities into weighted super-nodes. The partition of
the last level is returned. Node visiting order is a fresh seeded permutation
on every pass, so the result is a pure function of ``(graph, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from commcert.graphio import Graph

TOL = 1e-7
_CHECK_EPS = 1e-9


@dataclass(frozen=True)
class CommunityAssignment:
    """Non-overlapping partition: node id -> community id in ``0..k-1``."""

    membership: Mapping[int, int]

    def __post_init__(self):
        ids = set(self.membership.values())
        if ids != set(range(len(ids))):
            raise ValueError("community ids must be contiguous from 0")

    @property
    def k(self) -> int:
        return len(set(self.membership.values()))

    def communities(self) -> list[frozenset[int]]:
        groups: list[set[int]] = [set() for _ in range(self.k)]
        for node, c in self.membership.items():
            groups[c].add(node)
        return [frozenset(g) for g in groups]

    @classmethod
    def from_labels(cls, labels: Mapping[int, int]) -> "CommunityAssignment":
        """Relabel arbitrary community labels to 0..k-1 by first appearance in node order."""
        remap: dict[int, int] = {}
        out = {}
        for node in sorted(labels):
            out[node] = remap.setdefault(labels[node], len(remap))
        return cls(out)


class _Level:
    """Weighted graph on nodes 0..n-1 with self-loops, as used inside Louvain."""

    __slots__ = ("n", "adj", "loops", "strength", "m")

    def __init__(self, adj: list[dict[int, float]], loops: list[float]):
        self.n = len(adj)
        self.adj = adj
        self.loops = loops
        self.strength = [sum(a.values()) + 2.0 * lp for a, lp in zip(adj, loops)]
        self.m = sum(self.strength) / 2.0

    def modularity(self, comm: list[int]) -> float:
        if self.m == 0:
            raise ValueError("modularity is undefined on an edgeless graph")
        inside: dict[int, float] = {}
        tot: dict[int, float] = {}
        for i in range(self.n):
            c = comm[i]
            tot[c] = tot.get(c, 0.0) + self.strength[i]
            w = self.loops[i]
            for j, wij in self.adj[i].items():
                if j > i and comm[j] == c:
                    w += wij
            inside[c] = inside.get(c, 0.0) + w
        m2 = 2.0 * self.m
        return sum(inside[c] / self.m - (tot[c] / m2) ** 2 for c in tot)

    def aggregate(self, comm: list[int]) -> tuple["_Level", list[int]]:
        """Collapse communities; returns the new level and old-node -> new-node map."""
        relabel: dict[int, int] = {}
        for c in comm:
            relabel.setdefault(c, len(relabel))
        k = len(relabel)
        adj: list[dict[int, float]] = [{} for _ in range(k)]
        loops = [0.0] * k
        for i in range(self.n):
            ci = relabel[comm[i]]
            loops[ci] += self.loops[i]
            for j, w in self.adj[i].items():
                if j < i:
                    continue
                cj = relabel[comm[j]]
                if ci == cj:
                    loops[ci] += w
                else:
                    adj[ci][cj] = adj[ci].get(cj, 0.0) + w
                    adj[cj][ci] = adj[cj].get(ci, 0.0) + w
        return _Level(adj, loops), [relabel[c] for c in comm]


def _local_moving(level: _Level, rng: np.random.Generator, tol: float, check: bool) -> tuple[list[int], bool]:
    n = level.n
    comm = list(range(n))
    tot = list(level.strength)
    k = level.strength
    adj = level.adj
    m2 = 2.0 * level.m
    q = level.modularity(comm)
    moved_any = False
    while True:
        moves = 0
        for i in rng.permutation(n).tolist():
            ki = k[i]
            if ki == 0.0:
                continue
            ci = comm[i]
            w_to: dict[int, float] = {}
            for j, w in adj[i].items():
                cj = comm[j]
                w_to[cj] = w_to.get(cj, 0.0) + w
            tot[ci] -= ki
            scale = ki / m2
            best = ci
            best_gain = w_to.get(ci, 0.0) - tot[ci] * scale
            for c in sorted(w_to):
                gain = w_to[c] - tot[c] * scale
                if gain > best_gain:
                    best, best_gain = c, gain
            tot[best] += ki
            if best != ci:
                comm[i] = best
                moves += 1
        if moves == 0:
            break
        moved_any = True
        new_q = level.modularity(comm)
        if check and new_q < q - _CHECK_EPS:
            raise AssertionError(f"modularity decreased during local moving: {q} -> {new_q}")
        gained = new_q - q
        q = new_q
        if gained < tol:
            break
    return comm, moved_any


def _level_from_graph(graph: Graph) -> tuple[_Level, list[int]]:
    order, idx = graph.index()
    adj: list[dict[int, float]] = [{} for _ in order]
    for u, v in graph.edges:
        a, b = idx[u], idx[v]
        adj[a][b] = 1.0
        adj[b][a] = 1.0
    return _Level(adj, [0.0] * len(order)), order


def louvain_detect(graph: Graph, seed: int = 0, tol: float = TOL, check: bool = False) -> CommunityAssignment:
    """Run Louvain and return the final (highest-modularity) level.

    With ``check=True`` the modularity invariants are asserted after every
    local-moving pass and every aggregation.
    """
    if graph.num_nodes == 0:
        raise ValueError("graph has no nodes")
    level, order = _level_from_graph(graph)
    n0 = level.n
    if level.m == 0:
        return CommunityAssignment({u: i for i, u in enumerate(order)})
    base = level
    rng = np.random.default_rng(seed)
    node_comm = list(range(n0))
    q = level.modularity(list(range(level.n)))
    while True:
        comm, moved = _local_moving(level, rng, tol, check)
        if not moved:
            break
        level_q = level.modularity(comm)
        level, mapping = level.aggregate(comm)
        node_comm = [mapping[c] for c in node_comm]
        agg_q = level.modularity(list(range(level.n)))
        if check:
            flat_q = base.modularity(node_comm)
            if abs(agg_q - flat_q) > _CHECK_EPS or abs(agg_q - level_q) > _CHECK_EPS:
                raise AssertionError(f"aggregation changed modularity: {level_q} / {agg_q} / {flat_q}")
            if agg_q < q - _CHECK_EPS:
                raise AssertionError(f"modularity decreased across levels: {q} -> {agg_q}")
        gained = agg_q - q
        q = agg_q
        if gained < tol:
            break
    return CommunityAssignment.from_labels({order[i]: node_comm[i] for i in range(n0)})


def modularity(graph: Graph, assignment: CommunityAssignment) -> float:
    """Newman modularity ``sum_c m_c/m - (d_c/2m)^2`` of a partition."""
    if graph.num_edges == 0:
        raise ValueError("modularity is undefined on an edgeless graph")
    missing = graph.nodes - set(assignment.membership)
    if missing:
        raise ValueError(f"assignment does not cover nodes {sorted(missing)[:5]}")
    level, order = _level_from_graph(graph)
    return level.modularity([assignment.membership[u] for u in order])


def same_community(assignment: CommunityAssignment, victims: Iterable[int]) -> int:
    """1 if every victim shares one community, else 0 (unknown victims give 0)."""
    victims = set(victims)
    if len(victims) < 2:
        raise ValueError("victim set needs at least two nodes")
    labels = set()
    for v in victims:
        c = assignment.membership.get(v)
        if c is None:
            return 0
        labels.add(c)
    return int(len(labels) == 1)
