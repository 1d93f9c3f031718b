"""Graph model, SNAP-format readers and the graph <-> binary structure vector mapping.

The perturbable domain is a :class:`PairSpace`: an ordered list of node pairs.
A graph restricted to that space is a :class:`StructureVector` whose bit ``i``
says whether pair ``i`` is an edge. Noise and adversarial perturbations are
both structure vectors over the same space and act on a graph by XOR.
"""

from __future__ import annotations

import gzip
import io
import itertools
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO, Union

import numpy as np

logger = logging.getLogger(__name__)

Source = Union[str, os.PathLike, TextIO, Iterable[str]]


class ParseError(ValueError):
    """Malformed line in an edge list or community file."""

    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.rstrip()!r}")
        self.lineno = lineno


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph over integer node ids.

    ``edges`` holds unordered pairs normalised to ``(min, max)``.
    """

    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for u, v in self.edges:
            if u >= v:
                raise ValueError(f"edge ({u}, {v}) is not normalised or is a self-loop")
            if u not in self.nodes or v not in self.nodes:
                raise ValueError(f"edge ({u}, {v}) references a missing node")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], nodes: Iterable[int] = ()) -> "Graph":
        norm = set()
        node_set = set(nodes)
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            norm.add(_edge(u, v))
            node_set.update((u, v))
        return cls(frozenset(node_set), frozenset(norm))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return _edge(u, v) in self.edges

    def with_nodes(self, extra: Iterable[int]) -> "Graph":
        """Return the same graph with ``extra`` added as (possibly isolated) nodes."""
        return Graph(self.nodes | frozenset(extra), self.edges)

    def index(self) -> tuple[list[int], dict[int, int]]:
        """Dense 0..|V|-1 relabelling in ascending id order."""
        order = sorted(self.nodes)
        return order, {u: i for i, u in enumerate(order)}


@dataclass
class ParseStats:
    lines: int = 0
    edge_lines: int = 0
    self_loops: int = 0
    duplicates: int = 0


def _open_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if path.endswith(".gz"):
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                yield from fh
        else:
            with open(path, "r", encoding="utf-8") as fh:
                yield from fh
    else:
        yield from source


def parse_edge_list(source: Source, stats: ParseStats | None = None) -> Graph:
    """Read a SNAP edge list (``u v`` per line, ``#`` comments).

    Parallel and reversed edges collapse to one undirected edge and self-loops
    are dropped; both are tallied in ``stats`` when given. Raw text is accepted
    through :class:`io.StringIO` or any iterable of lines.
    """
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    stats = stats if stats is not None else ParseStats()
    nodes: set[int] = set()
    edges: set[tuple[int, int]] = set()
    for lineno, line in enumerate(_open_lines(source), start=1):
        stats.lines += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise ParseError(lineno, line, "expected two node ids")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(lineno, line, "non-integer node id") from None
        if u < 0 or v < 0:
            raise ParseError(lineno, line, "negative node id")
        stats.edge_lines += 1
        nodes.update((u, v))
        if u == v:
            stats.self_loops += 1
            continue
        e = _edge(u, v)
        if e in edges:
            stats.duplicates += 1
        edges.add(e)
    if stats.self_loops:
        logger.warning("dropped %d self-loops", stats.self_loops)
    return Graph(frozenset(nodes), frozenset(edges))


@dataclass(frozen=True)
class GroundTruth:
    """Ground-truth communities, possibly overlapping, in file order."""

    communities: tuple[frozenset[int], ...]

    def __post_init__(self):
        for i, c in enumerate(self.communities):
            if not c:
                raise ValueError(f"community {i} is empty")

    def __len__(self) -> int:
        return len(self.communities)

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset().union(*self.communities) if self.communities else frozenset()


def _parse_ints(lineno: int, line: str, parts: Sequence[str]) -> list[int]:
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ParseError(lineno, line, "non-integer node id") from None


def parse_communities(source: Source) -> GroundTruth:
    """One community per line, whitespace separated ids; blank lines skipped."""
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    out = []
    for lineno, line in enumerate(_open_lines(source), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        out.append(frozenset(_parse_ints(lineno, line, parts)))
    return GroundTruth(tuple(out))


def parse_node_labels(source: Source) -> GroundTruth:
    """``node label`` per line (the Email department file layout).

    Communities are ordered by ascending label.
    """
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    groups: dict[int, set[int]] = {}
    for lineno, line in enumerate(_open_lines(source), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 2:
            raise ParseError(lineno, line, "expected 'node label'")
        node, label = _parse_ints(lineno, line, parts)
        groups.setdefault(label, set()).add(node)
    return GroundTruth(tuple(frozenset(groups[k]) for k in sorted(groups)))


@dataclass(frozen=True)
class PairSpace:
    """Ordered node pairs; position ``i`` is bit ``i`` of a structure vector."""

    pairs: tuple[tuple[int, int], ...]
    index: dict = field(compare=False, repr=False, hash=False)

    def __init__(self, pairs: Iterable[tuple[int, int]]):
        pairs = tuple(_edge(u, v) for u, v in pairs)
        index = {p: i for i, p in enumerate(pairs)}
        if len(index) != len(pairs):
            raise ValueError("pair space contains duplicate pairs")
        if any(u == v for u, v in pairs):
            raise ValueError("pair space contains a self-pair")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "index", index)

    @property
    def n(self) -> int:
        return len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(itertools.chain.from_iterable(self.pairs))


def build_pair_space(nodes: Sequence[int]) -> PairSpace:
    """All unordered pairs of ``nodes`` in lexicographic ``(min, max)`` order."""
    nodes = list(nodes)
    if len(set(nodes)) != len(nodes):
        raise ValueError("duplicate node id in pair space")
    if len(nodes) < 2:
        raise ValueError("a pair space needs at least two nodes")
    return PairSpace(itertools.combinations(sorted(nodes), 2))


@dataclass(frozen=True, eq=False)
class StructureVector:
    """Binary vector over a :class:`PairSpace` (uint8, read-only)."""

    bits: np.ndarray
    space: PairSpace

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.shape[0] != self.space.n:
            raise ValueError(f"vector length {bits.shape} does not match space size {self.space.n}")
        if np.any(bits > 1):
            raise ValueError("structure vector must be binary")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __xor__(self, other: "StructureVector") -> "StructureVector":
        if other.space != self.space:
            raise ValueError("structure vectors live in different pair spaces")
        return StructureVector(self.bits ^ other.bits, self.space)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StructureVector):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.bits, other.bits)

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def weight(self) -> int:
        """Hamming weight (number of set bits)."""
        return int(self.bits.sum())

    @classmethod
    def zeros(cls, space: PairSpace) -> "StructureVector":
        return cls(np.zeros(space.n, dtype=np.uint8), space)


def structure_vector(graph: Graph, space: PairSpace) -> StructureVector:
    missing = space.nodes - graph.nodes
    if missing:
        raise ValueError(f"pair space references nodes absent from the graph: {sorted(missing)[:5]}")
    bits = np.fromiter((p in graph.edges for p in space.pairs), dtype=np.uint8, count=space.n)
    return StructureVector(bits, space)


def apply_flips(base: Graph, space: PairSpace, mask: StructureVector) -> Graph:
    """Toggle the edge status of every pair whose mask bit is set."""
    if mask.space != space:
        raise ValueError("mask is defined over a different pair space")
    missing = space.nodes - base.nodes
    if missing:
        raise ValueError(f"pair space references nodes absent from the graph: {sorted(missing)[:5]}")
    flipped = {space.pairs[i] for i in np.flatnonzero(mask.bits)}
    return Graph(base.nodes, base.edges ^ frozenset(flipped))
