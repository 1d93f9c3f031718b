"""Bernoulli flip noise on structure vectors, base functions, and Monte-Carlo counting.

Every noise sample ``j`` is drawn from its own counter-based Philox stream keyed
by ``(seed, j)``, so counts do not depend on evaluation order or worker count
and the first ``N'`` samples of an ``N``-sample run are exactly an ``N'``-sample
run.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Protocol, Sequence, Union

import numpy as np

from commcert.graphio import Graph, PairSpace, StructureVector
from commcert.louvain import CommunityAssignment, louvain_detect, same_community

BetaLike = Union[float, Fraction, str]

_MAX_EXACT_DENOMINATOR = 1000


@dataclass(frozen=True)
class NoiseSpec:
    """Probability ``beta`` that a bit keeps its value under noise."""

    beta: BetaLike

    def __post_init__(self):
        b = self.beta
        if isinstance(b, str):
            b = Fraction(b)
            object.__setattr__(self, "beta", b)
        if not 0.5 < b < 1:
            raise ValueError(f"beta must lie strictly between 0.5 and 1, got {self.beta}")

    @property
    def value(self) -> float:
        return float(self.beta)

    @property
    def exact(self) -> Fraction | None:
        """``beta`` as a small-denominator rational, or None when it has none."""
        b = self.beta
        if isinstance(b, Fraction):
            return b if b.denominator <= _MAX_EXACT_DENOMINATOR else None
        if isinstance(b, int):
            return Fraction(b)
        approx = Fraction(b).limit_denominator(_MAX_EXACT_DENOMINATOR)
        return approx if float(approx) == b else None

    @property
    def flip_prob(self) -> float:
        return 1.0 - float(self.beta)


class BaseFunction(Protocol):
    n: int

    def __call__(self, bits: np.ndarray) -> int: ...


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent RNG for noise sample ``index`` of the run keyed by ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and sample index must be non-negative")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, index, 0]))


def sample_noise(n: int, spec: NoiseSpec, stream: np.random.Generator) -> np.ndarray:
    """Noise bits, each independently 1 with probability ``1 - beta``."""
    if n < 1:
        raise ValueError("vector length must be positive")
    return (stream.random(n) < spec.flip_prob).astype(np.uint8)


def _bits(x) -> np.ndarray:
    return x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)


class TruthTableFunction:
    """Arbitrary function on ``{0,1}^n`` given as a table indexed by ``sum(bit_i << i)``."""

    def __init__(self, table: Sequence[int]):
        table = np.asarray(table, dtype=np.uint8)
        n = int(table.shape[0]).bit_length() - 1
        if table.ndim != 1 or table.shape[0] != 1 << n:
            raise ValueError("truth table length must be a power of two")
        if np.any(table > 1):
            raise ValueError("truth table must be binary")
        self.table = table
        self.n = n
        self._weights = (1 << np.arange(n, dtype=np.int64)) if n else np.zeros(0, dtype=np.int64)

    def index_of(self, bits: np.ndarray) -> int:
        return int(np.dot(np.asarray(bits, dtype=np.int64), self._weights))

    def __call__(self, bits: np.ndarray) -> int:
        return int(self.table[self.index_of(bits)])

    def batch(self, rows: np.ndarray) -> np.ndarray:
        return self.table[np.asarray(rows, dtype=np.int64) @ self._weights]


class CommunityFunction:
    """``1`` iff the detector groups every victim into one community.

    Only pairs inside ``space`` follow the input vector; all other edges of
    ``graph`` are kept as they are. The detector seed is fixed, which makes the
    function deterministic in its input.
    """

    def __init__(
        self,
        graph: Graph,
        space: PairSpace,
        victims: Iterable[int],
        detector_seed: int = 0,
        detector: Callable[[Graph, int], CommunityAssignment] = louvain_detect,
    ):
        self.victims = frozenset(victims)
        if len(self.victims) < 2:
            raise ValueError("victim set needs at least two nodes")
        missing = space.nodes - graph.nodes
        if missing:
            raise ValueError(f"pair space references nodes absent from the graph: {sorted(missing)[:5]}")
        self.graph = graph
        self.space = space
        self.n = space.n
        self.detector_seed = detector_seed
        self.detector = detector
        self._fixed_edges = graph.edges - frozenset(space.pairs)

    def realize(self, bits: np.ndarray) -> Graph:
        pairs = self.space.pairs
        edges = self._fixed_edges | frozenset(pairs[i] for i in np.flatnonzero(bits))
        # endpoints are known graph nodes, skip re-validation
        g = object.__new__(Graph)
        object.__setattr__(g, "nodes", self.graph.nodes)
        object.__setattr__(g, "edges", edges)
        return g

    def detect(self, bits: np.ndarray) -> CommunityAssignment:
        return self.detector(self.realize(bits), self.detector_seed)

    def __call__(self, bits: np.ndarray) -> int:
        bits = _bits(bits)
        if bits.shape[0] != self.n:
            raise ValueError("input vector does not match the function's pair space")
        return same_community(self.detect(bits), self.victims)


def evaluate_f(f: BaseFunction, x) -> int:
    return int(f(_bits(x)))


@dataclass(frozen=True)
class SampleCounts:
    m0: int
    m1: int
    N: int
    seed: int

    def __post_init__(self):
        if self.N < 1 or self.m0 < 0 or self.m1 < 0 or self.m0 + self.m1 != self.N:
            raise ValueError(f"inconsistent counts m0={self.m0} m1={self.m1} N={self.N}")

    def __getitem__(self, y: int) -> int:
        return (self.m0, self.m1)[y]

    @classmethod
    def from_outputs(cls, outputs: np.ndarray, seed: int) -> "SampleCounts":
        m1 = int(np.count_nonzero(outputs))
        return cls(len(outputs) - m1, m1, len(outputs), seed)


def _outputs_chunk(f, beta, x_bits, seed, start, stop) -> np.ndarray:
    spec = NoiseSpec(beta)
    out = np.empty(stop - start, dtype=np.uint8)
    n = x_bits.shape[0]
    for j in range(start, stop):
        eps = sample_noise(n, spec, sample_stream(seed, j))
        out[j - start] = f(x_bits ^ eps)
    return out


def sample_outputs(f: BaseFunction, spec: NoiseSpec, x, N: int, seed: int, workers: int = 1) -> np.ndarray:
    """``f(x XOR eps_j)`` for ``j = 0..N-1``, in sample order."""
    if N < 1:
        raise ValueError("need at least one sample")
    x_bits = _bits(x)
    if workers <= 1 or N < 2 * workers:
        return _outputs_chunk(f, spec.beta, x_bits, seed, 0, N)
    bounds = np.linspace(0, N, workers + 1, dtype=int)
    with ProcessPoolExecutor(workers) as pool:
        parts = pool.map(
            _outputs_chunk,
            [f] * workers, [spec.beta] * workers, [x_bits] * workers, [seed] * workers,
            bounds[:-1].tolist(), bounds[1:].tolist(),
        )
        return np.concatenate(list(parts))


def sample_under_noise(f: BaseFunction, spec: NoiseSpec, x, N: int, seed: int, workers: int = 1) -> SampleCounts:
    """Monte-Carlo frequencies ``(m0, m1)`` of ``f`` under ``N`` noise draws."""
    return SampleCounts.from_outputs(sample_outputs(f, spec, x, N, seed, workers), seed)


def smoothed_output(counts: SampleCounts) -> int:
    """Plug-in majority vote; ties go to 0."""
    return int(counts.m1 > counts.m0)
