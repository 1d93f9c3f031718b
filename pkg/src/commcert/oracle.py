"""Brute-force ground truth over the whole hypercube, for small ``n``.

Vectors are enumerated as integers ``z`` with bit ``i`` equal to ``(z >> i) & 1``,
the same indexing as :class:`commcert.smoothing.TruthTableFunction`. All
probabilities are integer numerators over the common denominator ``q**n`` for
``beta = p/q``, so every comparison is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from commcert.certify import RegionEntry, RegionTable, certified_perturbation_size, constraint_value, region_table
from commcert.graphio import StructureVector
from commcert.smoothing import NoiseSpec, TruthTableFunction

MAX_N = 20


def _rational_beta(beta: NoiseSpec) -> tuple[int, int]:
    frac = beta.exact
    if frac is None:
        raise ValueError(f"the oracle needs a rational beta, got {beta.beta}")
    return frac.numerator, frac.denominator


def _check_n(n: int, cap: int = MAX_N) -> None:
    if n > cap:
        raise ValueError(f"enumeration is capped at n={cap}, got n={n}")


def bits_to_int(bits) -> int:
    bits = bits.bits if isinstance(bits, StructureVector) else bits
    return sum(int(b) << i for i, b in enumerate(bits))


def int_to_bits(z: int, n: int) -> np.ndarray:
    return np.array([(z >> i) & 1 for i in range(n)], dtype=np.uint8)


def _popcounts(n: int) -> np.ndarray:
    z = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros_like(z)
    for i in range(n):
        counts += (z >> i) & 1
    return counts


def _dtype_for(bound: int):
    return np.int64 if bound < 2**62 else object


@dataclass(frozen=True)
class ExactDistribution:
    """Probability of every ``z`` in ``{0,1}^n`` as ``num[z] / den``."""

    num: np.ndarray
    den: int
    n: int

    def __post_init__(self):
        if int(sum(int(v) for v in self.num)) != self.den:
            raise ValueError("probabilities do not sum to one")

    def prob(self, mask: np.ndarray) -> Fraction:
        return Fraction(int(self.num[np.asarray(mask, dtype=bool)].sum()), self.den)

    def __getitem__(self, z: int) -> Fraction:
        return Fraction(int(self.num[z]), self.den)


def noise_distribution(center, beta: NoiseSpec) -> ExactDistribution:
    """Law of ``center ^ eps``: mass ``beta**(n-d) (1-beta)**d`` at Hamming distance ``d``."""
    bits = center.bits if isinstance(center, StructureVector) else np.asarray(center, dtype=np.uint8)
    n = len(bits)
    _check_n(n)
    p, q = _rational_beta(beta)
    weights = [p ** (n - d) * (q - p) ** d for d in range(n + 1)]
    dist = _popcounts(n)[np.arange(1 << n) ^ bits_to_int(bits)]
    dtype = _dtype_for(q**n)
    num = np.array([weights[d] for d in dist.tolist()], dtype=dtype)
    return ExactDistribution(num, q**n, n)


def _table_of(f, n: int) -> np.ndarray:
    if isinstance(f, TruthTableFunction):
        if f.n != n:
            raise ValueError("truth table size does not match the input")
        return f.table
    return np.array([int(f(int_to_bits(z, n))) for z in range(1 << n)], dtype=np.uint8)


def exact_output_prob(f, x, beta: NoiseSpec) -> tuple[Fraction, Fraction]:
    """Exact ``(Pr(f(x^eps)=0), Pr(f(x^eps)=1))`` by enumerating every noise outcome."""
    bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    n = len(bits)
    _check_n(n)
    dist = noise_distribution(bits, beta)
    table = _table_of(f, n)
    p1 = dist.prob(table == 1)
    return 1 - p1, p1


def smoothed_prob_all(f, beta: NoiseSpec, n: Optional[int] = None) -> tuple[np.ndarray, int]:
    """Numerators of ``Pr(f(w ^ eps) = 1)`` for every centre ``w`` at once.

    The noise kernel factorises over bits, so the table is smoothed one axis at
    a time. Returns ``(num, den)`` with ``den = q**n``.
    """
    if n is None:
        n = f.n
    _check_n(n)
    p, q = _rational_beta(beta)
    t = _table_of(f, n).astype(_dtype_for(q**n))
    # axis i of the reshaped tensor is bit i (C order puts bit n-1 first)
    t = t.reshape((2,) * n) if n else t
    for axis in range(n):
        t = p * t + (q - p) * np.flip(t, axis=axis)
    return t.reshape(-1), q**n


def _ratio_levels(beta: NoiseSpec, n: int) -> dict[Fraction, int]:
    p, q = _rational_beta(beta)
    h = Fraction(p, q - p)
    return {h**e: e for e in range(-n, n + 1)}


def _classify(x_bits, delta_bits, beta: NoiseSpec):
    dx = noise_distribution(x_bits, beta)
    y_center = np.asarray(x_bits, dtype=np.uint8) ^ np.asarray(delta_bits, dtype=np.uint8)
    dy = noise_distribution(y_center, beta)
    levels = _ratio_levels(beta, dx.n)
    region = np.empty(1 << dx.n, dtype=np.int64)
    for z in range(1 << dx.n):
        region[z] = levels[Fraction(int(dx.num[z]), int(dy.num[z]))]
    return dx, dy, region


def exact_region_probs(x, delta, beta: NoiseSpec) -> RegionTable:
    """Region masses from explicit likelihood ratios of every ``z``."""
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    d_bits = delta.bits if isinstance(delta, StructureVector) else np.asarray(delta, dtype=np.uint8)
    n = len(x_bits)
    if len(d_bits) != n:
        raise ValueError("x and delta differ in length")
    _check_n(n)
    dx, dy, region = _classify(x_bits, d_bits, beta)
    sx = {e: 0 for e in range(-n, n + 1)}
    sy = dict(sx)
    for z in range(1 << n):
        e = int(region[z])
        sx[e] += int(dx.num[z])
        sy[e] += int(dy.num[z])
    entries = tuple(
        RegionEntry(e, Fraction(sx[e], dx.den), Fraction(sy[e], dy.den), not (sx[e] or sy[e]))
        for e in sorted(sx, reverse=True)
    )
    return RegionTable(n, int(d_bits.sum()), beta, entries, exact=True)


def canonical_order(x, delta, beta: NoiseSpec) -> list[int]:
    """All ``z`` ordered by density ratio (largest first), then distance from x, then lexicographically.

    Within a level set every vector at the same distance from ``x`` carries the
    same mass, so prefix masses of this order depend only on ``(n, |delta|, beta)``.
    """
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    d_bits = delta.bits if isinstance(delta, StructureVector) else np.asarray(delta, dtype=np.uint8)
    n = len(x_bits)
    _check_n(n)
    _, _, region = _classify(x_bits, d_bits, beta)
    dist = _popcounts(n)[np.arange(1 << n) ^ bits_to_int(x_bits)]

    def key(z: int):
        return (-int(region[z]), int(dist[z]), tuple(int_to_bits(z, n)))

    return sorted(range(1 << n), key=key)


def achievable_masses(x, delta, beta: NoiseSpec) -> list[Fraction]:
    """X-masses of every prefix of :func:`canonical_order` (the values a worst case can hit)."""
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    dx = noise_distribution(x_bits, beta)
    out, acc = [], 0
    for z in canonical_order(x, delta, beta):
        acc += int(dx.num[z])
        out.append(Fraction(acc, dx.den))
    return out


class NotAchievable(ValueError):
    def __init__(self, p_bar: Fraction, below: Fraction, above: Fraction):
        super().__init__(f"mass {p_bar} is not achievable; nearest achievable masses are {below} and {above}")
        self.below = below
        self.above = above


@dataclass
class WorstCaseFunction:
    """``f*(z) = y`` on ``Q`` and ``1 - y`` elsewhere."""

    region: frozenset[int]
    y: int
    n: int
    table: TruthTableFunction = field(init=False)

    def __post_init__(self):
        t = np.full(1 << self.n, 1 - self.y, dtype=np.uint8)
        t[list(self.region)] = self.y
        self.table = TruthTableFunction(t)

    def __call__(self, bits) -> int:
        return self.table(bits)


def worst_case_f(x, delta, p_bar: Fraction, beta: NoiseSpec, y: int) -> WorstCaseFunction:
    """Take whole level sets by decreasing ratio, then a canonical-order prefix of the next one."""
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    n = len(x_bits)
    p_bar = Fraction(p_bar)
    if not Fraction(1, 2) < p_bar <= 1:
        raise ValueError(f"p_bar must lie in (1/2, 1], got {p_bar}")
    dx = noise_distribution(x_bits, beta)
    target = p_bar * dx.den
    if target.denominator != 1:
        raise NotAchievable(p_bar, Fraction(0), Fraction(1))
    target = int(target)
    acc, prev = 0, 0
    chosen = []
    for z in canonical_order(x, delta, beta):
        if acc == target:
            break
        prev = acc
        acc += int(dx.num[z])
        chosen.append(z)
        if acc > target:
            raise NotAchievable(p_bar, Fraction(prev, dx.den), Fraction(acc, dx.den))
    return WorstCaseFunction(frozenset(chosen), y, n)


@dataclass
class TightnessRow:
    delta: tuple[int, ...]
    prob_y: Optional[Fraction]
    constraint: Optional[Fraction]
    status: str


@dataclass
class TightnessReport:
    n: int
    beta: NoiseSpec
    p_bar: Fraction
    L: int
    rows: list[TightnessRow]

    @property
    def violations(self) -> int:
        return sum(r.status in ("violation", "mismatch") for r in self.rows)

    @property
    def checked(self) -> int:
        return sum(r.status == "ok" for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def verify_tightness(
    n: int,
    beta: NoiseSpec,
    p_bar: Fraction,
    delta_family: Optional[Iterable[Sequence[int]]] = None,
    x=None,
    y: int = 1,
) -> TightnessReport:
    """Check that the worst-case ``f*`` loses its majority at ``|delta| = L + 1``."""
    _check_n(n, 14)
    p_bar = Fraction(p_bar)
    L = certified_perturbation_size(p_bar, n, beta, l_max=n)
    rows: list[TightnessRow] = []
    if L >= n:
        return TightnessReport(n, beta, p_bar, L, rows)
    x_bits = np.zeros(n, dtype=np.uint8) if x is None else np.asarray(x, dtype=np.uint8)
    if delta_family is None:
        delta_family = []
        for support in itertools.combinations(range(n), L + 1):
            d = np.zeros(n, dtype=np.uint8)
            d[list(support)] = 1
            delta_family.append(d)
    expected = constraint_value(p_bar, region_table(n, L + 1, beta))
    for d in delta_family:
        d = np.asarray(d, dtype=np.uint8)
        key = tuple(int(v) for v in d)
        try:
            fstar = worst_case_f(x_bits, d, p_bar, beta, y)
        except NotAchievable:
            rows.append(TightnessRow(key, None, expected, "not-achievable"))
            continue
        _, p1 = exact_output_prob(fstar.table, x_bits ^ d, beta)
        prob_y = p1 if y == 1 else 1 - p1
        if prob_y != expected:
            status = "mismatch"
        else:
            status = "ok" if prob_y <= Fraction(1, 2) else "violation"
        rows.append(TightnessRow(key, prob_y, expected, status))
    return TightnessReport(n, beta, p_bar, L, rows)


@dataclass
class LemmaReport:
    trials: int = 0
    skipped: int = 0
    violations: int = 0
    equalities: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0


def random_psi_family(rng: np.random.Generator) -> Callable:
    """Random truth tables built around ``T`` so the lemma's precondition usually holds."""

    def make(T: np.ndarray, px: np.ndarray) -> np.ndarray:
        size = T.shape[0]
        mode = rng.integers(4)
        if mode == 0:
            return rng.integers(0, 2, size=size).astype(bool)
        psi = T.copy()
        if mode >= 2:
            drop = rng.random(size) < rng.random() * 0.5
            psi &= ~drop
        need = int(px[T].sum())
        order = rng.permutation(size)
        have = int(px[psi].sum())
        for z in order:
            if have >= need:
                break
            if not psi[z]:
                psi[z] = True
                have += int(px[z])
        if mode == 3:
            extra = rng.random(size) < 0.1
            psi |= extra
        return psi

    return make


def verify_np_lemma(
    X: ExactDistribution,
    Y: ExactDistribution,
    t: Fraction,
    trials: int,
    seed: int = 0,
    psi_family: Optional[Callable] = None,
) -> LemmaReport:
    """Stress the likelihood-ratio lemma with random ``T3`` subsets and random ``psi``.

    ``T1 = {ratio > t}``, ``T2 = {ratio = t}``, ``T = T1 + T3`` with ``T3`` a
    random subset of ``T2``. Whenever ``Pr(psi(X)=1) >= Pr(X in T)`` the
    conclusion ``Pr(psi(Y)=1) >= Pr(Y in T)`` is checked exactly.
    """
    if X.n != Y.n or X.den != Y.den:
        raise ValueError("distributions must share n and denominator")
    _check_n(X.n, 12)
    t = Fraction(t)
    # ratio comparisons by cross-multiplication: px * t.den vs t.num * py
    lhs = np.array([int(v) * t.denominator for v in X.num], dtype=object)
    rhs = np.array([t.numerator * int(v) for v in Y.num], dtype=object)
    T1 = np.array([a > b for a, b in zip(lhs, rhs)], dtype=bool)
    T2 = np.array([a == b for a, b in zip(lhs, rhs)], dtype=bool)
    px = X.num
    py = Y.num
    rng = np.random.default_rng(seed)
    family = psi_family or random_psi_family(rng)
    report = LemmaReport()
    attempts = 0
    while report.trials < trials:
        attempts += 1
        if attempts > 100 * trials:
            raise RuntimeError("psi family almost never meets the lemma's precondition")
        T3 = T2 & (rng.random(T2.shape[0]) < rng.random())
        T = T1 | T3
        psi = np.asarray(family(T, px), dtype=bool)
        if int(px[psi].sum()) < int(px[T].sum()):
            report.skipped += 1
            continue
        report.trials += 1
        got, bound = int(py[psi].sum()), int(py[T].sum())
        if got < bound:
            report.violations += 1
        elif got == bound:
            report.equalities += 1
    return report


@dataclass
class SoundnessReport:
    p: Fraction
    p_bar: Fraction
    y: int
    L: int
    checked: int = 0
    violations: list[tuple[int, Fraction]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_soundness(f, x, beta: NoiseSpec, p_bar: Optional[Fraction] = None) -> SoundnessReport:
    """Every ``delta`` with ``|delta| <= L`` keeps the smoothed output, checked exactly.

    ``p_bar`` defaults to the exact probability of the majority output at ``x``.
    """
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    n = len(x_bits)
    num, den = smoothed_prob_all(f, beta, n)
    x_int = bits_to_int(x_bits)
    p1 = Fraction(int(num[x_int]), den)
    y = int(p1 > Fraction(1, 2))
    p = p1 if y == 1 else 1 - p1
    p_bar = p if p_bar is None else Fraction(p_bar)
    if p_bar > p:
        raise ValueError("p_bar must not exceed the true probability")
    if p_bar <= Fraction(1, 2):
        return SoundnessReport(p, p_bar, y, 0)
    L = certified_perturbation_size(p_bar, n, beta, l_max=n)
    report = SoundnessReport(p, p_bar, y, L)
    weights = _popcounts(n)
    for delta in np.flatnonzero((weights >= 1) & (weights <= L)):
        w = x_int ^ int(delta)
        p_y = int(num[w]) if y == 1 else den - int(num[w])
        report.checked += 1
        if 2 * p_y <= den:
            report.violations.append((int(delta), Fraction(p_y, den)))
    return report


def random_biased_table(n: int, rng: np.random.Generator, x_int: int = 0) -> np.ndarray:
    """Random truth table that leans towards 1 near ``x`` so the majority is usually certifiable."""
    size = 1 << n
    dist = _popcounts(n)[np.arange(size) ^ x_int]
    radius = rng.integers(n // 3, n + 1)
    noise = rng.random() * 0.15
    table = (dist <= radius).astype(np.uint8)
    flips = rng.random(size) < noise
    table ^= flips.astype(np.uint8)
    if rng.random() < 0.5:
        table ^= 1
    return table


@dataclass
class SuiteRow:
    check: str
    cases: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.cases > 0


SUITE_BETAS = (Fraction(3, 5), Fraction(7, 10), Fraction(4, 5))


def check_region_tables(max_n: int = 12, betas: Sequence = SUITE_BETAS) -> SuiteRow:
    cases = bad = 0
    for b in betas:
        spec = NoiseSpec(Fraction(b))
        for n in range(1, max_n + 1):
            x = np.zeros(n, dtype=np.uint8)
            for l in range(1, n + 1):
                d = np.zeros(n, dtype=np.uint8)
                d[:l] = 1
                cases += 1
                if exact_region_probs(x, d, spec).as_dict() != region_table(n, l, spec).as_dict():
                    bad += 1
    return SuiteRow("region tables vs enumeration", cases, bad)


def tightness_p_bars(n: int, beta: NoiseSpec, count: int = 4) -> list[Fraction]:
    """Achievable ``p_bar`` whose certified size ``L`` has ``L + 1 = |delta|`` for the delta they are achievable at.

    Achievable masses depend on ``|delta|`` only, so for each weight ``w`` the
    candidates are the canonical prefix masses at a weight-``w`` delta with
    ``L(p_bar) = w - 1``; up to ``count`` are kept, spread across weights.
    """
    x = np.zeros(n, dtype=np.uint8)
    found: list[Fraction] = []
    for w in range(1, n + 1):
        d = np.zeros(n, dtype=np.uint8)
        d[:w] = 1
        for m in achievable_masses(x, d, beta):
            if Fraction(1, 2) < m < 1 and certified_perturbation_size(m, n, beta, l_max=n) == w - 1:
                found.append(m)
    if not found:
        return []
    found.sort()
    idx = np.unique(np.linspace(0, len(found) - 1, count).round().astype(int))
    return [found[i] for i in idx]


def check_tightness(ns: Iterable[int] = range(4, 11), betas: Sequence = ("0.6", "0.7", "0.8"), per_grid: int = 4) -> SuiteRow:
    cases = bad = 0
    for n in ns:
        for b in betas:
            spec = NoiseSpec(b)
            for p_bar in tightness_p_bars(n, spec, per_grid):
                rep = verify_tightness(n, spec, p_bar)
                cases += rep.checked
                bad += rep.violations
    return SuiteRow("worst case at L+1", cases, bad)


def check_soundness(functions: int = 200, n: int = 10, beta="0.7", seed: int = 0) -> SuiteRow:
    rng = np.random.default_rng(seed)
    spec = NoiseSpec(beta)
    x = np.zeros(n, dtype=np.uint8)
    cases = bad = 0
    made = 0
    while made < functions:
        f = TruthTableFunction(random_biased_table(n, rng))
        rep = verify_soundness(f, x, spec)
        if rep.p_bar <= Fraction(1, 2):
            continue
        made += 1
        cases += rep.checked
        bad += len(rep.violations)
    return SuiteRow("soundness within L", cases, bad)


def check_lemma(trials: int = 10_000, n: int = 8, beta="0.7", l: int = 3, seed: int = 0) -> SuiteRow:
    spec = NoiseSpec(beta)
    x = np.zeros(n, dtype=np.uint8)
    d = np.zeros(n, dtype=np.uint8)
    d[:l] = 1
    X = noise_distribution(x, spec)
    Y = noise_distribution(d, spec)
    b = spec.exact
    h = b / (1 - b)
    rng = np.random.default_rng(seed)
    violations = total = 0
    thresholds = [h**e for e in range(-l, l + 1, 2)]
    per = -(-trials // len(thresholds))
    for i, t in enumerate(thresholds):
        rep = verify_np_lemma(X, Y, t, per, seed=int(rng.integers(2**31)))
        total += rep.trials
        violations += rep.violations
    return SuiteRow("likelihood-ratio lemma", total, violations)


def run_suite(quick: bool = False, seed: int = 0) -> list[SuiteRow]:
    """Everything the small-n verification covers; ``quick`` shrinks each check."""
    if quick:
        return [
            check_region_tables(8),
            check_tightness(range(4, 8), per_grid=2),
            check_soundness(20, n=8, seed=seed),
            check_lemma(1000, seed=seed),
        ]
    return [check_region_tables(), check_tightness(), check_soundness(seed=seed), check_lemma(seed=seed)]
