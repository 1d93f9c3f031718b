"""Certified perturbation size for smoothed binary functions under Bernoulli flip noise.

For a perturbation ``delta`` of weight ``l`` the hypercube splits into level
sets ``H(e)`` of the likelihood ratio ``Pr(X=z)/Pr(Y=z) = (beta/(1-beta))**e``
with ``X = x ^ eps`` and ``Y = x ^ delta ^ eps``. Their masses depend only on
``(n, l, beta)``. A lower bound ``p_lower`` on ``Pr(f(X)=y)`` certifies ``l``
when the worst-case region of X-mass ``p_lower`` still has Y-mass above 1/2.

Probabilities are exact rationals whenever beta is a rational with
denominator <= 1000; otherwise a 200-bit mpmath path is used with a
conservative margin on the 1/2 comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Union

import mpmath

from commcert.estimate import ConfidenceSpec, clopper_pearson_lower
from commcert.smoothing import BaseFunction, NoiseSpec, SampleCounts, sample_under_noise

ABSTAIN = -1

MP_PREC = 200
MP_MARGIN = mpmath.mpf("1e-30")
P_LOWER_GRID = 10**15
DEFAULT_L_CAP = 1000

Number = Union[Fraction, mpmath.mpf]
_HALF = Fraction(1, 2)


def _comb(n: int, k: int) -> int:
    return math.comb(n, k) if 0 <= k <= n else 0


def region_size(a: int, b: int, n: int, l: int) -> int:
    """Number of z at distance ``a`` from x and ``b`` from ``x ^ delta`` with ``|delta| = l``."""
    s = a + b - l
    if s < 0 or s % 2:
        return 0
    return _comb(n - l, s // 2) * _comb(l, (a - b + l) // 2)


def theta(e: int, i: int, n: int, l: int) -> int:
    """``|H(i - e, i)|``: vectors with distance ``i`` from ``x ^ delta`` inside ``H(e)``."""
    if (e + l) % 2 or 2 * i - e < l:
        return 0
    return region_size(i - e, i, n, l)


@dataclass(frozen=True)
class RegionEntry:
    e: int
    px: Number
    py: Number
    empty: bool


@dataclass(frozen=True)
class RegionTable:
    """Region masses for every ``e`` in ``-n..n``, ordered by density ratio, largest first.

    For ``beta > 1/2`` the ratio ``(beta/(1-beta))**e`` increases with ``e``, so
    the ordering is by descending ``e``.
    """

    n: int
    l: int
    beta: NoiseSpec
    entries: tuple[RegionEntry, ...]
    exact: bool = field(default=True)

    def ratio(self, e: int) -> Number:
        if self.exact:
            b = self.beta.exact
            return (b / (1 - b)) ** e
        with mpmath.workprec(MP_PREC):
            b = _mp_beta(self.beta)
            return (b / (1 - b)) ** e

    def as_dict(self) -> dict[int, tuple[Number, Number]]:
        return {r.e: (r.px, r.py) for r in self.entries}

    def nonempty(self) -> list[RegionEntry]:
        return [r for r in self.entries if not r.empty]

    @property
    def total_x(self) -> Number:
        return sum((r.px for r in self.entries), Fraction(0) if self.exact else mpmath.mpf(0))

    @property
    def total_y(self) -> Number:
        return sum((r.py for r in self.entries), Fraction(0) if self.exact else mpmath.mpf(0))


def _exact_table_sum(n: int, l: int, p: int, q: int) -> tuple[list[int], list[int]]:
    # term-by-term sums over i, straight from the theta formulation
    r = q - p
    px = [0] * (2 * n + 1)
    py = [0] * (2 * n + 1)
    for e in range(-n, n + 1):
        if (e + l) % 2 or abs(e) > l:
            continue
        sx = sy = 0
        for i in range(max(0, e), min(n, n + e) + 1):
            t = theta(e, i, n, l)
            if t:
                a = i - e
                sx += p ** (n - a) * r**a * t
                sy += p ** (n - i) * r**i * t
        px[e + n] = sx
        py[e + n] = sy
    return px, py


def _exact_table_factored(n: int, l: int, p: int, q: int) -> tuple[list[int], list[int]]:
    # theta(e, i) = C(n-l, j) * C(l, k) with k = (l-e)/2 and j the flips outside delta's
    # support; the j-sum is shared by every e, so compute it once
    r = q - p
    m = n - l
    p_pow = [1] * (m + 1)
    for j in range(1, m + 1):
        p_pow[j] = p_pow[j - 1] * p
    inner = 0
    c = 1
    r_pow = 1
    for j in range(m + 1):
        inner += c * p_pow[m - j] * r_pow
        c = c * (m - j) // (j + 1)
        r_pow *= r
    px = [0] * (2 * n + 1)
    py = [0] * (2 * n + 1)
    for k in range(l + 1):
        e = l - 2 * k
        ck = math.comb(l, k)
        px[e + n] = ck * p ** (l - k) * r**k * inner
        py[e + n] = ck * p**k * r ** (l - k) * inner
    return px, py


def _mp_beta(beta: NoiseSpec) -> mpmath.mpf:
    frac = beta.exact
    if frac is not None:
        return mpmath.mpf(frac.numerator) / frac.denominator
    return mpmath.mpf(beta.value)


def _mp_table(n: int, l: int, beta: NoiseSpec) -> tuple[list, list]:
    with mpmath.workprec(MP_PREC):
        b = _mp_beta(beta)
        nb = 1 - b
        m = n - l
        b_pow = [mpmath.mpf(1)] * (m + 1)
        for j in range(1, m + 1):
            b_pow[j] = b_pow[j - 1] * b
        terms = []
        c = 1
        nb_pow = mpmath.mpf(1)
        for j in range(m + 1):
            terms.append(c * b_pow[m - j] * nb_pow)
            c = c * (m - j) // (j + 1)
            nb_pow *= nb
        inner = mpmath.fsum(terms)
        px = [mpmath.mpf(0)] * (2 * n + 1)
        py = [mpmath.mpf(0)] * (2 * n + 1)
        for k in range(l + 1):
            e = l - 2 * k
            ck = math.comb(l, k)
            px[e + n] = ck * b ** (l - k) * nb**k * inner
            py[e + n] = ck * b**k * nb ** (l - k) * inner
    return px, py


@lru_cache(maxsize=4096)
def region_table(n: int, l: int, beta: NoiseSpec, method: str = "factored", exact: Optional[bool] = None) -> RegionTable:
    """Masses ``Pr(X in H(e))`` and ``Pr(Y in H(e))`` for a perturbation of weight ``l``.

    ``method="sum"`` evaluates the double sum over ``(e, i)`` literally and is
    quadratic in ``n``; the default hoists the factor shared by all ``e``.
    ``exact=False`` forces the 200-bit float path.
    """
    if not 1 <= l <= n:
        raise ValueError(f"perturbation size must satisfy 1 <= l <= n, got l={l}, n={n}")
    frac = beta.exact
    use_exact = frac is not None if exact is None else exact
    if use_exact:
        if frac is None:
            raise ValueError(f"beta={beta.beta} has no small-denominator rational form")
        p, q = frac.numerator, frac.denominator
        if method == "sum":
            nx, ny = _exact_table_sum(n, l, p, q)
        elif method == "factored":
            nx, ny = _exact_table_factored(n, l, p, q)
        else:
            raise ValueError(f"unknown method {method!r}")
        den = q**n
        px = [Fraction(v, den) if v else Fraction(0) for v in nx]
        py = [Fraction(v, den) if v else Fraction(0) for v in ny]
    else:
        px, py = _mp_table(n, l, beta)
    entries = tuple(
        RegionEntry(e, px[e + n], py[e + n], not (px[e + n] or py[e + n]))
        for e in range(n, -n - 1, -1)
    )
    return RegionTable(n, l, beta, entries, exact=use_exact)


def constraint_value(p_lower: Number, table: RegionTable) -> Number:
    """Y-mass of the worst-case region whose X-mass is ``p_lower``."""
    cum_x = Fraction(0) if table.exact else mpmath.mpf(0)
    cum_y = Fraction(0) if table.exact else mpmath.mpf(0)
    with mpmath.workprec(MP_PREC):
        if not table.exact:
            p_lower = mpmath.mpf(p_lower) if not isinstance(p_lower, Fraction) else mpmath.mpf(p_lower.numerator) / p_lower.denominator
        for r in table.entries:
            if r.empty:
                continue
            if cum_x + r.px >= p_lower:
                return cum_y + (p_lower - cum_x) * r.py / r.px
            cum_x += r.px
            cum_y += r.py
    raise ValueError(f"p_lower={p_lower} exceeds the total probability mass")


def constraint_holds(p_lower: Number, table: RegionTable) -> bool:
    if not _HALF < p_lower <= 1:
        raise ValueError(f"p_lower must lie in (1/2, 1], got {p_lower}")
    value = constraint_value(p_lower, table)
    if table.exact:
        return value > _HALF
    with mpmath.workprec(MP_PREC):
        return value > mpmath.mpf(0.5) + MP_MARGIN


def floor_p_lower(p_lower: Union[float, Fraction]) -> Fraction:
    """Round a float bound down onto the ``1e-15`` grid (exact values pass through)."""
    if isinstance(p_lower, Fraction):
        return p_lower
    return Fraction(math.floor(Fraction(p_lower) * P_LOWER_GRID), P_LOWER_GRID)


def certified_perturbation_size(
    p_lower: Union[float, Fraction],
    n: int,
    beta: NoiseSpec,
    l_max: Optional[int] = None,
    exact: Optional[bool] = None,
) -> int:
    """Largest ``L`` such that every ``l <= L`` satisfies the certification constraint.

    The scan starts at ``l = 1`` and stops at the first failing ``l``.
    """
    if not p_lower > 0.5:
        raise ValueError(f"p_lower={p_lower} does not exceed 1/2; the caller must abstain")
    l_max = min(n, DEFAULT_L_CAP) if l_max is None else l_max
    if l_max > n:
        raise ValueError(f"l_max={l_max} exceeds the space size n={n}")
    p = floor_p_lower(p_lower)
    if p <= _HALF:
        return 0
    for l in range(1, l_max + 1):
        if not constraint_holds(p, region_table(n, l, beta, exact=exact)):
            return l - 1
    return l_max


@dataclass(frozen=True)
class CertifyResult:
    y_hat: int
    p_lower: float
    L: Optional[int]
    counts: SampleCounts
    beta: float
    alpha: float

    def __post_init__(self):
        if self.y_hat != ABSTAIN and not self.p_lower > 0.5:
            raise ValueError("a certified result needs p_lower > 1/2")

    @property
    def abstain(self) -> bool:
        return self.y_hat == ABSTAIN

    @property
    def N(self) -> int:
        return self.counts.N

    @property
    def seed(self) -> int:
        return self.counts.seed

    def to_record(self, victims=None) -> dict:
        rec = {}
        if victims is not None:
            rec["victims"] = sorted(victims)
        rec.update(
            y_hat=None if self.abstain else self.y_hat,
            p_lower=self.p_lower,
            L=self.L,
            abstain=self.abstain,
            m0=self.counts.m0,
            m1=self.counts.m1,
            beta=self.beta,
            N=self.counts.N,
            alpha=self.alpha,
            seed=self.counts.seed,
        )
        return rec


def certify_counts(
    counts: SampleCounts,
    n: int,
    beta: NoiseSpec,
    alpha: Union[float, ConfidenceSpec],
    l_max: Optional[int] = None,
) -> CertifyResult:
    """Decision and certified size from already collected counts."""
    alpha = alpha.alpha if isinstance(alpha, ConfidenceSpec) else ConfidenceSpec(alpha).alpha
    y_hat = int(counts.m1 > counts.m0)
    p_lower = clopper_pearson_lower(counts[y_hat], counts.N, alpha)
    if p_lower > 0.5:
        L = certified_perturbation_size(p_lower, n, beta, l_max)
        return CertifyResult(y_hat, p_lower, L, counts, beta.value, alpha)
    return CertifyResult(ABSTAIN, p_lower, None, counts, beta.value, alpha)


def certify(
    f: BaseFunction,
    x,
    beta: NoiseSpec,
    N: int,
    alpha: Union[float, ConfidenceSpec],
    seed: int,
    l_max: Optional[int] = None,
    workers: int = 1,
) -> CertifyResult:
    """Sample, bound, and certify; returns ``y_hat == ABSTAIN`` when ``p_lower <= 1/2``."""
    counts = sample_under_noise(f, beta, x, N, seed, workers=workers)
    return certify_counts(counts, f.n, beta, alpha, l_max)
