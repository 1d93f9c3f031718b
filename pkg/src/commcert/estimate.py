"""One-sided Clopper-Pearson lower bound via the regularized incomplete beta function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

_FPMIN = 1e-300
_EPS = 1e-16
_MAX_ITER = 100_000
_MAX_BISECT = 2000
QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class ConfidenceSpec:
    """Significance level ``alpha``; the bound holds with confidence ``1 - alpha``."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _log_front(a: float, b: float, x: float) -> float:
    return (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("beta shapes must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = _log_front(a, b, x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(_log_front(b, a, 1.0 - x)) * _betacf(b, a, 1.0 - x) / b


def _beta_logpdf(a: float, b: float, x: float) -> float:
    return _log_front(a, b, x) - math.log(x) - math.log1p(-x)


def beta_quantile(q: float, a: float, b: float) -> float:
    """Inverse of ``I_x(a, b)``: bisection bracket refined by safeguarded Newton steps."""
    if a <= 0 or b <= 0:
        raise ValueError("beta shapes must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    lo, hi = 0.0, 1.0
    x = a / (a + b)
    for _ in range(_MAX_BISECT):
        f = betainc(a, b, x) - q
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        # relative to the nearer end, so quantiles close to 0 or 1 are resolved too
        if hi - lo <= max(QUANTILE_TOL * 1e-3 * min(hi, 1.0 - lo), 2 * math.ulp(hi)):
            break
        step_ok = False
        if 0.0 < x < 1.0:
            logpdf = _beta_logpdf(a, b, x)
            if logpdf > -700:
                nx = x - f / math.exp(logpdf)
                if lo < nx < hi:
                    # Newton only while it shrinks the bracket quickly
                    step_ok = abs(nx - x) < 0.5 * (hi - lo)
                    x_next = nx
        if not step_ok:
            if lo == 0.0:
                x_next = hi / 16
            elif hi > 4 * lo:
                x_next = math.sqrt(lo * hi)
            else:
                x_next = 0.5 * (lo + hi)
        if x_next == x or x_next == 0.0:
            break
        x = x_next
    return x


@lru_cache(maxsize=65536)
def clopper_pearson_lower(m: int, n: int, alpha: float) -> float:
    """Lower end of the one-sided ``1 - alpha`` Clopper-Pearson interval for ``m`` of ``n``."""
    if isinstance(alpha, ConfidenceSpec):
        alpha = alpha.alpha
    if n < 1:
        raise ValueError("need at least one trial")
    if not 0 <= m <= n:
        raise ValueError(f"success count {m} outside [0, {n}]")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m == 0:
        return 0.0
    return beta_quantile(alpha, m, n - m + 1)
