"""Small statistics toolkit for the acceptance experiments.

Normal quantiles come from :class:`statistics.NormalDist`; the chi-square
distribution is evaluated through the regularized lower incomplete gamma
function (series for small arguments, Lentz continued fraction otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

_STD_NORMAL = NormalDist()


def normal_cdf(x, mean: float = 0.0, sd: float = 1.0):
    dist = NormalDist(mean, sd)
    x = np.asarray(x, dtype=np.float64)
    out = np.array([dist.cdf(v) for v in np.ravel(x)]).reshape(x.shape)
    return out if out.ndim else float(out)


def normal_ppf(p: float) -> float:
    return _STD_NORMAL.inv_cdf(p)


def gamma_p(s: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(s, x)``."""
    if s <= 0.0:
        raise ValueError("shape must be positive")
    if x <= 0.0:
        return 0.0
    log_pref = s * math.log(x) - x - math.lgamma(s)
    if x < s + 1.0:
        term = total = 1.0 / s
        k = s
        for _ in range(10_000):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, math.exp(log_pref) * total)
    # continued fraction for Q(s, x)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(log_pref) * h)


def chi2_cdf(x: float, dof: float) -> float:
    return gamma_p(0.5 * dof, 0.5 * x)


def chi2_ppf(p: float, dof: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, max(1.0, dof)
    while chi2_cdf(hi, dof) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def ks_statistic(samples, cdf, censor: float | None = None) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``.

    With ``censor``, samples above it only count as "beyond the censoring
    time" and the distance is taken over ``t <= censor``.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    if censor is not None:
        seen = x[x <= censor]
        tail = abs(float(cdf(np.array([censor]))[0]) - seen.size / n)
        if seen.size == 0:
            return tail
        x = seen
    else:
        tail = 0.0
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, x.size + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n), tail))


def ks_two_sample(first, second) -> float:
    """Sup distance between two empirical CDFs (infinite values allowed)."""
    a = np.sort(np.asarray(first, dtype=np.float64))
    b = np.sort(np.asarray(second, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("no samples")
    pts = np.concatenate((a, b))
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n: float, level: float = 0.01) -> float:
    """Asymptotic Kolmogorov critical distance ``sqrt(-ln(level/2)/2) / sqrt(n)``."""
    return math.sqrt(-0.5 * math.log(0.5 * level)) / math.sqrt(n)


@dataclass(frozen=True)
class VarianceBand:
    estimate: float
    lower: float
    upper: float
    n: int

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def variance_band(target: float, n: int, level: float = 0.99) -> VarianceBand:
    """Acceptance band for the sample variance of ``n`` normal draws of variance ``target``."""
    if n < 2:
        raise ValueError("need at least two samples")
    dof = n - 1
    tail = 0.5 * (1.0 - level)
    return VarianceBand(target, target * chi2_ppf(tail, dof) / dof,
                        target * chi2_ppf(1.0 - tail, dof) / dof, n)


def variance_ci(samples, level: float = 0.99) -> VarianceBand:
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    s2 = float(x.var(ddof=1))
    dof = n - 1
    tail = 0.5 * (1.0 - level)
    return VarianceBand(s2, dof * s2 / chi2_ppf(1.0 - tail, dof), dof * s2 / chi2_ppf(tail, dof), n)


def proportion(successes: int, n: int) -> tuple[float, float]:
    """Fraction and its binomial standard error."""
    if n < 1:
        raise ValueError("no trials")
    p = successes / n
    return p, math.sqrt(p * (1.0 - p) / n)


def is_nondecreasing(values) -> bool:
    v = list(values)
    return all(b >= a for a, b in zip(v, v[1:]))
