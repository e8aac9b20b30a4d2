"""A-priori power and sample size for RMSEA hypothesis tests.

Noncentrality uses ``N - 1``: ``lambda = (N - 1) df eps^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy import stats

CLOSE_FIT = "close-fit"
NOT_CLOSE_FIT = "not-close-fit"
N_MIN = 10
N_MAX = 10_000_000


@dataclass(frozen=True)
class PowerQuery:
    df: int
    alpha: float = 0.05
    eps0: float = 0.05
    epsa: float = 0.08
    direction: str = CLOSE_FIT

    def __post_init__(self):
        if self.df < 1:
            raise ValueError("df must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.eps0 < 0 or self.epsa < 0:
            raise ValueError("RMSEA values must be non-negative")
        if self.direction not in (CLOSE_FIT, NOT_CLOSE_FIT):
            raise ValueError(f"unknown direction {self.direction!r}")


def _dist(df, lam):
    return stats.chi2(df) if lam <= 0 else stats.ncx2(df, lam)


def rmsea_power(q: PowerQuery, n: int) -> float:
    """Power of the RMSEA test at sample size ``n``.

    Close-fit (H0: eps <= eps0) rejects for large T; not-close-fit
    (H0: eps >= eps0) rejects for small T.
    """
    if n < 2:
        raise ValueError("N must be at least 2")
    lam0 = (n - 1) * q.df * q.eps0**2
    lama = (n - 1) * q.df * q.epsa**2
    null, alt = _dist(q.df, lam0), _dist(q.df, lama)
    if q.direction == CLOSE_FIT:
        return float(alt.sf(null.isf(q.alpha)))
    return float(alt.cdf(null.ppf(q.alpha)))


def required_n(q: PowerQuery, power: float = 0.80, n_min: int = N_MIN, n_max: int = N_MAX) -> int:
    """Smallest N in [n_min, n_max] whose power reaches ``power`` (bisection)."""
    if not 0 < power < 1:
        raise ValueError("target power must lie in (0, 1)")
    if q.eps0 == q.epsa:
        if power <= q.alpha:
            return n_min
        raise ValueError("power equals alpha when eps0 == epsa; target unreachable")
    if rmsea_power(q, n_min) >= power:
        return n_min
    if rmsea_power(q, n_max) < power:
        raise ValueError(f"target power {power} unreachable below N = {n_max}")
    lo, hi = n_min, n_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rmsea_power(q, mid) >= power:
            hi = mid
        else:
            lo = mid
    return hi
