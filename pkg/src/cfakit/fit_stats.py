"""Global and local fit: chi-square variants, RMSEA inference, CFI, SRMR,
correlation residuals and nested-model difference tests.

Multipliers: ML statistics use ``N - 1``, DWLS statistics use ``N``. RMSEA
always uses ``N - 1`` in its noncentrality.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .estimator import DWLS, ML, FitResult, implied_correlation, moment_indices
from .model_spec import DELTA_ORDINAL

PLAIN = "plain"
SCALED_SHIFTED = "scaled-shifted"

EXACT = "exact"
CLOSE = "close"
NOT_CLOSE = "not-close"
POOR = "poor"
ALL_TESTS = (EXACT, CLOSE, NOT_CLOSE, POOR)

RESIDUAL_FLAG = 0.1


class NotNestedError(ValueError):
    pass


# ---------------------------------------------------------------------------
# chi-square statistics


@dataclass(frozen=True)
class ChiSquare:
    statistic: float
    df: int
    p: float | None  # None when the model is saturated
    variant: str = PLAIN
    multiplier: int | None = None

    @property
    def saturated(self) -> bool:
        return self.df == 0


def chi_square(result: FitResult) -> ChiSquare:
    """Plain statistic: ``(N - 1) F`` for ML, ``N F`` for DWLS."""
    if not result.converged:
        warnings.warn("chi-square computed from a non-converged fit", stacklevel=2)
    T = max(result.multiplier * result.fmin, 0.0)
    p = None if result.df == 0 else float(stats.chi2.sf(T, result.df))
    return ChiSquare(float(T), result.df, p, PLAIN, result.multiplier)


def scaled_shifted(T_plain, delta, W, gamma, df):
    """Mean- and variance-adjusted statistic ``a T + df - a tr(U Gamma)``.

    ``W`` is the weight matrix or the vector of its diagonal. Returns
    ``(T_star, a, shift)``.
    """
    delta = np.asarray(delta, float)
    W = np.asarray(W, float)
    Winv = np.diag(1.0 / W) if W.ndim == 1 else np.linalg.inv(W)
    if df <= 0:
        raise ValueError("scaled-shifted statistic needs df > 0")
    if delta.size:
        WD = Winv @ delta
        U = Winv - WD @ np.linalg.solve(delta.T @ WD, WD.T)
    else:
        U = Winv
    UG = U @ np.asarray(gamma, float)
    t1 = np.trace(UG)
    t2 = np.trace(UG @ UG)
    if t2 <= 0:
        raise ValueError(f"tr((U Gamma)^2) = {t2:.3g} is not positive")
    a = np.sqrt(df / t2)
    shift = df - a * t1
    return float(a * T_plain + shift), float(a), float(shift)


def robust_chi_square(result: FitResult) -> ChiSquare:
    """Scaled-shifted statistic for a DWLS fit with a gamma matrix."""
    if result.estimator != DWLS or result.moments.gamma is None:
        raise ValueError("the scaled-shifted statistic needs a DWLS fit with gamma")
    plain = chi_square(result)
    if result.df == 0:
        return ChiSquare(plain.statistic, 0, None, SCALED_SHIFTED, result.multiplier)
    T, _, _ = scaled_shifted(plain.statistic, result.jacobian(), result.moments.weights, result.moments.gamma, result.df)
    T = max(T, 0.0)
    return ChiSquare(T, result.df, float(stats.chi2.sf(T, result.df)), SCALED_SHIFTED, result.multiplier)


# ---------------------------------------------------------------------------
# RMSEA


def _nc_sf(T, df, lam):
    """P(chi2_{df, lam} >= T), with the central distribution at lam = 0."""
    if lam <= 0:
        return float(stats.chi2.sf(T, df))
    if stats.chi2.cdf(T, df) == 0.0:
        # the noncentral law is stochastically larger, so its cdf underflows too;
        # scipy's ncx2 overflows in this corner instead of returning 1
        return 1.0
    return float(stats.ncx2.sf(T, df, lam))


def _solve_lambda(T, df, target):
    """Noncentrality with tail probability ``target`` at ``T``; 0 when none."""
    if _nc_sf(T, df, 0.0) >= target:
        return 0.0
    hi = max(T, 1.0)
    while _nc_sf(T, df, hi) < target:
        hi *= 2.0
    return optimize.brentq(lambda lam: _nc_sf(T, df, lam) - target, 0.0, hi, xtol=1e-12, rtol=1e-14)


@dataclass(frozen=True)
class RMSEA:
    point: float
    lo: float
    hi: float
    level: float
    tests: dict  # test name -> p value

    @property
    def p_close(self):
        return self.tests.get(CLOSE)

    @property
    def p_poor(self):
        return self.tests.get(POOR)


def rmsea(T, df, N, level=0.90, eps_close=0.05, eps_poor=0.10, tests=ALL_TESTS) -> RMSEA:
    """Point estimate, confidence interval and hypothesis tests.

    Tests (each optional via ``tests``):

    - ``exact``: H0 eps = 0, reject-support, central chi-square p value;
    - ``close``: H0 eps <= eps_close, accept-support, ``P(chi2_{df,lam0} >= T)``;
    - ``not-close``: H0 eps >= eps_close, reject-support, ``P(chi2_{df,lam0} <= T)``;
    - ``poor``: H0 eps >= eps_poor, reject-support, ``P(chi2_{df,lam1} <= T)``.
    """
    if df < 1:
        raise ValueError("RMSEA needs df >= 1")
    if N < 2:
        raise ValueError("RMSEA needs N >= 2")
    unknown = set(tests) - set(ALL_TESTS)
    if unknown:
        raise ValueError(f"unknown RMSEA tests: {sorted(unknown)}")
    scale = df * (N - 1)
    point = np.sqrt(max(T - df, 0.0) / scale)
    tail = (1.0 - level) / 2.0
    lam_lo = _solve_lambda(T, df, tail)
    lam_hi = _solve_lambda(T, df, 1.0 - tail)
    lo, hi = np.sqrt(lam_lo / scale), np.sqrt(lam_hi / scale)
    lam_close = scale * eps_close**2
    lam_poor = scale * eps_poor**2
    out = {}
    if EXACT in tests:
        out[EXACT] = float(stats.chi2.sf(T, df))
    if CLOSE in tests:
        out[CLOSE] = _nc_sf(T, df, lam_close)
    if NOT_CLOSE in tests:
        out[NOT_CLOSE] = 1.0 - _nc_sf(T, df, lam_close)
    if POOR in tests:
        out[POOR] = 1.0 - _nc_sf(T, df, lam_poor)
    return RMSEA(float(point), float(min(lo, point)), float(max(hi, point)), level, out)


# ---------------------------------------------------------------------------
# CFI and the independence baseline


def cfi(T, df, T_baseline, df_baseline) -> float:
    num = max(T - df, 0.0)
    den = max(T_baseline - df_baseline, T - df, 0.0)
    if den == 0.0:
        return 1.0
    value = 1.0 - num / den
    if not 0.0 <= value <= 1.0:
        warnings.warn(f"CFI {value:.4f} clamped into [0, 1]", stacklevel=2)
        value = min(max(value, 0.0), 1.0)
    return float(value)


def baseline_chi_square(result: FitResult, robust: bool = False) -> ChiSquare:
    """Independence model (free variances only) on the same moments and estimator."""
    mom = result.moments
    S = mom.sample
    p = S.shape[0]
    df_b = p * (p - 1) // 2
    if result.estimator == ML:
        F = np.sum(np.log(np.diag(S))) - np.linalg.slogdet(S)[1]
        T = (mom.n - 1) * F
        return ChiSquare(float(T), df_b, float(stats.chi2.sf(T, df_b)), PLAIN, mom.n - 1)
    delta_param = result.table.parameterization == DELTA_ORDINAL
    iu, ju = moment_indices(p, result.table.parameterization)
    s = S[iu, ju]
    w = np.asarray(mom.weights, float)
    off = iu != ju
    # diagonal moments are reproduced exactly by the free variances
    T = mom.n * float(np.sum(s[off] ** 2 / w[off]))
    if not robust:
        return ChiSquare(T, df_b, float(stats.chi2.sf(T, df_b)), PLAIN, mom.n)
    if delta_param:
        D = np.zeros((s.size, 0))
    else:
        D = np.zeros((s.size, p))
        rows = np.flatnonzero(~off)
        D[rows, iu[rows]] = 1.0
    Ts, _, _ = scaled_shifted(T, D, w, mom.gamma, df_b)
    return ChiSquare(max(Ts, 0.0), df_b, float(stats.chi2.sf(max(Ts, 0.0), df_b)), SCALED_SHIFTED, mom.n)


# ---------------------------------------------------------------------------
# SRMR and residuals


def srmr(S, Sigma) -> float:
    """Root mean square of correlation-metric residuals, lower triangle with diagonal."""
    S = np.asarray(S, float)
    Sigma = np.asarray(Sigma, float)
    ds = np.sqrt(np.diag(S))
    dg = np.sqrt(np.diag(Sigma))
    r = S / np.outer(ds, ds) - Sigma / np.outer(dg, dg)
    i, j = np.tril_indices(S.shape[0])
    return float(np.sqrt(np.mean(r[i, j] ** 2)))


@dataclass(frozen=True)
class ResidualReport:
    names: tuple
    matrix: np.ndarray  # correlation metric, sample minus implied
    flags: np.ndarray  # |residual| > threshold
    raw: np.ndarray  # covariance metric
    threshold: float = RESIDUAL_FLAG

    def flagged_pairs(self) -> list[tuple[str, str, float]]:
        i, j = np.nonzero(np.tril(self.flags, -1))
        return [(self.names[a], self.names[b], float(self.matrix[a, b])) for a, b in zip(i, j)]


def residuals(S, Sigma, names=None, threshold=RESIDUAL_FLAG) -> ResidualReport:
    S = np.asarray(S, float)
    Sigma = np.asarray(Sigma, float)
    r = implied_correlation(S) - implied_correlation(Sigma)
    np.fill_diagonal(r, 0.0)
    r = 0.5 * (r + r.T)
    names = tuple(names) if names is not None else tuple(f"x{k + 1}" for k in range(S.shape[0]))
    return ResidualReport(names, r, np.abs(r) > threshold, S - Sigma, threshold)


# ---------------------------------------------------------------------------
# nested models


@dataclass(frozen=True)
class LRT:
    delta_T: float
    delta_df: int
    p: float
    approximate: bool = False
    note: str = ""


def _refines(fine, coarse) -> bool:
    """Every block of ``fine`` lies inside one block of ``coarse``."""
    return all(any(b <= c for c in coarse) for b in fine)


def check_nested(restricted: FitResult, full: FitResult) -> None:
    """Raise :class:`NotNestedError` unless ``restricted`` nests in ``full``."""
    if restricted.estimator != full.estimator:
        raise NotNestedError("models were fitted with different estimators")
    if restricted.moments.names != full.moments.names:
        raise NotNestedError("models are fitted to different variable sets")
    if restricted.n != full.n or not np.allclose(restricted.moments.sample, full.moments.sample):
        raise NotNestedError("models are fitted to different sample moments")
    if restricted.table.parameterization != full.table.parameterization:
        raise NotNestedError("models use different parameterizations")
    if restricted.df < full.df:
        raise NotNestedError(
            f"the restricted model has fewer degrees of freedom ({restricted.df}) than the full model ({full.df})"
        )
    if not _refines(full.table.spec.partition(), restricted.table.spec.partition()):
        raise NotNestedError(
            "the restricted model's factor partition is not a merge of the full model's factors"
        )


def lrt_nested(restricted: FitResult, full: FitResult, robust: bool = False) -> LRT:
    """Chi-square difference test of a restricted model against a full model.

    Scaled statistics are not differenced; with ``robust`` the plain
    difference is used and the result is tagged approximate.
    """
    check_nested(restricted, full)
    dT = chi_square(restricted).statistic - chi_square(full).statistic
    ddf = restricted.df - full.df
    if ddf == 0:
        return LRT(float(dT), 0, 1.0 if abs(dT) < 1e-8 else float("nan"), robust, "equivalent parameter counts")
    return lrt_from_difference(dT, ddf, approximate=robust)


def lrt_from_difference(delta_T, delta_df, approximate=False) -> LRT:
    if delta_df < 1:
        raise ValueError("difference test needs delta df >= 1")
    p = float(stats.chi2.sf(max(delta_T, 0.0), delta_df))
    note = "plain-statistic difference of robust fits" if approximate else ""
    return LRT(float(delta_T), int(delta_df), p, approximate, note)


# ---------------------------------------------------------------------------
# bundle


@dataclass
class FitIndices:
    chi2: ChiSquare
    cfi: float
    srmr: float
    rmsea: RMSEA
    residuals: ResidualReport
    plain: ChiSquare | None = None
    baseline: ChiSquare | None = None
    notes: list = field(default_factory=list)

    @property
    def T(self):
        return self.chi2.statistic

    @property
    def df(self):
        return self.chi2.df

    @property
    def p_exact(self):
        return self.chi2.p

    @property
    def variant(self):
        return self.chi2.variant

    def to_dict(self) -> dict:
        def clean(x):
            return None if x is None or (isinstance(x, float) and not np.isfinite(x)) else x

        return {
            "statistic": self.chi2.statistic,
            "df": self.chi2.df,
            "p": clean(self.chi2.p),
            "variant": self.chi2.variant,
            "multiplier": self.chi2.multiplier,
            "cfi": self.cfi,
            "srmr": self.srmr,
            "rmsea": {
                "point": self.rmsea.point,
                "lo": self.rmsea.lo,
                "hi": self.rmsea.hi,
                "p_close": clean(self.rmsea.p_close),
                "p_poor": clean(self.rmsea.p_poor),
            },
            "residuals": {
                "names": list(self.residuals.names),
                "matrix": np.round(self.residuals.matrix, 10).tolist(),
                "flags": self.residuals.flags.tolist(),
            },
        }


def fit_indices(result: FitResult, robust: bool | None = None, tests=ALL_TESTS) -> FitIndices:
    """All global and local indices for one fit.

    ``robust=None`` uses the scaled-shifted statistic whenever it is
    available (DWLS with gamma); RMSEA and CFI then use it as well.
    """
    available = result.estimator == DWLS and result.moments.gamma is not None
    if robust is None:
        robust = available
    if robust and not available:
        raise ValueError("robust indices need a DWLS fit with gamma")
    plain = chi_square(result)
    stat = robust_chi_square(result) if robust else plain
    base = baseline_chi_square(result, robust=robust)
    notes = []
    if stat.df == 0:
        notes.append("saturated model: df = 0, fit tests are undefined")
        rm = RMSEA(0.0, 0.0, 0.0, 0.90, {})
    else:
        rm = rmsea(stat.statistic, stat.df, result.n, tests=tests)
    c = cfi(stat.statistic, stat.df, base.statistic, base.df)
    S = result.moments.sample
    res = residuals(S, result.sigma, result.moments.names)
    return FitIndices(stat, c, srmr(S, result.sigma), rm, res, plain, base, notes)
