"""Reliability and construct-validity indices for first-order factors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AVE_MIN = 0.50
RELIABILITY_MIN = 0.70
LOADING_MIN = 0.70
HTMT_MAX = 0.85
HTMT_SIGN = "absolute correlations"


def cronbach_alpha(item_cov) -> float:
    """k / (k - 1) * (1 - tr(C) / 1'C1)."""
    C = np.asarray(item_cov, float)
    k = C.shape[0]
    if C.ndim != 2 or C.shape != (k, k) or k < 2:
        raise ValueError("alpha needs a k x k item covariance with k >= 2")
    total = C.sum()
    if total <= 0:
        raise ValueError("total score variance is zero")
    return float(k / (k - 1) * (1.0 - np.trace(C) / total))


def congeneric_omega(loadings, residuals=None) -> float:
    """(sum beta)^2 / ((sum beta)^2 + sum theta), theta defaulting to 1 - beta^2."""
    b = np.asarray(loadings, float)
    if b.size < 2:
        raise ValueError("omega needs at least two items")
    th = 1.0 - b**2 if residuals is None else np.asarray(residuals, float)
    common = b.sum() ** 2
    return float(common / (common + th.sum()))


def ave(loadings) -> float:
    b = np.asarray(loadings, float)
    if b.size < 1:
        raise ValueError("AVE needs at least one loading")
    return float(np.mean(b**2))


def signal_to_noise(omega) -> float:
    if omega >= 1.0:
        raise ValueError("signal-to-noise is unbounded at omega = 1")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    return float(omega / (1.0 - omega))


@dataclass(frozen=True)
class FornellLarcker:
    names: tuple
    matrix: np.ndarray  # diagonal sqrt(AVE), off-diagonal factor correlations
    passed: dict  # factor -> bool

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())


def fornell_larcker(ave_per_factor, factor_corr, names=None) -> FornellLarcker:
    """sqrt(AVE_j) must exceed every |corr_ij|, i != j."""
    a = np.asarray(ave_per_factor, float)
    R = np.atleast_2d(np.asarray(factor_corr, float))
    h = a.size
    if R.shape != (h, h):
        raise ValueError("factor correlation shape does not match the AVE vector")
    names = tuple(names) if names is not None else tuple(f"f{k + 1}" for k in range(h))
    M = R.copy()
    np.fill_diagonal(M, np.sqrt(a))
    passed = {}
    for j in range(h):
        others = np.abs(np.delete(R[j], j))
        passed[names[j]] = bool(others.size == 0 or np.sqrt(a[j]) > others.max())
    return FornellLarcker(names, M, passed)


@dataclass(frozen=True)
class HTMT:
    names: tuple
    matrix: np.ndarray  # NaN on the diagonal and for undefined pairs
    undefined: tuple  # factor names with non-positive mean within-factor correlation
    source: str = "pearson"
    sign: str = HTMT_SIGN

    def value(self, a, b) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])

    def flags(self, limit=HTMT_MAX) -> np.ndarray:
        """True where the discriminant-validity rule ``HTMT < limit`` holds."""
        with np.errstate(invalid="ignore"):
            return self.matrix < limit


def htmt(item_corr, grouping, names=None, source="pearson") -> HTMT:
    """Heterotrait-monotrait ratios from an item correlation matrix.

    ``grouping`` maps factor -> item list (or is a sequence of such pairs);
    ``names`` labels the rows of ``item_corr``. Absolute correlations are used.
    """
    R = np.abs(np.asarray(item_corr, float))
    groups = list(grouping.items()) if isinstance(grouping, dict) else list(grouping)
    if names is None:
        names = [v for _, items in groups for v in items]
    names = list(names)
    idx = {f: [names.index(v) for v in items] for f, items in groups}
    for f, ix in idx.items():
        if len(ix) < 2:
            raise ValueError(f"HTMT needs at least two items for {f}")
    mono = {}
    for f, ix in idx.items():
        sub = R[np.ix_(ix, ix)]
        mono[f] = sub[np.tril_indices(len(ix), -1)].mean()
    fac = tuple(f for f, _ in groups)
    h = len(fac)
    M = np.full((h, h), np.nan)
    undefined = tuple(f for f in fac if mono[f] <= 0)
    for a in range(h):
        for b in range(a + 1, h):
            fa, fb = fac[a], fac[b]
            if fa in undefined or fb in undefined:
                continue
            hetero = R[np.ix_(idx[fa], idx[fb])].mean()
            M[a, b] = M[b, a] = hetero / np.sqrt(mono[fa] * mono[fb])
    return HTMT(fac, M, undefined, source)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Thresholds:
    ave: float = AVE_MIN
    reliability: float = RELIABILITY_MIN
    loading: float = LOADING_MIN
    htmt: float = HTMT_MAX


@dataclass
class FactorReliability:
    factor: str
    items: tuple
    loadings: tuple
    alpha: float
    omega: float
    ave: float
    sn: float

    def criteria(self, t: Thresholds = Thresholds()) -> dict:
        return {
            "ave": self.ave > t.ave,
            "omega_gt_ave": self.omega > self.ave,
            "omega": self.omega >= t.reliability,
            "alpha": self.alpha >= t.reliability,
            "loadings": all(b > t.loading for b in self.loadings),
        }


@dataclass
class ScaleReport:
    factors: list  # FactorReliability
    fornell_larcker: FornellLarcker | None
    htmt: HTMT | None
    thresholds: Thresholds = field(default_factory=Thresholds)
    alpha_basis: str = "covariance"

    def factor(self, name) -> FactorReliability:
        for f in self.factors:
            if f.factor == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        t = self.thresholds
        out = {
            "thresholds": {"ave": t.ave, "reliability": t.reliability, "loading": t.loading, "htmt": t.htmt},
            "alpha_basis": self.alpha_basis,
            "factors": [
                {
                    "factor": f.factor,
                    "items": list(f.items),
                    "loadings": list(map(float, f.loadings)),
                    "alpha": f.alpha,
                    "omega": f.omega,
                    "ave": f.ave,
                    "sn": f.sn,
                    "criteria": f.criteria(t),
                }
                for f in self.factors
            ],
        }
        if self.fornell_larcker is not None:
            fl = self.fornell_larcker
            out["fornell_larcker"] = {"names": list(fl.names), "matrix": fl.matrix.tolist(), "pass": fl.passed}
        if self.htmt is not None:
            ht = self.htmt
            out["htmt"] = {
                "names": list(ht.names),
                "matrix": [[None if np.isnan(x) else float(x) for x in row] for row in ht.matrix],
                "pass": [[bool(x) for x in row] for row in ht.flags(t.htmt)],
                "source": ht.source,
                "sign": ht.sign,
                "undefined": list(ht.undefined),
            }
        return out


def scale_report(result, item_cov=None, item_corr=None, thresholds: Thresholds = Thresholds(), htmt_source="pearson"):
    """Build a :class:`ScaleReport` from a fitted model.

    ``item_cov`` feeds alpha (defaults to the fitted sample moments) and
    ``item_corr`` feeds HTMT (defaults to their correlation matrix).
    """
    spec = result.table.spec
    names = list(result.moments.names)
    S = result.moments.sample if item_cov is None else np.asarray(item_cov, float)
    if item_corr is None:
        d = np.sqrt(np.diag(S))
        item_corr = S / np.outer(d, d)
    std = result.standardized
    factors = []
    for f, items in spec.factors:
        ix = [names.index(v) for v in items]
        b = [float(std.loadings[v]) for v in items]
        a = cronbach_alpha(S[np.ix_(ix, ix)])
        om = congeneric_omega(b)
        factors.append(FactorReliability(f, tuple(items), tuple(b), a, om, ave(b), signal_to_noise(om)))
    fl = fornell_larcker([f.ave for f in factors], std.factor_corr, spec.first_order_names)
    ht = None
    if len(spec.factors) > 1 and all(len(items) >= 2 for _, items in spec.factors):
        ht = htmt(item_corr, list(spec.factors), names, source=htmt_source)
    basis = "correlation" if np.allclose(np.diag(S), 1.0) else "covariance"
    return ScaleReport(factors, fl, ht, thresholds, basis)


@dataclass(frozen=True)
class Verdict:
    criterion: str
    passed: bool
    value: float
    limit: float
    subject: str


def validity_checklist(report: ScaleReport) -> dict:
    """Per-criterion verdicts plus convergent, discriminant and reliability summaries."""
    t = report.thresholds
    items = []
    for f in report.factors:
        for v, b in zip(f.items, f.loadings):
            items.append(Verdict("item R^2 > AVE threshold", b * b > t.ave, b * b, t.ave, v))
        items.append(Verdict("AVE", f.ave > t.ave, f.ave, t.ave, f.factor))
        items.append(Verdict("omega > AVE", f.omega > f.ave, f.omega, f.ave, f.factor))
        items.append(Verdict("omega", f.omega >= t.reliability, f.omega, t.reliability, f.factor))
        items.append(Verdict("alpha", f.alpha >= t.reliability, f.alpha, t.reliability, f.factor))
    disc = []
    if report.fornell_larcker is not None:
        fl = report.fornell_larcker
        for j, name in enumerate(fl.names):
            others = np.abs(np.delete(fl.matrix[j], j))
            worst = float(others.max()) if others.size else 0.0
            disc.append(Verdict("Fornell-Larcker", fl.passed[name], float(fl.matrix[j, j]), worst, name))
    if report.htmt is not None:
        ht = report.htmt
        for a in range(len(ht.names)):
            for b in range(a + 1, len(ht.names)):
                x = float(ht.matrix[a, b])
                disc.append(Verdict("HTMT", bool(x < t.htmt), x, t.htmt, f"{ht.names[a]}-{ht.names[b]}"))
    convergent = [v for v in items if v.criterion in ("item R^2 > AVE threshold", "AVE", "omega > AVE")]
    reliability = [v for v in items if v.criterion in ("omega", "alpha")]
    return {
        "criteria": items + disc,
        "convergent": all(v.passed for v in convergent),
        "discriminant": all(v.passed for v in disc),
        "reliability": all(v.passed for v in reliability),
    }
