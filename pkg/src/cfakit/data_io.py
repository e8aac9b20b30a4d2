"""Raw response data, published summary matrices, descriptives and screening."""

from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

MISSING_TOKENS = {"", "na", "nan", "NA", "NaN", "."}
LABELING_G = 2.2
MAHALANOBIS_CUTOFF = 12.0


class DataError(ValueError):
    """Input data that cannot be used as declared."""


@dataclass(frozen=True)
class Dataset:
    """An n x p response matrix with per-column scale declarations.

    ``scales`` maps a column name to its number of ordinal categories, or
    ``None`` for a continuous column. Missing cells are NaN.
    """

    names: tuple[str, ...]
    values: np.ndarray
    scales: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DataError("column names must be unique")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != len(self.names):
            raise DataError("values must be n x p with one column per name")
        if vals.shape[0] == 0:
            raise DataError("dataset has no rows")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def incomplete(self) -> np.ndarray:
        return np.isnan(self.values).any(axis=1)

    def column(self, name) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names) -> Dataset:
        names = tuple(names)
        missing = [v for v in names if v not in self.names]
        if missing:
            raise DataError(f"variables not in data: {', '.join(missing)}")
        idx = [self.names.index(v) for v in names]
        return Dataset(names, self.values[:, idx], {v: self.scales.get(v) for v in names})

    def rows(self, mask) -> Dataset:
        return Dataset(self.names, self.values[np.asarray(mask)], dict(self.scales))

    def complete_cases(self) -> Dataset:
        return self.rows(~self.incomplete)

    def covariance(self) -> np.ndarray:
        return np.cov(self.complete_cases().values, rowvar=False)

    def to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, Path))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.values:
                w.writerow(["" if math.isnan(x) else (int(x) if float(x).is_integer() else repr(float(x))) for x in row])
        finally:
            if own:
                fh.close()


def load_raw(source, schema=None, default_categories=None) -> Dataset:
    """Read an RFC-4180 CSV with a header row.

    ``schema`` maps column names to a category count (ordinal) or ``None``
    (continuous); columns absent from the schema use ``default_categories``.
    Ordinal cells must be integers in 1..k. Blank/NA cells are missing.
    """
    schema = dict(schema or {})
    own = isinstance(source, (str, Path))
    fh = open(source, newline="", encoding="utf-8") if own else source
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty CSV: header row required") from None
        scales = {h: schema.get(h, default_categories) for h in header}
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            row = []
            for name, cell in zip(header, rec):
                cell = cell.strip()
                if cell in MISSING_TOKENS:
                    row.append(math.nan)
                    continue
                k = scales[name]
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(f"line {lineno}, column '{name}': not a number: {cell!r}") from None
                if k is not None:
                    if not x.is_integer():
                        raise DataError(f"line {lineno}, column '{name}': ordinal value {cell!r} is not an integer")
                    if not 1 <= x <= k:
                        raise DataError(f"line {lineno}, column '{name}': value {int(x)} outside 1..{k}")
                row.append(x)
            rows.append(row)
    finally:
        if own:
            fh.close()
    if not rows:
        raise DataError("CSV has a header but no data rows")
    return Dataset(tuple(header), np.array(rows, dtype=float), scales)


# ---------------------------------------------------------------------------
# summary matrices


@dataclass(frozen=True)
class SummaryData:
    names: tuple[str, ...]
    corr: np.ndarray
    sd: np.ndarray
    n: int
    mean: np.ndarray | None = None
    thresholds: dict | None = None
    gamma: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.corr, float)
        p = len(self.names)
        if r.shape != (p, p):
            raise DataError(f"correlation matrix is {r.shape}, expected {p} x {p}")
        if not np.allclose(r, r.T, atol=1e-12, rtol=0):
            raise DataError("correlation matrix is not symmetric")
        if np.any(np.abs(r) > 1 + 1e-12):
            i, j = np.argwhere(np.abs(r) > 1 + 1e-12)[0]
            raise DataError(f"|r| > 1 for ({self.names[i]}, {self.names[j]}): {r[i, j]}")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12):
            raise DataError("correlation matrix must have a unit diagonal")
        sd = np.asarray(self.sd, float)
        if sd.shape != (p,) or np.any(sd <= 0):
            raise DataError("need one positive SD per variable")
        if self.n is None or int(self.n) < 2:
            raise DataError("sample size n must be given and >= 2")
        object.__setattr__(self, "corr", r)
        object.__setattr__(self, "sd", sd)
        object.__setattr__(self, "n", int(self.n))
        lam = np.linalg.eigvalsh(self.to_covariance()).min()
        if lam < -1e-8:
            warnings.warn(f"reconstructed covariance is not PSD (smallest eigenvalue {lam:.3g})", stacklevel=2)

    def to_covariance(self) -> np.ndarray:
        return self.corr * np.outer(self.sd, self.sd)

    def select(self, names) -> SummaryData:
        names = tuple(names)
        missing = [v for v in names if v not in self.names]
        if missing:
            raise DataError(f"variables not in summary: {', '.join(missing)}")
        idx = [self.names.index(v) for v in names]
        return SummaryData(
            names,
            self.corr[np.ix_(idx, idx)],
            self.sd[idx],
            self.n,
            None if self.mean is None else np.asarray(self.mean)[idx],
            None if self.thresholds is None else {v: self.thresholds[v] for v in names if v in self.thresholds},
        )

    @classmethod
    def from_covariance(cls, names, cov, n, mean=None) -> SummaryData:
        cov = np.asarray(cov, float)
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        corr = 0.5 * (corr + corr.T)
        np.fill_diagonal(corr, 1.0)
        return cls(tuple(names), corr, sd, n, mean)


def to_covariance(summary: SummaryData) -> np.ndarray:
    return summary.to_covariance()


_SECTION = re.compile(r"^([A-Za-z_]+)\s*:\s*(.*)$")


def _lower_to_full(rows, p, what):
    """Square matrix from lower-triangle rows (with or without diagonal) or full rows."""
    m = np.zeros((p, p))
    lengths = [len(r) for r in rows]
    if lengths == list(range(1, p + 1)):
        for i, r in enumerate(rows):
            m[i, : i + 1] = r
        m = np.tril(m) + np.tril(m, -1).T
    elif lengths == list(range(1, p)):
        for i, r in enumerate(rows, start=1):
            m[i, :i] = r
        m = m + m.T
        np.fill_diagonal(m, np.nan)
    elif lengths == [p] * p:
        m = np.array(rows, float)
        if not np.allclose(m, m.T, atol=1e-12, rtol=0):
            raise DataError(f"{what} matrix is not symmetric")
    else:
        raise DataError(f"{what}: cannot read a {p}-variable matrix from rows of lengths {lengths}")
    return m


def parse_summary(text: str) -> SummaryData:
    """Parse the summary text format.

    Sections start with ``key:`` and run until the next key. Keys: ``names``,
    ``n``, ``corr`` or ``cov`` (lower triangle, one row per line), ``sd`` or
    ``var``, optional ``mean``, ``thresholds`` (``name t1 t2 ...`` per line)
    and ``gamma`` (full matrix rows).
    """
    sections: dict[str, list[list[str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).lower()
            if current in sections:
                raise DataError(f"line {lineno}: section '{current}' repeated")
            sections[current] = []
            rest = m.group(2).strip()
            if rest:
                sections[current].append(rest.split())
            continue
        if current is None:
            raise DataError(f"line {lineno}: data before the first section header")
        sections[current].append(line.split())

    def numbers(key):
        return [float(x) for row in sections[key] for x in row]

    if "names" not in sections:
        raise DataError("summary file needs a 'names' section")
    names = tuple(x for row in sections["names"] for x in row)
    p = len(names)
    if "n" not in sections:
        raise DataError("summary file needs an 'n' section")
    n = int(numbers("n")[0])

    if "cov" in sections:
        cov = _lower_to_full([[float(x) for x in r] for r in sections["cov"]], p, "cov")
        if np.isnan(cov).any():
            raise DataError("cov section must include the diagonal")
        summary = SummaryData.from_covariance(names, cov, n)
        corr, sd = summary.corr, summary.sd
    else:
        if "corr" not in sections:
            raise DataError("summary file needs a 'corr' or 'cov' section")
        corr = _lower_to_full([[float(x) for x in r] for r in sections["corr"]], p, "corr")
        corr[np.isnan(corr)] = 1.0
        if "sd" in sections:
            sd = np.array(numbers("sd"))
        elif "var" in sections:
            sd = np.sqrt(np.array(numbers("var")))
        else:
            raise DataError("summary file needs an 'sd' or 'var' section")
    mean = np.array(numbers("mean")) if "mean" in sections else None
    if mean is not None and mean.shape != (p,):
        raise DataError("mean section must have one value per variable")
    thresholds = None
    if "thresholds" in sections:
        thresholds = {row[0]: np.array([float(x) for x in row[1:]]) for row in sections["thresholds"]}
    gamma = None
    if "gamma" in sections:
        gamma = np.array([[float(x) for x in r] for r in sections["gamma"]])
    return SummaryData(names, corr, sd, n, mean, thresholds, gamma)


def load_summary(source) -> SummaryData:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return parse_summary(fh.read())
    return parse_summary(source.read())


def format_summary(summary: SummaryData, digits: int = 10) -> str:
    """Inverse of :func:`parse_summary` (full-precision lower triangle)."""
    out = io.StringIO()
    fmt = f"{{:.{digits}g}}"
    out.write("names: " + " ".join(summary.names) + "\n")
    out.write(f"n: {summary.n}\n")
    out.write("corr:\n")
    for i in range(len(summary.names)):
        out.write(" ".join(fmt.format(x) for x in summary.corr[i, : i + 1]) + "\n")
    out.write("sd: " + " ".join(fmt.format(x) for x in summary.sd) + "\n")
    if summary.mean is not None:
        out.write("mean: " + " ".join(fmt.format(x) for x in summary.mean) + "\n")
    if summary.thresholds:
        out.write("thresholds:\n")
        for name, tau in summary.thresholds.items():
            out.write(name + " " + " ".join(fmt.format(x) for x in tau) + "\n")
    if summary.gamma is not None:
        out.write("gamma:\n")
        for row in summary.gamma:
            out.write(" ".join(fmt.format(x) for x in row) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# descriptives and screening

SKEW_FORMULA = "G1 = g1 * sqrt(n(n-1)) / (n-2), g1 = m3 / m2^1.5"
KURTOSIS_FORMULA = "G2 = ((n+1) g2 + 6) (n-1) / ((n-2)(n-3)), g2 = m4 / m2^2 - 3"


@dataclass(frozen=True)
class Descriptive:
    name: str
    n: int
    mean: float
    sd: float
    skewness: float | None
    kurtosis: float | None


def describe_column(name, x) -> Descriptive:
    x = np.asarray(x, float)
    x = x[~np.isnan(x)]
    n = x.size
    mean = float(x.mean()) if n else math.nan
    sd = float(x.std(ddof=1)) if n > 1 else math.nan
    skew = kurt = None
    d = x - mean
    m2 = np.mean(d**2) if n else 0.0
    if n >= 3 and m2 > 0:
        g1 = np.mean(d**3) / m2**1.5
        skew = float(g1 * math.sqrt(n * (n - 1)) / (n - 2))
    if n >= 4 and m2 > 0:
        g2 = np.mean(d**4) / m2**2 - 3.0
        kurt = float(((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3)))
    if n > 1 and m2 == 0:
        sd = 0.0
    return Descriptive(name, n, mean, sd, skew, kurt)


def descriptives(data: Dataset) -> list[Descriptive]:
    """Mean, SD (n-1), and bias-adjusted skewness G1 / excess kurtosis G2.

    Zero-variance columns report ``None`` for skewness and kurtosis.
    """
    return [describe_column(v, data.values[:, j]) for j, v in enumerate(data.names)]


def univariate_outliers(data: Dataset, g: float = LABELING_G) -> np.ndarray:
    """Outlier labeling rule: flag x < Q1 - g IQR or x > Q3 + g IQR.

    Quartiles use linear interpolation (Hyndman-Fan type 7). Returns an
    n x p boolean mask; missing cells are never flagged.
    """
    x = data.values
    q1 = np.nanpercentile(x, 25, axis=0)
    q3 = np.nanpercentile(x, 75, axis=0)
    iqr = q3 - q1
    with np.errstate(invalid="ignore"):
        return (x < q1 - g * iqr) | (x > q3 + g * iqr)


@dataclass(frozen=True)
class MahalanobisResult:
    distances: np.ndarray
    flags: np.ndarray
    cutoff: float
    ridge: float = 0.0


def mahalanobis_outliers(data: Dataset, cutoff: float = MAHALANOBIS_CUTOFF, chi2_alpha: float | None = None):
    """Squared Mahalanobis distances from the sample centroid.

    Flags cases with D^2 >= ``cutoff``. With ``chi2_alpha`` the cutoff is the
    upper chi^2(p) quantile instead. Incomplete rows get NaN and no flag.
    A singular covariance gets a 1e-8 ridge, reported in the result.
    """
    x = data.values
    ok = ~np.isnan(x).any(axis=1)
    xc = x[ok]
    if xc.shape[0] < 2:
        raise DataError("need at least 2 complete cases")
    p = x.shape[1]
    if chi2_alpha is not None:
        cutoff = float(stats.chi2.ppf(1.0 - chi2_alpha, p))
    centre = xc.mean(axis=0)
    s = np.cov(xc, rowvar=False).reshape(p, p)
    ridge = 0.0
    try:
        c = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        ridge = 1e-8
        try:
            c = np.linalg.cholesky(s + ridge * np.eye(p))
        except np.linalg.LinAlgError:
            raise DataError("covariance matrix is singular even with a 1e-8 ridge") from None
        warnings.warn("singular covariance; Mahalanobis distances use a 1e-8 ridge", stacklevel=2)
    z = np.linalg.solve(c, (xc - centre).T)
    d2 = np.full(x.shape[0], np.nan)
    d2[ok] = np.sum(z * z, axis=0)
    flags = np.zeros(x.shape[0], bool)
    flags[ok] = d2[ok] >= cutoff
    return MahalanobisResult(d2, flags, cutoff, ridge)


@dataclass
class ScreeningReport:
    descriptives: list
    univariate_flags: np.ndarray
    mahalanobis: np.ndarray
    ledger: list  # (stage, excluded, remaining)
    removed: dict  # stage -> original row indices
    cleaned: Dataset
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ledger": [{"stage": s, "excluded": e, "size": n} for s, e, n in self.ledger],
            "descriptives": [d.__dict__ for d in self.descriptives],
            "univariate_outliers": int(self.univariate_flags.any(axis=1).sum()),
            "removed": {k: [int(i) for i in v] for k, v in self.removed.items()},
            "metadata": self.metadata,
        }


def screen(
    data: Dataset,
    cutoff: float = MAHALANOBIS_CUTOFF,
    chi2_alpha: float | None = None,
    g: float = LABELING_G,
) -> ScreeningReport:
    """Listwise deletion, then removal of multivariate outliers.

    Univariate outliers are labeled for the report but not removed.
    """
    idx = np.arange(data.n)
    ledger = [("Starting Sample", 0, data.n)]
    removed = {}
    inc = data.incomplete
    removed["Incomplete"] = idx[inc]
    ledger.append(("Incomplete", int(inc.sum()), int((~inc).sum())))
    complete = data.rows(~inc)
    kept = idx[~inc]
    mv = mahalanobis_outliers(complete, cutoff, chi2_alpha)
    removed["MV Outlier"] = kept[mv.flags]
    cleaned = complete.rows(~mv.flags)
    ledger.append(("MV Outlier", int(mv.flags.sum()), cleaned.n))
    d2 = np.full(data.n, np.nan)
    d2[kept] = mv.distances
    meta = {
        "skewness": SKEW_FORMULA,
        "kurtosis": KURTOSIS_FORMULA,
        "labeling_rule_g": g,
        "quartiles": "linear interpolation (type 7)",
        "mahalanobis_cutoff": mv.cutoff,
        "mahalanobis_ridge": mv.ridge,
    }
    return ScreeningReport(
        descriptives(cleaned),
        univariate_outliers(complete, g),
        d2,
        ledger,
        removed,
        cleaned,
        meta,
    )
