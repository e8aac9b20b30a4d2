"""Thresholds, polychoric correlations and their asymptotic covariance.

Estimation is two-step: thresholds come from each variable's marginal
proportions, then each correlation maximizes the bivariate-normal cell
likelihood with the thresholds held fixed. The asymptotic covariance
``gamma`` of the stacked estimates (all thresholds, then the correlations in
``np.tril_indices(p, -1)`` order) is the empirical second moment of per-case
influence functions, so that ``Var(estimate) ~= gamma / N``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .bivnorm import RHO_MAX, bvn_cdf, bvn_dcdf_dh, bvn_pdf
from .data_io import Dataset, SummaryData

GAMMA_VARIANT = "two-step influence functions, empirical outer product (sandwich)"
ESTIMATION = "two-step: marginal thresholds, then pairwise bivariate-normal ML"


class PolychoricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Thresholds:
    """Cut points for one ordinal variable.

    ``categories`` lists the observed (non-empty) category codes in order;
    ``tau`` has one fewer entry. ``collapsed`` names empty categories that
    were dropped.
    """

    tau: np.ndarray
    categories: tuple
    collapsed: tuple = ()

    @property
    def cuts(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.tau, [np.inf]])


def estimate_thresholds(counts, categories=None) -> Thresholds:
    """tau_j = Phi^-1(cumulative proportion through category j).

    Empty categories are collapsed (dropped) and reported.
    """
    counts = np.asarray(counts, float)
    if categories is None:
        categories = tuple(range(1, counts.size + 1))
    if counts.sum() <= 0:
        raise ValueError("total count must be positive")
    keep = counts > 0
    if keep.sum() < 2:
        raise ValueError("need at least two non-empty categories")
    collapsed = tuple(c for c, k in zip(categories, keep) if not k)
    kept = counts[keep]
    cum = np.cumsum(kept)[:-1] / kept.sum()
    return Thresholds(ndtri(cum), tuple(c for c, k in zip(categories, keep) if k), collapsed)


def _cell_probs(ti, tj, rho):
    """Cell probabilities and d/drho for cut vectors including +-inf ends."""
    H, K = np.meshgrid(ti, tj, indexing="ij")
    F = bvn_cdf(H, K, rho)
    f = bvn_pdf(H, K, rho)
    pi = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    dpi = f[1:, 1:] - f[:-1, 1:] - f[1:, :-1] + f[:-1, :-1]
    return np.maximum(pi, 1e-300), dpi


def _score_info(table, ti, tj, rho):
    pi, dpi = _cell_probs(ti, tj, rho)
    score = np.sum(table * dpi / pi)
    info = table.sum() * np.sum(dpi * dpi / pi)
    return score, info


def polychoric_pair(table, tau_i, tau_j, tol_grad=1e-8, tol_x=1e-10, max_iter=200):
    """Two-step ML polychoric correlation for one contingency table.

    Returns ``(rho, clamped)``. Fisher scoring inside a shrinking bracket on
    [-0.999, 0.999]; steps leaving the bracket fall back to bisection. Stops
    when |d loglik / d rho| < ``tol_grad`` or the bracket is narrower than
    ``tol_x``.
    """
    table = np.asarray(table, float)
    ti = np.concatenate([[-np.inf], np.asarray(tau_i, float), [np.inf]])
    tj = np.concatenate([[-np.inf], np.asarray(tau_j, float), [np.inf]])
    if table.shape != (ti.size - 1, tj.size - 1):
        raise ValueError(f"table shape {table.shape} does not match thresholds")
    lo, hi = -RHO_MAX, RHO_MAX
    s_hi, _ = _score_info(table, ti, tj, hi)
    if s_hi >= 0:
        return hi, True
    s_lo, _ = _score_info(table, ti, tj, lo)
    if s_lo <= 0:
        return lo, True

    # starting value: correlation of normal scores
    n = table.sum()
    mi = _normal_scores(ti)
    mj = _normal_scores(tj)
    pr = table.sum(1) / n
    pc = table.sum(0) / n
    ei, ej = pr @ mi, pc @ mj
    vi = pr @ (mi - ei) ** 2
    vj = pc @ (mj - ej) ** 2
    rho = float(np.clip(((mi - ei) @ table @ (mj - ej)) / n / np.sqrt(vi * vj), -0.9, 0.9)) if vi > 0 and vj > 0 else 0.0

    for _ in range(max_iter):
        score, info = _score_info(table, ti, tj, rho)
        if abs(score) < tol_grad:
            break
        if score > 0:
            lo = rho
        else:
            hi = rho
        if hi - lo < tol_x:
            break
        step = rho + score / info
        rho = step if lo < step < hi else 0.5 * (lo + hi)
    return rho, False


def _normal_scores(cuts):
    """Conditional means of a standard normal within each category."""
    phi = np.exp(-0.5 * np.where(np.isfinite(cuts), cuts, 0.0) ** 2) / np.sqrt(2 * np.pi)
    phi = np.where(np.isfinite(cuts), phi, 0.0)
    p = np.diff(ndtr(cuts))
    return (phi[:-1] - phi[1:]) / np.maximum(p, 1e-300)


@dataclass
class PolychoricSummary:
    names: tuple
    corr: np.ndarray
    thresholds: dict  # name -> Thresholds
    n: int
    gamma: np.ndarray | None = None
    warnings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n_thresholds(self) -> int:
        return sum(t.tau.size for t in self.thresholds.values())

    @property
    def gamma_corr(self) -> np.ndarray:
        """Block of ``gamma`` for the correlations only."""
        k = self.n_thresholds
        return self.gamma[k:, k:]

    def to_summary(self) -> SummaryData:
        return SummaryData(
            tuple(self.names),
            self.corr,
            np.ones(len(self.names)),
            self.n,
            thresholds={v: t.tau for v, t in self.thresholds.items()},
            gamma=self.gamma,
        )


def _recode(x, categories):
    # collapsed categories are empty, so every value has an exact match
    return np.searchsorted(np.asarray(categories, float), x).astype(np.intp)


def polychoric_matrix(data: Dataset, with_gamma: bool = True) -> PolychoricSummary:
    """Pairwise polychoric correlations, thresholds and (optionally) gamma.

    Uses complete cases only. Non-positive-definite results are reported as
    a warning with the smallest eigenvalue.
    """
    data = data.complete_cases()
    names = data.names
    n, p = data.values.shape
    notes = []
    thresholds = {}
    codes = np.empty((n, p), dtype=np.intp)
    for j, v in enumerate(names):
        col = data.values[:, j]
        k = data.scales.get(v)
        cats = tuple(range(1, int(k) + 1)) if k else tuple(sorted(np.unique(col)))
        counts = np.array([(col == c).sum() for c in cats])
        th = estimate_thresholds(counts, cats)
        if th.collapsed:
            notes.append(f"{v}: empty categories collapsed: {list(th.collapsed)}")
        thresholds[v] = th
        codes[:, j] = _recode(col, th.categories)

    R = np.eye(p)
    pairs = list(zip(*np.tril_indices(p, -1)))
    for i, j in pairs:
        ki, kj = thresholds[names[i]].tau.size + 1, thresholds[names[j]].tau.size + 1
        tab = np.bincount(codes[:, i] * kj + codes[:, j], minlength=ki * kj).reshape(ki, kj)
        rho, clamped = polychoric_pair(tab, thresholds[names[i]].tau, thresholds[names[j]].tau)
        if clamped:
            msg = f"({names[i]}, {names[j]}): perfect association, rho clamped to {rho:+.3f}"
            notes.append(msg)
            warnings.warn(msg, PolychoricWarning, stacklevel=2)
        R[i, j] = R[j, i] = rho

    lam = float(np.linalg.eigvalsh(R).min())
    if lam <= 0:
        msg = f"polychoric matrix is not positive definite (smallest eigenvalue {lam:.3g})"
        notes.append(msg)
        warnings.warn(msg, PolychoricWarning, stacklevel=2)

    gamma = _gamma(codes, names, thresholds, R, pairs) if with_gamma else None
    meta = {"estimation": ESTIMATION, "gamma": GAMMA_VARIANT if with_gamma else None, "n": n}
    return PolychoricSummary(tuple(names), R, thresholds, n, gamma, notes, meta)


def _gamma(codes, names, thresholds, R, pairs):
    n, p = codes.shape
    offsets = np.cumsum([0] + [thresholds[v].tau.size for v in names])
    n_tau = offsets[-1]
    Z = np.empty((n, n_tau + len(pairs)))

    # threshold influence: (1{x <= c} - P_c) / phi(tau_c), tabulated per category
    tau_if = []
    for j, v in enumerate(names):
        tau = thresholds[v].tau
        k = tau.size + 1
        P = np.cumsum(np.bincount(codes[:, j], minlength=k))[:-1] / n
        dens = np.exp(-0.5 * tau**2) / np.sqrt(2 * np.pi)
        table = (np.arange(k)[:, None] <= np.arange(k - 1)[None, :]).astype(float)
        table = (table - P[None, :]) / dens[None, :]
        tau_if.append(table)  # category x threshold
        Z[:, offsets[j] : offsets[j + 1]] = table[codes[:, j]]

    for col, (i, j) in enumerate(pairs):
        rho = R[i, j]
        ti = thresholds[names[i]].cuts
        tj = thresholds[names[j]].cuts
        pi, dpi = _cell_probs(ti, tj, rho)
        info = np.sum(dpi * dpi / pi)
        cell_score = dpi / pi
        # d pi / d tau for each finite cut of variable i and j
        H, K = np.meshgrid(ti, tj, indexing="ij")
        Gi = bvn_dcdf_dh(H, K, rho)  # dF/dh at each corner
        Gj = bvn_dcdf_dh(K.T, H.T, rho).T  # dF/dk at each corner
        # E[d score / d tau] = -sum dpi * dpi_dtau / pi
        a_i = np.empty(ti.size - 2)
        for c in range(1, ti.size - 1):
            row = Gi[c, 1:] - Gi[c, :-1]  # d/dtau of F(tau_c, .) differences across columns
            dpi_dt = np.zeros_like(pi)
            dpi_dt[c - 1, :] += row
            dpi_dt[c, :] -= row
            a_i[c - 1] = -np.sum(dpi * dpi_dt / pi)
        a_j = np.empty(tj.size - 2)
        for c in range(1, tj.size - 1):
            colv = Gj[1:, c] - Gj[:-1, c]
            dpi_dt = np.zeros_like(pi)
            dpi_dt[:, c - 1] += colv
            dpi_dt[:, c] -= colv
            a_j[c - 1] = -np.sum(dpi * dpi_dt / pi)
        adj_i = tau_if[i] @ a_i  # per category of variable i
        adj_j = tau_if[j] @ a_j
        xi, xj = codes[:, i], codes[:, j]
        Z[:, n_tau + col] = (cell_score[xi, xj] + adj_i[xi] + adj_j[xj]) / info

    gamma = Z.T @ Z / n
    return 0.5 * (gamma + gamma.T)
