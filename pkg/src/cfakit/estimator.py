"""Model-implied moments, ML/DWLS discrepancy functions and model fitting.

Latent structure: first-order factors eta1 (m) and second-order factors
eta2 (h) with eta1 = B eta2 + zeta. The first-order factor covariance is

    Phi = B psi2 B' + Psi

and the indicators have Sigma = Lambda Phi Lambda' + Theta. Exogenous latent
variables (second-order factors and first-order factors without a parent)
may covary; internally the cross block lives in a joint (m + h) covariance.
Under the delta parameterization Theta is not free but set so that
diag(Sigma) = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model_spec import (
    COVARIANCE,
    COVARIANCE_METRIC,
    DELTA_ORDINAL,
    LOADING,
    SECOND_ORDER_LOADING,
    VARIANCE,
    ParameterTable,
    degrees_of_freedom,
)
from .optimize import bfgs, central_gradient

ML = "ML"
DWLS = "DWLS"


class HeywoodWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LatentMatrices:
    """Numeric model matrices at one parameter vector."""

    Lambda: np.ndarray  # p x m
    B: np.ndarray  # m x h
    psi2: np.ndarray  # h x h
    Psi: np.ndarray  # m x m
    Theta: np.ndarray  # p x p, diagonal
    cov_latent: np.ndarray  # (m + h) x (m + h)

    @property
    def Phi(self) -> np.ndarray:
        m = self.Lambda.shape[1]
        return self.cov_latent[:m, :m]


class ModelMatrices:
    """Maps a free-parameter vector into the model matrices of a table."""

    def __init__(self, table: ParameterTable):
        spec = table.spec
        self.table = table
        self.indicators = spec.indicators
        self.first = spec.first_order_names
        self.second = spec.second_order_names
        self.p, self.m, self.h = len(self.indicators), len(self.first), len(self.second)
        self.delta = table.parameterization == DELTA_ORDINAL
        latent = {f: i for i, f in enumerate(self.first + self.second)}
        obs = {v: i for i, v in enumerate(self.indicators)}
        L = self.m + self.h
        self._lam0 = np.zeros((self.p, self.m))
        self._beta0 = np.zeros((L, L))
        self._psi0 = np.zeros((L, L))
        self._theta0 = np.zeros(self.p)
        self._lam_free, self._beta_free, self._psi_free, self._theta_free = [], [], [], []
        for r in table.rows:
            if r.relation == LOADING:
                loc, base, free = (obs[r.rhs], latent[r.lhs]), self._lam0, self._lam_free
            elif r.relation == SECOND_ORDER_LOADING:
                loc, base, free = (latent[r.rhs], latent[r.lhs]), self._beta0, self._beta_free
            elif r.relation in (VARIANCE, COVARIANCE) and r.lhs in obs:
                loc, base, free = (obs[r.lhs],), self._theta0, self._theta_free
            else:
                a, b = latent[r.lhs], latent[r.rhs]
                loc, base, free = (max(a, b), min(a, b)), self._psi0, self._psi_free
            if r.free is not None:
                free.append((r.free, *loc))
            elif r.value is not None:
                base[loc] = r.value
                if base is self._psi0:
                    base[loc[::-1]] = r.value
        self.q = table.n_free

    # -- evaluation -------------------------------------------------------

    def evaluate(self, theta) -> LatentMatrices:
        theta = np.asarray(theta, float)
        lam = self._lam0.copy()
        for k, i, j in self._lam_free:
            lam[i, j] = theta[k]
        beta = self._beta0.copy()
        for k, i, j in self._beta_free:
            beta[i, j] = theta[k]
        psi = self._psi0.copy()
        for k, i, j in self._psi_free:
            psi[i, j] = psi[j, i] = theta[k]
        A = np.eye(self.m + self.h) + beta
        cov = A @ psi @ A.T
        phi = cov[: self.m, : self.m]
        if self.delta:
            common = np.einsum("ij,jk,ik->i", lam, phi, lam)
            th = 1.0 - common
        else:
            th = self._theta0.copy()
            for k, i in self._theta_free:
                th[i] = theta[k]
        m = self.m
        return LatentMatrices(lam, beta[:m, m:], psi[m:, m:], psi[:m, :m], np.diag(th), cov)

    def sigma(self, theta) -> np.ndarray:
        mats = self.evaluate(theta)
        S = mats.Lambda @ mats.Phi @ mats.Lambda.T + mats.Theta
        if self.delta:
            np.fill_diagonal(S, 1.0)
        return S

    def dsigma(self, theta) -> np.ndarray:
        """Analytic derivatives: array of shape (q, p, p)."""
        theta = np.asarray(theta, float)
        mats = self.evaluate(theta)
        m = self.m
        L = self.m + self.h
        lam_full = np.zeros((self.p, L))
        lam_full[:, :m] = mats.Lambda
        beta = np.zeros((L, L))
        beta[:m, m:] = mats.B
        A = np.eye(L) + beta
        psi = np.linalg.solve(A, np.linalg.solve(A, mats.cov_latent).T).T  # A^-1 cov A^-T
        M = lam_full @ A
        D = np.zeros((self.q, self.p, self.p))
        phi_lt = mats.cov_latent[:m, :m] @ mats.Lambda.T  # m x p
        for k, i, j in self._lam_free:
            D[k, i, :] += phi_lt[j]
            D[k, :, i] += phi_lt[j]
        for k, i, j in self._beta_free:
            v = lam_full[:, i]
            w = lam_full @ A @ psi[:, j]
            D[k] += np.outer(v, w) + np.outer(w, v)
        for k, i, j in self._psi_free:
            if i == j:
                D[k] += np.outer(M[:, i], M[:, i])
            else:
                D[k] += np.outer(M[:, i], M[:, j]) + np.outer(M[:, j], M[:, i])
        for k, i in self._theta_free:
            D[k, i, i] += 1.0
        if self.delta:
            idx = np.arange(self.p)
            D[:, idx, idx] = 0.0
        return D

    def start(self, sample=None) -> np.ndarray:
        x = np.zeros(self.q)
        for r in self.table.free_rows:
            if r.start is not None:
                x[r.free] = r.start
            else:
                i = self.indicators.index(r.lhs)
                x[r.free] = 0.5 * (sample[i, i] if sample is not None else 1.0)
        return x


def implied_sigma(matrices: ModelMatrices, theta) -> np.ndarray:
    return matrices.sigma(theta)


def moment_indices(p: int, parameterization: str):
    if parameterization == DELTA_ORDINAL:
        return np.tril_indices(p, -1)
    return np.tril_indices(p)


# ---------------------------------------------------------------------------
# discrepancy functions


def f_ml(S, Sigma) -> float:
    """ln|Sigma| + tr(S Sigma^-1) - ln|S| - p; ``inf`` when Sigma is not PD."""
    S = np.asarray(S, float)
    Sigma = np.asarray(Sigma, float)
    try:
        c = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return np.inf
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(c)))
    sign, logdet_s = np.linalg.slogdet(S)
    if sign <= 0:
        raise ValueError("sample covariance is not positive definite")
    z = np.linalg.solve(c, S)
    tr = np.trace(np.linalg.solve(c, z.T))  # tr(C^-1 S C^-T) = tr(S Sigma^-1)
    return float(logdet_sigma + tr - logdet_s - S.shape[0])


def f_dwls(s, sigma, w, labels=None) -> float:
    """sum (s_k - sigma_k)^2 / w_k."""
    s = np.asarray(s, float)
    sigma = np.asarray(sigma, float)
    w = np.asarray(w, float)
    bad = np.flatnonzero(w <= 0)
    if bad.size:
        k = bad[0]
        name = labels[k] if labels is not None else f"moment {k}"
        raise ValueError(f"non-positive DWLS weight for {name}")
    r = s - sigma
    return float(np.sum(r * r / w))


# ---------------------------------------------------------------------------
# moments


@dataclass
class MomentData:
    """Sample moments consumed by :func:`fit`.

    ``kind`` is ``"covariance"`` or ``"correlation"``. ``gamma`` is the
    asymptotic covariance (times N) of the moment vector, stacked in
    ``moment_indices`` order for the matching parameterization; ``weights``
    default to its diagonal.
    """

    names: tuple
    sample: np.ndarray
    n: int
    kind: str = "covariance"
    gamma: np.ndarray | None = None
    weights: np.ndarray | None = None
    thresholds: dict | None = None
    source: str = ""

    def __post_init__(self):
        self.sample = np.asarray(self.sample, float)
        if self.weights is None and self.gamma is not None:
            self.weights = np.diag(self.gamma).copy()

    @property
    def includes_diagonal(self) -> bool:
        p = len(self.names)
        k = None
        if self.gamma is not None:
            k = self.gamma.shape[0]
        elif self.weights is not None:
            k = len(self.weights)
        return k == p * (p + 1) // 2 if k is not None else self.kind == "covariance"

    @classmethod
    def from_summary(cls, summary) -> MomentData:
        return cls(tuple(summary.names), summary.to_covariance(), summary.n, "covariance", source="summary")

    @classmethod
    def from_polychoric(cls, poly) -> MomentData:
        return cls(
            tuple(poly.names),
            poly.corr,
            poly.n,
            "correlation",
            gamma=poly.gamma_corr if poly.gamma is not None else None,
            thresholds={v: t.tau for v, t in poly.thresholds.items()},
            source="polychoric",
        )

    @classmethod
    def from_dataset(cls, data, with_gamma=False) -> MomentData:
        """Covariance of complete cases; optional distribution-free gamma."""
        x = data.complete_cases().values
        n, p = x.shape
        S = np.cov(x, rowvar=False)
        gamma = None
        if with_gamma:
            d = x - x.mean(axis=0)
            i, j = np.tril_indices(p)
            prods = d[:, i] * d[:, j]
            gamma = np.cov(prods, rowvar=False, bias=True)
        return cls(tuple(data.names), S, n, "covariance", gamma=gamma, source="raw")

    def select(self, names) -> MomentData:
        names = tuple(names)
        missing = [v for v in names if v not in self.names]
        if missing:
            raise ValueError(f"variables not in the moment data: {', '.join(missing)}")
        if names == self.names:
            return self
        idx = [self.names.index(v) for v in names]
        sub = self.sample[np.ix_(idx, idx)]
        gamma = weights = None
        if self.gamma is not None or self.weights is not None:
            diag = self.includes_diagonal
            p_old = len(self.names)
            old = {}
            for k, (a, b) in enumerate(zip(*np.tril_indices(p_old, 0 if diag else -1))):
                old[(a, b)] = old[(b, a)] = k
            pos = [old[(idx[a], idx[b])] for a, b in zip(*np.tril_indices(len(names), 0 if diag else -1))]
            if self.gamma is not None:
                gamma = self.gamma[np.ix_(pos, pos)]
            if self.weights is not None:
                weights = np.asarray(self.weights)[pos]
        th = None if self.thresholds is None else {v: self.thresholds[v] for v in names if v in self.thresholds}
        return MomentData(names, sub, self.n, self.kind, gamma, weights, th, self.source)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class StandardizedSolution:
    loadings: dict  # indicator -> beta
    r2: dict  # indicator or first-order factor -> R^2
    second_order: dict  # (higher, lower) -> standardized loading
    factor_corr: np.ndarray  # first-order factor correlations
    residual_variances: dict  # indicator -> theta_ii / sigma_ii
    se: dict = field(default_factory=dict)  # label -> SE of the standardized value


@dataclass
class FitResult:
    table: ParameterTable
    moments: MomentData
    estimator: str
    theta: np.ndarray
    fmin: float
    sigma: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    n: int
    df: int
    standardized: StandardizedSolution | None = None
    heywood: list = field(default_factory=list)
    message: str = ""

    @property
    def model(self) -> ModelMatrices:
        return ModelMatrices(self.table)

    @property
    def matrices(self) -> LatentMatrices:
        return self.model.evaluate(self.theta)

    @property
    def multiplier(self) -> int:
        return self.n - 1 if self.estimator == ML else self.n

    @property
    def moment_vector(self):
        i, j = moment_indices(len(self.moments.names), self.table.parameterization)
        return self.moments.sample[i, j], self.sigma[i, j]

    def jacobian(self) -> np.ndarray:
        """d sigma(theta) / d theta' in moment order: (n_moments, q)."""
        i, j = moment_indices(len(self.moments.names), self.table.parameterization)
        return self.model.dsigma(self.theta)[:, i, j].T

    def parameters(self) -> list[dict]:
        """One record per table row: estimate, SE, z, p and standardized value."""
        mats = self.matrices
        std = self.standardized
        out = []
        ind = list(self.table.spec.indicators)
        for r in self.table.rows:
            if r.free is not None:
                est = float(self.theta[r.free])
                se = float(self.se[r.free])
            elif r.constrained:
                est = float(mats.Theta[ind.index(r.lhs), ind.index(r.lhs)])
                se = np.nan
            else:
                est, se = float(r.value), np.nan
            z = est / se if se and np.isfinite(se) and se > 0 else np.nan
            pval = 2 * stats.norm.sf(abs(z)) if np.isfinite(z) else np.nan
            beta = beta_se = None
            if std is not None:
                if r.relation == LOADING:
                    beta = std.loadings[r.rhs]
                elif r.relation == SECOND_ORDER_LOADING:
                    beta = std.second_order[(r.lhs, r.rhs)]
                elif r.relation == VARIANCE and r.lhs in std.residual_variances:
                    beta = std.residual_variances[r.lhs]
                beta_se = std.se.get(r.label)
            out.append(
                {
                    "lhs": r.lhs,
                    "relation": r.relation,
                    "rhs": r.rhs,
                    "label": r.label,
                    "free": r.free is not None,
                    "constrained": r.constrained,
                    "estimate": est,
                    "se": se,
                    "z": z,
                    "p": pval,
                    "std": beta,
                    "std_se": beta_se,
                }
            )
        return out


def _check_inputs(table, moments, estimator):
    if estimator not in (ML, DWLS):
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == ML and moments.kind != "covariance":
        raise ValueError("ML estimation needs covariance input")
    if estimator == DWLS and moments.weights is None:
        raise ValueError("DWLS estimation needs weights (polychoric gamma or explicit weights)")
    if table.parameterization == DELTA_ORDINAL:
        if estimator == ML:
            raise ValueError("the delta parameterization is for DWLS on correlations")
        if not np.allclose(np.diag(moments.sample), 1.0):
            raise ValueError("the delta parameterization needs a correlation matrix")


def discrepancy(model: ModelMatrices, mom: MomentData, estimator: str):
    """``(F, dF/dtheta)`` closures for one model and one set of moments.

    ``mom`` must already be ordered like the model's indicators.
    """
    names = model.indicators
    if tuple(mom.names) != tuple(names):
        raise ValueError("moment variables are not in model order; use MomentData.select")
    S = mom.sample
    if estimator == ML:

        def objective(th):
            return f_ml(S, model.sigma(th))

        def gradient(th):
            Sig = model.sigma(th)
            try:
                Si = np.linalg.inv(Sig)
            except np.linalg.LinAlgError:
                return np.full(model.q, np.nan)
            return np.einsum("kij,ij->k", model.dsigma(th), Si @ (Sig - S) @ Si)

        return objective, gradient

    iu, ju = moment_indices(len(names), model.table.parameterization)
    s_vec = S[iu, ju]
    w = np.asarray(mom.weights, float)
    if w.size != s_vec.size:
        raise ValueError(f"{w.size} weights for {s_vec.size} moments")
    f_dwls(s_vec, s_vec, w, [f"({names[a]}, {names[b]})" for a, b in zip(iu, ju)])  # validates weights

    def objective(th):
        return f_dwls(s_vec, model.sigma(th)[iu, ju], w)

    def gradient(th):
        r = s_vec - model.sigma(th)[iu, ju]
        return -2.0 * model.dsigma(th)[:, iu, ju] @ (r / w)

    return objective, gradient


def fit(
    table: ParameterTable,
    moments: MomentData,
    estimator: str = ML,
    *,
    analytic_gradient: bool = False,
    start=None,
    max_iter: int = 500,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    compute_se: bool = True,
) -> FitResult:
    """Minimize the ML or DWLS discrepancy over the free parameters.

    Gradients are central differences unless ``analytic_gradient``. Standard
    errors: ML from the numerical Hessian, ``2 / (N - 1) * H^-1``; DWLS from
    the sandwich ``A Delta' W^-1 Gamma W^-1 Delta A / N`` with
    ``A = (Delta' W^-1 Delta)^-1``.
    """
    _check_inputs(table, moments, estimator)
    mom = moments.select(table.spec.indicators)
    df = degrees_of_freedom(table, len(mom.names))  # raises before any optimization
    model = ModelMatrices(table)
    iu, ju = moment_indices(len(mom.names), table.parameterization)
    S = mom.sample
    objective, agrad = discrepancy(model, mom, estimator)

    x0 = model.start(S) if start is None else np.asarray(start, float)
    grad = agrad if analytic_gradient else (lambda th: central_gradient(objective, th))
    opt = bfgs(objective, x0, grad, gtol=gtol, ftol=ftol, max_iter=max_iter)
    theta = opt.x
    Sigma = model.sigma(theta)
    if not opt.converged:
        warnings.warn(
            f"{estimator} fit did not converge after {opt.iterations} iterations "
            f"(gradient inf-norm {opt.grad_norm:.3g}): {opt.message}",
            ConvergenceWarning,
            stacklevel=2,
        )

    q = model.q
    vcov = np.full((q, q), np.nan)
    if compute_se and q:
        vcov = _vcov(model, theta, mom, estimator, agrad, iu, ju)
    se = np.sqrt(np.where(np.diag(vcov) >= 0, np.diag(vcov), np.nan))

    res = FitResult(
        table=table,
        moments=mom,
        estimator=estimator,
        theta=theta,
        fmin=float(opt.fun),
        sigma=Sigma,
        se=se,
        vcov=vcov,
        converged=opt.converged,
        iterations=opt.iterations,
        grad_norm=opt.grad_norm,
        n=mom.n,
        df=df,
        message=opt.message,
    )
    res.heywood = heywood_cases(res)
    if res.heywood:
        warnings.warn("Heywood case: " + "; ".join(res.heywood), HeywoodWarning, stacklevel=2)
    try:
        res.standardized = standardize(res, with_se=compute_se)
    except ValueError as exc:
        res.message += f"; standardization failed: {exc}"
    return res


def _vcov(model, theta, mom, estimator, agrad, iu, ju):
    q = model.q
    if estimator == ML:
        H = np.empty((q, q))
        for k in range(q):
            h = 1e-5 * max(1.0, abs(theta[k]))
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            H[:, k] = (agrad(tp) - agrad(tm)) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            return 2.0 / (mom.n - 1) * np.linalg.inv(H)
        except np.linalg.LinAlgError:
            return np.full((q, q), np.nan)
    D = model.dsigma(theta)[:, iu, ju].T
    Winv = 1.0 / np.asarray(mom.weights, float)
    DtW = D.T * Winv
    try:
        A = np.linalg.inv(DtW @ D)
    except np.linalg.LinAlgError:
        return np.full((q, q), np.nan)
    G = mom.gamma if mom.gamma is not None else np.diag(mom.weights)
    return A @ DtW @ G @ DtW.T @ A / mom.n


def heywood_cases(res: FitResult) -> list[str]:
    mats = res.matrices
    out = []
    for v, th in zip(res.table.spec.indicators, np.diag(mats.Theta)):
        if th < 0:
            out.append(f"negative residual variance for {v} ({th:.4g})")
    for f, d in zip(res.table.spec.first_order_names, np.diag(mats.Psi)):
        if d < 0:
            out.append(f"negative (disturbance) variance for {f} ({d:.4g})")
    return out


def _std_values(model: ModelMatrices, theta):
    mats = model.evaluate(theta)
    Sigma = model.sigma(theta)
    spec = model.table.spec
    phi = mats.Phi
    cov = mats.cov_latent
    m = model.m
    sd_obs = np.sqrt(np.diag(Sigma))
    sd_lat = np.sqrt(np.diag(cov))
    vals = {}
    loads = {}
    for j, (f, items) in enumerate(spec.factors):
        for v in items:
            i = model.indicators.index(v)
            loads[v] = mats.Lambda[i, j] * sd_lat[j] / sd_obs[i]
            vals[f"{f}=~{v}"] = loads[v]
    second = {}
    for k, (hname, lower) in enumerate(spec.second_order):
        for f in lower:
            j = model.first.index(f)
            b = mats.B[j, k] * sd_lat[m + k] / sd_lat[j]
            second[(hname, f)] = b
            vals[f"{hname}=~{f}"] = b
    resid = {v: mats.Theta[i, i] / Sigma[i, i] for i, v in enumerate(model.indicators)}
    for v, x in resid.items():
        vals[f"{v}~~{v}"] = x
    return loads, second, resid, phi, vals


def standardize(res: FitResult, with_se: bool = True) -> StandardizedSolution:
    """STDALL solution: every observed and latent variable scaled to unit variance."""
    model = res.model
    Sigma = model.sigma(res.theta)
    if np.any(np.diag(Sigma) <= 0):
        raise ValueError("zero or negative implied variance")
    loads, second, resid, phi, vals = _std_values(model, res.theta)
    d = np.sqrt(np.diag(phi))
    fcorr = phi / np.outer(d, d)
    r2 = {v: b * b for v, b in loads.items()}
    for (_, f), b in second.items():
        r2[f] = b * b
    se = {}
    if with_se and model.q and np.all(np.isfinite(res.vcov)):
        keys = list(vals)
        base = np.array([vals[k] for k in keys])
        J = np.empty((len(keys), model.q))
        for k in range(model.q):
            h = 1e-6 * max(1.0, abs(res.theta[k]))
            tp, tm = res.theta.copy(), res.theta.copy()
            tp[k] += h
            tm[k] -= h
            vp = _std_values(model, tp)[4]
            vm = _std_values(model, tm)[4]
            J[:, k] = [(vp[x] - vm[x]) / (2 * h) for x in keys]
        var = np.einsum("ik,kl,il->i", J, res.vcov, J)
        for key, v, b in zip(keys, var, base):
            se[key] = float(np.sqrt(v)) if v > 1e-20 else np.nan
    return StandardizedSolution(loads, r2, second, fcorr, resid, se)


def implied_correlation(Sigma) -> np.ndarray:
    d = np.sqrt(np.diag(Sigma))
    return Sigma / np.outer(d, d)
