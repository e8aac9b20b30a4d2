"""Data generation from a fully specified CFA model and Monte Carlo calibration.

Random streams: numpy ``PCG64`` bit generators seeded from
``SeedSequence(seed).spawn(reps)``, so every replication has an independent
stream determined only by the master seed and its index.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .data_io import Dataset, load_summary
from .estimator import DWLS, ML, ConvergenceWarning, HeywoodWarning, MomentData, ModelMatrices, fit, _std_values
from .fit_stats import chi_square, robust_chi_square
from .model_spec import COVARIANCE_METRIC, DELTA_ORDINAL, MARKER, ParameterTable, build_parameter_table, read_model
from .polychoric import PolychoricWarning, polychoric_matrix

RNG_ALGORITHM = "numpy PCG64, per-replication streams from SeedSequence.spawn"
CONTINUOUS = "continuous"
ORDINAL = "ordinal"


@dataclass(frozen=True)
class SimSpec:
    """Generating model: a parameter table with every free value supplied."""

    table: ParameterTable
    theta: np.ndarray
    n: int
    seed: int = 0
    thresholds: dict | None = None  # indicator -> increasing cut points

    def __post_init__(self):
        theta = np.asarray(self.theta, float)
        if theta.shape != (self.table.n_free,):
            raise ValueError(f"theta has {theta.size} values for {self.table.n_free} free parameters")
        object.__setattr__(self, "theta", theta)
        if self.n < 1:
            raise ValueError("N must be positive")
        try:
            np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError:
            raise ValueError("implied covariance is not positive definite") from None
        if self.thresholds is not None:
            missing = [v for v in self.names if v not in self.thresholds]
            if missing:
                raise ValueError(f"no thresholds for {', '.join(missing)}")
            for v, t in self.thresholds.items():
                if np.any(np.diff(np.asarray(t, float)) <= 0):
                    raise ValueError(f"thresholds for {v} are not strictly increasing")

    @property
    def names(self) -> tuple:
        return self.table.spec.indicators

    @property
    def sigma(self) -> np.ndarray:
        return ModelMatrices(self.table).sigma(self.theta)

    def standardized_truth(self) -> dict:
        return _std_values(ModelMatrices(self.table), self.theta)[4]


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate_continuous(spec: SimSpec, rng=None) -> Dataset:
    """Multivariate-normal rows with covariance Sigma(theta)."""
    rng = _rng(spec.seed) if rng is None else rng
    L = np.linalg.cholesky(spec.sigma)
    z = rng.standard_normal((spec.n, L.shape[0]))
    return Dataset(spec.names, z @ L.T, {v: None for v in spec.names})


def discretize(x, cuts) -> np.ndarray:
    """Categories 1..k from a continuous column and k - 1 cut points."""
    return np.searchsorted(np.asarray(cuts, float), x, side="left") + 1.0


def generate_ordinal(spec: SimSpec, rng=None) -> Dataset:
    """Normal latent responses cut into ordered categories 1..k per item."""
    if spec.thresholds is None:
        raise ValueError("ordinal generation needs thresholds")
    if not np.allclose(np.diag(spec.sigma), 1.0, atol=1e-10):
        raise ValueError("ordinal generation needs a unit-diagonal latent covariance")
    latent = generate_continuous(spec, rng)
    cols, scales = [], {}
    for j, v in enumerate(spec.names):
        cuts = np.asarray(spec.thresholds[v], float)
        cols.append(discretize(latent.values[:, j], cuts))
        scales[v] = cuts.size + 1
    return Dataset(spec.names, np.column_stack(cols), scales)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class EstimatorPlan:
    """How one estimator treats each simulated dataset."""

    estimator: str
    table: ParameterTable

    @property
    def label(self) -> str:
        return f"{self.estimator}/{self.table.parameterization}"


def default_plans(spec: SimSpec, estimators=(ML, DWLS)) -> list[EstimatorPlan]:
    """ML on covariances (covariance metric), DWLS on polychorics (delta)."""
    plans = []
    for est in estimators:
        if est == ML:
            tab = build_parameter_table(spec.table.spec, spec.table.scaling, COVARIANCE_METRIC)
        elif est == DWLS:
            tab = build_parameter_table(spec.table.spec, spec.table.scaling, DELTA_ORDINAL)
        else:
            raise ValueError(f"unknown estimator {est!r}")
        plans.append(EstimatorPlan(est, tab))
    return plans


@dataclass
class RepResult:
    index: int
    estimator: str
    ok: bool
    estimates: dict = field(default_factory=dict)  # standardized label -> value
    ses: dict = field(default_factory=dict)
    statistic: float = np.nan
    p: float = np.nan
    p_plain: float = np.nan
    error: str = ""


def _one_rep(spec: SimSpec, plans, data_kind, seed_seq, index, alpha):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    data = generate_ordinal(spec, rng) if data_kind == ORDINAL else generate_continuous(spec, rng)
    out = []
    poly = None
    for plan in plans:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", (HeywoodWarning, PolychoricWarning))
                warnings.simplefilter("error", ConvergenceWarning)
                if plan.estimator == ML:
                    mom = MomentData.from_dataset(data)
                else:
                    if poly is None:
                        poly = polychoric_matrix(data) if data_kind == ORDINAL else None
                    mom = MomentData.from_polychoric(poly) if poly is not None else MomentData.from_dataset(data, True)
                res = fit(plan.table, mom, plan.estimator, analytic_gradient=True)
            plain = chi_square(res)
            stat = robust_chi_square(res) if plan.estimator == DWLS else plain
            std = res.standardized
            est = _std_values(res.model, res.theta)[4]
            out.append(RepResult(index, plan.label, True, est, dict(std.se), stat.statistic, stat.p, plain.p))
        except (ValueError, np.linalg.LinAlgError, ConvergenceWarning) as exc:
            out.append(RepResult(index, plan.label, False, error=f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class Calibration:
    estimator: str
    reps: int
    failures: int
    rejection_rate: float
    rejection_rate_plain: float
    parameters: dict  # label -> {"true", "mean", "bias", "rmse", "sd", "mean_se", "se_ratio"}
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and not np.isfinite(x) else x

        return {
            "estimator": self.estimator,
            "reps": self.reps,
            "failures": self.failures,
            "rejection_rate": clean(self.rejection_rate),
            "rejection_rate_plain": clean(self.rejection_rate_plain),
            "parameters": {k: {a: clean(float(b)) for a, b in v.items()} for k, v in self.parameters.items()},
            "errors": self.errors[:20],
        }


@dataclass
class MonteCarloResult:
    tables: dict  # estimator label -> Calibration
    reps: list  # all RepResult, sorted by (index, estimator)
    seed: int
    n: int
    data_kind: str
    alpha: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.n,
            "data": self.data_kind,
            "alpha": self.alpha,
            "metadata": self.metadata,
            "estimators": {k: v.to_dict() for k, v in self.tables.items()},
        }


def _aggregate(label, rows, truth, alpha) -> Calibration:
    good = [r for r in rows if r.ok]
    params = {}
    for key, true in truth.items():
        lhs, sep, rhs = key.partition("~~")
        if sep and lhs == rhs:
            continue  # residual variances are implied by the loadings
        vals = np.array([r.estimates[key] for r in good])
        ses = np.array([r.ses.get(key, np.nan) for r in good])
        if vals.size == 0:
            continue
        sd = float(vals.std(ddof=1)) if vals.size > 1 else np.nan
        mean_se = float(np.nanmean(ses)) if np.isfinite(ses).any() else np.nan
        params[key] = {
            "true": true,
            "mean": float(vals.mean()),
            "bias": float(vals.mean() - true),
            "rmse": float(np.sqrt(np.mean((vals - true) ** 2))),
            "sd": sd,
            "mean_se": mean_se,
            "se_ratio": mean_se / sd if sd and np.isfinite(sd) and sd > 0 else np.nan,
        }
    ps = np.array([r.p for r in good], float)
    pp = np.array([r.p_plain for r in good], float)
    rate = float(np.mean(ps < alpha)) if ps.size else np.nan
    rate_plain = float(np.mean(pp < alpha)) if pp.size else np.nan
    errors = [f"rep {r.index}: {r.error}" for r in rows if not r.ok]
    return Calibration(label, len(rows), len(rows) - len(good), rate, rate_plain, params, errors)


def monte_carlo(
    spec: SimSpec,
    reps: int,
    n: int | None = None,
    seed: int | None = None,
    estimators=(ML, DWLS),
    data_kind: str | None = None,
    alpha: float = 0.05,
    workers: int = 1,
    plans=None,
) -> MonteCarloResult:
    """Repeated generate-and-fit; per-estimator bias, RMSE, rejection and SE calibration.

    Parameters are compared on the standardized (STDALL) scale so that
    covariance-metric and delta fits share one truth. The exact-fit test
    uses the plain statistic for ML and the scaled-shifted one for DWLS.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if n is not None:
        spec = replace(spec, n=n)
    if seed is not None:
        spec = replace(spec, seed=seed)
    if data_kind is None:
        data_kind = ORDINAL if spec.thresholds is not None else CONTINUOUS
    plans = default_plans(spec, estimators) if plans is None else plans
    children = np.random.SeedSequence(spec.seed).spawn(reps)
    args = [(spec, plans, data_kind, children[i], i, alpha) for i in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_one_rep, *zip(*args)))
    else:
        chunks = [_one_rep(*a) for a in args]
    rows = sorted((r for c in chunks for r in c), key=lambda r: (r.index, r.estimator))
    truth = spec.standardized_truth()
    tables = {p.label: _aggregate(p.label, [r for r in rows if r.estimator == p.label], truth, alpha) for p in plans}
    meta = {"rng": RNG_ALGORITHM, "workers": workers}
    return MonteCarloResult(tables, rows, spec.seed, spec.n, data_kind, alpha, meta)


# ---------------------------------------------------------------------------
# preset


IUIPC8_TRUTH = {
    "ctrl=~ctrl2": 0.91,
    "aware=~awa2": 1.19,
    "collect=~coll2": 0.95,
    "collect=~coll3": 1.14,
    "collect=~coll4": 1.05,
    "iuipc=~ctrl": 0.53,
    "iuipc=~aware": 0.74,
    "iuipc=~collect": 0.30,
    "ctrl~~ctrl": 0.4247,
    "aware~~aware": 0.1248,
    "collect~~collect": 0.6325,
}


def iuipc8_preset(n: int = 5000, seed: int = 0) -> SimSpec:
    """IUIPC-8-like second-order model on the latent-response scale.

    Values are in the marker-scaled delta metric; thresholds are the base
    sample's fitted thresholds.
    """
    root = resources.files("cfakit") / "data"
    spec = read_model(root / "iuipc8.cfa")
    table = build_parameter_table(spec, MARKER, DELTA_ORDINAL)
    theta = np.array([IUIPC8_TRUTH[label] for label in table.labels])
    summary = load_summary(root / "sample_b_iuipc8.sum")
    return SimSpec(table, theta, n, seed, dict(summary.thresholds))
