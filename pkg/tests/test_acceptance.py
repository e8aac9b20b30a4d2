"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import time

import numpy as np
import pytest

from cfakit import fit_stats as fs
from cfakit import psychometrics as ps
from cfakit.estimator import DWLS, ML, ModelMatrices, MomentData, discrepancy, fit
from cfakit.model_spec import COVARIANCE_METRIC, DELTA_ORDINAL, build_parameter_table, degrees_of_freedom
from cfakit.optimize import central_gradient
from cfakit.polychoric import polychoric_matrix
from cfakit.power import PowerQuery, required_n
from cfakit.simulate import generate_ordinal, iuipc8_preset, monte_carlo

from .conftest import model

FACTORS = ("ctrl", "aware", "collect")


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


def test_criterion_01_rmsea_arithmetic(verdict):
    t0 = time.perf_counter()
    a = fs.rmsea(275.087, 32, 370)
    b = fs.rmsea(46.764, 17, 370)
    elapsed = time.perf_counter() - t0
    ok = (
        (round(a.point, 2), round(a.lo, 2), round(a.hi, 2)) == (0.14, 0.13, 0.16)
        and (round(b.point, 2), round(b.lo, 2), round(b.hi, 2)) == (0.07, 0.05, 0.09)
        and abs(b.p_close - 0.086) <= 0.005
        and elapsed < 1.0
    )
    detail = (
        f"{a.point:.4f} [{a.lo:.4f}, {a.hi:.4f}]; {b.point:.4f} [{b.lo:.4f}, {b.hi:.4f}] "
        f"p_close {b.p_close:.4f}; {elapsed * 1e3:.1f} ms"
    )
    assert verdict(1, ok, detail)


def test_criterion_02_cronbach_alpha(verdict, sample_b8):
    mom = MomentData.from_summary(sample_b8)
    alpha = {}
    for f, items in model("iuipc8.cfa").factors:
        ix = [mom.names.index(v) for v in items]
        alpha[f] = ps.cronbach_alpha(mom.sample[np.ix_(ix, ix)])
    target = {"ctrl": 0.72, "aware": 0.76, "collect": 0.91}
    ok = all(abs(alpha[f] - target[f]) <= 0.005 for f in FACTORS)
    assert verdict(2, ok, " ".join(f"{f} {alpha[f]:.4f}" for f in FACTORS))


def test_criterion_03_htmt(verdict, sample_b):
    spec = model("iuipc8.cfa")
    R = sample_b.corr
    h = ps.htmt(R, list(spec.factors), sample_b.names)
    ca, cc, ac = h.value("ctrl", "aware"), h.value("ctrl", "collect"), h.value("aware", "collect")
    ok = abs(ca - 0.47) <= 0.01 and abs(cc - 0.14) <= 0.03 and abs(ac - 0.25) <= 0.03
    assert verdict(3, ok, f"ctrl-aware {ca:.4f} ctrl-collect {cc:.4f} aware-collect {ac:.4f}")


def test_criterion_04_ave_and_signal_to_noise(verdict):
    loadings = {"ctrl": (0.84, 0.77), "aware": (0.82, 0.97), "collect": (0.85, 0.81, 0.97, 0.89)}
    target = {"ctrl": 0.65, "aware": 0.80, "collect": 0.77}
    ave = {f: ps.ave(b) for f, b in loadings.items()}
    sn1, sn2 = ps.signal_to_noise(0.72), ps.signal_to_noise(0.91)
    ok = all(abs(ave[f] - target[f]) <= 0.01 for f in FACTORS)
    ok = ok and abs(sn1 - 2.57) <= 0.1 and 10.1 - 0.1 <= sn2 <= 10.2 + 0.1
    detail = " ".join(f"AVE {f} {ave[f]:.4f}" for f in FACTORS) + f"; S/N {sn1:.3f} {sn2:.3f}"
    assert verdict(4, ok, detail)


def test_criterion_05_power_planning(verdict):
    n = required_n(PowerQuery(df=32, alpha=0.05, eps0=0.05, epsa=0.08), power=0.80)
    ok = abs(n - 317) <= 5
    assert verdict(5, ok, f"required N = {n} (target 317 +- 5)")


def test_criterion_06_nested_lrt(verdict):
    a = fs.lrt_from_difference(215.065, 1)
    b = fs.lrt_from_difference(30.165, 2)
    ok = a.p < 0.001 and b.p < 0.001
    assert verdict(6, ok, f"p = {a.p:.3g}, {b.p:.3g}")


def test_criterion_07_df_bookkeeping(verdict):
    t10 = build_parameter_table(model("iuipc10.cfa"), parameterization=COVARIANCE_METRIC)
    t8 = build_parameter_table(model("iuipc8.cfa"), parameterization=DELTA_ORDINAL)
    df10, df8 = degrees_of_freedom(t10), degrees_of_freedom(t8)
    ok = df10 == 32 and t10.n_free == 23 and df8 == 17
    assert verdict(7, ok, f"IUIPC-10 df {df10} q {t10.n_free}; IUIPC-8 delta df {df8}")


def test_criterion_08_ordinal_pipeline(verdict):
    t0 = time.perf_counter()
    spec = iuipc8_preset(n=5000, seed=20240601)
    # single pipeline pass: generate, polychoric, DWLS
    data = generate_ordinal(spec)
    table = build_parameter_table(spec.table.spec, spec.table.scaling, DELTA_ORDINAL)
    res = fit(table, MomentData.from_polychoric(polychoric_matrix(data)), DWLS, analytic_gradient=True)
    truth = spec.standardized_truth()
    single = max(abs(b - truth[next(k for k in truth if k.endswith(f"=~{v}"))]) for v, b in res.standardized.loadings.items())
    mc = monte_carlo(spec, reps=500, estimators=(DWLS,))
    (cal,) = mc.tables.values()
    loads = {k: v for k, v in cal.parameters.items() if "=~" in k}
    worst_bias = max(abs(v["bias"]) for v in loads.values())
    elapsed = time.perf_counter() - t0
    ok = single <= 0.05 and worst_bias <= 0.05 and 0.03 <= cal.rejection_rate <= 0.08 and elapsed < 300
    detail = (
        f"single-fit max |err| {single:.4f}; MC max |bias| {worst_bias:.4f}; "
        f"rejection {cal.rejection_rate:.3f} ({cal.failures} failures); {elapsed:.0f} s"
    )
    assert verdict(8, ok, detail)


def _fixtures(sample_b, sample_b8):
    out = []
    spec8 = model("iuipc8.cfa")
    out.append(("ML IUIPC-8", ML, build_parameter_table(spec8), MomentData.from_summary(sample_b8)))
    spec10 = model("iuipc10.cfa")
    out.append(("ML IUIPC-10", ML, build_parameter_table(spec10), MomentData.from_summary(sample_b).select(spec10.indicators)))
    data = generate_ordinal(iuipc8_preset(n=2000, seed=99))
    out.append(("DWLS IUIPC-8", DWLS, build_parameter_table(spec8, parameterization=DELTA_ORDINAL), MomentData.from_polychoric(polychoric_matrix(data))))
    return out


def test_criterion_09_numerical_contracts(verdict, sample_b, sample_b8):
    rng = np.random.default_rng(2024)
    worst_grad, worst_exact, worst_spread = 0.0, 0.0, 0.0
    for _, est, table, mom in _fixtures(sample_b, sample_b8):
        mm = ModelMatrices(table)
        res = fit(table, mom, est, analytic_gradient=True)
        F, G = discrepancy(mm, mom, est)
        for _ in range(10):
            th = res.theta + rng.normal(0, 0.05, res.theta.size)
            g, g_fd = G(th), central_gradient(F, th)
            worst_grad = max(worst_grad, np.linalg.norm(g - g_fd) / max(np.linalg.norm(g_fd), 1e-12))
        # exact fit: moments generated by the model itself
        implied = MomentData(mom.names, mm.sigma(res.theta), mom.n, mom.kind, mom.gamma, mom.weights)
        exact = fit(table, implied, est, analytic_gradient=True, compute_se=False)
        worst_exact = max(worst_exact, exact.fmin)
        fmins = [
            fit(table, mom, est, analytic_gradient=True, compute_se=False, start=res.theta * rng.uniform(0.8, 1.2, res.theta.size)).fmin
            for _ in range(5)
        ]
        worst_spread = max(worst_spread, max(fmins) - min(fmins), max(abs(f - res.fmin) for f in fmins))
    ok = worst_grad < 1e-4 and worst_exact < 1e-10 and worst_spread < 1e-8
    detail = f"max gradient rel. error {worst_grad:.2e}; max exact-fit F {worst_exact:.2e}; restart spread {worst_spread:.2e}"
    assert verdict(9, ok, detail)


def test_criterion_10_residual_marking(verdict, ml_fit_b8):
    ind = fs.fit_indices(ml_fit_b8)
    rep = ind.residuals
    published = {frozenset(("coll1", "awa1")), frozenset(("coll1", "awa2"))}
    flagged = {frozenset((a, b)) for a, b, _ in rep.flagged_pairs()}
    extra = flagged - published
    i, j = rep.names.index("coll1"), rep.names.index("awa1")
    sign = rep.matrix[i, j]
    ok = len(extra) <= 2 and sign < 0
    detail = f"flagged {len(flagged)} cells ({len(extra)} beyond the published two); r(coll1, awa1) = {sign:+.3f}"
    assert verdict(10, ok, detail)
