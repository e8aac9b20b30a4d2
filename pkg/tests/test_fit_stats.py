import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import gammaincc, gammaln

from cfakit import fit_stats as fs
from cfakit.estimator import DWLS, ModelMatrices, MomentData, f_ml, fit
from cfakit.model_spec import DELTA_ORDINAL, build_parameter_table, parse_model

from .conftest import model


def ncx2_sf_series(x, df, lam, terms=400):
    """Poisson mixture of central chi-square tails: independent of scipy.stats.ncx2."""
    j = np.arange(terms)
    logw = -lam / 2 + j * np.log(lam / 2) - gammaln(j + 1)
    return float(np.sum(np.exp(logw) * gammaincc((df + 2 * j) / 2, x / 2)))


@pytest.mark.parametrize("x,df,lam", [(30.0, 17, 5.0), (275.087, 32, 150.0), (46.764, 17, 14.7), (10.0, 2, 0.5)])
def test_ncx2_against_series_oracle(x, df, lam):
    assert fs._nc_sf(x, df, lam) == pytest.approx(ncx2_sf_series(x, df, lam), abs=1e-10)


def test_ncx2_grid_against_series_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        df = int(rng.integers(1, 60))
        lam = float(rng.uniform(0.1, 120))
        x = float(rng.uniform(0.5, 3) * (df + lam))
        assert fs._nc_sf(x, df, lam) == pytest.approx(ncx2_sf_series(x, df, lam), abs=1e-8)


def test_rmsea_iuipc10_base_sample():
    r = fs.rmsea(275.087, 32, 370)
    assert r.point == pytest.approx(0.1435, abs=5e-5)
    assert (round(r.point, 2), round(r.lo, 2), round(r.hi, 2)) == (0.14, 0.13, 0.16)
    assert r.lo == pytest.approx(0.1281, abs=1e-4)
    assert r.hi == pytest.approx(0.1593, abs=1e-4)


def test_rmsea_iuipc8_base_sample():
    r = fs.rmsea(46.764, 17, 370)
    assert r.point == pytest.approx(0.0689, abs=1e-4)
    assert (round(r.lo, 2), round(r.hi, 2)) == (0.05, 0.09)
    assert r.p_close == pytest.approx(0.086, abs=0.005)


def test_rmsea_zero_when_t_equals_df():
    r = fs.rmsea(17.0, 17, 370)
    assert r.point == 0.0 and r.lo == 0.0


def test_ci_endpoints_invert():
    T, df, N = 46.764, 17, 370
    r = fs.rmsea(T, df, N)
    lam_lo = r.lo**2 * df * (N - 1)
    lam_hi = r.hi**2 * df * (N - 1)
    assert stats.ncx2.sf(T, df, lam_lo) == pytest.approx(0.05, abs=1e-6)
    assert stats.ncx2.sf(T, df, lam_hi) == pytest.approx(0.95, abs=1e-6)


def test_tests_are_toggleable():
    r = fs.rmsea(46.764, 17, 370, tests=(fs.CLOSE,))
    assert set(r.tests) == {fs.CLOSE}
    assert r.p_poor is None
    full = fs.rmsea(46.764, 17, 370)
    assert full.tests[fs.NOT_CLOSE] == pytest.approx(1 - full.tests[fs.CLOSE])
    with pytest.raises(ValueError):
        fs.rmsea(40, 17, 370, tests=("bogus",))


@given(st.floats(1, 200), st.floats(1, 200), st.integers(1, 60), st.integers(50, 2000))
@settings(max_examples=60, deadline=None)
def test_p_close_decreasing_in_t(t1, t2, df, n):
    lo, hi = sorted((t1, t2))
    a = fs.rmsea(lo, df, n, tests=(fs.CLOSE,)).p_close
    b = fs.rmsea(hi, df, n, tests=(fs.CLOSE,)).p_close
    assert b <= a + 1e-12


@given(st.floats(0, 400), st.integers(1, 60), st.integers(10, 3000))
@settings(max_examples=60, deadline=None)
def test_rmsea_invariants(T, df, n):
    r = fs.rmsea(T, df, n)
    assert 0 <= r.lo <= r.point <= r.hi
    assert all(0 <= p <= 1 for p in r.tests.values())


def test_chi_square_p_values():
    assert stats.chi2.sf(275.087, 32) < 0.001
    assert round(stats.chi2.sf(36.673, 17), 3) == pytest.approx(0.004, abs=0.001)


def test_chi_square_from_exact_fit(iuipc8):
    mm = ModelMatrices(build_parameter_table(iuipc8))
    S = mm.sigma(mm.start(np.eye(8)) + 0.1)
    res = fit(mm.table, MomentData(iuipc8.indicators, S, 300), analytic_gradient=True)
    c = fs.chi_square(res)
    assert c.statistic == pytest.approx(0.0, abs=1e-7)
    assert c.p == pytest.approx(1.0, abs=1e-6)
    assert c.multiplier == 299


def test_saturated_model_has_no_p():
    S = np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.35], [0.3, 0.35, 1.0]])
    res = fit(build_parameter_table(parse_model("f =~ a + b + c")), MomentData(("a", "b", "c"), S, 100))
    c = fs.chi_square(res)
    assert c.saturated and c.p is None
    ind = fs.fit_indices(res)
    assert "saturated" in ind.notes[0]


def test_scaled_shifted_identity_calibration():
    # U Gamma idempotent of rank df: t1 = t2 = df gives a = 1 and no shift
    rng = np.random.default_rng(0)
    delta = rng.standard_normal((10, 3))
    T, a, shift = fs.scaled_shifted(12.5, delta, np.ones(10), np.eye(10), 7)
    assert (a, shift) == pytest.approx((1.0, 0.0), abs=1e-12)
    assert T == pytest.approx(12.5)


def test_scaled_shifted_doubling_gamma():
    rng = np.random.default_rng(1)
    delta = rng.standard_normal((10, 3))
    A = rng.standard_normal((10, 10))
    G = A @ A.T / 10
    w = rng.uniform(0.5, 2, 10)
    T1, a1, s1 = fs.scaled_shifted(20.0, delta, w, G, 7)
    T2, a2, s2 = fs.scaled_shifted(20.0, delta, w, 2 * G, 7)
    assert a2 == pytest.approx(a1 / 2)
    assert s2 == pytest.approx(s1)
    assert T2 == pytest.approx(a1 / 2 * 20.0 + s1)


def test_scaled_shifted_rejects_degenerate():
    with pytest.raises(ValueError):
        fs.scaled_shifted(1.0, np.zeros((2, 0)), np.ones(2), np.zeros((2, 2)), 2)


def test_cfi_arithmetic():
    assert fs.cfi(150, 30, 1000, 45) == pytest.approx(1 - 120 / 955)
    assert fs.cfi(20, 30, 1000, 45) == 1.0
    assert fs.cfi(0, 5, 3, 5) == 1.0


def test_ml_baseline_matches_diagonal_fit(ml_fit_b8):
    S = ml_fit_b8.moments.sample
    base = fs.baseline_chi_square(ml_fit_b8)
    assert base.statistic == pytest.approx(369 * f_ml(S, np.diag(np.diag(S))))
    assert base.df == 28


def test_srmr_examples():
    assert fs.srmr(np.eye(3), np.eye(3)) == 0.0
    assert fs.srmr(np.array([[1, 0.1], [0.1, 1]]), np.eye(2)) == pytest.approx(np.sqrt(0.01 / 3))


@given(st.lists(st.floats(0.2, 5), min_size=3, max_size=3))
@settings(max_examples=30, deadline=None)
def test_srmr_and_residuals_scale_invariant(scales):
    S = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]])
    Sig = np.array([[1.0, 0.45, 0.35], [0.45, 1.0, 0.42], [0.35, 0.42, 1.0]])
    D = np.diag(scales)
    assert fs.srmr(D @ S @ D, D @ Sig @ D) == pytest.approx(fs.srmr(S, Sig), abs=1e-12)
    np.testing.assert_allclose(fs.residuals(D @ S @ D, D @ Sig @ D).matrix, fs.residuals(S, Sig).matrix, atol=1e-12)


def test_residual_flags_are_strict():
    S = np.array([[1.0, 0.1, 0.3], [0.1, 1.0, 0.0], [0.3, 0.0, 1.0]])
    rep = fs.residuals(S, np.eye(3), ("a", "b", "c"))
    assert not rep.flags[1, 0]
    assert rep.flags[2, 0]
    assert rep.flagged_pairs() == [("c", "a", 0.3)]
    np.testing.assert_array_equal(np.diag(rep.matrix), 0.0)
    np.testing.assert_array_equal(rep.matrix, rep.matrix.T)


def test_exact_fit_residuals_zero():
    S = np.array([[2.0, 0.4], [0.4, 1.0]])
    rep = fs.residuals(S, S)
    assert not rep.flags.any() and np.all(rep.matrix == 0)


def test_lrt_arithmetic():
    a = fs.lrt_from_difference(215.065, 1)
    b = fs.lrt_from_difference(30.165, 2)
    assert a.p < 0.001 and b.p < 0.001
    assert b.p == pytest.approx(np.exp(-30.165 / 2))


def _ml(name, summary):
    spec = model(name)
    return fit(build_parameter_table(spec), MomentData.from_summary(summary).select(spec.indicators), analytic_gradient=True)


def test_lrt_chain_and_refusals(sample_b):
    one, two, three = (_ml(f"iuipc8_{k}.cfa", sample_b) for k in ("1f", "2f", "3f"))
    t12 = fs.lrt_nested(one, two)
    t23 = fs.lrt_nested(two, three)
    assert t12.delta_df == 1 and t23.delta_df == 2
    assert t12.delta_T > 0 and t23.delta_T > 0
    with pytest.raises(fs.NotNestedError, match="fewer degrees of freedom"):
        fs.lrt_nested(three, one)
    ten = _ml("iuipc10.cfa", sample_b)
    with pytest.raises(fs.NotNestedError, match="different variable sets"):
        fs.lrt_nested(ten, three)


def test_lrt_identical_models(ml_fit_b8):
    t = fs.lrt_nested(ml_fit_b8, ml_fit_b8)
    assert t.delta_T == 0.0 and t.p == 1.0


def test_partition_refinement_check():
    parts = lambda *groups: frozenset(frozenset(g) for g in groups)
    assert fs._refines(parts("ab", "cd"), parts("abcd"))
    assert not fs._refines(parts("abc", "d"), parts("ab", "cd"))


@st.composite
def three_factor_data(draw):
    load = draw(st.lists(st.floats(0.5, 0.9), min_size=9, max_size=9))
    r = draw(st.lists(st.floats(0.1, 0.7), min_size=3, max_size=3))
    noise = draw(st.floats(0.0, 0.05))
    L = np.zeros((9, 3))
    for j in range(3):
        L[3 * j : 3 * j + 3, j] = load[3 * j : 3 * j + 3]
    Phi = np.array([[1, r[0], r[1]], [r[0], 1, r[2]], [r[1], r[2], 1]])
    if np.linalg.eigvalsh(Phi).min() < 0.05:
        Phi = np.eye(3)
    S = L @ Phi @ L.T
    np.fill_diagonal(S, 1.0)
    E = np.random.default_rng(len(load)).standard_normal((9, 9)) * noise
    S = S + (E + E.T) / 2
    np.fill_diagonal(S, 1.0)
    return S


@given(three_factor_data())
@settings(max_examples=8, deadline=None)
def test_nested_difference_non_negative(S):
    names = tuple(f"x{i}" for i in range(9))
    mom = MomentData(names, S, 500)
    full = parse_model("a =~ x0 + x1 + x2\nb =~ x3 + x4 + x5\nc =~ x6 + x7 + x8\n")
    one = parse_model("g =~ " + " + ".join(names))
    rf = fit(build_parameter_table(full), mom, analytic_gradient=True)
    r1 = fit(build_parameter_table(one), mom, analytic_gradient=True)
    assert fs.lrt_nested(r1, rf).delta_T >= -1e-6


def test_fit_indices_json_schema(ml_fit_b8):
    d = fs.fit_indices(ml_fit_b8).to_dict()
    assert {"statistic", "df", "p", "cfi", "srmr", "rmsea", "residuals"} <= set(d)
    assert set(d["rmsea"]) == {"point", "lo", "hi", "p_close", "p_poor"}
    assert {"matrix", "flags"} <= set(d["residuals"])
    assert d["df"] == 17 and d["variant"] == fs.PLAIN


def test_robust_indices_on_simulated_ordinal_data():
    from cfakit.simulate import generate_ordinal, iuipc8_preset
    from cfakit.polychoric import polychoric_matrix

    spec = iuipc8_preset(n=2000, seed=11)
    data = generate_ordinal(spec)
    mom = MomentData.from_polychoric(polychoric_matrix(data))
    res = fit(build_parameter_table(model("iuipc8.cfa"), parameterization=DELTA_ORDINAL), mom, DWLS, analytic_gradient=True)
    ind = fs.fit_indices(res)
    assert ind.variant == fs.SCALED_SHIFTED
    assert ind.baseline.variant == fs.SCALED_SHIFTED
    assert ind.cfi >= 0.99
    assert ind.srmr <= 0.05
    plain = fs.fit_indices(res, robust=False)
    assert plain.variant == fs.PLAIN and plain.T == pytest.approx(ind.plain.statistic)
    with pytest.raises(ValueError):
        fs.fit_indices(fit(build_parameter_table(model("iuipc8.cfa")), MomentData.from_dataset(data)), robust=True)
