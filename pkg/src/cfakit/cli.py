"""Command-line front end.

Exit codes: 0 success, 1 input error (files, syntax, data), 2 estimation
problem (non-convergence or an under-identified model).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import fit_stats as fs
from . import psychometrics as ps
from .data_io import DataError, load_raw, load_summary, screen
from .estimator import DWLS, ML, ConvergenceWarning, MomentData, fit
from .model_spec import (
    COVARIANCE_METRIC,
    DELTA_ORDINAL,
    MARKER,
    UNIT_VARIANCE,
    ModelSpecError,
    ModelSyntaxError,
    UnderIdentifiedError,
    build_parameter_table,
    read_model,
)
from .polychoric import polychoric_matrix
from .power import CLOSE_FIT, NOT_CLOSE_FIT, PowerQuery, required_n, rmsea_power
from .simulate import CONTINUOUS, ORDINAL, generate_continuous, generate_ordinal, iuipc8_preset, monte_carlo

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ESTIMATION = 2


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def resolve(path) -> Path:
    """An existing path, or the name of a file bundled with the package."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("cfakit") / "data" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise InputError(f"file not found: {path}")


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use - or _."""
    out = {}
    for lineno, line in enumerate(resolve(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def apply_config(args, parser: argparse.ArgumentParser, config: dict) -> None:
    """Config entries override the corresponding command-line values."""
    actions = {a.dest: a for a in parser._actions}
    for key, raw in config.items():
        if key not in actions or key in ("help", "config"):
            raise InputError(f"unknown config key {key!r} for this subcommand")
        act = actions[key]
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif act.nargs in ("+", "*"):
            conv = act.type or str
            value = [conv(x) for x in raw.replace(",", " ").split()]
        else:
            value = (act.type or str)(raw)
            if act.choices is not None and value not in act.choices:
                raise InputError(f"config {key}: {value!r} not in {sorted(act.choices)}")
        setattr(args, key, value)


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return None if not np.isfinite(x) else float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _finite(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def emit_json(obj, out) -> None:
    json.dump(_finite(obj), out, indent=2, default=_json_default)
    out.write("\n")


def f3(x, width=7) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return " " * (width - 1) + "-"
    return f"{x:{width}.3f}"


def p_clause(p) -> str:
    return "p " + (fp(p) if fp(p).startswith("<") else "= " + fp(p))


def fp(p) -> str:
    if p is None or not np.isfinite(p):
        return "-"
    return "< .001" if p < 0.001 else f"{p:.3f}"


# ---------------------------------------------------------------------------
# data and model loading


def _estimator(name: str) -> str:
    return {"ml": ML, "dwls": DWLS}[name.lower()]


def _moments_from_summary(summary, estimator):
    if estimator == ML:
        return MomentData.from_summary(summary)
    if summary.gamma is None:
        raise InputError("DWLS on summary data needs a gamma section")
    p = len(summary.names)
    k = p * (p - 1) // 2
    g = np.asarray(summary.gamma, float)
    n_tau = sum(len(t) for t in (summary.thresholds or {}).values())
    if g.shape[0] == n_tau + k:
        g = g[n_tau:, n_tau:]
    elif g.shape[0] != k:
        raise InputError(f"gamma is {g.shape[0]} x {g.shape[0]}; expected {k} or {n_tau + k}")
    th = None if summary.thresholds is None else dict(summary.thresholds)
    return MomentData(tuple(summary.names), summary.corr, summary.n, "correlation", gamma=g, thresholds=th, source="summary")


def load_moments(args, estimator):
    if bool(args.summary) == bool(args.raw):
        raise InputError("give exactly one of --summary or --raw")
    if args.summary:
        return _moments_from_summary(_read(load_summary, args.summary), estimator), None
    data = _read(load_raw, args.raw, default_categories=args.categories)
    return None, data


def moments_for(spec, args, estimator, cache):
    """Moment data restricted to the model's indicators."""
    mom, data = cache
    names = spec.indicators
    if mom is not None:
        return mom.select(names)
    sub = data.select(names).complete_cases()
    if estimator == ML:
        return MomentData.from_dataset(sub)
    if all(sub.scales.get(v) for v in names):
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return MomentData.from_polychoric(polychoric_matrix(sub))
    return MomentData.from_dataset(sub, with_gamma=True)


def _parameterization(args, estimator, mom):
    if args.parameterization:
        return args.parameterization
    if estimator == DWLS and mom.kind == "correlation":
        return DELTA_ORDINAL
    return COVARIANCE_METRIC


def _read(reader, path, **kw):
    """Call a file reader, prefixing data and syntax errors with the path."""
    try:
        return reader(resolve(path), **kw)
    except (DataError, ModelSpecError, ModelSyntaxError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def fit_model(model_path, args, cache):
    spec = _read(read_model, model_path)
    estimator = _estimator(args.estimator)
    mom = moments_for(spec, args, estimator, cache)
    table = build_parameter_table(spec, args.scaling, _parameterization(args, estimator, mom))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = fit(table, mom, estimator, analytic_gradient=args.analytic_gradient, max_iter=args.max_iter)
    return res


# ---------------------------------------------------------------------------
# text reports


def format_parameters(res, reliab: ps.ScaleReport | None) -> str:
    lines = [f"{'Parameter':<24}{'Est':>8}{'SE':>8}{'z':>8}{'p':>8}{'Std':>8}{'R2':>8}"]
    std = res.standardized
    for row in res.parameters():
        mark = "+" if not row["free"] and not row["constrained"] else ("*" if row["constrained"] else " ")
        r2 = None
        if row["relation"] in ("loading", "second-order-loading") and std is not None:
            r2 = std.r2.get(row["rhs"])
        z = row["z"]
        lines.append(
            f"{row['label'] + mark:<24}{f3(row['estimate'], 8)}{f3(row['se'], 8)}"
            f"{f3(z, 8)}{fp(row['p']):>8}{f3(row['std'], 8)}{f3(r2, 8)}"
        )
    lines.append("+ fixed parameter; * constrained (delta parameterization)")
    if reliab is not None:
        lines.append("")
        lines.append(f"{'Factor':<12}{'AVE':>8}{'alpha':>8}{'omega':>8}{'S/N':>8}")
        for f in reliab.factors:
            lines.append(f"{f.factor:<12}{f3(f.ave, 8)}{f3(f.alpha, 8)}{f3(f.omega, 8)}{f3(f.sn, 8)}")
    return "\n".join(lines)


def format_indices(ind: fs.FitIndices, estimator) -> str:
    c = ind.chi2
    tag = " (scaled-shifted)" if c.variant == fs.SCALED_SHIFTED else ""
    mult = "N - 1" if estimator == ML else "N"
    rm = ind.rmsea
    lines = [
        f"chi2({c.df}) = {c.statistic:.3f}, {p_clause(c.p)}{tag}; multiplier {mult}",
        f"CFI = {ind.cfi:.3f}   SRMR = {ind.srmr:.3f}",
        f"RMSEA = {rm.point:.3f} [{rm.lo:.3f}, {rm.hi:.3f}]  p(close) = {fp(rm.p_close)}  p(poor) = {fp(rm.p_poor)}",
    ]
    lines.extend(ind.notes)
    return "\n".join(lines)


def format_residuals(rep: fs.ResidualReport) -> str:
    names = rep.names
    w = max(8, max(len(v) for v in names) + 1)
    lines = [" " * w + "".join(f"{v:>9}" for v in names)]
    for i, v in enumerate(names):
        cells = []
        for j in range(i + 1):
            x = rep.matrix[i, j]
            cells.append(f"{x:8.3f}" + ("*" if rep.flags[i, j] else " "))
        lines.append(f"{v:<{w}}" + "".join(cells))
    lines.append(f"* |residual| > {rep.threshold:g}")
    return "\n".join(lines)


def format_matrix(names, M, note=None) -> str:
    w = max(8, max(len(v) for v in names) + 1)
    lines = [" " * w + "".join(f"{v:>9}" for v in names)]
    for i, v in enumerate(names):
        lines.append(f"{v:<{w}}" + "".join(f3(M[i, j], 9) for j in range(i + 1)))
    if note:
        lines.append(note)
    return "\n".join(lines)


def format_reliability(rep: ps.ScaleReport) -> str:
    t = rep.thresholds
    lines = [f"{'Factor':<12}{'alpha':>8}{'omega':>8}{'AVE':>8}{'S/N':>8}  criteria"]
    for f in rep.factors:
        crit = f.criteria(t)
        failed = [k for k, ok in crit.items() if not ok]
        lines.append(
            f"{f.factor:<12}{f3(f.alpha, 8)}{f3(f.omega, 8)}{f3(f.ave, 8)}{f3(f.sn, 8)}  "
            + ("all pass" if not failed else "fail: " + ", ".join(failed))
        )
    if rep.fornell_larcker is not None:
        fl = rep.fornell_larcker
        lines += ["", "Fornell-Larcker", format_matrix(fl.names, fl.matrix, "The diagonal contains sqrt(AVE).")]
        lines.append("pass: " + ", ".join(f"{k}={'yes' if v else 'no'}" for k, v in fl.passed.items()))
    if rep.htmt is not None:
        ht = rep.htmt
        M = ht.matrix.copy()
        np.fill_diagonal(M, np.nan)
        lines += ["", f"HTMT ({ht.source}, {ht.sign}); criterion < {t.htmt:g}", format_matrix(ht.names, M)]
    return "\n".join(lines)


def _thresholds(args) -> ps.Thresholds:
    return ps.Thresholds(args.ave_min, args.reliability_min, args.loading_min, args.htmt_max)


# ---------------------------------------------------------------------------
# subcommands


def run_fit(args, out) -> int:
    cache = load_moments(args, _estimator(args.estimator))
    res = fit_model(args.model, args, cache)
    ind = fs.fit_indices(res)
    reliab = ps.scale_report(res, thresholds=_thresholds(args))
    if args.format == "json":
        emit_json(
            {
                "model": str(args.model),
                "estimator": res.estimator,
                "parameterization": res.table.parameterization,
                "scaling": res.table.scaling,
                "converged": res.converged,
                "iterations": res.iterations,
                "message": res.message,
                "n": res.n,
                "fmin": res.fmin,
                "heywood": res.heywood,
                "parameters": res.parameters(),
                "fit": ind.to_dict(),
                "reliability": reliab.to_dict(),
            },
            out,
        )
    else:
        status = "converged" if res.converged else f"NOT converged ({res.message})"
        print(
            f"{res.estimator} fit of {args.model}: {status} after {res.iterations} iterations, "
            f"N = {res.n}, parameterization {res.table.parameterization}",
            file=out,
        )
        for h in res.heywood:
            print(f"warning: {h}", file=out)
        print("", file=out)
        print(format_parameters(res, reliab), file=out)
        print("", file=out)
        print(format_indices(ind, res.estimator), file=out)
        print("", file=out)
        print("Correlation residuals", file=out)
        print(format_residuals(ind.residuals), file=out)
    return EXIT_OK if res.converged else EXIT_ESTIMATION


def run_compare(args, out) -> int:
    if len(args.model) < 2:
        raise InputError("compare needs at least two models")
    estimator = _estimator(args.estimator)
    cache = load_moments(args, estimator)
    fits = [fit_model(m, args, cache) for m in args.model]
    indices = [fs.fit_indices(r) for r in fits]
    rows = []
    for m, r, ind in zip(args.model, fits, indices):
        rows.append(
            {
                "model": str(m),
                "converged": r.converged,
                "statistic": ind.T,
                "df": ind.df,
                "p": ind.p_exact,
                "variant": ind.variant,
                "cfi": ind.cfi,
                "rmsea": ind.rmsea.point,
                "rmsea_lo": ind.rmsea.lo,
                "rmsea_hi": ind.rmsea.hi,
                "srmr": ind.srmr,
            }
        )
    tests = []
    for k in range(len(fits) - 1):
        a, b = fits[k], fits[k + 1]
        restricted, full = (a, b) if a.df >= b.df else (b, a)
        ra, rb = (args.model[k], args.model[k + 1]) if a.df >= b.df else (args.model[k + 1], args.model[k])
        entry = {"restricted": str(ra), "full": str(rb)}
        try:
            lrt = fs.lrt_nested(restricted, full, robust=estimator == DWLS)
            entry.update(nested=True, delta_T=lrt.delta_T, delta_df=lrt.delta_df, p=lrt.p, approximate=lrt.approximate)
        except fs.NotNestedError as exc:
            entry.update(nested=False, reason=str(exc))
        tests.append(entry)
    if args.format == "json":
        emit_json({"estimator": estimator, "models": rows, "tests": tests}, out)
    else:
        w = max(10, max(len(str(m)) for m in args.model) + 2)
        print(f"{'Model':<{w}}{'chi2':>10}{'df':>5}{'p':>8}{'CFI':>7}{'RMSEA':>7}  {'90% CI':<15}{'SRMR':>6}", file=out)
        for r in rows:
            print(
                f"{r['model']:<{w}}{r['statistic']:10.3f}{r['df']:5d}{fp(r['p']):>8}{r['cfi']:7.3f}"
                f"{r['rmsea']:7.3f}  [{r['rmsea_lo']:.3f}, {r['rmsea_hi']:.3f}]{r['srmr']:6.3f}"
                + ("" if r["converged"] else "  (not converged)"),
                file=out,
            )
        print("", file=out)
        for t in tests:
            if t["nested"]:
                approx = " (approximate)" if t["approximate"] else ""
                print(
                    f"{t['restricted']} vs {t['full']}: chi2({t['delta_df']}) = {t['delta_T']:.3f}, {p_clause(t['p'])}{approx}",
                    file=out,
                )
            else:
                print(f"{t['restricted']} vs {t['full']}: not nested ({t['reason']})", file=out)
    return EXIT_OK if all(r.converged for r in fits) else EXIT_ESTIMATION


def run_reliability(args, out) -> int:
    cache = load_moments(args, _estimator(args.estimator))
    res = fit_model(args.model, args, cache)
    mom, data = cache
    item_cov = None
    if data is not None:
        item_cov = data.select(res.moments.names).complete_cases().covariance()
    elif mom is not None and mom.kind == "correlation":
        item_cov = res.moments.sample
    rep = ps.scale_report(res, item_cov=item_cov, thresholds=_thresholds(args))
    check = ps.validity_checklist(rep)
    if args.format == "json":
        d = rep.to_dict()
        d["verdicts"] = {k: check[k] for k in ("convergent", "discriminant", "reliability")}
        d["criteria"] = [v.__dict__ for v in check["criteria"]]
        d["converged"] = res.converged
        emit_json(d, out)
    else:
        print(format_reliability(rep), file=out)
        print("", file=out)
        for k in ("convergent", "discriminant", "reliability"):
            label = "reliability" if k == "reliability" else f"{k} validity"
            print(f"{label}: {'supported' if check[k] else 'not supported'}", file=out)
    return EXIT_OK if res.converged else EXIT_ESTIMATION


def run_screen(args, out) -> int:
    data = _read(load_raw, args.raw, default_categories=args.categories)
    if args.columns:
        data = data.select(args.columns)
    rep = screen(data, args.mahalanobis, args.chi2_alpha, args.g)
    if args.output:
        rep.cleaned.to_csv(args.output)
    if args.format == "json":
        emit_json(rep.to_dict(), out)
    else:
        print(f"{'Stage':<20}{'Excluded':>10}{'Size':>8}", file=out)
        for stage, excl, size in rep.ledger:
            print(f"{stage:<20}{excl:>10}{size:>8}", file=out)
        print("", file=out)
        print(f"{'Variable':<12}{'Mean':>8}{'SD':>8}{'Skew':>8}{'Kurt':>8}", file=out)
        for d in rep.descriptives:
            print(f"{d.name:<12}{f3(d.mean, 8)}{f3(d.sd, 8)}{f3(d.skewness, 8)}{f3(d.kurtosis, 8)}", file=out)
        n_uni = int(rep.univariate_flags.any(axis=1).sum())
        print(f"\ncases with a univariate outlier (g = {args.g:g}, labeled only): {n_uni}", file=out)
    return EXIT_OK


def run_power(args, out) -> int:
    q = PowerQuery(args.df, args.alpha, args.eps0, args.epsa, args.direction)
    if args.n is not None:
        result = {"df": q.df, "alpha": q.alpha, "eps0": q.eps0, "epsa": q.epsa, "direction": q.direction, "n": args.n, "power": rmsea_power(q, args.n)}
        text = f"power at N = {args.n}: {result['power']:.3f}"
    else:
        n = required_n(q, args.power)
        result = {"df": q.df, "alpha": q.alpha, "eps0": q.eps0, "epsa": q.epsa, "direction": q.direction, "target": args.power, "n": n, "power": rmsea_power(q, n)}
        text = f"required N = {n} (power {result['power']:.3f})"
    if args.format == "json":
        emit_json(result, out)
    else:
        print(f"{q.direction} test, df = {q.df}, alpha = {q.alpha:g}, eps0 = {q.eps0:g}, epsa = {q.epsa:g}", file=out)
        print(text, file=out)
    return EXIT_OK


def run_simulate(args, out) -> int:
    spec = iuipc8_preset(args.n, args.seed)
    kind = args.data
    estimators = [_estimator(e) for e in args.estimators]
    if args.emit_data:
        folder = Path(args.emit_data)
        folder.mkdir(parents=True, exist_ok=True)
        gen = generate_ordinal if kind == ORDINAL else generate_continuous
        for i, child in enumerate(np.random.SeedSequence(args.seed).spawn(args.reps)):
            rng = np.random.Generator(np.random.PCG64(child))
            gen(spec, rng).to_csv(folder / f"rep_{i + 1:04d}.csv")
    mc = monte_carlo(spec, args.reps, estimators=estimators, data_kind=kind, alpha=args.alpha, workers=args.workers)
    if args.format == "json":
        emit_json(mc.to_dict(), out)
    else:
        print(f"{args.reps} replications, N = {args.n}, {kind} data, seed {args.seed} ({mc.metadata['rng']})", file=out)
        for label, cal in mc.tables.items():
            print(f"\n{label}: failures {cal.failures}/{cal.reps}, rejection rate {f3(cal.rejection_rate, 5)} at alpha {args.alpha:g}", file=out)
            print(f"{'Parameter':<20}{'true':>8}{'mean':>8}{'bias':>8}{'RMSE':>8}{'SE/SD':>8}", file=out)
            for k, v in cal.parameters.items():
                print(f"{k:<20}{f3(v['true'], 8)}{f3(v['mean'], 8)}{f3(v['bias'], 8)}{f3(v['rmse'], 8)}{f3(v['se_ratio'], 8)}", file=out)
    return EXIT_OK if all(c.failures < c.reps for c in mc.tables.values()) else EXIT_ESTIMATION


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--config", help="key = value file; its entries override command-line flags")


def _data_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--summary", help="summary-statistics file")
    p.add_argument("--raw", help="CSV of raw responses")
    p.add_argument("--categories", type=int, help="number of ordinal categories for raw columns")
    p.add_argument("--estimator", type=str.lower, choices=("ml", "dwls"), default="ml")
    p.add_argument("--parameterization", choices=(COVARIANCE_METRIC, DELTA_ORDINAL))
    p.add_argument("--scaling", choices=(MARKER, UNIT_VARIANCE), default=MARKER)
    p.add_argument("--analytic-gradient", action="store_true")
    p.add_argument("--max-iter", type=int, default=500)


def _threshold_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ave-min", type=float, default=ps.AVE_MIN)
    p.add_argument("--reliability-min", type=float, default=ps.RELIABILITY_MIN)
    p.add_argument("--loading-min", type=float, default=ps.LOADING_MIN)
    p.add_argument("--htmt-max", type=float, default=ps.HTMT_MAX)


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); argparse would exit 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="cfakit", description="Confirmatory factor analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("fit", help="fit one model")
    p.add_argument("--model", required=True)
    _data_opts(p)
    _threshold_opts(p)
    subs["fit"] = p

    p = sub.add_parser("compare", help="fit several models and test nested pairs")
    p.add_argument("--model", nargs="+", required=True)
    _data_opts(p)
    subs["compare"] = p

    p = sub.add_parser("reliability", help="reliability and validity report")
    p.add_argument("--model", required=True)
    _data_opts(p)
    _threshold_opts(p)
    subs["reliability"] = p

    p = sub.add_parser("screen", help="descriptives, outliers and the sample ledger")
    p.add_argument("--raw", required=True)
    p.add_argument("--categories", type=int)
    p.add_argument("--columns", nargs="+")
    p.add_argument("--mahalanobis", type=float, default=12.0, help="absolute D^2 cutoff")
    p.add_argument("--chi2-alpha", type=float, help="use the chi^2(p) upper quantile instead")
    p.add_argument("--g", type=float, default=2.2, help="outlier labeling rule constant")
    p.add_argument("--output", help="write the cleaned sample as CSV")
    subs["screen"] = p

    p = sub.add_parser("power", help="RMSEA power and sample size")
    p.add_argument("--df", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--eps0", type=float, default=0.05)
    p.add_argument("--epsa", type=float, default=0.08)
    p.add_argument("--power", type=float, default=0.80)
    p.add_argument("--n", type=int, help="report power at this N instead of solving for N")
    p.add_argument("--direction", choices=(CLOSE_FIT, NOT_CLOSE_FIT), default=CLOSE_FIT)
    subs["power"] = p

    p = sub.add_parser("simulate", help="Monte Carlo calibration on the IUIPC-8 preset")
    p.add_argument("--preset", choices=("iuipc8",), default="iuipc8")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--estimators", nargs="+", default=["dwls"], type=str.lower, choices=("ml", "dwls"))
    p.add_argument("--data", choices=(ORDINAL, CONTINUOUS), default=ORDINAL)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-data", help="directory for per-replication CSV datasets")
    subs["simulate"] = p

    for p in subs.values():
        _common(p)
    return parser, subs


RUNNERS = {
    "fit": run_fit,
    "compare": run_compare,
    "reliability": run_reliability,
    "screen": run_screen,
    "power": run_power,
    "simulate": run_simulate,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            apply_config(args, subs[args.command], read_config(args.config))
        return RUNNERS[args.command](args, out)
    except UnderIdentifiedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (InputError, DataError, ModelSpecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
