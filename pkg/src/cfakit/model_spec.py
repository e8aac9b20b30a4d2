"""Measurement-model language, parameter tables and degrees of freedom.

The accepted language is a strict subset of lavaan syntax::

    # comment
    ctrl    =~ ctrl1 + ctrl2
    aware   =~ awa1 + awa2
    collect =~ coll1 + coll2 + coll3 + coll4
    iuipc   =~ ctrl + aware + collect

A line whose right-hand side names declared factors is a second-order
declaration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MARKER = "marker-variable"
UNIT_VARIANCE = "unit-variance"
COVARIANCE_METRIC = "covariance-metric"
DELTA_ORDINAL = "delta-ordinal"

LOADING = "loading"
VARIANCE = "variance"
COVARIANCE = "covariance"
SECOND_ORDER_LOADING = "second-order-loading"

START_LOADING = 0.8
START_VARIANCE = 0.5

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class ModelSyntaxError(ValueError):
    """Malformed model source. Carries 1-based ``line`` and ``column``."""

    def __init__(self, message, line, column, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        where = f"line {line}, column {column}"
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"{where}: {message}{detail}")


class ModelSpecError(ValueError):
    """Model source that parses but violates a structural rule."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class UnderIdentifiedError(ValueError):
    """More free parameters than modeled moments."""

    def __init__(self, n_moments, n_free, detail=""):
        self.n_moments = n_moments
        self.n_free = n_free
        msg = (
            f"model is under-identified: {n_moments} moments but {n_free} free "
            f"parameters (df = {n_moments - n_free})"
        )
        super().__init__(msg + (f"; {detail}" if detail else ""))


@dataclass(frozen=True)
class ModelSpec:
    """A restricted (no cross-loadings) measurement model."""

    factors: tuple[tuple[str, tuple[str, ...]], ...]
    second_order: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        _validate(self)

    @property
    def indicators(self) -> tuple[str, ...]:
        return tuple(v for _, items in self.factors for v in items)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(self.indicators)

    @property
    def first_order_names(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.factors)

    @property
    def second_order_names(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.second_order)

    def items_of(self, factor: str) -> tuple[str, ...]:
        return dict(self.factors)[factor]

    def parent_of(self, factor: str) -> str | None:
        for higher, lower in self.second_order:
            if factor in lower:
                return higher
        return None

    def partition(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(items) for _, items in self.factors)


def _validate(spec: ModelSpec) -> None:
    seen: dict[str, str] = {}
    first = [f for f, _ in spec.factors]
    if len(set(first)) != len(first):
        raise ModelSpecError("factor declared twice")
    for fname, items in spec.factors:
        if len(items) == 0:
            raise ModelSpecError(f"factor '{fname}' has no indicators")
        if len(items) < 2:
            raise ModelSpecError(f"factor '{fname}' needs at least 2 indicators")
        for v in items:
            if v in seen:
                raise ModelSpecError(
                    f"indicator '{v}' appears under '{seen[v]}' and '{fname}'"
                )
            seen[v] = fname
    factor_names = set(first)
    clash = factor_names & set(seen)
    if clash:
        raise ModelSpecError(f"names used as both factor and indicator: {sorted(clash)}")
    owner: dict[str, str] = {}
    higher_names = [h for h, _ in spec.second_order]
    if len(set(higher_names)) != len(higher_names):
        raise ModelSpecError("second-order factor declared twice")
    for hname, lower in spec.second_order:
        if hname in factor_names or hname in seen:
            raise ModelSpecError(f"second-order factor '{hname}' reuses a name")
        if len(lower) < 2:
            raise ModelSpecError(f"second-order factor '{hname}' needs at least 2 factors")
        for f in lower:
            if f not in factor_names:
                raise ModelSpecError(f"second-order factor '{hname}' references unknown factor '{f}'")
            if f in owner:
                raise ModelSpecError(f"factor '{f}' loads on both '{owner[f]}' and '{hname}'")
            owner[f] = hname


# ---------------------------------------------------------------------------
# parsing


def _scan_line(text: str, lineno: int):
    """Tokenize one comment-stripped line into ``(lhs, [(name, column)])`` or None."""
    pos = 0
    n = len(text)

    def skip_ws(p):
        while p < n and text[p] in " \t\r":
            p += 1
        return p

    def name_at(p, expected):
        m = _NAME.match(text, p)
        if not m:
            got = repr(text[p]) if p < n else "end of line"
            raise ModelSyntaxError(f"unexpected {got}", lineno, p + 1, expected)
        return m.group(0), m.end()

    pos = skip_ws(pos)
    if pos >= n:
        return None
    lhs, pos = name_at(pos, "factor name")
    pos = skip_ws(pos)
    if not text.startswith("=~", pos):
        got = repr(text[pos]) if pos < n else "end of line"
        raise ModelSyntaxError(f"unexpected {got}", lineno, pos + 1, "'=~'")
    pos = skip_ws(pos + 2)
    if pos >= n:
        raise ModelSpecError(f"factor '{lhs}' has no indicators", lineno)
    rhs = []
    while True:
        col = pos + 1
        name, pos = name_at(pos, "indicator name")
        rhs.append((name, col))
        pos = skip_ws(pos)
        if pos >= n:
            break
        if text[pos] != "+":
            raise ModelSyntaxError(f"unexpected {text[pos]!r}", lineno, pos + 1, "'+' or end of line")
        pos = skip_ws(pos + 1)
    return lhs, rhs


def parse_model(text: str) -> ModelSpec:
    """Parse model source into a validated :class:`ModelSpec`."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        parsed = _scan_line(body, lineno)
        if parsed is not None:
            lines.append((lineno, parsed))
    if not lines:
        raise ModelSpecError("model declares no factors")

    declared: dict[str, int] = {}
    for lineno, (lhs, _) in lines:
        if lhs in declared:
            raise ModelSpecError(f"factor '{lhs}' declared twice (first on line {declared[lhs]})", lineno)
        declared[lhs] = lineno

    factors = []
    second = []
    for lineno, (lhs, rhs) in lines:
        names = [nm for nm, _ in rhs]
        is_factor = [nm in declared for nm in names]
        if any(is_factor):
            if not all(is_factor):
                bad = [nm for nm, f in zip(names, is_factor) if not f]
                raise ModelSpecError(
                    f"second-order factor '{lhs}' references unknown factor(s): {', '.join(bad)}",
                    lineno,
                )
            second.append((lhs, tuple(names), lineno))
        else:
            seen = set()
            for nm, col in rhs:
                if nm in seen:
                    raise ModelSpecError(f"duplicate indicator '{nm}' in factor '{lhs}' (column {col})", lineno)
                seen.add(nm)
            factors.append((lhs, tuple(names), lineno))

    first_names = {f for f, _, _ in factors}
    for hname, lower, lineno in second:
        for f in lower:
            if f not in first_names:
                raise ModelSpecError(
                    f"second-order factor '{hname}' references '{f}', which is not a first-order factor",
                    lineno,
                )
    owner: dict[str, tuple[str, int]] = {}
    for lhs, items, lineno in factors:
        for v in items:
            if v in owner:
                raise ModelSpecError(
                    f"duplicate indicator '{v}': already under '{owner[v][0]}' (line {owner[v][1]})",
                    lineno,
                )
            owner[v] = (lhs, lineno)
    return ModelSpec(
        factors=tuple((f, items) for f, items, _ in factors),
        second_order=tuple((h, lower) for h, lower, _ in second),
    )


def format_model(spec: ModelSpec) -> str:
    """Canonical source text; ``parse_model(format_model(s)) == s``."""
    rows = [f"{f} =~ {' + '.join(items)}" for f, items in spec.factors]
    rows += [f"{h} =~ {' + '.join(lower)}" for h, lower in spec.second_order]
    return "\n".join(rows) + "\n"


def read_model(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


# ---------------------------------------------------------------------------
# parameter table


@dataclass(frozen=True)
class ParamRow:
    lhs: str
    relation: str
    rhs: str
    free: int | None = None  # index into the free-parameter vector
    value: float | None = None  # fixed value
    start: float | None = None  # None: data-dependent (residual variances)
    constrained: bool = False  # determined by the other parameters

    @property
    def label(self) -> str:
        op = {LOADING: "=~", SECOND_ORDER_LOADING: "=~"}.get(self.relation, "~~")
        return f"{self.lhs}{op}{self.rhs}"


@dataclass(frozen=True)
class ParameterTable:
    spec: ModelSpec
    rows: tuple[ParamRow, ...]
    scaling: str = MARKER
    parameterization: str = COVARIANCE_METRIC
    _free: tuple[ParamRow, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        free = sorted((r for r in self.rows if r.free is not None), key=lambda r: r.free)
        if [r.free for r in free] != list(range(len(free))):
            raise ModelSpecError("free-parameter indices must be contiguous from 0")
        object.__setattr__(self, "_free", tuple(free))

    @property
    def n_free(self) -> int:
        return len(self._free)

    @property
    def free_rows(self) -> tuple[ParamRow, ...]:
        return self._free

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self._free]

    def find(self, lhs, relation, rhs) -> ParamRow:
        for r in self.rows:
            if (r.lhs, r.relation, r.rhs) == (lhs, relation, rhs):
                return r
        raise KeyError((lhs, relation, rhs))


def build_parameter_table(
    spec: ModelSpec, scaling: str = MARKER, parameterization: str = COVARIANCE_METRIC
) -> ParameterTable:
    """Expand a model into free/fixed parameter rows.

    Marker scaling fixes the first listed indicator's loading to 1 and frees
    the factor variance (or disturbance); unit-variance scaling frees every
    loading and fixes the (residual) factor variance to 1. Second-order
    factors always have unit variance with free second-order loadings.
    Under ``delta-ordinal`` the residual variances are constrained rows.
    """
    if scaling not in (MARKER, UNIT_VARIANCE):
        raise ValueError(f"unknown scaling {scaling!r}")
    if parameterization not in (COVARIANCE_METRIC, DELTA_ORDINAL):
        raise ValueError(f"unknown parameterization {parameterization!r}")

    rows: list[ParamRow] = []
    counter = iter(range(10_000))

    def free(lhs, rel, rhs, start):
        rows.append(ParamRow(lhs, rel, rhs, free=next(counter), start=start))

    def fixed(lhs, rel, rhs, value):
        rows.append(ParamRow(lhs, rel, rhs, value=value))

    for fname, items in spec.factors:
        for i, v in enumerate(items):
            if scaling == MARKER and i == 0:
                fixed(fname, LOADING, v, 1.0)
            else:
                free(fname, LOADING, v, START_LOADING)
    for hname, lower in spec.second_order:
        for f in lower:
            free(hname, SECOND_ORDER_LOADING, f, START_LOADING)

    exogenous = []
    for fname, _ in spec.factors:
        if spec.parent_of(fname) is None:
            exogenous.append(fname)
        if scaling == MARKER:
            free(fname, VARIANCE, fname, START_VARIANCE)
        else:
            fixed(fname, VARIANCE, fname, 1.0)
    for hname, _ in spec.second_order:
        fixed(hname, VARIANCE, hname, 1.0)
        exogenous.append(hname)
    for a in range(len(exogenous)):
        for b in range(a + 1, len(exogenous)):
            free(exogenous[a], COVARIANCE, exogenous[b], 0.0)

    for v in spec.indicators:
        if parameterization == DELTA_ORDINAL:
            rows.append(ParamRow(v, VARIANCE, v, constrained=True))
        else:
            free(v, VARIANCE, v, None)

    return ParameterTable(spec, tuple(rows), scaling, parameterization)


def n_moments(parameterization: str, p: int) -> int:
    if parameterization == DELTA_ORDINAL:
        return p * (p - 1) // 2
    return p * (p + 1) // 2


def degrees_of_freedom(table: ParameterTable, p: int | None = None) -> int:
    """Moments minus free parameters; raises :class:`UnderIdentifiedError` if negative.

    A lone factor with two indicators is also rejected (two-indicator rule).
    """
    if p is None:
        p = len(table.spec.indicators)
    if p < 2:
        raise ValueError("need at least 2 indicators")
    moments = n_moments(table.parameterization, p)
    df = moments - table.n_free
    if df < 0:
        raise UnderIdentifiedError(moments, table.n_free)
    spec = table.spec
    if len(spec.factors) == 1 and len(spec.factors[0][1]) == 2:
        raise UnderIdentifiedError(moments, table.n_free, "single factor with two indicators")
    return df
