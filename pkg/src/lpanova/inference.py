"""F tests and ANOVA tables for local polynomial regression.

The F distribution is evaluated through our own regularized incomplete beta
(modified Lentz continued fraction), which accepts the non-integer degrees of
freedom that ``tr(H*)`` produces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DegenerateDf, InputError, NonpositiveDenominator

BETACF_MAXITER = 300
BETACF_EPS = 1e-12
_TINY = 1e-300

VARIANTS = ("standard", "conservative")


def _betacf(a, b, x):
    """Continued fraction for ``I_x(a, b)`` (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``, ``0 <= x <= 1``."""
    if not (a > 0 and b > 0):
        raise InputError(f"betainc needs a, b > 0 (got {a}, {b})")
    if not 0.0 <= x <= 1.0:
        raise InputError(f"betainc needs 0 <= x <= 1 (got {x})")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def _check_df(d1, d2):
    if not (d1 > 0 and d2 > 0 and math.isfinite(d1) and math.isfinite(d2)):
        raise InputError(f"F degrees of freedom must be positive and finite (got {d1}, {d2})")


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution; real-valued df allowed."""
    _check_df(d1, d2)
    if math.isnan(x):
        raise InputError("F cdf argument is NaN")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail ``1 - F_cdf``, computed directly so small p-values keep
    their relative accuracy."""
    _check_df(d1, d2)
    if math.isnan(x):
        raise InputError("F sf argument is NaN")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))


@dataclass(frozen=True)
class FTestResult:
    f_stat: float
    df_model: float
    df_resid: float
    p_value: float
    variant: str
    numerator: float
    denominator: float

    def to_dict(self):
        return {
            "f_stat": self.f_stat, "df_model": self.df_model, "df_resid": self.df_resid,
            "p_value": self.p_value, "variant": self.variant,
        }


def _trace_of(hstar):
    tr = getattr(hstar, "trace", hstar)
    if tr is None:
        raise InputError("tr(H*) is required for an F test")
    return float(tr)


def f_test(glob, hstar, variant="conservative") -> FTestResult:
    """F statistic for ``H0: m`` constant.

    ``standard``: ``(SSR/(tr-1)) / (SSE/(n-tr))``.
    ``conservative``: the denominator uses ``sum (Y - Ybar)^2 - n SSR``, which
    absorbs the sums of squares lost near the boundary.

    ``hstar`` may be an ``HStar`` or the trace itself.  If the denominator is
    exactly zero (noiseless data) the statistic is ``inf`` with p-value 0.
    """
    if variant not in VARIANTS:
        raise InputError(f"F variant must be one of {VARIANTS}")
    tr = _trace_of(hstar)
    n = glob.n
    df1, df2 = tr - 1.0, n - tr
    if not (df1 > 0 and df2 > 0):
        raise DegenerateDf(f"degrees of freedom ({df1:.6g}, {df2:.6g}) must be positive (tr={tr:.6g}, n={n})")
    ssr_raw = n * glob.ssr
    if variant == "standard":
        resid = n * glob.sse
    else:
        resid = n * glob.sst_sample - ssr_raw
    if resid < 0:
        raise NonpositiveDenominator(
            f"{variant} F denominator is negative ({resid:.6g}); regression SS exceeds total"
        )
    num = ssr_raw / df1
    den = resid / df2
    if resid == 0:
        if ssr_raw <= 0:
            raise NonpositiveDenominator("F is 0/0: both regression and residual SS are zero")
        return FTestResult(math.inf, df1, df2, 0.0, variant, num, den)
    if ssr_raw <= 0 and glob.sst_sample <= 0:
        raise NonpositiveDenominator("constant response: F undefined")
    f = max(num / den, 0.0)
    return FTestResult(f, df1, df2, f_sf(f, df1, df2), variant, num, den)


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: float
    ss_raw: float
    ss_per_n: float
    ms: float | None
    f: float | None
    p_value: float | None


@dataclass(frozen=True)
class AnovaTable:
    """Regression / Residual / Total rows plus the integrated total.

    Sums of squares are stored on both scales: ``ss_per_n`` (integrals of
    the local quantities) and ``ss_raw = n * ss_per_n``.  The residual row
    always carries the integrated SSE and its mean square
    ``n SSE / (n - tr)``; the F column follows the test variant.  Boundary
    loss makes ``SSE + SSR`` fall short of the sample total, so both totals
    are listed.
    """

    rows: tuple
    n: int
    h: float | None
    kernel: str | None
    p: int | None
    variant: str
    test: FTestResult

    def as_dicts(self):
        return [
            {"source": r.source, "df": r.df, "ss_raw": r.ss_raw, "ss_per_n": r.ss_per_n,
             "ms": r.ms, "f": r.f, "p_value": r.p_value}
            for r in self.rows
        ]

    def to_json(self, meta=None) -> str:
        out = {"n": self.n, "h": self.h, "kernel": self.kernel, "p": self.p,
               "variant": self.variant, "rows": self.as_dicts()}
        if meta:
            out["provenance"] = meta
        return json.dumps(_json_safe(out), indent=2)

    def to_csv(self) -> str:
        lines = ["source,df,ss_raw,ss_per_n,ms,f,p_value"]
        for r in self.as_dicts():
            lines.append(",".join(
                r["source"] if k == "source" else _fmt17(r[k])
                for k in ("source", "df", "ss_raw", "ss_per_n", "ms", "f", "p_value")
            ))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = f"{'Source':<20}{'df':>12}{'SS':>16}{'SS/n':>14}{'MS':>14}{'F':>12}{'p-value':>12}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.source:<20}{r.df:>12.4f}{r.ss_raw:>16.4f}{r.ss_per_n:>14.4f}"
                f"{_fmt4(r.ms):>14}{_fmt4(r.f):>12}{_fmtp(r.p_value):>12}".rstrip()
            )
        return "\n".join(lines) + "\n"


def _fmt17(v):
    return "" if v is None else format(v, ".17g")


def _fmt4(v):
    return "" if v is None else f"{v:.4f}"


def _fmtp(v):
    if v is None:
        return ""
    return f"{v:.4g}" if v < 1e-4 else f"{v:.4f}"


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def anova_table(glob, hstar, variant="conservative", h=None, kernel=None, p=None) -> AnovaTable:
    """Three-row ANOVA table with the F test of ``variant``."""
    test = f_test(glob, hstar, variant)
    n = glob.n
    tr = _trace_of(hstar)
    ssr, sse = glob.ssr, glob.sse
    rows = (
        AnovaRow("Regression", tr - 1.0, n * ssr, ssr, n * ssr / (tr - 1.0), test.f_stat, test.p_value),
        AnovaRow("Residual", n - tr, n * sse, sse, n * sse / (n - tr), None, None),
        AnovaRow("Total", n - 1.0, n * glob.sst_sample, glob.sst_sample, None, None, None),
        AnovaRow("Total (integrated)", n - 1.0, n * glob.sst_integrated, glob.sst_integrated,
                 None, None, None),
    )
    kname = getattr(kernel, "name", kernel)
    return AnovaTable(rows, n, h, kname, p, variant, test)
