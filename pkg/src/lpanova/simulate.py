"""Data generators and Monte Carlo studies.

Every replicate draws from its own ``numpy`` generator keyed by
``(base_seed, replicate, stream)``, with separate streams for the covariate
and the noise.  Results therefore do not depend on execution order or on the
number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, LpAnovaError, NumericalError
from .global_anova import hstar_trace, integrate_anova
from .inference import f_test
from .local_anova import local_anova_curve
from .lpfit import Dataset, FitConfig, GridSpec, sweep

FAMILIES = ("bump", "twisted_pear", "bump_scaled", "pear_scaled")
ESTIMATORS = ("r2_anova", "r2_anova_adj", "r2_rho", "r2_s", "r2_linear")
MAX_FAIL_FRACTION = 0.01

X_STREAM, EPS_STREAM = 0, 1


class StudyAborted(NumericalError):
    """Too many replicates failed for the summary to be trusted."""


def bump_mean(x, a=5.0):
    return 2.0 - a * (x - np.exp(-100.0 * (x - 0.5) ** 2))


def pear_mean(x, a=0.1):
    return 5.0 + a * x * np.exp(5.0 - 0.5 * x)


def pear_scale(x):
    return (1.0 + 0.5 * x) / 3.0


@dataclass(frozen=True)
class Generator:
    """A simulation model.

    ``param`` is sigma for ``bump``/``twisted_pear`` and the effect size ``a``
    for ``bump_scaled``/``pear_scaled``.
    """

    family: str
    param: float
    n: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if int(self.n) != self.n or self.n < 2:
            raise InputError(f"n must be an integer >= 2 (got {self.n})")
        if not math.isfinite(self.param):
            raise InputError("generator parameter must be finite")

    def draw_x(self, rng, n):
        if self.family in ("bump", "bump_scaled"):
            return rng.uniform(0.0, 1.0, n)
        return rng.normal(1.2, 1.0 / 3.0, n)

    def response(self, x, eps):
        f, t = self.family, self.param
        if f == "bump":
            return bump_mean(x) + t * eps
        if f == "bump_scaled":
            return bump_mean(x, t) + eps
        if f == "twisted_pear":
            return pear_mean(x) + pear_scale(x) * t * eps
        return pear_mean(x, t) + pear_scale(x) * eps

    def mean(self, x):
        f, t = self.family, self.param
        if f == "bump":
            return bump_mean(x)
        if f == "bump_scaled":
            return bump_mean(x, t)
        if f == "twisted_pear":
            return pear_mean(x)
        return pear_mean(x, t)


def _key(seed):
    return [int(s) for s in np.atleast_1d(seed)]


def stream(seed, which) -> np.random.Generator:
    """Independent generator for ``seed`` (int or int sequence) and stream id."""
    return np.random.default_rng(_key(seed) + [which])


def generate(gen: Generator, seed, x=None) -> Dataset:
    """Draw a dataset; ``x`` overrides the covariate draw (noise unchanged)."""
    if x is None:
        x = gen.draw_x(stream(seed, X_STREAM), gen.n)
    else:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != gen.n:
            raise InputError(f"forced x has {x.size} values, expected n={gen.n}")
    eps = stream(seed, EPS_STREAM).standard_normal(gen.n)
    return Dataset(x, gen.response(x, eps))


@dataclass(frozen=True)
class RsqSuite:
    r2_anova: float
    r2_anova_adj: float
    r2_rho: float
    r2_s: float
    r2_linear: float
    undefined: tuple = ()

    def as_dict(self):
        return {k: getattr(self, k) for k in ESTIMATORS}


def _sq_corr(a, b):
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = np.dot(da, da), np.dot(db, db)
    if saa <= 0 or sbb <= 0:
        return math.nan
    return float(np.dot(da, db) ** 2 / (saa * sbb))


def rsq_suite(data: Dataset, config: FitConfig, singular="pinv") -> RsqSuite:
    """Five coefficients of determination from one dataset.

    ``r2_anova`` is ``SSR / int SST fhat`` and ``r2_anova_adj`` the adjusted
    version with ``tr(H*)`` degrees of freedom (same SST).  ``r2_rho`` is the
    squared correlation of ``mhat(X_i)`` with ``Y``; ``r2_s`` is
    ``1 - RSS / sum (Y - Ybar)^2``; ``mhat(X_i)`` is the local fit at each
    design point.  Undefined values are NaN and named in ``undefined``.
    """
    y = data.y
    n = data.n
    undefined = []
    local = local_anova_curve(data, config, singular=singular)
    try:
        g = integrate_anova(local)
        tr = hstar_trace(local.curve, mask=local.usable)
        r2 = g.ssr / g.sst_integrated
        r2_adj = 1.0 - (g.sse / (n - tr)) / (g.sst_integrated / (n - 1))
    except NumericalError:
        r2 = r2_adj = math.nan
        undefined += ["r2_anova", "r2_anova_adj"]
    at_x = sweep(data, config, grid=data.x, singular=singular)
    if not np.all(at_x.ok):
        raise at_x.sweep.error_at(int(np.flatnonzero(~at_x.ok)[0]), float(data.x[~at_x.ok][0]))
    m = at_x.beta[:, 0]
    sst = float(np.sum((y - y.mean()) ** 2))
    rho = _sq_corr(m, y)
    r2s = 1.0 - float(np.sum((y - m) ** 2)) / sst if sst > 0 else math.nan
    lin = _sq_corr(data.x, y)
    for name, v in (("r2_rho", rho), ("r2_s", r2s), ("r2_linear", lin)):
        if math.isnan(v):
            undefined.append(name)
    return RsqSuite(r2, r2_adj, rho, r2s, lin, tuple(undefined))


def summarize(values) -> dict:
    """Mean, sd and boxplot five-number summary of the finite values."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"count": 0, "mean": math.nan, "sd": math.nan, "min": math.nan, "q1": math.nan,
                "median": math.nan, "q3": math.nan, "max": math.nan, "negative": 0}
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "count": int(v.size),
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
        "q3": float(q[3]), "max": float(q[4]),
        "negative": int(np.count_nonzero(v < 0)),
    }


@dataclass
class StudyResult:
    """Per-replicate values (NaN for failed replicates) and their summaries."""

    generator: Generator
    config: FitConfig
    reps: int
    seed: int
    values: dict
    failures: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return {k: summarize(v) for k, v in self.values.items()}

    def rows(self):
        names = list(self.values)
        for r in range(self.reps):
            yield [r] + [float(self.values[k][r]) for k in names]


def _rsq_task(args):
    gen, config, seed, rep, singular = args
    try:
        s = rsq_suite(generate(gen, [seed, rep]), config, singular)
        return rep, s.as_dict(), None
    except LpAnovaError as e:
        return rep, None, f"{type(e).__name__}: {e}"


def _run(task, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(task, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        out = [task(j) for j in jobs]
    return sorted(out, key=lambda t: t[0])


def _check_failures(failures, reps):
    if len(failures) > MAX_FAIL_FRACTION * reps:
        first = next(iter(failures.values()))
        raise StudyAborted(
            f"{len(failures)} of {reps} replicates failed (limit {MAX_FAIL_FRACTION:.0%}); "
            f"first: {first}"
        )


def rsq_study(gen: Generator, config: FitConfig, reps: int, seed: int,
              workers=None, singular="pinv") -> StudyResult:
    """Repeat ``rsq_suite`` over ``reps`` seeded replicates.

    Failed replicates are recorded and excluded; more than 1% failures
    raises ``StudyAborted``.
    """
    if int(reps) != reps or reps < 1:
        raise InputError(f"reps must be a positive integer (got {reps})")
    jobs = [(gen, config, seed, r, singular) for r in range(reps)]
    values = {k: np.full(reps, np.nan) for k in ESTIMATORS}
    failures = {}
    for rep, d, err in _run(_rsq_task, jobs, workers):
        if err is not None:
            failures[rep] = err
            continue
        for k in ESTIMATORS:
            values[k][rep] = d[k]
    _check_failures(failures, reps)
    return StudyResult(gen, config, reps, seed, values, failures)


def f_replicate(data: Dataset, config: FitConfig, variant="conservative", singular="pinv"):
    """Conservative F test on one dataset, df from ``tr(H*)`` on the same grid."""
    local = local_anova_curve(data, config, singular=singular)
    g = integrate_anova(local)
    tr = hstar_trace(local.curve, mask=local.usable)
    return f_test(g, tr, variant)


def _power_task(args):
    gen, config, seed, rep, level, singular = args
    try:
        t = f_replicate(generate(gen, [seed, rep]), config, singular=singular)
        return rep, t.p_value, None
    except LpAnovaError as e:
        return rep, None, f"{type(e).__name__}: {e}"


@dataclass(frozen=True)
class PowerRow:
    family: str
    a: float
    n: int
    h: float
    reject_rate: float
    mc_se: float
    reps: int
    failures: int


def rejection_rate(gen: Generator, config: FitConfig, reps: int, seed: int, level=0.05,
                   workers=None, singular="pinv") -> PowerRow:
    jobs = [(gen, config, seed, r, level, singular) for r in range(reps)]
    pvals, failures = [], {}
    for rep, p, err in _run(_power_task, jobs, workers):
        if err is not None:
            failures[rep] = err
        else:
            pvals.append(p)
    _check_failures(failures, reps)
    pvals = np.asarray(pvals)
    rate = float(np.mean(pvals < level))
    se = math.sqrt(max(rate * (1.0 - rate), 1e-12) / pvals.size)
    return PowerRow(gen.family, gen.param, gen.n, config.h, rate, se, pvals.size, len(failures))


def power_study(family: str, a_values, n_values, h_values, reps: int, seed: int,
                level=0.05, kernel="epanechnikov", p=1, grid_count=200, workers=None,
                singular="pinv") -> list:
    """Rejection rates of the conservative F test over an ``(a, n, h)`` sweep.

    The same replicate seeds are reused across ``a``, so the power curves
    are coupled (common random numbers).
    """
    rows = []
    for n in n_values:
        for h in h_values:
            cfg = FitConfig(h=h, p=p, kernel=kernel, grid=GridSpec(count=grid_count))
            for a in a_values:
                gen = Generator(family, float(a), int(n))
                rows.append(rejection_rate(gen, cfg, reps, seed, level, workers, singular))
    return rows


__all__ = [
    "FAMILIES", "ESTIMATORS", "Generator", "generate", "stream", "RsqSuite", "rsq_suite",
    "StudyResult", "StudyAborted", "summarize", "rsq_study", "f_replicate", "rejection_rate",
    "PowerRow", "power_study", "bump_mean", "pear_mean", "pear_scale",
]
