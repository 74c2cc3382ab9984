"""Pointwise ANOVA for local polynomial fits.

At a grid point ``x0`` with weights ``w_i = K_h(X_i - x0)``:

    SST(x0) = sum w_i (Y_i - Ybar)^2 / sum w_i
    SSE(x0) = sum w_i (Y_i - Yhat_i)^2 / sum w_i
    SSR(x0) = sum w_i (Yhat_i - Ybar)^2 / sum w_i

with ``Ybar`` the full-sample mean and ``Yhat_i`` the local polynomial
evaluated at ``X_i``.  Because the local fit contains an intercept, the
residuals are weight-orthogonal to ``Yhat - Ybar`` and SST = SSE + SSR holds
exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, UndefinedR2
from .lpfit import Curve, Dataset, FitConfig, LocalFit, kernel_weights, local_fit, sweep

R2_RTOL = 1e-12


def sst_tolerance(ybar: float) -> float:
    return R2_RTOL * max(1.0, ybar * ybar)


@dataclass(frozen=True)
class LocalAnova:
    """Local sums of squares at ``x0``; ``r2`` is None when SST is ~0."""

    x0: float
    sst: float
    sse: float
    ssr: float
    r2: float | None

    @property
    def r2_defined(self) -> bool:
        return self.r2 is not None


def _window(data, x0, config):
    w = config.kernel.scaled(data.x - x0, config.h)
    s = w.sum()
    if s <= 0:
        raise EmptyWindow(x0)
    return w, s


def local_sst(data: Dataset, x0: float, config: FitConfig) -> float:
    """Kernel-weighted mean of ``(Y_i - Ybar)^2`` around the global mean."""
    w, s = _window(data, x0, config)
    return float(np.dot(w, (data.y - data.ybar) ** 2) / s)


def local_sse(data: Dataset, fit: LocalFit, config: FitConfig) -> float:
    """Kernel-weighted mean squared local residual; estimates sigma^2(x0)."""
    if not fit.fhat > 0:
        raise EmptyWindow(fit.x0)
    w, s = _window(data, fit.x0, config)
    return float(np.dot(w, (data.y - fit.predict(data.x)) ** 2) / s)


def local_ssr(data: Dataset, fit: LocalFit, config: FitConfig) -> float:
    w, s = _window(data, fit.x0, config)
    return float(np.dot(w, (fit.predict(data.x) - data.ybar) ** 2) / s)


def local_r2(anova: LocalAnova, ybar: float = 0.0) -> float:
    """``1 - SSE/SST``.  Raises ``UndefinedR2`` on a constant-response window."""
    if not anova.sst > sst_tolerance(ybar):
        raise UndefinedR2(f"SST(x0={anova.x0:.6g}) = {anova.sst:.3g} is numerically zero")
    return min(1.0, max(0.0, 1.0 - anova.sse / anova.sst))


def local_anova(data: Dataset, x0: float, config: FitConfig) -> LocalAnova:
    fit = local_fit(data, x0, config)
    sst = local_sst(data, x0, config)
    sse = local_sse(data, fit, config)
    ssr = local_ssr(data, fit, config)
    r2 = None
    if sst > sst_tolerance(data.ybar):
        r2 = min(1.0, max(0.0, 1.0 - sse / sst))
    return LocalAnova(float(x0), sst, sse, ssr, r2)


@dataclass
class LocalAnovaCurve:
    """Local ANOVA over a whole grid.

    Arrays are NaN at infeasible grid points; ``usable`` marks points that
    are feasible and have a defined R^2, i.e. the points that enter global
    integrals.
    """

    curve: Curve
    grid: np.ndarray
    fhat: np.ndarray
    sst: np.ndarray
    sse: np.ndarray
    ssr: np.ndarray
    r2: np.ndarray
    feasible: np.ndarray
    usable: np.ndarray

    @property
    def skipped(self) -> int:
        return int(np.count_nonzero(~self.usable))

    def points(self):
        out = []
        for g, x0 in enumerate(self.grid):
            if self.feasible[g]:
                r2 = float(self.r2[g]) if self.usable[g] else None
                out.append(LocalAnova(float(x0), float(self.sst[g]), float(self.sse[g]),
                                      float(self.ssr[g]), r2))
        return out

    def to_csv(self, path_or_file, header_lines=()):
        """Write ``x0, r2, sst, sse, ssr`` rows; infeasible points are marked."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            for line in header_lines:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            wr.writerow(["x0", "r2", "sst", "sse", "ssr", "status"])
            for g, x0 in enumerate(self.grid):
                if not self.feasible[g]:
                    wr.writerow([format(float(x0), ".17g"), "", "", "", "", "infeasible"])
                    continue
                r2 = format(float(self.r2[g]), ".17g") if self.usable[g] else ""
                wr.writerow([format(float(x0), ".17g"), r2, format(float(self.sst[g]), ".17g"),
                             format(float(self.sse[g]), ".17g"), format(float(self.ssr[g]), ".17g"),
                             "ok" if self.usable[g] else "undefined_r2"])
        finally:
            if own:
                fh.close()


def anova_from_sweep(c: Curve, y, ybar) -> LocalAnovaCurve:
    sw = c.sweep
    w = sw.weights
    ok = sw.ok
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = (y - ybar) ** 2
        sst = w @ dev / sw.fsum
        sse = np.einsum("gn,gn->g", w, (y[None, :] - sw.fitted) ** 2) / sw.fsum
        ssr = np.einsum("gn,gn->g", w, (sw.fitted - ybar) ** 2) / sw.fsum
    sst = np.where(ok, sst, np.nan)
    sse = np.where(ok, sse, np.nan)
    ssr = np.where(ok, ssr, np.nan)
    defined = ok & (np.nan_to_num(sst) > sst_tolerance(ybar))
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(defined, np.clip(1.0 - sse / sst, 0.0, 1.0), np.nan)
    return LocalAnovaCurve(c, c.grid, sw.fhat, sst, sse, ssr, r2, ok, defined)


def local_anova_curve(data: Dataset, config: FitConfig, grid=None, singular="flag") -> LocalAnovaCurve:
    """Local ANOVA at every grid point (failures flagged, not raised)."""
    c = sweep(data, config, grid, singular)
    return anova_from_sweep(c, data.y, data.ybar)


def nw_sse_identity_sides(data: Dataset, x0: float, h: float, kernel) -> tuple[float, float]:
    """Both sides of the local linear / Nadaraya-Watson SSE identity.

    Left: SSE of the local linear fit.  Right: the weighted squared error of
    the Nadaraya-Watson estimate minus ``beta1^2`` times the weighted variance
    of ``X`` about its kernel-weighted mean.  Each side is computed
    separately; the right side uses a closed-form slope.
    """
    cfg = FitConfig(h=h, p=1, kernel=kernel)
    lhs = local_sse(data, local_fit(data, x0, cfg), cfg)
    w = cfg.kernel.scaled(data.x - x0, h)
    s = w.sum()
    if s <= 0:
        raise EmptyWindow(x0)
    m_nw = np.dot(w, data.y) / s
    xk = np.dot(w, data.x) / s
    sxx = np.dot(w, (data.x - xk) ** 2)
    sxy = np.dot(w, (data.x - xk) * (data.y - m_nw))
    beta1 = sxy / sxx
    rhs = np.dot(w, (data.y - m_nw) ** 2) / s - beta1**2 * sxx / s
    return float(lhs), float(rhs)


def nw_sse_identity_gap(data: Dataset, x0: float, h: float, kernel) -> float:
    lhs, rhs = nw_sse_identity_sides(data, x0, h, kernel)
    return abs(lhs - rhs)
