"""Varying coefficient models ``Y = sum_k a_k(U) X_k + sigma(U) eps``.

Each coefficient function is expanded locally to degree ``p`` in ``U - u``.
The local design has covariate-major column blocks,

    [X_1 t^0 .. X_1 t^p | X_2 t^0 .. X_2 t^p | ...],   t = (U - u)/h,

so with ``d = 1`` (intercept only) it is literally the bivariate design and
every result reduces to the bivariate one.  Dividing the least squares
criterion by the density estimate does not change its minimiser, so the
undivided system is solved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, InputError
from .global_anova import HStar, _mask, assemble_hstar, hstar_trace, integrate_anova
from .local_anova import LocalAnova, anova_from_sweep, sst_tolerance
from .lpfit import (
    Curve, FitConfig, WeightedSweep, _frozen, distinct_weighted, kernel_weights, poly_design,
)


@dataclass(frozen=True)
class VcmDataset:
    """Index ``u``, covariates ``x`` (n x d, first column all ones) and ``y``."""

    u: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != u.size or y.size != u.size:
            raise InputError(f"inconsistent shapes: u {u.shape}, x {x.shape}, y {y.shape}")
        if u.size < 2 or x.shape[1] < 1:
            raise InputError("need n >= 2 and d >= 1")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("u, x and y must be finite")
        if not np.all(x[:, 0] == 1.0):
            raise InputError("first covariate column must be identically 1")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))

    @classmethod
    def from_covariates(cls, u, covariates, y):
        """Build from the non-intercept covariates ``x_2..x_d``; may be empty."""
        u = np.asarray(u, dtype=float).ravel()
        cov = np.asarray(covariates, dtype=float).reshape(u.size, -1)
        return cls(u, np.column_stack([np.ones(u.size), cov]), y)

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def ybar(self) -> float:
        return float(np.mean(self.y))


@dataclass(frozen=True)
class VcmFit:
    """``beta[k, j]`` multiplies ``X_k (U - u0)^j``; ``a_hat = beta[:, 0]``."""

    u0: float
    beta: np.ndarray
    ghat: float

    @property
    def a_hat(self) -> np.ndarray:
        return self.beta[:, 0]

    def predict(self, u, x) -> np.ndarray:
        """Local fitted values ``sum_k sum_j beta_kj (U_i - u0)^j X_ik``."""
        t = np.asarray(u, dtype=float) - self.u0
        x = np.asarray(x, dtype=float).reshape(t.size, -1)
        powers = t[:, None] ** np.arange(self.beta.shape[1])
        return np.einsum("nk,nj,kj->n", x, powers, self.beta)


def vcm_design(data: VcmDataset, grid, h, p):
    """Covariate-major local design, shape (G, n, d(p+1))."""
    t = poly_design(data.u, grid, h, p)
    z = data.x[None, :, :, None] * t[:, :, None, :]
    return z.reshape(t.shape[0], data.n, data.d * (p + 1))


class VcmCurve(Curve):
    """Grid sweep of a VCM; ``beta`` has shape (G, d, p+1)."""

    def fits(self):
        out = []
        for g, u0 in enumerate(self.grid):
            if g in self.failures:
                out.append(self.failures[g])
            else:
                out.append(VcmFit(float(u0), self.beta[g].copy(), float(self.fhat[g])))
        return out


def vcm_sweep(data: VcmDataset, config: FitConfig, grid=None, singular="flag") -> VcmCurve:
    """Fit the VCM at every grid point; failures recorded per grid index."""
    grid = config.grid_points(data.u) if grid is None else np.atleast_1d(np.asarray(grid, float))
    h, p, kernel = config.h, config.p, config.kernel
    w = kernel_weights(data.u, grid, h, kernel)
    design = vcm_design(data, grid, h, p)
    # fewer than p+1 distinct U values in a window is singular for every d
    sw = WeightedSweep(w, design, data.y, distinct_weighted(data.u, grid, h, kernel), singular)
    coef = sw.coef.reshape(grid.size, data.d, p + 1)
    beta = coef / h ** np.arange(p + 1)
    failures = {int(g): sw.error_at(int(g), float(grid[g])) for g in np.flatnonzero(~sw.ok)}
    return VcmCurve(data, config, grid, beta, sw.fhat, sw.status, failures, sw)


def vcm_local_fit(data: VcmDataset, u0: float, config: FitConfig) -> VcmFit:
    """Weighted least squares VCM fit at ``u0``.

    Raises ``EmptyWindow`` or ``SingularDesign`` (collinear covariates in the
    window, or too few points).
    """
    c = vcm_sweep(data, config, grid=[u0])
    if 0 in c.failures:
        raise c.sweep.error_at(0, float(u0), index=False)
    return c.fits()[0]


def vcm_local_anova(data: VcmDataset, fit: VcmFit, config: FitConfig) -> LocalAnova:
    """Local SST/SSE/SSR at ``fit.u0`` around the global mean of ``y``."""
    w = config.kernel.scaled(data.u - fit.u0, config.h)
    s = w.sum()
    if s <= 0:
        raise EmptyWindow(fit.u0)
    yhat = fit.predict(data.u, data.x)
    ybar = data.ybar
    sst = float(np.dot(w, (data.y - ybar) ** 2) / s)
    sse = float(np.dot(w, (data.y - yhat) ** 2) / s)
    ssr = float(np.dot(w, (yhat - ybar) ** 2) / s)
    r2 = min(1.0, max(0.0, 1.0 - sse / sst)) if sst > sst_tolerance(ybar) else None
    return LocalAnova(float(fit.u0), sst, sse, ssr, r2)


def vcm_local_anova_curve(data: VcmDataset, config: FitConfig, grid=None, singular="flag"):
    return anova_from_sweep(vcm_sweep(data, config, grid, singular), data.y, data.ybar)


@dataclass(frozen=True)
class VcmGlobalAnova:
    """Integrated VCM sums of squares (per-n scale).

    ``trace`` is ``tr(H_u*)``, reported for information only: no degrees of
    freedom or p-values are derived from it.
    """

    n: int
    d: int
    sst_integrated: float
    sst_sample: float
    sse: float
    ssr: float
    skipped_points: int
    trace: float | None = None
    hstar: HStar | None = None

    @property
    def r2(self) -> float:
        return 1.0 - self.sse / self.sst_integrated

    @property
    def r2_sample(self) -> float:
        return self.ssr / self.sst_sample


def vcm_global(data: VcmDataset, config: FitConfig, with_hstar=False,
               singular="flag") -> VcmGlobalAnova:
    """Integrate the local VCM decomposition against ``ghat``.

    Grid points that fail are left out of every integral.  With
    ``with_hstar`` the matrix ``H_u*`` is assembled on the same points.
    """
    if singular not in ("flag", "pinv"):
        raise InputError("singular policy must be 'flag' or 'pinv'")
    local = vcm_local_anova_curve(data, config, singular=singular)
    g = integrate_anova(local)
    use = _mask(local.curve, "skip", local.usable)
    tr = hstar_trace(local.curve, mask=use)
    hs = None
    if with_hstar:
        hs = assemble_hstar(local.curve.sweep, local.grid, use, config.h,
                            config.kernel.radius, data.u)
    return VcmGlobalAnova(data.n, data.d, g.sst_integrated, g.sst_sample, g.sse, g.ssr,
                          g.skipped_points, tr, hs)


__all__ = [
    "VcmDataset", "VcmFit", "VcmCurve", "VcmGlobalAnova", "vcm_design", "vcm_sweep",
    "vcm_local_fit", "vcm_local_anova", "vcm_local_anova_curve", "vcm_global",
]
