"""Local polynomial fitting by kernel-weighted least squares.

At a grid point ``x0`` the fit minimises

    sum_i (Y_i - sum_j beta_j (X_i - x0)^j)^2 K_h(X_i - x0)

over ``beta``.  Every grid point of a sweep is solved in one batch: the
design is centred at ``x0`` and its columns scaled by ``h^j`` (so entries are
``((X_i - x0)/h)^j``), then the sqrt-weighted design is QR-factorised.  The
``h^j`` scaling keeps the triangular factor well conditioned for small
bandwidths; coefficients are unscaled before they are returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindow, GridFailures, InputError, SingularDesign
from .kernels import EPANECHNIKOV, Kernel, get_kernel

COND_LIMIT = 1e12

OK, EMPTY, SINGULAR, PINV = 0, 1, 2, 3
SINGULAR_POLICIES = ("flag", "pinv")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Paired covariate/response sample."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise InputError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size < 2:
            raise InputError("need at least 2 observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("x and y must be finite")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def ybar(self) -> float:
        return float(np.mean(self.y))


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid.

    Either ``count`` equally spaced points over the data range (optionally
    padded by the kernel support radius ``radius * h`` on both sides), or an
    explicit ``start``/``stop``/``step`` progression with ``stop`` included.
    """

    count: int = 200
    start: float | None = None
    stop: float | None = None
    step: float | None = None
    padded: bool = False

    def __post_init__(self):
        explicit = (self.start, self.stop, self.step)
        if any(v is not None for v in explicit) and any(v is None for v in explicit):
            raise InputError("grid start, stop and step must be given together")
        if self.step is not None:
            if not self.step > 0 or not self.stop > self.start:
                raise InputError("grid needs step > 0 and stop > start")
        elif self.count < 2:
            raise InputError("grid count must be >= 2")

    def points(self, x, pad=0.0) -> np.ndarray:
        if self.step is not None:
            m = int(round((self.stop - self.start) / self.step))
            return self.start + self.step * np.arange(m + 1)
        lo, hi = float(np.min(x)), float(np.max(x))
        if self.padded:
            lo, hi = lo - pad, hi + pad
        return np.linspace(lo, hi, self.count)


@dataclass(frozen=True)
class FitConfig:
    """Degree ``p``, bandwidth ``h``, kernel and grid of a local fit."""

    h: float
    p: int = 1
    kernel: Kernel = EPANECHNIKOV
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if not (np.isfinite(self.h) and self.h > 0):
            raise InputError(f"bandwidth h must be > 0 (got {self.h})")
        if int(self.p) != self.p or self.p < 0:
            raise InputError(f"degree p must be a nonnegative integer (got {self.p})")
        object.__setattr__(self, "p", int(self.p))

    def grid_points(self, x) -> np.ndarray:
        return self.grid.points(x, pad=self.kernel.radius * self.h)


@dataclass(frozen=True)
class LocalFit:
    """Fit at one grid point: ``beta[j]`` is the coefficient of ``(x - x0)^j``."""

    x0: float
    beta: np.ndarray
    fhat: float
    n_eff: int

    def predict(self, x):
        """Evaluate the local polynomial at ``x``."""
        d = np.asarray(x, dtype=float) - self.x0
        return np.polynomial.polynomial.polyval(d, self.beta)


def kernel_weights(x, grid, h, kernel) -> np.ndarray:
    """Matrix ``K_h(X_i - g)`` with one row per grid point."""
    kernel = get_kernel(kernel)
    return kernel.scaled(np.asarray(x)[None, :] - np.asarray(grid)[:, None], h)


def kde(data, x0, h, kernel=EPANECHNIKOV) -> float:
    """Kernel density estimate ``n^-1 sum_i K_h(X_i - x0)``."""
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if not h > 0:
        raise InputError("bandwidth h must be > 0")
    return float(np.mean(get_kernel(kernel).scaled(x - x0, h)))


class WeightedSweep:
    """Batched weighted least squares over a set of grid points.

    Parameters
    ----------
    weights : (G, n) array
        Kernel weights ``K_h`` per grid point.
    design : (G, n, q) array
        Local design matrices (already centred and scaled).
    y : (n,) array
    distinct : (G,) int array, optional
        Count of distinct covariate values with positive weight; points with
        fewer than ``q`` are singular regardless of conditioning.
    singular : {"flag", "pinv"}
        ``flag`` leaves singular points unsolved (status SINGULAR).  ``pinv``
        solves them by minimum-norm least squares (status PINV): the local
        fit is then the orthogonal projection onto the column space of the
        weighted design, which keeps every ANOVA identity exact and is what
        H* needs at the sparse ends of a padded grid.

    Attributes
    ----------
    status : (G,) int array of OK / EMPTY / SINGULAR / PINV
    coef : (G, q) scaled coefficients, NaN where not OK
    fitted : (G, n) local fitted values ``design @ coef``
    qbasis : (G, n, q) orthonormal basis of ``sqrt(K) * design``
    """

    def __init__(self, weights, design, y, distinct=None, singular="flag"):
        if singular not in SINGULAR_POLICIES:
            raise InputError(f"singular policy must be one of {SINGULAR_POLICIES}")
        self.weights = weights
        self.design = design
        self.y = y
        G, n, q = design.shape
        self.fsum = weights.sum(axis=1)
        self.fhat = self.fsum / n
        self.n_eff = np.count_nonzero(weights > 0, axis=1)

        status = np.full(G, OK)
        status[self.fsum <= 0] = EMPTY
        if distinct is not None:
            status[(status == OK) & (distinct < q)] = SINGULAR

        sw = np.sqrt(weights)
        qb, r = np.linalg.qr(sw[:, :, None] * design)
        sv = np.linalg.svd(r, compute_uv=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = (sv[:, 0] / sv[:, -1]) ** 2
        cond = np.where(np.isfinite(cond), cond, np.inf)
        status[(status == OK) & (cond > COND_LIMIT)] = SINGULAR
        self.cond = cond
        self.status = status

        ok = status == OK
        coef = np.full((G, q), np.nan)
        if ok.any():
            rhs = np.einsum("gnq,gn->gq", qb[ok], sw[ok] * y[None, :])
            coef[ok] = np.linalg.solve(r[ok], rhs[:, :, None])[:, :, 0]
        if singular == "pinv":
            for g in np.flatnonzero(status == SINGULAR):
                qb[g], coef[g] = _min_norm(sw[g][:, None] * design[g], sw[g] * y)
                status[g] = PINV
        self.coef = coef
        self.qbasis = qb
        ok = self.ok
        self.fitted = np.einsum("gnq,gq->gn", design, np.nan_to_num(coef))
        self.fitted[~ok] = np.nan

    @property
    def ok(self):
        return (self.status == OK) | (self.status == PINV)

    def error_at(self, g, x0, index=True):
        idx = g if index else None
        if self.status[g] == EMPTY:
            return EmptyWindow(x0, idx)
        if self.status[g] == SINGULAR:
            reason = (
                f"condition number {self.cond[g]:.3g}"
                if np.isfinite(self.cond[g]) and self.cond[g] > COND_LIMIT
                else "too few distinct covariate values with positive weight"
            )
            return SingularDesign(x0, idx, reason)
        return None


def _min_norm(a, b):
    """Minimum-norm solution of ``a c ~ b`` and an orthonormal basis of range(a),
    zero-padded to ``a.shape[1]`` columns."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > s[0] * COND_LIMIT ** -0.5
    basis = np.where(keep[None, :], u, 0.0)
    c = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    return basis, c


def poly_design(x, grid, h, p):
    """Scaled centred Vandermonde ``((X_i - g)/h)^j``, shape (G, n, p+1)."""
    t = (np.asarray(x)[None, :] - np.asarray(grid)[:, None]) / h
    return t[:, :, None] ** np.arange(p + 1)


def distinct_weighted(x, grid, h, kernel):
    """Number of distinct covariate values with positive weight per grid point."""
    ux = np.unique(x)
    return np.count_nonzero(kernel_weights(ux, grid, h, kernel) > 0, axis=1)


@dataclass
class Curve:
    """Local fits over a grid.

    ``beta`` holds unscaled coefficients (NaN rows where the fit failed);
    ``failures`` maps grid index to the exception for that point.
    """

    data: Dataset
    config: FitConfig
    grid: np.ndarray
    beta: np.ndarray
    fhat: np.ndarray
    status: np.ndarray
    failures: dict
    sweep: WeightedSweep = field(repr=False)

    @property
    def ok(self):
        return self.sweep.ok

    def fits(self):
        """One entry per grid point: a ``LocalFit`` or the failure exception."""
        out = []
        for g, x0 in enumerate(self.grid):
            if g in self.failures:
                out.append(self.failures[g])
            else:
                out.append(LocalFit(float(x0), self.beta[g].copy(), float(self.fhat[g]),
                                    int(self.sweep.n_eff[g])))
        return out

    def raise_failures(self):
        if self.failures:
            raise GridFailures(self.failures)


def sweep(data: Dataset, config: FitConfig, grid=None, singular="flag") -> Curve:
    """Fit at every grid point; failed points are recorded, not dropped.

    ``singular="pinv"`` solves rank-deficient windows by minimum-norm least
    squares instead of recording them as failures (empty windows still fail).
    """
    grid = config.grid_points(data.x) if grid is None else np.atleast_1d(np.asarray(grid, float))
    h, p, kernel = config.h, config.p, config.kernel
    w = kernel_weights(data.x, grid, h, kernel)
    design = poly_design(data.x, grid, h, p)
    sw = WeightedSweep(w, design, data.y, distinct_weighted(data.x, grid, h, kernel), singular)
    beta = sw.coef / h ** np.arange(p + 1)
    failures = {}
    for g in np.flatnonzero(~sw.ok):
        failures[int(g)] = sw.error_at(int(g), float(grid[g]))
    return Curve(data, config, grid, beta, sw.fhat, sw.status, failures, sw)


def curve(data: Dataset, config: FitConfig, strict=False) -> Curve:
    """Grid sweep driver.  With ``strict=True`` any failed point raises
    ``GridFailures`` listing the offending grid indices."""
    c = sweep(data, config)
    if strict:
        c.raise_failures()
    return c


def local_fit(data: Dataset, x0: float, config: FitConfig) -> LocalFit:
    """Weighted least squares local polynomial fit at ``x0``.

    Raises
    ------
    EmptyWindow
        No observation has positive weight at ``x0``.
    SingularDesign
        Fewer than ``p+1`` distinct weighted covariate values, or the normal
        matrix condition number exceeds 1e12.
    """
    c = sweep(data, config, grid=[x0])
    if 0 in c.failures:
        raise c.sweep.error_at(0, float(x0), index=False)
    return c.fits()[0]
