"""Global ANOVA by integrating local quantities, and the H* matrix.

Global sums of squares are trapezoid integrals over the grid of the local
quantities weighted by the density estimate.  Writing ``K_i = K_h(X_i - x)``
and ``z_i`` for the local design row, the integrand of H* at grid point x is

    (W H f)(x)_{ik} = K_i K_k z_i' M(x)^{-1} z_k,   M(x) = sum_i K_i z_i z_i'.

With ``sqrt(K) Z = Q R`` this is ``(sqrt(K_i) Q_i) . (sqrt(K_k) Q_k)``, so H* is
assembled as ``C C'`` with ``C`` stacking ``sqrt(tau_g K) Q_g`` over the grid
(``tau_g`` the trapezoid weights).  Cost is O(G n^2 (p+1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllPointsInfeasible, InputError
from .local_anova import LocalAnovaCurve, local_anova_curve
from .lpfit import Curve, Dataset, FitConfig, sweep

MAX_N = 5000

SST_CONVENTIONS = ("sample", "integrated")


def trapezoid_weights(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    d = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass(frozen=True)
class GlobalAnova:
    """Global sums of squares on the per-n scale.

    ``r2`` is ``ssr / sst`` under ``sst_convention``; ``r2_adjusted`` needs
    ``trace`` (tr H*) and is None without it.
    """

    n: int
    sst_integrated: float
    sst_sample: float
    sse: float
    ssr: float
    skipped_points: int
    sst_convention: str = "sample"
    trace: float | None = None

    @property
    def sst(self) -> float:
        return self.sst_sample if self.sst_convention == "sample" else self.sst_integrated

    @property
    def r2(self) -> float:
        return self.ssr / self.sst

    @property
    def r2_integrated(self) -> float:
        return self.ssr / self.sst_integrated

    @property
    def r2_sample(self) -> float:
        return self.ssr / self.sst_sample

    @property
    def r2_adjusted(self) -> float | None:
        if self.trace is None:
            return None
        return 1.0 - (self.sse / (self.n - self.trace)) / (self.sst / (self.n - 1))

    def with_trace(self, trace):
        return GlobalAnova(self.n, self.sst_integrated, self.sst_sample, self.sse, self.ssr,
                           self.skipped_points, self.sst_convention, float(trace))

    def with_convention(self, convention):
        if convention not in SST_CONVENTIONS:
            raise InputError(f"sst convention must be one of {SST_CONVENTIONS}")
        return GlobalAnova(self.n, self.sst_integrated, self.sst_sample, self.sse, self.ssr,
                           self.skipped_points, convention, self.trace)


def integrate_anova(local: LocalAnovaCurve, sst_convention="sample", trace=None) -> GlobalAnova:
    """Integrate ``SST(x), SSE(x), SSR(x)`` against ``fhat`` by trapezoid.

    Grid points that are infeasible or have undefined R^2 contribute zero to
    all three integrals, so ``sse + ssr == sst_integrated`` survives.
    """
    if sst_convention not in SST_CONVENTIONS:
        raise InputError(f"sst convention must be one of {SST_CONVENTIONS}")
    use = local.usable
    if np.count_nonzero(use) < 2:
        raise AllPointsInfeasible(
            f"only {np.count_nonzero(use)} of {use.size} grid points are usable"
        )
    tau = trapezoid_weights(local.grid) * local.fhat
    tau = np.where(use, tau, 0.0)

    def integral(v):
        return float(np.dot(tau, np.where(use, v, 0.0)))

    y = local.curve.data.y
    return GlobalAnova(
        n=y.size,
        sst_integrated=integral(local.sst),
        sst_sample=float(np.mean((y - y.mean()) ** 2)),
        sse=integral(local.sse),
        ssr=integral(local.ssr),
        skipped_points=local.skipped,
        sst_convention=sst_convention,
        trace=None if trace is None else float(trace),
    )


def global_anova(data: Dataset, config: FitConfig, sst_convention="sample",
                 with_trace=True, singular="flag") -> GlobalAnova:
    """Local sweep + integration; ``trace`` from the same grid, skipping the
    same infeasible points.  ``singular`` is passed to the sweep."""
    local = local_anova_curve(data, config, singular=singular)
    tr = hstar_trace(local.curve, mask=local.usable) if with_trace else None
    return integrate_anova(local, sst_convention, tr)


INFEASIBLE_POLICIES = ("raise", "skip", "pinv")


def _resolve(data_or_curve, config, on_infeasible="raise"):
    if isinstance(data_or_curve, Curve):
        return data_or_curve
    if on_infeasible not in INFEASIBLE_POLICIES:
        raise InputError(f"on_infeasible must be one of {INFEASIBLE_POLICIES}")
    return sweep(data_or_curve, config, singular="pinv" if on_infeasible == "pinv" else "flag")


def _mask(c: Curve, on_infeasible, mask):
    """Grid points entering the quadrature.

    ``raise``: any failed point aborts.  ``skip``: failed points are left
    out.  ``pinv``: rank-deficient windows were solved by minimum-norm least
    squares; only empty windows (which contribute nothing) are left out.
    """
    if mask is not None:
        return np.asarray(mask, bool) & c.ok
    if on_infeasible == "raise":
        c.raise_failures()
    elif on_infeasible not in INFEASIBLE_POLICIES:
        raise InputError(f"on_infeasible must be one of {INFEASIBLE_POLICIES}")
    return c.ok


def hstar_trace(data_or_curve, config=None, on_infeasible="raise", mask=None) -> float:
    """``tr(H*)`` in O(G n (p+1)) without forming the matrix."""
    c = _resolve(data_or_curve, config, on_infeasible)
    use = _mask(c, on_infeasible, mask)
    sw = c.sweep
    tau = trapezoid_weights(c.grid)
    lev = np.einsum("gn,gnq->g", sw.weights, sw.qbasis**2)
    return float(np.dot(np.where(use, tau, 0.0), np.where(use, lev, 0.0)))


@dataclass(frozen=True)
class HStar:
    """Assembled H* with the grid it was integrated on."""

    matrix: np.ndarray
    trace: float
    grid: np.ndarray
    h: float
    radius: float
    x: np.ndarray
    skipped_points: int = 0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def interior_mask(self) -> np.ndarray:
        """Rows whose kernel window lies inside both the grid and the data range."""
        lo = max(self.grid[0], self.x.min())
        hi = min(self.grid[-1], self.x.max())
        r = self.radius * self.h
        return (self.x - r >= lo) & (self.x + r <= hi)

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def df_model(self) -> float:
        return self.trace - 1.0

    def df_resid(self) -> float:
        return self.n - self.trace

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(f"# n={self.n} h={self.h!r} trace={self.trace!r} "
                     f"grid_start={self.grid[0]!r} grid_stop={self.grid[-1]!r} "
                     f"grid_count={self.grid.size}\n")
            np.savetxt(fh, self.matrix, delimiter=",", fmt="%.17g")

    def to_npz(self, path, **meta):
        np.savez(path, matrix=self.matrix, grid=self.grid, x=self.x, h=self.h,
                 trace=self.trace, **meta)


def hstar(data: Dataset, config: FitConfig, on_infeasible="raise", max_n=MAX_N,
          mask=None) -> HStar:
    """Assemble ``H* = int W H fhat dx`` by trapezoid quadrature on the grid.

    Raises ``GridFailures`` (listing grid indices) if any grid point is
    infeasible, unless ``on_infeasible`` is ``"skip"`` or ``"pinv"``.
    """
    if data.n > max_n:
        raise InputError(f"n={data.n} exceeds the H* size cap {max_n} (O(n^2) memory)")
    c = _resolve(data, config, on_infeasible)
    use = _mask(c, on_infeasible, mask)
    return assemble_hstar(c.sweep, c.grid, use, config.h, config.kernel.radius, data.x)


def assemble_hstar(sw, grid, use, h, radius, x) -> HStar:
    """``C C'`` from a weighted sweep, quadrature over the grid points in ``use``."""
    tau = trapezoid_weights(grid)
    idx = np.flatnonzero(use)
    n = sw.weights.shape[1]
    # (G', n, q) -> (n, G'*q), scaled so that C C' is the quadrature sum
    blocks = np.sqrt(tau[idx])[:, None, None] * np.sqrt(sw.weights[idx])[:, :, None] * sw.qbasis[idx]
    cmat = np.transpose(blocks, (1, 0, 2)).reshape(n, -1)
    mat = cmat @ cmat.T
    mat = 0.5 * (mat + mat.T)
    return HStar(mat, float(np.trace(mat)), np.asarray(grid), h, radius,
                 np.array(x), int(np.count_nonzero(~np.asarray(use))))


def projected_response(hs: HStar, y) -> np.ndarray:
    """``y* = H* y``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (hs.n,):
        raise InputError(f"response length {y.size} does not match H* size {hs.n}")
    return hs.matrix @ y


def projected_response_direct(data: Dataset, config: FitConfig, on_infeasible="raise") -> np.ndarray:
    """``Y*_i = int sum_j beta_j(x) (X_i - x)^j K_h(X_i - x) dx`` from the local fits."""
    c = _resolve(data, config, on_infeasible)
    use = _mask(c, on_infeasible, None)
    tau = np.where(use, trapezoid_weights(c.grid), 0.0)
    integrand = np.where(use[:, None], c.sweep.weights * np.nan_to_num(c.sweep.fitted), 0.0)
    return tau @ integrand


@dataclass(frozen=True)
class QuadraticFormReport:
    sse_form: float
    ssr_form: float
    sse_gap: float
    ssr_gap: float

    @property
    def sse_rel(self):
        return self.sse_gap / max(abs(self.sse_form), 1e-300)

    @property
    def ssr_rel(self):
        return self.ssr_gap / max(abs(self.ssr_form), 1e-300)


def quadratic_form_check(hs: HStar, y, glob: GlobalAnova) -> QuadraticFormReport:
    """Compare ``n^-1 y'(I-H*)y`` and ``n^-1 y'(H*-L)y`` with the integrals."""
    y = np.asarray(y, dtype=float)
    n = y.size
    hy = projected_response(hs, y)
    sse_form = float(y @ y - y @ hy) / n
    ssr_form = float(y @ hy) / n - float(y.mean()) ** 2
    return QuadraticFormReport(sse_form, ssr_form, abs(sse_form - glob.sse), abs(ssr_form - glob.ssr))


def idempotency_residual(hs: HStar, m_values, rows=None) -> float:
    """``max_i |((H* - H*^2) m)_i|`` over interior rows (or ``rows``)."""
    m = np.asarray(m_values, dtype=float)
    hm = hs.matrix @ m
    r = hm - hs.matrix @ hm
    rows = hs.interior_mask() if rows is None else rows
    if not np.any(rows):
        raise InputError("no interior rows to evaluate")
    return float(np.max(np.abs(r[rows])))


def centering_gap(hs: HStar, rows=None) -> float:
    """``max |(H*-L)^2 - (H*^2 - L)|`` over the given rows (all by default)."""
    n = hs.n
    ell = np.full((n, n), 1.0 / n)
    a = hs.matrix - ell
    h2 = hs.matrix @ hs.matrix
    d = a @ a - (h2 - ell)
    if rows is not None:
        d = d[rows][:, rows]
    return float(np.max(np.abs(d)))


def asymptotic_trace(kinfo, h, support_length) -> float:
    """First-order ``tr(H*) ~ |Omega| (nu0 + nu2/mu2) / h`` for local linear."""
    return support_length * (kinfo.nu[0] + kinfo.nu[2] / kinfo.mu[2]) / h


__all__ = [
    "GlobalAnova", "HStar", "QuadraticFormReport", "integrate_anova", "global_anova",
    "hstar", "hstar_trace", "assemble_hstar", "projected_response", "projected_response_direct",
    "quadratic_form_check", "idempotency_residual", "centering_gap", "asymptotic_trace",
    "trapezoid_weights",
]
