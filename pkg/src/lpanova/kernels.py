"""Kernel functions and the kernel constants used by the ANOVA formulas.

Three symmetric probability-density kernels are supported: Epanechnikov,
Gaussian and uniform.  The Gaussian is truncated at ``|u| > 8`` everywhere
(evaluation and quadrature); the discarded tail mass is about 1.2e-15.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import InputError, QuadratureError

GAUSSIAN_RADIUS = 8.0


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gaussian(u):
    return np.where(
        np.abs(u) <= GAUSSIAN_RADIUS, np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi), 0.0
    )


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


@dataclass(frozen=True)
class Kernel:
    """A symmetric kernel density with support ``[-radius, radius]``."""

    name: str
    radius: float
    _fn: Callable = field(repr=False, compare=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = self._fn(u)
        return float(out) if out.ndim == 0 else out

    def scaled(self, u, h):
        """``K_h(u) = K(u/h)/h``."""
        return self(np.asarray(u, dtype=float) / h) / h


EPANECHNIKOV = Kernel("epanechnikov", 1.0, _epanechnikov)
GAUSSIAN = Kernel("gaussian", GAUSSIAN_RADIUS, _gaussian)
UNIFORM = Kernel("uniform", 1.0, _uniform)

KERNELS = {k.name: k for k in (EPANECHNIKOV, GAUSSIAN, UNIFORM)}


def get_kernel(kernel) -> Kernel:
    """Resolve a kernel name (case-insensitive) or pass a ``Kernel`` through."""
    if isinstance(kernel, Kernel):
        return kernel
    try:
        return KERNELS[str(kernel).strip().lower()]
    except KeyError:
        raise InputError(
            f"unknown kernel {kernel!r}; expected one of {', '.join(sorted(KERNELS))}"
        ) from None


def eval_kernel(kernel, u):
    """Evaluate the unscaled kernel ``K(u)``; zero outside the support."""
    return get_kernel(kernel)(u)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson settings.

    ``nodes`` is the node count per integral (made odd if even) and
    ``conv_points`` the size of the uniform table on which the two
    self-convolutions are stored.
    """

    nodes: int = 2001
    conv_points: int = 4001
    tol: float = 1e-8

    def __post_init__(self):
        if self.nodes < 3 or self.conv_points < 3:
            raise InputError("quadrature node counts must be >= 3")
        if self.nodes % 2 == 0:
            object.__setattr__(self, "nodes", self.nodes + 1)


@dataclass(frozen=True)
class KernelInfo:
    """Moments, self-convolutions and the variance constant of a kernel.

    ``mu[j] = int u^j K``, ``nu[j] = int u^j K^2`` for ``j = 0..2p+2``.
    ``k0conv``/``k1conv`` tabulate ``K*K`` and ``(uK)*(uK)`` on ``conv_grid``.
    """

    kernel: Kernel
    p: int
    mu: np.ndarray
    nu: np.ndarray
    conv_grid: np.ndarray
    k0conv: np.ndarray
    k1conv: np.ndarray
    kappa0: float
    method: str

    def k0(self, v):
        return np.interp(v, self.conv_grid, self.k0conv, left=0.0, right=0.0)

    def k1(self, v):
        return np.interp(v, self.conv_grid, self.k1conv, left=0.0, right=0.0)


def _double_factorial(k):
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def _analytic_moments(name, jmax):
    mu = np.zeros(jmax + 1)
    nu = np.zeros(jmax + 1)
    for j in range(0, jmax + 1, 2):
        if name == "epanechnikov":
            mu[j] = 0.75 * (2.0 / (j + 1) - 2.0 / (j + 3))
            nu[j] = 0.5625 * 2.0 * (1.0 / (j + 1) - 2.0 / (j + 3) + 1.0 / (j + 5))
        elif name == "uniform":
            mu[j] = 1.0 / (j + 1)
            nu[j] = 0.5 / (j + 1)
        elif name == "gaussian":
            mu[j] = _double_factorial(j - 1)
            nu[j] = _double_factorial(j - 1) / 2.0 ** (j / 2) / (2.0 * math.sqrt(math.pi))
    return mu, nu


def _analytic_convolutions(name, v):
    a = np.abs(v)
    inside = a <= 2.0
    if name == "epanechnikov":
        c = np.where(inside, (2.0 - a) ** 3, 0.0)
        k0 = 3.0 * c * (a * a + 6.0 * a + 4.0) / 160.0
        k1 = 3.0 * c * (3 * a**4 + 18 * a**3 + 30 * a**2 - 12 * a - 8) / 2240.0
    elif name == "uniform":
        c = np.where(inside, 2.0 - a, 0.0)
        k0 = c / 4.0
        k1 = c * (a * a + 2.0 * a - 2.0) / 24.0
    elif name == "gaussian":
        k0 = np.exp(-v * v / 4.0) / (2.0 * math.sqrt(math.pi))
        k1 = k0 * (v * v / 4.0 - 0.5)
    else:
        raise KeyError(name)
    return k0, k1


_ANALYTIC_KAPPA0 = {
    "epanechnikov": 4152.0 / 5005.0,
    "uniform": 74.0 / 105.0,
    "gaussian": 27.0 * math.sqrt(2.0) / (64.0 * math.sqrt(math.pi)),
}


def _simpson_checked(f, lo, hi, nodes, tol, what):
    """Simpson on ``[lo, hi]`` with a half-resolution error estimate."""
    x = np.linspace(lo, hi, nodes)
    fx = f(x)
    fine = integrate.simpson(fx, x=x)
    coarse = integrate.simpson(fx[::2], x=x[::2])
    err = abs(fine - coarse) / 15.0
    if err > tol * max(1.0, abs(fine)):
        raise QuadratureError(what, err)
    return float(fine)


def numeric_moments(kernel, jmax, quadrature=None):
    """Moments ``mu_j`` and ``nu_j`` by composite Simpson over the support."""
    kernel = get_kernel(kernel)
    q = quadrature or QuadratureSpec()
    r = kernel.radius
    mu = np.array([
        _simpson_checked(lambda u, j=j: u**j * kernel(u), -r, r, q.nodes, q.tol, f"mu_{j}")
        for j in range(jmax + 1)
    ])
    nu = np.array([
        _simpson_checked(lambda u, j=j: u**j * kernel(u) ** 2, -r, r, q.nodes, q.tol, f"nu_{j}")
        for j in range(jmax + 1)
    ])
    return mu, nu


def numeric_convolutions(kernel, v, quadrature=None, block=256):
    """``K*K(v)`` and ``(uK)*(uK)(v)`` by Simpson over the exact overlap.

    Integrating only over ``[max(-r, v-r), min(r, v+r)]`` keeps the support
    kinks at the interval ends, where Simpson handles them exactly.
    """
    kernel = get_kernel(kernel)
    q = quadrature or QuadratureSpec()
    r = kernel.radius
    v = np.asarray(v, dtype=float)
    t = np.linspace(0.0, 1.0, q.nodes)
    k0 = np.zeros_like(v)
    k1 = np.zeros_like(v)
    for start in range(0, v.size, block):
        vb = v[start:start + block]
        lo = np.maximum(-r, vb - r)
        hi = np.minimum(r, vb + r)
        width = np.clip(hi - lo, 0.0, None)
        u = lo[:, None] + width[:, None] * t[None, :]
        prod = kernel(u) * kernel(vb[:, None] - u)
        dx = width / (q.nodes - 1)
        # simpson with per-row spacing: scale the unit-spacing result
        k0[start:start + block] = integrate.simpson(prod, dx=1.0, axis=1) * dx
        k1[start:start + block] = (
            integrate.simpson(prod * u * (vb[:, None] - u), dx=1.0, axis=1) * dx
        )
    return k0, k1


def kernel_info(kernel, p=1, quadrature=None, method="auto") -> KernelInfo:
    """Compute the constants of ``kernel`` needed for degree-``p`` fitting.

    Parameters
    ----------
    kernel : Kernel or str
    p : int
        Local polynomial degree; moments are returned up to order ``2p+2``.
    quadrature : QuadratureSpec, optional
    method : {"auto", "analytic", "numeric"}
        ``auto`` uses closed forms (available for all built-in kernels).

    Raises
    ------
    QuadratureError
        If a Simpson integral fails its half-resolution error check.
    """
    kernel = get_kernel(kernel)
    if p < 0:
        raise InputError("p must be >= 0")
    q = quadrature or QuadratureSpec()
    jmax = 2 * p + 2
    grid = np.linspace(-2.0 * kernel.radius, 2.0 * kernel.radius, q.conv_points)
    analytic = method in ("auto", "analytic") and kernel.name in _ANALYTIC_KAPPA0
    if method == "analytic" and not analytic:
        raise InputError(f"no closed forms for kernel {kernel.name!r}")
    if analytic:
        mu, nu = _analytic_moments(kernel.name, jmax)
        k0, k1 = _analytic_convolutions(kernel.name, grid)
        kappa0 = _ANALYTIC_KAPPA0[kernel.name]
        used = "analytic"
    else:
        mu, nu = numeric_moments(kernel, jmax, q)
        k0, k1 = numeric_convolutions(kernel, grid, q)
        mu2 = mu[2]
        kappa0 = float(integrate.simpson((k0 - k1 / mu2) ** 2, x=grid))
        used = "numeric"
    for arr in (mu, nu, grid, k0, k1):
        arr.setflags(write=False)
    return KernelInfo(kernel, p, mu, nu, grid, k0, k1, float(kappa0), used)


def variance_inflation_ratio(kernel, quadrature=None, method="auto") -> float:
    """Ratio ``kappa0 / nu0`` of the projected-response variance constant to
    the local linear variance constant."""
    info = kernel_info(kernel, 1, quadrature, method)
    return info.kappa0 / info.nu[0]
