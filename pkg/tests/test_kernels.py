import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from scipy import integrate

from lpanova.errors import InputError
from lpanova.kernels import (
    EPANECHNIKOV, GAUSSIAN, KERNELS, UNIFORM, QuadratureSpec, eval_kernel, get_kernel,
    kernel_info, numeric_convolutions, numeric_moments, variance_inflation_ratio,
)

u = sp.symbols("u", real=True)
SYMBOLIC = {
    "epanechnikov": (sp.Rational(3, 4) * (1 - u**2), -1, 1),
    "uniform": (sp.Rational(1, 2), -1, 1),
    "gaussian": (sp.exp(-u**2 / 2) / sp.sqrt(2 * sp.pi), -sp.oo, sp.oo),
}


def sym_moments(name, jmax):
    k, lo, hi = SYMBOLIC[name]
    mu = [float(sp.integrate(u**j * k, (u, lo, hi))) for j in range(jmax + 1)]
    nu = [float(sp.integrate(u**j * k**2, (u, lo, hi))) for j in range(jmax + 1)]
    return np.array(mu), np.array(nu)


def quad_kappa0(kernel, mu2):
    """kappa0 = int (K*K - (uK)*(uK)/mu2)^2 by nested adaptive quadrature."""
    k = get_kernel(kernel)
    r = k.radius

    def conv(v, w):
        lo, hi = max(-r, v - r), min(r, v + r)
        if hi <= lo:
            return 0.0
        return integrate.quad(lambda t: w(t, v) * k(t) * k(v - t), lo, hi, epsabs=1e-13)[0]

    def integrand(v):
        a = conv(v, lambda t, v: 1.0)
        b = conv(v, lambda t, v: t * (v - t))
        return (a - b / mu2) ** 2

    return integrate.quad(integrand, -2 * r, 2 * r, points=[0.0], limit=200, epsabs=1e-13)[0]


def test_kernel_values():
    assert eval_kernel("epanechnikov", 0.0) == 0.75
    assert eval_kernel("epanechnikov", 1.5) == 0.0
    assert eval_kernel("uniform", 0.99) == 0.5
    assert eval_kernel("gaussian", 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert eval_kernel("gaussian", 9.0) == 0.0


def test_get_kernel_rejects_unknown():
    with pytest.raises(InputError, match="unknown kernel"):
        get_kernel("triweight")
    assert get_kernel("Gaussian") is GAUSSIAN


@given(st.floats(-3, 3), st.floats(0.01, 5))
def test_scaled_kernel_is_symmetric(v, h):
    for k in (EPANECHNIKOV, GAUSSIAN, UNIFORM):
        assert k.scaled(v, h) == pytest.approx(k.scaled(-v, h))


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_analytic_moments_match_symbolic(name):
    info = kernel_info(name, p=2)
    mu, nu = sym_moments(name, 6)
    np.testing.assert_allclose(info.mu, mu, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(info.nu, nu, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("name", ["epanechnikov", "uniform"])
def test_numeric_moments_agree_with_analytic(name):
    mu, nu = numeric_moments(name, 4)
    info = kernel_info(name, p=1)
    np.testing.assert_allclose(mu, info.mu, atol=1e-12)
    np.testing.assert_allclose(nu, info.nu, atol=1e-12)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_convolutions_numeric_vs_closed_form(name):
    v = np.linspace(-2.5, 2.5, 41)
    info = kernel_info(name)
    k0, k1 = numeric_convolutions(name, v, QuadratureSpec(nodes=4001))
    np.testing.assert_allclose(k0, info.k0(v), atol=2e-6)
    np.testing.assert_allclose(k1, info.k1(v), atol=2e-6)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_kappa0_closed_form_against_quadrature_oracle(name):
    info = kernel_info(name)
    assert info.kappa0 == pytest.approx(quad_kappa0(name, info.mu[2]), rel=1e-8)


def test_numeric_kappa0_path():
    a = kernel_info("epanechnikov", method="analytic").kappa0
    b = kernel_info("epanechnikov", method="numeric").kappa0
    assert b == pytest.approx(a, rel=1e-6)


def test_variance_inflation_closed_forms():
    # frozen from the quadrature oracle above
    assert variance_inflation_ratio("epanechnikov") == pytest.approx(1384 / 1001, rel=1e-14)
    assert variance_inflation_ratio("uniform") == pytest.approx(148 / 105, rel=1e-14)
    assert variance_inflation_ratio("gaussian") == pytest.approx(27 * math.sqrt(2) / 32, rel=1e-14)


def test_kernel_info_arrays_are_read_only():
    info = kernel_info("uniform")
    with pytest.raises(ValueError):
        info.mu[0] = 2.0


def test_quadrature_spec_forces_odd_nodes():
    assert QuadratureSpec(nodes=100).nodes == 101
    with pytest.raises(InputError):
        QuadratureSpec(nodes=2)
