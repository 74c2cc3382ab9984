import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpanova.errors import EmptyWindow, GridFailures, InputError, SingularDesign
from lpanova.kernels import EPANECHNIKOV, GAUSSIAN, UNIFORM
from lpanova.lpfit import (
    PINV, Dataset, FitConfig, GridSpec, curve, kde, local_fit, sweep,
)

from conftest import uniform_data


def wls_oracle(x, y, x0, h, p, kernel):
    """Normal equations on the raw (unscaled) centred design."""
    w = kernel.scaled(x - x0, h)
    X = (x - x0)[:, None] ** np.arange(p + 1)
    return np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * y))


@pytest.mark.parametrize("p", [0, 1, 2, 3])
@pytest.mark.parametrize("kernel", [EPANECHNIKOV, GAUSSIAN, UNIFORM])
def test_local_fit_matches_normal_equations(p, kernel):
    d = uniform_data(3, n=150)
    fit = local_fit(d, 0.41, FitConfig(h=0.2, p=p, kernel=kernel))
    np.testing.assert_allclose(fit.beta, wls_oracle(d.x, d.y, 0.41, 0.2, p, kernel), rtol=1e-7, atol=1e-9)


def test_polynomial_reproduced_exactly():
    x = np.linspace(0, 1, 40)
    y = 1 - 2 * x + 3 * x**2
    fit = local_fit(Dataset(x, y), 0.5, FitConfig(h=0.3, p=2))
    np.testing.assert_allclose(fit.beta, [0.25 + 0.5, -2 + 3.0, 3.0], atol=1e-10)
    assert fit.predict(0.6) == pytest.approx(1 - 1.2 + 3 * 0.36)


def test_empty_window():
    d = Dataset([0.0, 0.1, 0.2], [1.0, 2.0, 3.0])
    with pytest.raises(EmptyWindow):
        local_fit(d, 5.0, FitConfig(h=0.5))


def test_too_few_distinct_points_is_singular():
    d = Dataset([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(SingularDesign, match="distinct"):
        local_fit(d, 0.0, FitConfig(h=0.5, p=1))


def test_sweep_records_failures_by_grid_index():
    d = Dataset([0.0, 0.05, 0.1, 3.0, 3.05], [0, 1, 2, 3, 4])
    cfg = FitConfig(h=0.2, grid=GridSpec(start=0.0, stop=3.0, step=0.5))
    c = sweep(d, cfg)
    assert set(c.failures) == {1, 2, 3, 4, 5}
    assert np.isnan(c.beta[2]).all()
    with pytest.raises(GridFailures, match="grid indices 1, 2, 3, 4, 5"):
        curve(d, cfg, strict=True)


def test_pinv_policy_gives_minimum_norm_fit():
    # one point in the window: the fit interpolates it, and the scaled
    # coefficients are the minimum-norm solution of [1, -1/3] c = 5
    d = Dataset([0.0, 1.0, 1.1], [5.0, 1.0, 2.0])
    c = sweep(d, FitConfig(h=0.3), grid=[0.1], singular="pinv")
    assert c.status[0] == PINV and c.ok[0]
    np.testing.assert_allclose(c.sweep.coef[0], [4.5, -1.5], atol=1e-12)
    assert c.sweep.fitted[0, 0] == pytest.approx(5.0, abs=1e-12)
    assert c.fits()[0].predict(0.0) == pytest.approx(5.0, abs=1e-12)


def test_grid_spec():
    x = np.array([0.0, 2.0])
    assert GridSpec(count=5).points(x).tolist() == [0, 0.5, 1, 1.5, 2]
    g = GridSpec(start=1, stop=52, step=0.5).points(x)
    assert g.size == 103 and g[-1] == 52
    assert GridSpec(count=3, padded=True).points(x, pad=1).tolist() == [-1, 1, 3]
    with pytest.raises(InputError):
        GridSpec(start=1, stop=2)


def test_config_validation():
    with pytest.raises(InputError, match="bandwidth"):
        FitConfig(h=0)
    with pytest.raises(InputError, match="degree"):
        FitConfig(h=1, p=-1)
    with pytest.raises(InputError):
        Dataset([1, 2], [1, np.nan])
    with pytest.raises(InputError):
        Dataset([1, 2, 3], [1, 2])


def test_dataset_is_immutable():
    d = Dataset([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        d.x[0] = 9


def test_kde_integrates_to_one():
    d = uniform_data(1, n=60)
    g = np.linspace(-0.3, 1.3, 4001)
    f = [kde(d, t, 0.1) for t in g]
    assert np.trapezoid(f, g) == pytest.approx(1.0, abs=1e-5)


@given(st.floats(0.05, 0.5), st.integers(0, 2), st.integers(0, 10_000))
def test_fit_is_affine_equivariant_in_y(h, p, seed):
    d = uniform_data(seed, n=50)
    cfg = FitConfig(h=h, p=p, grid=GridSpec(count=15))
    c1 = sweep(d, cfg)
    c2 = sweep(Dataset(d.x, 3 * d.y + 2), cfg)
    ok = c1.ok
    shift = np.zeros(p + 1)
    shift[0] = 2
    np.testing.assert_allclose(c2.beta[ok], 3 * c1.beta[ok] + shift, rtol=1e-8, atol=1e-8)
