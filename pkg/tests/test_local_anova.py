import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpanova.errors import EmptyWindow, UndefinedR2
from lpanova.kernels import EPANECHNIKOV, GAUSSIAN, UNIFORM
from lpanova.local_anova import (
    LocalAnova, local_anova, local_anova_curve, local_r2, local_sse, local_sst,
    nw_sse_identity_gap, nw_sse_identity_sides,
)
from lpanova.lpfit import Dataset, FitConfig, GridSpec, LocalFit, local_fit

from conftest import uniform_data

KERNELS = [EPANECHNIKOV, GAUSSIAN, UNIFORM]


def direct_sums(d, x0, h, kernel, beta):
    """Independent per-term sums from an explicitly evaluated polynomial."""
    w = kernel.scaled(d.x - x0, h)
    yhat = sum(b * (d.x - x0) ** j for j, b in enumerate(beta))
    ybar = d.y.mean()
    s = w.sum()
    return (np.sum(w * (d.y - ybar) ** 2) / s, np.sum(w * (d.y - yhat) ** 2) / s,
            np.sum(w * (yhat - ybar) ** 2) / s)


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("p", [0, 1, 3])
def test_local_sums_match_direct_oracle(kernel, p):
    d = uniform_data(8, n=90)
    cfg = FitConfig(h=0.15, p=p, kernel=kernel)
    a = local_anova(d, 0.37, cfg)
    sst, sse, ssr = direct_sums(d, 0.37, 0.15, kernel, local_fit(d, 0.37, cfg).beta)
    assert a.sst == pytest.approx(sst, rel=1e-12)
    assert a.sse == pytest.approx(sse, rel=1e-9)
    assert a.ssr == pytest.approx(ssr, rel=1e-9)


@given(st.integers(0, 10**6), st.sampled_from(KERNELS), st.integers(0, 3), st.floats(0.08, 0.6))
def test_decomposition_exact(seed, kernel, p, h):
    d = uniform_data(seed, n=60)
    c = local_anova_curve(d, FitConfig(h=h, p=p, kernel=kernel, grid=GridSpec(count=40)))
    ok = c.feasible
    np.testing.assert_array_less(np.abs(c.sst - c.sse - c.ssr)[ok], 1e-9 * c.sst[ok] + 1e-300)


@given(st.integers(0, 10**6), st.sampled_from(KERNELS), st.floats(0.08, 0.6))
def test_local_linear_r2_dominates_nadaraya_watson(seed, kernel, h):
    d = uniform_data(seed, n=60)
    grid = np.linspace(0, 1, 30)
    r0 = local_anova_curve(d, FitConfig(h=h, p=0, kernel=kernel), grid)
    r1 = local_anova_curve(d, FitConfig(h=h, p=1, kernel=kernel), grid)
    both = r0.usable & r1.usable
    assert np.all(r1.r2[both] >= r0.r2[both] - 1e-12)


@pytest.mark.parametrize("kernel", KERNELS)
def test_nw_identity(kernel):
    d = uniform_data(5, n=80)
    for x0 in (0.0, 0.3, 0.77):
        lhs, rhs = nw_sse_identity_sides(d, x0, 0.2, kernel)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
        assert nw_sse_identity_gap(d, x0, 0.2, kernel) <= 1e-9 * max(1.0, lhs)


def test_constant_window_r2_undefined():
    d = Dataset([0.0, 0.1, 0.2, 5.0], [1.0, 1.0, 1.0, 1.0])
    a = local_anova(d, 0.1, FitConfig(h=0.3))
    assert a.r2 is None and not a.r2_defined
    with pytest.raises(UndefinedR2):
        local_r2(a, 1.0)


def test_exact_line_gives_r2_one():
    x = np.linspace(0, 1, 30)
    d = Dataset(x, 2 + 3 * x)
    a = local_anova(d, 0.5, FitConfig(h=0.2))
    assert a.sse == pytest.approx(0, abs=1e-20)
    assert a.r2 == 1.0


def test_empty_window_errors():
    d = Dataset([0.0, 0.1], [0.0, 1.0])
    cfg = FitConfig(h=0.1)
    with pytest.raises(EmptyWindow):
        local_sst(d, 4.0, cfg)
    with pytest.raises(EmptyWindow):
        local_sse(d, LocalFit(4.0, np.zeros(2), 0.0, 0), cfg)


def test_curve_csv_marks_infeasible_points():
    d = Dataset([0.0, 0.05, 0.1, 0.9, 0.95], [0, 1, 2, 3, 4])
    c = local_anova_curve(d, FitConfig(h=0.1, grid=GridSpec(count=11)))
    buf = io.StringIO()
    c.to_csv(buf, ["test"])
    text = buf.getvalue()
    assert text.startswith("# test\nx0,r2,sst,sse,ssr,status")
    assert "infeasible" in text
    assert c.skipped == int((~c.usable).sum())
    assert all(isinstance(pt, LocalAnova) for pt in c.points())
