import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpanova.errors import AllPointsInfeasible, GridFailures, InputError
from lpanova.global_anova import (
    GlobalAnova, asymptotic_trace, centering_gap, global_anova, hstar, hstar_trace,
    idempotency_residual, integrate_anova, projected_response, projected_response_direct,
    quadratic_form_check, trapezoid_weights,
)
from lpanova.kernels import EPANECHNIKOV, GAUSSIAN, kernel_info
from lpanova.local_anova import local_anova_curve
from lpanova.lpfit import Dataset, FitConfig, GridSpec

from conftest import uniform_data


def hstar_oracle(d, cfg):
    """Element-by-element trapezoid sum of W H fhat over the grid."""
    grid = cfg.grid_points(d.x)
    tau = trapezoid_weights(grid)
    out = np.zeros((d.n, d.n))
    for t, g in zip(tau, grid):
        w = cfg.kernel.scaled(d.x - g, cfg.h)
        X = (d.x - g)[:, None] ** np.arange(cfg.p + 1)
        H = X @ np.linalg.solve(X.T @ (w[:, None] * X), X.T * w)
        # W = diag(K_h)/fhat, so W H fhat = diag(K_h) H
        out += t * w[:, None] * H
    return out


def test_trapezoid_weights():
    w = trapezoid_weights([0.0, 1.0, 3.0])
    assert w.tolist() == [0.5, 1.5, 1.0]


def test_hstar_matches_elementwise_oracle():
    d = uniform_data(2, n=25)
    cfg = FitConfig(h=0.3, grid=GridSpec(count=60))
    hs = hstar(d, cfg)
    np.testing.assert_allclose(hs.matrix, hstar_oracle(d, cfg), atol=1e-12)
    assert hs.trace == pytest.approx(hstar_trace(d, cfg), rel=1e-12)


def test_hstar_symmetric_exactly():
    d = uniform_data(4, n=80)
    hs = hstar(d, FitConfig(h=0.2, p=2, grid=GridSpec(count=300)))
    assert np.max(np.abs(hs.matrix - hs.matrix.T)) == 0.0


def test_projected_response_two_paths_agree():
    d = uniform_data(6, n=100)
    cfg = FitConfig(h=0.15, grid=GridSpec(count=400, padded=True))
    hs = hstar(d, cfg, on_infeasible="pinv")
    a = projected_response(hs, d.y)
    b = projected_response_direct(d, cfg, on_infeasible="pinv")
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12)


def test_hstar_raises_with_grid_index():
    d = Dataset([0.0, 0.05, 0.1, 0.9, 0.95, 1.0], [0, 1, 2, 3, 4, 5])
    with pytest.raises(GridFailures, match="grid indices"):
        hstar(d, FitConfig(h=0.1, grid=GridSpec(count=21)))


def test_hstar_size_cap():
    d = uniform_data(1, n=30)
    with pytest.raises(InputError, match="size cap"):
        hstar(d, FitConfig(h=0.3), max_n=20)


@given(st.integers(0, 10**6), st.integers(0, 2), st.floats(0.05, 0.5))
def test_global_identity_exact(seed, p, h):
    d = uniform_data(seed, n=70)
    g = integrate_anova(local_anova_curve(d, FitConfig(h=h, p=p, grid=GridSpec(count=50))))
    assert g.sse + g.ssr == pytest.approx(g.sst_integrated, rel=1e-9)


def test_integrated_sst_close_to_sample_when_padded():
    d = uniform_data(11, n=2000)
    cfg = FitConfig(h=0.05, grid=GridSpec(count=2000, padded=True))
    g = global_anova(d, cfg, singular="pinv", with_trace=False)
    assert abs(g.sst_integrated - g.sst_sample) / g.sst_sample <= 1e-3


def test_exact_line():
    x = np.linspace(0, 1, 50)
    g = global_anova(Dataset(x, 1 + 2 * x), FitConfig(h=0.2), "integrated")
    assert g.sse == pytest.approx(0, abs=1e-20)
    assert g.r2 == pytest.approx(1.0, abs=1e-12)


def test_conventions_and_adjusted_r2():
    d = uniform_data(12, n=120)
    g = global_anova(d, FitConfig(h=0.15), "integrated")
    assert g.r2 == pytest.approx(1 - g.sse / g.sst_integrated)
    assert g.r2_adjusted <= g.r2
    s = g.with_convention("sample")
    assert s.r2 == pytest.approx(g.ssr / g.sst_sample)
    with pytest.raises(InputError):
        g.with_convention("other")
    assert GlobalAnova(10, 1, 1, 0.5, 0.5, 0).r2_adjusted is None


def test_all_points_infeasible():
    d = Dataset([0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(AllPointsInfeasible):
        integrate_anova(local_anova_curve(d, FitConfig(h=0.1)))


def test_constant_and_linear_inputs_reproduced_at_interior_rows():
    r = np.random.default_rng(3)
    x = r.uniform(0, 1, 200)
    d = Dataset(x, np.zeros(200))
    hs = hstar(d, FitConfig(h=0.1, grid=GridSpec(count=8000, padded=True)), on_infeasible="pinv")
    rows = hs.interior_mask()
    assert rows.sum() > 100
    np.testing.assert_allclose(hs.row_sums()[rows], 1.0, atol=1e-6)
    lin = 3 - 2 * x
    np.testing.assert_allclose(projected_response(hs, lin)[rows], lin[rows], atol=1e-6)
    assert idempotency_residual(hs, lin) <= 1e-6
    assert centering_gap(hs, rows) <= 1e-5


def test_quadratic_form_constant_y():
    d = Dataset(np.linspace(0, 1, 60), np.full(60, 2.0))
    cfg = FitConfig(h=0.2, grid=GridSpec(count=1000, padded=True))
    hs = hstar(d, cfg, on_infeasible="pinv")
    g = GlobalAnova(60, 0.0, 0.0, 0.0, 0.0, 0)
    q = quadratic_form_check(hs, d.y, g)
    assert abs(q.sse_form) < 1e-5 * 4 and abs(q.ssr_form) < 1e-5 * 4


def test_asymptotic_trace_constant():
    info = kernel_info(EPANECHNIKOV)
    assert asymptotic_trace(info, 0.1, 1.0) == pytest.approx(10 * (0.6 + (3 / 35) / 0.2))


def test_hstar_export(tmp_path):
    d = uniform_data(1, n=20)
    hs = hstar(d, FitConfig(h=0.4, kernel=GAUSSIAN, grid=GridSpec(count=50)))
    path = tmp_path / "h.csv"
    hs.to_csv(path, ["k=v"])
    back = np.loadtxt(path, delimiter=",", comments="#")
    np.testing.assert_array_equal(back, hs.matrix)
    hs.to_npz(tmp_path / "h.npz")
    with np.load(tmp_path / "h.npz") as z:
        np.testing.assert_array_equal(z["matrix"], hs.matrix)
