import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from evmcontrol.density import (
    anomaly_probability,
    fit_anomaly_model,
    kde_fit,
    normal_scale_bandwidth,
    percentile_rectangle,
    scv_bandwidth,
    write_density_grid_csv,
)
from evmcontrol.errors import ValidationError


def test_normal_scale_on_standard_normal(gaussian_cloud):
    H = normal_scale_bandwidth(gaussian_cloud)
    expected = len(gaussian_cloud) ** (-1 / 3)  # (4/(d+2))^(2/(d+4)) = 1 at d = 2
    assert H[0, 0] == pytest.approx(expected, rel=0.1)
    assert H[1, 1] == pytest.approx(expected, rel=0.1)
    assert abs(H[0, 1]) < 0.1 * expected


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 50))
def test_normal_scale_scaling(s):
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((200, 2))
    H1 = normal_scale_bandwidth(pts)
    H2 = normal_scale_bandwidth(pts * s)
    assert np.allclose(H2, H1 * s * s, rtol=1e-9)


def test_normal_scale_degenerate_inputs():
    with pytest.raises(ValidationError):
        normal_scale_bandwidth(np.array([[0.0, 0.0], [1.0, 1.0]]))
    line = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(ValidationError, match="collinear"):
        normal_scale_bandwidth(line)


def test_scv_close_to_normal_scale_on_gaussian():
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((800, 2))
    H = scv_bandwidth(pts, seed=1)
    Hn = normal_scale_bandwidth(pts)
    for i in (0, 1):
        assert 0.5 <= H[i, i] / Hn[i, i] <= 2.0
    # optimizer must do at least as well as a diagonal grid search oracle
    from evmcontrol.density import _scv_criterion_factory

    criterion = _scv_criterion_factory(pts, Hn)
    grid_best = min(
        criterion(np.diag([a, b]))
        for a in np.geomspace(Hn[0, 0] / 4, Hn[0, 0] * 4, 9)
        for b in np.geomspace(Hn[1, 1] / 4, Hn[1, 1] * 4, 9)
    )
    assert criterion(H) <= grid_best * (1 + 1e-6)


def test_scv_axis_rescale_equivariance():
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((600, 2))
    s = 25.0
    H1 = scv_bandwidth(pts, seed=4)
    H2 = scv_bandwidth(pts * np.array([s, 1.0]), seed=4)
    assert H2[0, 0] / (H1[0, 0] * s * s) == pytest.approx(1.0, abs=0.25)


def test_scv_small_sample_fallback():
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((10, 2))
    with pytest.warns(UserWarning, match="normal-scale"):
        H = scv_bandwidth(pts)
    assert np.allclose(H, normal_scale_bandwidth(pts))


def test_kde_point_values():
    m = kde_fit(np.array([[0.0, 0.0]]), np.eye(2))
    assert m.evaluate(np.array([0.0, 0.0])) == pytest.approx(1 / (2 * np.pi), rel=1e-12)
    assert m.evaluate(np.array([1.0, 0.0])) == pytest.approx(
        np.exp(-0.5) / (2 * np.pi), rel=1e-12
    )


def test_kde_symmetry():
    pts = np.array([[1.0, 2.0], [-1.0, -2.0]])
    m = kde_fit(pts, np.eye(2) * 0.5)
    q = np.array([[0.3, 0.7], [-0.3, -0.7]])
    v = m.evaluate(q)
    assert v[0] == pytest.approx(v[1], rel=1e-12)


def test_kde_requires_spd_bandwidth():
    with pytest.raises(ValidationError):
        kde_fit(np.zeros((3, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]))  # det < 0


def test_kde_grid_integral_near_one():
    rng = np.random.default_rng(8)
    pts = rng.multivariate_normal([0, 0], [[2.0, 0.8], [0.8, 1.0]], size=600)
    H = normal_scale_bandwidth(pts)
    m = kde_fit(pts, H)
    sds = np.sqrt(np.diag(np.cov(pts.T))) + np.sqrt(np.diag(H))
    ts = np.linspace(pts[:, 0].min() - 6 * sds[0], pts[:, 0].max() + 6 * sds[0], 220)
    cs = np.linspace(pts[:, 1].min() - 6 * sds[1], pts[:, 1].max() + 6 * sds[1], 220)
    grid = m.evaluate_grid(ts, cs)
    integral = grid.sum() * (ts[1] - ts[0]) * (cs[1] - cs[0])
    assert 0.99 <= integral <= 1.01


def test_anomaly_extremes():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((400, 2))
    refs = rng.standard_normal((400, 2))
    m = kde_fit(pts, normal_scale_bandwidth(pts), reference_points=refs)
    dens_refs = m.evaluate(refs)
    densest = refs[np.argmax(dens_refs)]
    assert anomaly_probability(m, densest) == 0.0
    assert anomaly_probability(m, np.array([50.0, -50.0])) == 1.0


def test_anomaly_monotone_in_density():
    rng = np.random.default_rng(14)
    pts = rng.standard_normal((300, 2))
    m = kde_fit(pts, normal_scale_bandwidth(pts), reference_points=rng.standard_normal((300, 2)))
    qs = np.column_stack([np.linspace(0, 4, 25), np.zeros(25)])
    dens = m.evaluate(qs)
    scores = anomaly_probability(m, qs)
    order = np.argsort(dens)
    assert np.all(np.diff(scores[order]) <= 1e-12)


def test_anomaly_requires_reference():
    m = kde_fit(np.zeros((3, 2)) + np.arange(3)[:, None], np.eye(2))
    with pytest.raises(ValidationError, match="reference"):
        anomaly_probability(m, np.array([0.0, 0.0]))


def test_anomaly_scores_uniform_on_held_out():
    rng = np.random.default_rng(23)
    cov = [[1.0, 0.6], [0.6, 1.5]]
    cloud = rng.multivariate_normal([3, 10], cov, size=12000)
    model = fit_anomaly_model(cloud[:, 0], cloud[:, 1], seed=3, bandwidth="normal_scale")
    fresh = rng.multivariate_normal([3, 10], cov, size=4000)
    scores = anomaly_probability(model, fresh)
    assert kstest(scores, "uniform").statistic < 0.03
    assert abs((scores > 0.95).mean() - 0.05) < 0.012


def test_percentile_rectangle_degenerate():
    t = np.full(10, 2.0)
    c = np.full(10, 7.0)
    r = percentile_rectangle(t, c, 0.95)
    assert (r.t_lo, r.t_hi, r.c_lo, r.c_hi) == (2, 2, 7, 7)


def test_percentile_rectangle_normal_quantiles():
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((100000, 2))
    r = percentile_rectangle(pts[:, 0], pts[:, 1], 0.95)
    for v, expected in ((r.t_lo, -1.96), (r.t_hi, 1.96), (r.c_lo, -1.96), (r.c_hi, 1.96)):
        assert v == pytest.approx(expected, abs=0.03)


def test_percentile_rectangle_levels():
    rng = np.random.default_rng(6)
    t = rng.uniform(0, 1, 5000)
    c = rng.uniform(0, 1, 5000)
    r = percentile_rectangle(t, c, 0.75)
    assert r.t_lo == pytest.approx(np.quantile(t, 0.125), rel=1e-12)
    assert r.t_hi == pytest.approx(np.quantile(t, 0.875), rel=1e-12)


def test_rectangle_coverage_bound():
    rng = np.random.default_rng(11)
    cov = [[1.0, 0.9], [0.9, 1.0]]
    pts = rng.multivariate_normal([0, 0], cov, size=20000)
    r = percentile_rectangle(pts[:, 0], pts[:, 1], 0.95)
    inside = (
        (pts[:, 0] >= r.t_lo) & (pts[:, 0] <= r.t_hi)
        & (pts[:, 1] >= r.c_lo) & (pts[:, 1] <= r.c_hi)
    )
    assert inside.mean() >= 0.90


def test_correlation_sensitivity_rectangle_misses_kde_flags():
    """A corner point of the marginal box is wildly unlikely under strong
    positive correlation; KDE flags it, the rectangle cannot."""
    rng = np.random.default_rng(31)
    cov = [[1.0, 0.9], [0.9, 1.0]]
    pts = rng.multivariate_normal([0, 0], cov, size=8000)
    t, c = pts[:, 0], pts[:, 1]
    rect = percentile_rectangle(t, c, 0.95)
    point = (rect.t_hi, rect.c_lo)  # the (97.5th of t, 2.5th of c) corner
    assert rect.contains(*point)
    model = fit_anomaly_model(t, c, seed=9, bandwidth="normal_scale")
    assert anomaly_probability(model, np.array(point)) > 0.95


def test_density_grid_csv(tmp_path):
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((200, 2))
    m = kde_fit(pts, normal_scale_bandwidth(pts), reference_points=rng.standard_normal((200, 2)))
    out = tmp_path / "grid.csv"
    write_density_grid_csv(m, np.linspace(-2, 2, 5), np.linspace(-2, 2, 4), out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,c,density,anomaly_score"
    assert len(lines) == 1 + 5 * 4
