import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gbrw.errors import DomainError, NonProbability
from gbrw.grid import Grid, GridPmf, TailCurve, convolve_values, mixture


def test_default_grid_shape():
    g = Grid()
    assert (g.lo, g.hi, g.h) == (-1200, 1200, 0.05)
    assert g.size == 2401
    assert g.points[g.index(0.0)] == 0.0


def test_grid_rejects_misaligned_bounds():
    with pytest.raises(ValueError):
        Grid(-1.03, 5.0, 0.05)
    with pytest.raises(DomainError):
        Grid().units(0.012)


def test_pmf_from_points_and_queries():
    g = GridPmf.from_points({-1.0: 0.25, 0.0: 0.25, 1.0: 0.5}, 0.05)
    assert g.lo == -20 and g.hi == 20
    assert g.mean() == pytest.approx(0.25)
    assert g.tail_at([-21, -20, 0, 20]).tolist() == [1.0, 0.75, 0.5, 0.0]
    assert g.at_least([-20, 0, 20, 21]).tolist() == [1.0, 0.75, 0.5, 0.0]


def test_pmf_rejects_bad_weights():
    with pytest.raises(NonProbability):
        GridPmf(0, np.array([0.5, 0.6]), 0.1)
    with pytest.raises(NonProbability):
        GridPmf(0, np.array([1.5, -0.5]), 0.1)


def test_rasterized_gaussian_keeps_mean_and_variance():
    from scipy import stats

    g = GridPmf.rasterize(stats.norm(0.3, 1.2), 0.05, -10, 10)
    var = float(np.dot(g.weights, (g.values - g.mean()) ** 2))
    assert g.mean() == pytest.approx(0.3, abs=1e-3)
    assert var == pytest.approx(1.44 + 0.05**2 / 12, rel=2e-3)


def test_convolve_values_extends_with_fill():
    g = GridPmf.from_points({0.0: 0.5, 0.1: 0.5}, 0.1)
    out = convolve_values(g, np.array([1.0, 0.5, 0.0]), left=1.0, right=0.0)
    # (g*u)(x_i) = (u(x_i) + u(x_{i-1})) / 2
    assert out.tolist() == [1.0, 0.75, 0.25]


def test_tail_curve_extension_and_validation():
    grid = Grid(-1.0, 1.0, 0.5)
    c = TailCurve(grid, np.array([1.0, 0.8, 0.4, 0.1, 0.0]))
    assert c.at_index([-3, 0, 4, 9]).tolist() == [1.0, 1.0, 0.0, 0.0]
    assert c(0.2).item() == 0.4 and c(-7.0).item() == 1.0
    assert c.shifted_values(1).tolist() == [1.0, 1.0, 0.8, 0.4, 0.1]
    with pytest.raises(DomainError):
        TailCurve(grid, np.array([1.0, 1.2, 0.4, 0.1, 0.0]))


weights = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 1e-3)


@given(weights, weights, st.integers(-30, 30), st.integers(-30, 30))
def test_convolution_mean_is_additive(w1, w2, lo1, lo2):
    a = GridPmf(lo1, np.array(w1) / sum(w1), 0.25)
    b = GridPmf(lo2, np.array(w2) / sum(w2), 0.25)
    assert a.convolve(b).mean() == pytest.approx(a.mean() + b.mean(), abs=1e-9)


@given(weights, st.integers(-10, 10))
def test_survival_plus_cdf_is_one_and_monotone(w, lo):
    g = GridPmf(lo, np.array(w) / sum(w), 0.5)
    units = np.arange(lo - 3, lo + len(w) + 3)
    t = g.tail_at(units)
    assert np.all(np.diff(t) <= 1e-15)
    assert np.allclose(t + g.cdf_at(units), 1.0)
    assert np.all(g.at_least(units) >= t - 1e-15)


@given(weights, weights, st.floats(0.0, 1.0))
def test_mixture_mean_is_convex_combination(w1, w2, c):
    a = GridPmf(0, np.array(w1) / sum(w1), 0.5)
    b = GridPmf(-4, np.array(w2) / sum(w2), 0.5)
    assert mixture([a, b], [c, 1 - c]).mean() == pytest.approx(c * a.mean() + (1 - c) * b.mean(), abs=1e-9)
