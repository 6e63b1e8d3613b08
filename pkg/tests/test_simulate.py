import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbrw.config import marginal_from
from gbrw.errors import PopulationCapExceeded
from gbrw.grid import Grid, GridPmf
from gbrw.laws import CommonShift, Independent, MonteCarlo, constant_branching, displacement_law
from gbrw.recurse import base_tail, run
from gbrw.simulate import (
    EmpiricalCDF,
    dkw_epsilon,
    empirical_cdf,
    median,
    replicate_seeds,
    sample_max,
    set_threads,
    sup_distance,
    tightness_report,
)

from models import binary_pm1, random_structured_model
from oracles import random_walk_quantile_width

GRID = Grid()
H = GRID.h


def pm(x):
    return GridPmf.point_mass(x, H)


def test_deterministic_binary_tree():
    law = displacement_law(GRID, Independent(pm(1.0)))
    assert sample_max(constant_branching({2: 1.0}), law, 0, 7, seed=1) == 7.0


def test_single_path_point_mass():
    law = displacement_law(GRID, Independent(pm(0.35)))
    assert sample_max(constant_branching({1: 1.0}), law, 0, 9, seed=5) == pytest.approx(9 * 0.35, abs=1e-12)


def test_binary_pm1_small_horizon_matches_recursion():
    br, law = binary_pm1()
    e = empirical_cdf(br, law, 0, 3, 100_000, seed=11)
    assert set(np.unique(e.samples)) <= {-3.0, -1.0, 1.0, 3.0}
    exact = run(br, law, 3, ["exact"]).curve("exact", 0)
    assert sup_distance(e, exact) <= dkw_epsilon(100_000)


def test_R_one_is_one_sample():
    br, law = binary_pm1()
    e = empirical_cdf(br, law, 0, 6, 1, seed=99)
    assert e.R == 1 and e.samples[0] == sample_max(br, law, 0, 6, seed=99)


def test_deterministic_law_gives_a_step():
    law = displacement_law(GRID, Independent(pm(1.0)))
    e = empirical_cdf(constant_branching({2: 1.0}), law, 0, 4, 100, seed=0)
    assert np.all(e.samples == 4.0)
    assert e(3.999) == 0.0 and e(4.0) == 1.0


def test_median_conventions():
    assert median(EmpiricalCDF(np.array([3.0, 1.0, 2.0]), 0, 1)) == 2.0
    assert median(EmpiricalCDF(np.full(10, 2.5), 0, 1)) == 2.5
    assert median(base_tail(0)) == 0.0


def test_quantile_is_lower_order_statistic():
    e = EmpiricalCDF(np.arange(1.0, 21.0), 0, 1)
    assert e.quantile(0.05) == 1.0 and e.quantile(0.95) == 19.0 and e.quantile(1.0) == 20.0


def test_m_equal_n_is_zero():
    br, law = binary_pm1()
    e = empirical_cdf(br, law, 4, 4, 50, seed=3)
    assert np.all(e.samples == 0.0)


def test_population_cap():
    g = marginal_from({"gaussian": {"sd": 1.0}}, GRID)
    law = displacement_law(GRID, Independent(g))
    with pytest.raises(PopulationCapExceeded):
        empirical_cdf(constant_branching({3: 1.0}), law, 0, 12, 4, seed=0, node_cap=500)


def test_seeds_are_order_independent():
    full = replicate_seeds(42, np.arange(1000))
    assert np.array_equal(replicate_seeds(42, np.arange(500, 1000)), full[500:])
    assert np.unique(full).size == 1000


def test_results_do_not_depend_on_thread_count():
    br, law = binary_pm1()
    a = empirical_cdf(br, law, 0, 8, 2000, seed=8, threads=1).samples
    b = empirical_cdf(br, law, 0, 8, 2000, seed=8, threads=4).samples
    set_threads(None)
    assert np.array_equal(a, b)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(-20, 20), st.integers(1, 8))
def test_shifting_marginals_shifts_the_maximum(seed, c_units, n):
    rng = np.random.default_rng(seed)
    br, law = random_structured_model(rng, Grid(-40, 40, H), k0=2, periodic=False)
    a = sample_max(br, law, 0, n, seed)
    b = sample_max(br, law.shifted(c_units * H), 0, n, seed)
    assert b == pytest.approx(a + n * c_units * H, abs=1e-9)


def test_common_shift_recursion_agreement():
    g = GridPmf.from_points({-0.5: 0.5, 0.5: 0.5}, H)
    Y = GridPmf.from_points({-1.0: 0.3, 0.0: 0.4, 1.0: 0.3}, H)
    law = displacement_law(GRID, CommonShift(Y, g))
    br = constant_branching({1: 0.4, 3: 0.6})
    R = 100_000
    e = empirical_cdf(br, law, 0, 6, R, seed=21)
    assert sup_distance(e, run(br, law, 6, ["exact"]).curve("exact", 0)) <= dkw_epsilon(R)


def test_monte_carlo_family_samples():
    sampler = lambda rng, n, k, size: rng.choice([-1.0, 1.0], size=(size, k))  # noqa: E731
    law = displacement_law(GRID, MonteCarlo(sampler))
    br = constant_branching({2: 1.0})
    R = 20_000
    e = empirical_cdf(br, law, 0, 4, R, seed=5)
    exact = run(*binary_pm1(), 4, ["exact"]).curve("exact", 0)
    assert sup_distance(e, exact) <= dkw_epsilon(R)
    assert np.array_equal(e.samples, empirical_cdf(br, law, 0, 4, R, seed=5).samples)


def test_deterministic_tightness_width_zero():
    law = displacement_law(GRID, Independent(pm(1.0)))
    t = tightness_report(constant_branching({2: 1.0}), law, [2, 4, 6], 200, 0.05, seed=1)
    assert all(w == 0 for w in t.widths.values())
    assert [r.median for r in t.rows] == [2.0, 4.0, 6.0]


def test_single_path_width_follows_convolution_oracle():
    steps = {-20: 1 / 3, 0: 1 / 3, 20: 1 / 3}  # units of h: -1, 0, 1
    law = displacement_law(GRID, Independent(GridPmf.from_points({u * H: p for u, p in steps.items()}, H)))
    t = tightness_report(constant_branching({1: 1.0}), law, [5, 20], 50_000, 0.05, seed=4)
    for row in t.rows:
        assert row.q_lo <= 0 <= row.q_hi
        oracle = random_walk_quantile_width({-1: 1 / 3, 0: 1 / 3, 1: 1 / 3}, row.n, 0.05)
        assert abs(row.width - oracle) <= 1.0
    assert t.widths[20] > t.widths[5]


def test_dkw_half_width():
    # the acceptance tolerance 0.0051 is slightly tighter than this band
    assert dkw_epsilon(100_000) == pytest.approx(math.sqrt(math.log(200) / 200_000))
    assert dkw_epsilon(100_000) == pytest.approx(0.005147, abs=1e-6)
