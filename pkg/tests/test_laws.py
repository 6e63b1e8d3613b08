import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gbrw.config import marginal_from
from gbrw.errors import GridTooNarrow, KTooLarge, NonProbability, NotScheduled, ZeroOffspring
from gbrw.grid import Grid, GridPmf
from gbrw.laws import (
    CommonShift,
    Independent,
    ProductMixture,
    check_branching_assumptions,
    check_joint_tail,
    check_marginal_assumptions,
    constant_branching,
    displacement_law,
    make_branching_schedule,
    marginal,
    symmetrize,
    symmetrize_joint,
)
from gbrw.recurse import step_exact
from gbrw.grid import TailCurve

from oracles import geometric_moments

H = 0.05
GRID = Grid()


def pm(x, h=H):
    return GridPmf.point_mass(x, h)


# -- branching -------------------------------------------------------------


def test_constant_binary_branching():
    law = constant_branching({2: 1.0})
    assert all(law.mean(n) == 2.0 for n in range(5))
    rep = check_branching_assumptions(law, "bounded")
    assert rep.passed and rep.info["k0"] == 2
    assert 2.0 - 1e-5 < rep.info["m0"] < 2.0


def test_alternating_schedule_inf_mean():
    law = make_branching_schedule({"type": "periodic", "pmfs": [{1: 0.5, 2: 0.5}, {2: 1.0}]})
    assert law.inf_mean == 1.5
    assert [law.mean(n) for n in range(4)] == [1.5, 2.0, 1.5, 2.0]


def test_invalid_pmfs_are_rejected():
    with pytest.raises(NonProbability):
        constant_branching({1: 0.5, 2: 0.6})
    with pytest.raises(ZeroOffspring):
        constant_branching({0: 0.1, 2: 0.9})


def test_single_child_fails_B2():
    rep = check_branching_assumptions(constant_branching({1: 1.0}), "bounded")
    assert not rep.passed
    assert not rep.get("B2").passed and rep.get("B1").passed
    assert rep.get("B2").witness["mean"] == 1.0


@pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
def test_geometric_moments_match_closed_form(p):
    law = constant_branching({"dist": "geometric", "p": p})
    mean, second = geometric_moments(p)
    assert law.truncation_error < 1e-10
    assert law.mean(0) == pytest.approx(mean, rel=1e-8)
    assert law.second_moment(0) == pytest.approx(second, rel=1e-7)
    rep = check_branching_assumptions(law, "identical_marginal")
    assert rep.passed
    assert rep.info["m1"] > second - 1e-6
    bounded = check_branching_assumptions(law, "bounded")
    assert not bounded.get("B1").passed


# -- marginals ---------------------------------------------------------------


def test_point_mass_MT1():
    law = displacement_law(GRID, Independent(pm(0.0)))
    rep = check_marginal_assumptions(law, 0.1, 1.0, 1.0)
    assert rep.passed
    assert rep.info["x0"] == 0.0 and rep.info["shift"] == 0.0


def test_MT1_reports_shift_without_moving_the_law():
    g = GridPmf.from_points({-1.0: 0.5, 1.0: 0.5}, H)
    law = displacement_law(GRID, Independent(g))
    rep = check_marginal_assumptions(law, 0.1, 1.0, 2.0)
    assert rep.info["x0"] == -1.0 and rep.info["shift"] == 1.0
    assert marginal(law, 0, 2).same_as(g)
    assert check_marginal_assumptions(law.shifted(1.0), 0.1, 1.0, 2.0).info["x0"] == 0.0


def test_exponential_tail_ratio_is_exact():
    g = marginal_from({"exponential": {"scale": 1.0, "upper": 50}}, GRID)
    rep = check_marginal_assumptions(displacement_law(GRID, Independent(g)), 0.5, 1.0, 1.0)
    assert rep.get("MT2").passed
    assert rep.info["max_scaled_ratio"] == pytest.approx(1.0, abs=1e-9)


def _brute_mt2_ratio(g, x0_units, a, d_min):
    """max over x >= x0 and M > M0 of g(x+M) e^{aM} / g(x), by direct loops."""
    best = 0.0
    for xu in range(x0_units, g.hi + 1):
        base = float(g.tail_at(xu))
        if base == 0:
            continue
        for d in range(d_min, g.hi - xu + 1):
            best = max(best, float(g.tail_at(xu + d)) * math.exp(a * d * H) / base)
    return best


def test_pareto_tail_fails_MT2_and_matches_brute_force():
    grid = Grid(-10, 30, H)
    g = marginal_from({"lomax": {"alpha": 2.0, "upper": 25}}, grid)
    rep = check_marginal_assumptions(displacement_law(grid, Independent(g)), 0.5, 0.5, 1.0)
    mt2 = rep.get("MT2")
    assert not mt2.passed
    w = mt2.witness
    assert w["scaled_ratio"] > 1
    # the witness reproduces the violation
    xu, d = grid.units(w["x"]), grid.units(w["M"])
    assert g.tail_at(xu + d) * math.exp(0.5 * w["M"]) > g.tail_at(xu)
    brute = _brute_mt2_ratio(g, grid.units(rep.info["x0"]), 0.5, grid.units(1.0) + 1)
    assert w["scaled_ratio"] == pytest.approx(brute, rel=1e-9)


def test_marginal_at_grid_edge_raises():
    grid = Grid(-5, 5, H)
    g = GridPmf.from_points({0.0: 0.5, 5.0: 0.5}, H)
    with pytest.raises(GridTooNarrow):
        check_marginal_assumptions(displacement_law(grid, Independent(g)), 0.1, 1.0, 1.0)


@given(st.floats(0.05, 2.0), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
def test_MT2_passes_when_one_step_ratios_chain(a, jitter):
    """A tail with g(x+h)/g(x) <= e^{-ah} everywhere passes MT2 for any M0."""
    decay = np.exp(-a * H * (1.0 + np.array(jitter)))
    tail = np.concatenate([[1.0], np.cumprod(decay)])
    w = -np.diff(np.concatenate([tail, [0.0]]))
    g = GridPmf(0, w / w.sum(), H)
    # renormalising scales every tail value by the same factor, so ratios are kept
    rep = check_marginal_assumptions(displacement_law(GRID, Independent(g)), 0.5, a, 0.1)
    assert rep.get("MT2").passed


# -- joint tail ----------------------------------------------------------------


def test_point_mass_GT_one_step():
    rep = check_joint_tail(displacement_law(GRID, Independent(pm(0.0))), 0.01, "GT", constant_branching({2: 1.0}))
    assert rep.passed and rep.info["B"] == H


def test_gaussian_GT_matches_product_cdf():
    g = marginal_from({"gaussian": {"sd": 1.0}}, GRID)
    rep = check_joint_tail(displacement_law(GRID, Independent(g)), 0.05, "GT", constant_branching({1: 0.5, 2: 0.5}))
    B_units = rep.info["B_units"]

    def certified(b):
        return g.cdf_at(b) ** 2 >= 0.95 and g.at_least(-b) ** 2 >= 0.95

    assert certified(B_units) and not certified(B_units - 1)
    # the discretized answer sits next to the continuous one, Phi(B)^2 = 0.95
    assert rep.info["B"] == pytest.approx(stats.norm.ppf(math.sqrt(0.95)), abs=2 * H)


def test_heavy_common_shift_fails_GT():
    # B may not exceed the nearer grid edge (10), while the shift reaches 39
    grid = Grid(-10, 40, H)
    shift = marginal_from({"lomax": {"alpha": 0.5, "loc": -5, "upper": 39}}, grid)
    law = displacement_law(grid, CommonShift(shift, pm(0.0)))
    rep = check_joint_tail(law, 0.01, "GT", constant_branching({2: 1.0}))
    assert not rep.passed
    assert {"n", "k"} <= set(rep.checks[0].witness)


def test_GT_without_branching_is_partial():
    rep = check_joint_tail(displacement_law(GRID, Independent(pm(0.0))), 0.01, "GT")
    assert rep.passed and rep.info["partial"]


@given(st.floats(0.1, 3.0), st.floats(0.01, 0.3), st.integers(1, 30))
def test_GT_certified_set_is_upward_closed(sd, eta, extra):
    grid = Grid(-30, 30, 0.1)
    g = marginal_from({"gaussian": {"sd": sd}}, grid)
    law = displacement_law(grid, Independent(g))
    br = constant_branching({2: 0.5, 3: 0.5})
    B = check_joint_tail(law, eta, "GT", br).info["B_units"]
    for k in (2, 3):
        b = B + extra
        assert g.cdf_at(b) ** k >= 1 - eta and g.at_least(-b) ** k >= 1 - eta


# -- marginals of families -----------------------------------------------------


def test_marginal_of_families():
    g = GridPmf.from_points({-1.0: 0.3, 2.0: 0.7}, H)
    assert marginal(displacement_law(GRID, Independent(g)), 0, 3).same_as(g)
    assert marginal(displacement_law(GRID, CommonShift(pm(1.0), pm(2.0))), 0, 2).same_as(pm(3.0))


def test_common_shift_two_by_two_marginal():
    Y = GridPmf.from_points({0.0: 0.25, 1.0: 0.75}, H)
    Z = GridPmf.from_points({0.0: 0.4, 0.5: 0.6}, H)
    got = marginal(displacement_law(GRID, CommonShift(Y, Z)), 0, 2)
    expect = {0.0: 0.1, 0.5: 0.15, 1.0: 0.3, 1.5: 0.45}
    assert np.count_nonzero(got.weights) == 4
    for x, w in expect.items():
        assert got.weights[GRID.units(x) - got.lo] == pytest.approx(w, abs=1e-15)


def test_unscheduled_k_raises():
    law = displacement_law(GRID, ProductMixture(((1.0, (pm(0.0), pm(1.0))),)))
    with pytest.raises(NotScheduled):
        marginal(law, 0, 3)


# -- symmetrization ------------------------------------------------------------


def test_symmetrize_two_point_masses():
    joint = ProductMixture(((1.0, (pm(0.0), pm(1.0))),))
    sym = symmetrize_joint(joint)
    assert len(sym.components) == 2
    assert sorted(w for w, _ in sym.components) == [0.5, 0.5]
    expect = GridPmf.from_points({0.0: 0.5, 1.0: 0.5}, H)
    for i in range(2):
        assert np.allclose(sym.coordinate_marginal(i).to_full(GRID), expect.to_full(GRID), atol=1e-15)


def test_symmetrize_preserves_one_step_recursion():
    joint = ProductMixture(((1.0, (pm(0.0), pm(1.0))),))
    law = displacement_law(GRID, joint)
    sym = symmetrize(law)
    x = GRID.points
    u = TailCurve(GRID, np.clip(0.5 - x / 8, 0, 1))
    br = constant_branching({2: 1.0})
    a = step_exact(0, u, br, law).values
    b = step_exact(0, u, br, sym).values
    assert np.max(np.abs(a - b)) <= 1e-12
    # enumeration: 1 - (1-u(x))(1-u(x-1)) for both orderings
    ux, ux1 = u.values, u.shifted_values(GRID.units(1.0))
    assert np.max(np.abs(a - (1 - (1 - ux) * (1 - ux1)))) <= 1e-12


def test_exchangeable_joint_is_fixed():
    g = GridPmf.from_points({0.0: 0.5, 1.0: 0.5}, H)
    joint = ProductMixture(((1.0, (g, g, g)),))
    assert symmetrize_joint(joint) is joint


def test_symmetrize_k_too_large():
    joint = ProductMixture(((1.0, tuple(pm(float(i)) for i in range(5))),))
    with pytest.raises(KTooLarge):
        symmetrize_joint(joint)


atoms = st.dictionaries(st.integers(-4, 4), st.floats(0.05, 1.0), min_size=1, max_size=3)


def _pmf(d):
    s = sum(d.values())
    return GridPmf.from_points({u * H: w / s for u, w in d.items()}, H)


@given(st.lists(atoms, min_size=2, max_size=3), st.lists(atoms, min_size=2, max_size=3))
def test_symmetrize_idempotent_with_mean_marginals(first, second):
    k = min(len(first), len(second))
    comps = ((0.3, tuple(_pmf(d) for d in first[:k])), (0.7, tuple(_pmf(d) for d in second[:k])))
    joint = ProductMixture(comps)
    sym = symmetrize_joint(joint)
    again = symmetrize_joint(sym)
    assert again is sym
    mean = sum(
        w * m.to_full(GRID) / k for w, ms in comps for m in ms
    )
    for i in range(k):
        assert np.allclose(sym.coordinate_marginal(i).to_full(GRID), mean, atol=1e-14)
    assert np.isclose(sym.marginal_for(k).weights.sum(), 1.0)
