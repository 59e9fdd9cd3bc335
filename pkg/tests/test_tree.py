import math
import dataclasses

import numpy as np
import pytest

from mtfrag.errors import DataError, ParameterError
from mtfrag.fixtures import binary, dusty, golden
from mtfrag.fragmentation import simulate_forest, simulate_mass_tree
from mtfrag.malthus import malthusian_exponent
from mtfrag.tree import (
    CoveringProfile, build_tree, covering_profile, dimension_estimate, extinction_time_stats,
    extinction_times, first_passage_counts, leaf_sample_mu_star, mu_subtree_mass, simulate_covering,
)

GOLDEN_P = math.log2(2 / (math.sqrt(5) - 1))


def small_tree(seed=0):
    return build_tree(simulate_mass_tree(binary(), -1.0, mass_floor=0.05, rng=seed))


def test_build_tree_invariants():
    t = small_tree()
    assert t.parent[0] == -1
    assert len(t.leaves) == 32  # binary halves down to 1/32 <= 0.05
    assert np.all(t.mass[t.leaves] == 1 / 32)
    kids = t.children
    for k in range(len(t)):
        if kids[k]:
            assert sum(t.mass[c] for c in kids[k]) == pytest.approx(t.mass[k])
            assert all(t.birth[c] == t.death[k] for c in kids[k])
    assert t.height == pytest.approx(t.birth[t.leaves].max())
    assert mu_subtree_mass(t, 0) == 1.0
    with pytest.raises(ParameterError):
        mu_subtree_mass(t, len(t))


def test_rows_shape():
    rows = list(small_tree().rows())
    assert rows[0][:4] == (0, -1, 1.0, 0)
    assert all(len(r) == 7 for r in rows)


def _forest(seed=0):
    return simulate_mass_tree(golden(), -1.0, mass_floor=0.05, rng=seed)


def test_build_tree_rejects_several_runs():
    with pytest.raises(DataError, match="several runs"):
        build_tree(simulate_forest(binary(), -1.0, 0, 2, rng=0, mass_floor=0.1))


def test_build_tree_rejects_mass_gain():
    f = _forest()
    mass = f.mass.copy()
    mass[1] = 0.9
    with pytest.raises(DataError, match="more mass"):
        build_tree(dataclasses.replace(f, mass=mass))


def test_build_tree_rejects_birth_mismatch():
    f = _forest()
    birth = f.birth.copy()
    birth[1] += 1.0
    with pytest.raises(DataError):
        build_tree(dataclasses.replace(f, birth=birth))


def test_build_tree_rejects_order():
    f = _forest()
    par = f.parent.copy()
    par[1] = 2
    with pytest.raises(DataError, match="before its parent"):
        build_tree(dataclasses.replace(f, parent=par))


def test_extinction_times_positive_and_reproducible():
    a = extinction_times(binary(), -1.0, 0, 200, rng=1)
    b = extinction_times(binary(), -1.0, 0, 200, rng=1)
    np.testing.assert_array_equal(a, b)
    assert np.all(a > 0)
    with pytest.raises(ParameterError):
        extinction_times(binary(), 0.0, 0, 10)


def test_extinction_tail_negative():
    rep = extinction_time_stats(golden(), -1.0, 3000, rng=2, n_boot=50)
    assert rep.negative
    assert rep.band[0] <= rep.slope <= rep.band[1]
    assert rep.correction_bound == pytest.approx(1e-3 * rep.zeta.mean())


def test_extinction_tail_warns_small():
    with pytest.warns(RuntimeWarning, match="tail"):
        extinction_time_stats(binary(), -1.0, 200, rng=0, n_boot=5)


def test_leaf_heights_match_spine_moment():
    m = malthusian_exponent(binary())
    h = leaf_sample_mu_star(binary(), -1.0, m, 0, 20000, seed=4)
    assert abs(h.mean() - 2) <= 4 * h.std(ddof=1) / math.sqrt(h.size)


def test_binary_covering_counts_deterministic():
    f = simulate_forest(binary(), -1.0, 0, 5, rng=0, mass_floor=1e-3)
    prof = covering_profile(f, [0.3, 0.1, 0.01])
    # first masses <= eps: 1/4, 1/16, 1/128
    assert np.all(prof.counts == [4, 16, 128])
    np.testing.assert_allclose(prof.radii, prof.thresholds)


def test_golden_stopping_line_sum():
    f = simulate_forest(golden(), -1.0, 0, 3, rng=0, mass_floor=1e-4)
    for eps in (0.1, 0.01, 1e-3):
        par = f.parent
        pm = np.where(par >= 0, f.mass[np.maximum(par, 0)], np.inf)
        hit = (f.mass <= eps) & (pm > eps)
        s = np.bincount(f.run[hit], weights=f.mass[hit] ** GOLDEN_P, minlength=3)
        np.testing.assert_allclose(s, 1.0, rtol=1e-10)


def test_dusty_stopping_line_mean():
    m = malthusian_exponent(dusty())
    f = simulate_forest(dusty(), -1.0, 0, 4000, rng=3, mass_floor=1e-2)
    par = f.parent
    pm = np.where(par >= 0, f.mass[np.maximum(par, 0)], np.inf)
    hit = (f.mass <= 1e-2) & (pm > 1e-2)
    s = np.bincount(f.run[hit], weights=f.mass[hit] ** m.p_star, minlength=4000)
    assert abs(s.mean() - 1) <= 3.5 * s.std(ddof=1) / math.sqrt(s.size)


def test_covering_level_checks():
    f = simulate_forest(binary(), -1.0, 0, 2, rng=0, mass_floor=1e-2)
    with pytest.raises(ParameterError, match="below the simulation floor"):
        covering_profile(f, [0.1, 1e-3])
    with pytest.raises(ParameterError, match="decreasing"):
        covering_profile(f, [0.01, 0.1])
    g = simulate_forest(binary(), 0.0, 0, 1, rng=0, horizon=1.0)
    with pytest.raises(ParameterError, match="alpha < 0"):
        covering_profile(g, [0.1])


def test_first_passage_counts_shape():
    f = simulate_forest(binary(), -1.0, 0, 3, rng=0, mass_floor=1e-2)
    assert first_passage_counts(f, np.array([0.5, 0.1])).shape == (3, 2)


def test_dimension_estimate_validation():
    prof = CoveringProfile(-1.0, np.array([0.1, 0.01]), np.ones((4, 2), dtype=int))
    with pytest.raises(ParameterError, match="3 mass levels"):
        dimension_estimate(prof)
    prof = CoveringProfile(-1.0, np.array([0.1, 0.05, 0.02]), np.ones((4, 3), dtype=int))
    with pytest.raises(ParameterError, match="two decades"):
        dimension_estimate(prof)
    prof = CoveringProfile(-1.0, np.array([0.1, 0.01, 0.001]), np.zeros((4, 3), dtype=int))
    with pytest.raises(ParameterError, match="no blocks"):
        dimension_estimate(prof)


def test_dimension_exact_power_law():
    eps = np.array([1e-1, 1e-2, 1e-3])
    prof = CoveringProfile(-0.5, eps, np.tile(np.round(eps ** -1.0).astype(int), (3, 1)))
    est = dimension_estimate(prof, n_boot=10, rng=0)
    assert est.slope == pytest.approx(2.0, rel=1e-9)
    assert est.band == pytest.approx((2.0, 2.0), rel=1e-9)


def test_dimension_binary_small():
    levels = np.logspace(-0.5, -3, 6)
    prof = simulate_covering(binary(), -1.0, 0, 100, levels, 1e-3, rng=0)
    est = dimension_estimate(prof, n_boot=20, rng=0)
    assert abs(est.slope - 1.0) < 0.15
