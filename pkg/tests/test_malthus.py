import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtfrag.errors import ParameterError
from mtfrag.fixtures import balanced_pair, binary, cyclic_halves, cyclic_thirds, dusty, eroding, golden
from mtfrag.fragmentation import DislocationMeasure, MassPartition, tagged_bernstein
from mtfrag.malthus import (
    GwModel, additive_martingale, biased_bernstein, biased_map_params, check_mq, gw_extinction,
    gw_from_model, gw_from_simulation, lambda_of, malthusian_exponent, martingale_samples,
    sample_biased_spine, spine_child_probabilities, spine_death_times, truncate_model,
    truncated_exponents,
)
from mtfrag.map_model import bernstein_matrix
from mtfrag.moments import positive_integer_moments

GOLDEN_P = math.log2(2 / (math.sqrt(5) - 1))
CYCLIC_P = 2 * math.log(2) / math.log(6)
HALVES = MassPartition(((0.5, 0), (0.5, 0)))


def dust_or_halves():
    """Dust at rate 1, halves at rate 3: skeleton extinction probability 1/3."""
    return DislocationMeasure(([(1.0, MassPartition(())), (3.0, HALVES)],))


def test_conservative_p_star_is_one():
    for model in (binary(), cyclic_halves()):
        m = malthusian_exponent(model)
        assert m.p_star == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(m.b, 1.0, atol=1e-10)


def test_golden_p_star():
    assert malthusian_exponent(golden()).p_star == pytest.approx(GOLDEN_P, abs=1e-10)
    assert GOLDEN_P == pytest.approx(0.69424191, abs=1e-8)


def test_cyclic_closed_form():
    model = cyclic_thirds()
    m = malthusian_exponent(model)
    assert m.p_star == pytest.approx(CYCLIC_P, abs=1e-10)
    assert math.log(2) / math.log(3) <= m.p_star <= 1
    for p in np.linspace(0, 1, 21):
        closed = 1 - math.sqrt((2 * 2.0 ** -p) * (2 * 3.0 ** -p))
        assert lambda_of(model, p) == pytest.approx(closed, abs=1e-12)
        assert m.lambda_curve(p) == pytest.approx(closed, abs=1e-12)
    # -Phi_tag(p* - 1) b = 0 with min(b) = 1
    A = tagged_bernstein(model)(m.p_star - 1)
    np.testing.assert_allclose(A @ m.b, 0.0, atol=1e-10)
    assert m.b.min() == 1.0


@pytest.mark.parametrize("q", [0.3, 0.8])
def test_balanced_pair(q):
    assert malthusian_exponent(balanced_pair(q)).p_star == pytest.approx(q, abs=1e-10)


def test_out_of_scope():
    single = DislocationMeasure(([(1.0, MassPartition(((0.5, 0),)))],))
    with pytest.raises(ParameterError, match="not Malthusian in scope"):
        malthusian_exponent(single)
    reducible = DislocationMeasure(([(1.0, HALVES)], [(1.0, HALVES)]))
    with pytest.raises(ParameterError, match="irreducible"):
        malthusian_exponent(reducible)


def test_additive_martingale_front():
    m = malthusian_exponent(golden())
    front = [(0.5, 0), (0.25, 0)]
    assert additive_martingale(front, m, 0) == pytest.approx(1.0, abs=1e-12)
    assert additive_martingale([], m, 0) == 0.0


def test_martingale_golden_is_constant():
    # a single atom with sum s**p* = 1 makes M(t) = 1 pathwise
    m = malthusian_exponent(golden())
    np.testing.assert_allclose(martingale_samples(golden(), m, 0, 1.0, 200, rng=0), 1.0, rtol=1e-10)


def test_martingale_mean_dusty():
    m = malthusian_exponent(dusty())
    x = martingale_samples(dusty(), m, 0, 1.0, 4000, rng=0)
    assert abs(x.mean() - 1) <= 3.5 * x.std(ddof=1) / math.sqrt(x.size)


def test_check_mq():
    assert check_mq(binary(), 2.0, malthusian_exponent(binary()))[0] == pytest.approx(0.0, abs=1e-12)
    m = malthusian_exponent(dusty())
    # dust atom contributes |1 - 0|^q at rate 1
    part = 1 - sum(s ** m.p_star for s in (0.4, 0.3, 0.2))
    assert check_mq(dusty(), 2.0, m)[0] == pytest.approx(1 + 2 * part ** 2, abs=1e-10)
    with pytest.raises(ParameterError):
        check_mq(binary(), 1.0, m)


def test_biased_bernstein_root_and_map():
    model = cyclic_thirds()
    m = malthusian_exponent(model)
    phi = biased_bernstein(model, m)
    np.testing.assert_allclose(phi(0.0) @ np.ones(2), 0.0, atol=1e-10)
    params = biased_map_params(model, m)
    for p in (0.5, 1.0, 2.0):
        np.testing.assert_allclose(bernstein_matrix(params, p), phi(p), atol=1e-12)


def test_spine_children():
    m = malthusian_exponent(golden())
    probs = spine_child_probabilities(MassPartition(((0.5, 0), (0.25, 0))), m)
    x = (math.sqrt(5) - 1) / 2
    np.testing.assert_allclose(probs, [x, x * x], atol=1e-9)


def test_spine_moment_closed_form():
    m = malthusian_exponent(binary())
    N = positive_integer_moments(lambda p: biased_bernstein(binary(), m)(1.0 * p), 2)
    np.testing.assert_allclose([v.values[0] for v in N], [1, 2, 16 / 3], rtol=1e-12)


def test_spine_samplers_agree():
    m = malthusian_exponent(binary())
    z = spine_death_times(binary(), -1.0, m, 0, 20000, seed=1)
    assert abs(z.mean() - 2) <= 4 * z.std(ddof=1) / math.sqrt(z.size)
    rng = np.random.default_rng(2)
    w = np.array([sample_biased_spine(binary(), -1.0, m, 0, rng).death_time for _ in range(1500)])
    assert abs(w.mean() - 2) <= 4 * w.std(ddof=1) / math.sqrt(w.size)


def test_spine_rejects_erosion_and_alpha():
    m = malthusian_exponent(binary())
    with pytest.raises(ParameterError, match="erosion"):
        sample_biased_spine(eroding(), -1.0, m, 0)
    with pytest.raises(ParameterError):
        spine_death_times(binary(), 0.0, m, 0, 10, seed=0)


def test_truncation_keeps_largest():
    t = truncate_model(dusty(), 2, 0.5)
    parts = t.atoms[0][1][1].parts
    assert parts == ((0.4, 0), (0.3, 0))
    big = DislocationMeasure(([(1.0, MassPartition(((0.95, 0), (0.05, 0))))],))
    assert truncate_model(big, 2, 0.1).atoms[0][0][1].parts == ((0.95, 0),)
    with pytest.raises(ParameterError):
        truncate_model(dusty(), 0, 0.5)


def test_truncated_exponents_converge():
    ps = truncated_exponents(dusty(), [1, 2, 3, 4, 5])
    full = malthusian_exponent(dusty()).p_star
    assert math.isnan(ps[0])
    finite = ps[~np.isnan(ps)]
    assert np.all(np.diff(finite) >= -1e-12)
    np.testing.assert_allclose(ps[2:], full, atol=1e-6)


def test_gw_analytic_third():
    gw = gw_from_model(dust_or_halves())
    q = gw_extinction(gw)
    assert q[0] == pytest.approx(1 / 3, abs=1e-12)
    assert abs(gw.generating(q)[0] - q[0]) <= 1e-12
    np.testing.assert_allclose(gw.mean_matrix(), [[1.5]])


def test_gw_conservative_never_dies():
    assert gw_extinction(gw_from_model(binary()))[0] == 0.0


def test_gw_from_simulation_close():
    gw = gw_from_simulation(dust_or_halves(), 4000, rng=0)
    assert abs(gw_extinction(gw)[0] - 1 / 3) < 0.05


def test_gw_truncated_monotone():
    qs = [gw_extinction(gw_from_model(truncate_model(dusty(), N, 1 / N)))[0] for N in (1, 2, 3, 4)]
    assert qs[0] == pytest.approx(1.0)
    assert np.all(np.diff(qs) <= 1e-12)


def test_gw_validation():
    with pytest.raises(ParameterError):
        GwModel((((0.5, [1]), (0.4, [2])),))


def test_gw_subcritical_dies():
    gw = GwModel((((0.6, [0]), (0.4, [2])),))
    assert gw_extinction(gw)[0] == pytest.approx(1.0, abs=1e-12)


def test_gw_two_types():
    # type 0 -> {type 1, type 1} or nothing; type 1 -> {type 0} surely
    gw = GwModel((((0.25, [0, 0]), (0.75, [0, 2])), ((1.0, [1, 0]),)))
    q = gw_extinction(gw)
    np.testing.assert_allclose(q, [1 / 3, 1 / 3], atol=1e-12)


@settings(max_examples=25)
@given(st.floats(0.15, 1.0))
def test_balanced_pair_property(q):
    m = malthusian_exponent(balanced_pair(q))
    assert m.p_star == pytest.approx(q, abs=1e-9)
    assert m.lambda_curve(0.0) < 0 <= m.lambda_curve(1.0) + 1e-12


@settings(max_examples=25)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_lambda_increasing(a, b):
    s1, s2 = sorted((a, b * (1 - a)), reverse=True)
    model = DislocationMeasure(([(1.0, MassPartition(((s1, 0), (s2, 0))))],))
    grid = np.linspace(0, 1, 11)
    lam = [lambda_of(model, p) for p in grid]
    assert np.all(np.diff(lam) > 0)
    p = malthusian_exponent(model).p_star
    assert s1 ** p + s2 ** p == pytest.approx(1.0, abs=1e-9)
