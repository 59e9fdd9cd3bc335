"""Acceptance criteria 1-13, one test per criterion.

A per-criterion PASS/FAIL line is printed in the terminal summary; each test
also prints its measured values (visible with ``-s``).
"""

import json
import math
import time

import numpy as np
import pytest

from mtfrag.cli import main
from mtfrag.fixtures import (
    binary, cyclic_halves, cyclic_thirds, drift_pair, dusty, golden, killed_pair, pure_killing,
    unit_drift_killed,
)
from mtfrag.fragmentation import (
    DislocationMeasure, MassPartition, simulate_homogeneous_partition, tagged_map_params,
)
from mtfrag.malthus import (
    biased_bernstein, gw_extinction, gw_from_model, lambda_of, malthusian_exponent, martingale_samples,
    spine_death_times, truncate_model, truncated_exponents,
)
from mtfrag.map_model import bernstein_matrix
from mtfrag.map_sim import sample_functional, simulate_batch
from mtfrag.matrix_core import mat_exp
from mtfrag.moments import (
    death_moment_vector, moments_from_negative, negative_first_moment, negative_integer_moments,
    positive_integer_moments,
)
from mtfrag.tree import dimension_estimate, extinction_time_stats, simulate_covering

GOLDEN_P = math.log2(2 / (math.sqrt(5) - 1))
CYCLIC_P = 2 * math.log(2) / math.log(6)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def two_type_random():
    """Two types with two atoms each, so the additive martingale is not constant."""
    return DislocationMeasure((
        [(1.0, MassPartition(((0.5, 1), (0.5, 1)))), (0.5, MassPartition(()))],
        [(1.0, MassPartition(((1 / 3, 0), (1 / 3, 0)))), (1.0, MassPartition(((0.6, 1), (0.3, 0))))],
    ))


@pytest.mark.criterion(1)
def test_moment_identity():
    P = drift_pair()
    start = time.perf_counter()
    worst = 0.0
    for i in range(2):
        res = simulate_batch(P, i, 100_000, rng=np.random.default_rng([1, i]), times=(0.5, 1.0))
        for a, t in enumerate((0.5, 1.0)):
            x, jt = res.positions_at[a], res.types_at[a]
            for p in (0.5, 1.0, 2.0):
                exact = mat_exp(-bernstein_matrix(P, p), t)
                for j in range(2):
                    m, se = mean_se(np.where(jt == j, np.exp(-p * x), 0.0))
                    worst = max(worst, abs(m - exact[i, j]) / se)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: worst gap {worst:.2f} SE, {elapsed:.1f} s")
    assert worst <= 3.0
    assert elapsed < 30


@pytest.mark.criterion(2)
def test_death_moments():
    assert death_moment_vector(unit_drift_killed(), 1.0).values[0] == 0.5
    F = death_moment_vector(killed_pair(), 1.0).values
    np.testing.assert_allclose(F, [5 / 11, 4 / 11], rtol=0, atol=1e-15)
    gaps = []
    for i in range(2):
        res = simulate_batch(killed_pair(), i, 100_000, rng=np.random.default_rng([2, i]))
        assert np.all(np.isfinite(res.death_time))
        m, se = mean_se(np.exp(-res.final_position))
        gaps.append(abs(m - F[i]) / se)
    print(f"criterion 2: MC gaps {np.round(gaps, 2)} SE")
    assert max(gaps) <= 3.0


@pytest.mark.criterion(3)
def test_positive_moments():
    for k, m in enumerate(positive_integer_moments(unit_drift_killed(), 5)):
        assert abs(m.values[0] - 1 / (k + 1)) <= 1e-12
    for k, m in enumerate(positive_integer_moments(pure_killing(), 5)):
        assert abs(m.values[0] - math.factorial(k)) <= 1e-10
    N1 = positive_integer_moments(drift_pair(), 1)[1].values
    np.testing.assert_allclose(N1, [0.8, 0.6], rtol=0, atol=1e-14)
    gaps = []
    for i in range(2):
        m, se = mean_se(sample_functional(drift_pair(), i, 100_000, seed=3))
        gaps.append(abs(m - N1[i]) / se)
    print(f"criterion 3: MC gaps {np.round(gaps, 2)} SE")
    assert max(gaps) <= 3.0


@pytest.mark.criterion(4)
def test_negative_moments():
    P = drift_pair()
    r = negative_first_moment(P, 1_000_000, seed=4)
    print(f"criterion 4: direct {r.direct.values}, identity {r.identity.values}, gap {r.gap_se} SE")
    assert np.all(np.abs(r.gap_se) <= 4.0)
    down = negative_integer_moments(P, -4, r.direct)
    for hi, lo in zip(down, down[1:]):
        lhs = bernstein_matrix(P, float(hi.order)) @ hi.values
        np.testing.assert_allclose(lhs, hi.order * lo.values, rtol=1e-12)
    back = moments_from_negative(P, down)
    np.testing.assert_allclose(back.values, down[-2].values, rtol=1e-12)


@pytest.mark.criterion(5)
def test_malthusian_solver():
    for model in (binary(), cyclic_halves()):
        assert abs(malthusian_exponent(model).p_star - 1) <= 1e-10
    assert abs(malthusian_exponent(golden()).p_star - 0.69424191) <= 1e-8
    model = cyclic_thirds()
    for p in np.linspace(0, 1, 21):
        f = (2 * 2.0 ** -p) * (2 * 3.0 ** -p)
        assert abs(lambda_of(model, p) - (1 - math.sqrt(f))) <= 1e-8
    ps = malthusian_exponent(model).p_star
    assert abs(ps - CYCLIC_P) <= 1e-8
    assert math.log(2) / math.log(3) <= ps <= 1


@pytest.mark.criterion(6)
def test_additive_martingale():
    start = time.perf_counter()
    gaps = []
    for k, model in enumerate((dusty(), two_type_random())):
        m = malthusian_exponent(model)
        for t in (1.0, 2.0):
            x = martingale_samples(model, m, 0, t, 10_000, rng=np.random.default_rng([6, k, int(t)]))
            mean, se = mean_se(x)
            assert se > 0
            gaps.append(abs(mean - 1) / se)
    elapsed = time.perf_counter() - start
    print(f"criterion 6: gaps {np.round(gaps, 2)} SE, {elapsed:.1f} s")
    assert max(gaps) <= 3.0
    assert elapsed < 60


@pytest.mark.criterion(7)
def test_tagged_fragment_consistency():
    t, n_runs = 1.0, 20_000
    worst = 0.0
    for k, model in enumerate((cyclic_thirds(), dusty())):
        rng = np.random.default_rng([7, k])
        tagged = [simulate_homogeneous_partition(model, 0, 3, t, rng).tagged_at(t) for _ in range(n_runs)]
        mass = np.array([m for m, _ in tagged])
        typ = np.array([j for _, j in tagged])
        res = simulate_batch(tagged_map_params(model), 0, n_runs, rng=np.random.default_rng([7, k, 1]), times=(t,))
        x, jt = res.positions_at[0], res.types_at[0]
        for p in (1.0, 2.0):
            for j in range(model.K):
                a, sa = mean_se(np.where(typ == j, mass ** p, 0.0))
                with np.errstate(over="ignore"):
                    b, sb = mean_se(np.where(jt == j, np.exp(-p * x), 0.0))
                worst = max(worst, abs(a - b) / math.hypot(sa, sb))
    print(f"criterion 7: worst gap {worst:.2f} SE")
    assert worst <= 3.0


@pytest.mark.criterion(8)
def test_spine_leaf_identity():
    model = binary()
    m = malthusian_exponent(model)
    phi = biased_bernstein(model, m)
    closed = positive_integer_moments(lambda p: phi(1.0 * p), 2)
    np.testing.assert_allclose([closed[1].values[0], closed[2].values[0]], [2.0, 16 / 3], rtol=1e-12)
    h = spine_death_times(model, -1.0, m, 0, 100_000, seed=8)
    m1, s1 = mean_se(h)
    m2, s2 = mean_se(h ** 2)
    print(f"criterion 8: mean {m1:.4f} +- {s1:.4f}, second {m2:.4f} +- {s2:.4f}")
    assert abs(m1 - 2.0) <= 3 * s1
    assert abs(m2 - 16 / 3) <= 3 * s2


@pytest.mark.criterion(9)
def test_gw_extinction():
    halves = MassPartition(((0.5, 0), (0.5, 0)))
    gw = gw_from_model(DislocationMeasure(([(1.0, MassPartition(())), (3.0, halves)],)))
    q = gw_extinction(gw)
    assert np.abs(gw.generating(q) - q).max() <= 1e-12
    assert abs(q[0] - 1 / 3) <= 1e-12
    qs = []
    for N in range(1, 6):
        g = gw_from_model(truncate_model(dusty(), N, 1 / N))
        qN = gw_extinction(g)
        assert np.abs(g.generating(qN) - qN).max() <= 1e-12
        qs.append(qN[0])
    print(f"criterion 9: q_N = {np.round(qs, 6)}")
    assert np.all(np.diff(qs) <= 1e-12)


@pytest.mark.criterion(10)
def test_truncation_convergence():
    model = dusty()
    Ns = list(range(1, 7))
    ps = truncated_exponents(model, Ns)
    full = malthusian_exponent(model).p_star
    print(f"criterion 10: p*_N = {ps}, p* = {full}")
    finite = ps[~np.isnan(ps)]
    assert np.all(np.diff(finite) >= -1e-12)
    covered = np.array(Ns) >= model.max_parts()
    assert np.all(np.abs(ps[covered] - full) <= 1e-6)


@pytest.mark.criterion(11)
@pytest.mark.parametrize("name, model, alpha, target", [
    ("binary-half", binary, -0.5, 2.0),
    ("binary-one", binary, -1.0, 1.0),
    ("golden-one", golden, -1.0, GOLDEN_P),
])
def test_dimension(name, model, alpha, target):
    start = time.perf_counter()
    levels = np.logspace(-1, -4, 7)
    prof = simulate_covering(model(), alpha, 0, 1000, levels, 1e-4, rng=np.random.default_rng([11, int(-alpha * 2)]))
    est = dimension_estimate(prof, rng=0)
    elapsed = time.perf_counter() - start
    print(f"criterion 11 ({name}): slope {est.slope:.4f} band {est.band} target {target:.4f}, {elapsed:.1f} s")
    assert abs(est.slope - target) <= 0.15
    assert elapsed < 200


@pytest.mark.criterion(12)
@pytest.mark.parametrize("model", [binary, golden])
def test_extinction_tail(model):
    rep = extinction_time_stats(model(), -1.0, 10_000, rng=np.random.default_rng(12))
    print(f"criterion 12 ({model.__name__}): slope {rep.slope:.3f} band {rep.band}")
    assert rep.band[1] < 0


CLI_CONFIGS = [
    {"model": {"kind": "map", "K": 2, "generator": [[-1, 1], [1, -1]],
               "subordinators": [{"drift": 1}, {"drift": 2}]},
     "command": {"name": "simulate", "times": [0.5, 1], "p": [1, 2]}, "mc": {"n_samples": 20000, "seed": 13}},
    {"model": {"kind": "map", "K": 2, "generator": [[-1, 1], [1, -1]],
               "subordinators": [{"drift": 1}, {"drift": 2}]},
     "command": {"name": "map-moments", "k_max": 3, "k_min": -3}, "mc": {"n_samples": 20000, "seed": 13}},
    {"model": {"kind": "fragmentation", "K": 1, "alpha": -1,
               "dislocations": [[{"weight": 1, "parts": [[0.5, 1], [0.25, 1]]}]]},
     "command": {"name": "dimension", "n_runs": 100, "mass_floor": 1e-3,
                 "levels": [0.1, 0.03, 0.01, 0.003, 0.001]}, "mc": {"seed": 13}, "output": {"format": "json"}},
    {"model": {"kind": "fragmentation", "K": 1, "alpha": -1,
               "dislocations": [[{"weight": 1, "parts": [[0.4, 1], [0.3, 1]]}, {"weight": 0.5, "parts": []}]]},
     "command": {"name": "tree", "mass_floor": 0.01}, "mc": {"seed": 13}},
]


@pytest.mark.criterion(13)
@pytest.mark.parametrize("k", range(len(CLI_CONFIGS)))
def test_cli_determinism(tmp_path, k):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CLI_CONFIGS[k]))
    outs = []
    for r, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"out{r}"
        assert main([str(cfg), "--out", str(out), "--workers", workers]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
