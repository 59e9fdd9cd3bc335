"""Malthusian calculus for multi-type fragmentations.

``lambda(p) = -abscissa(-Phi_tag(p - 1))`` is continuous and strictly
increasing; its root ``p*`` in ``[0, 1]`` is the Malthusian exponent and the
Perron vector ``b`` of ``Phi_tag(p* - 1)`` weights the additive martingale.
The module also builds the biased (spine) dynamics, the truncation
``G^{N, eps}`` of dislocation measures, and Galton-Watson extinction
probabilities.
"""

from dataclasses import dataclass
import functools
import math

import numpy as np

from .errors import NumericError, ParameterError
from .fragmentation import (
    DislocationMeasure,
    MassPartition,
    simulate_forest,
    tagged_bernstein,
    tagged_map_params,
)
from .map_sim import sample_functional
from .matrix_core import is_irreducible, perron_pair, spectral_abscissa

ROOT_TOL = 1e-12
BRACKET_TOL = 1e-14
EIGVEC_TOL = 1e-10
GW_STEP_TOL = 1e-14
GW_RESIDUAL_TOL = 1e-12
GW_MAX_ITER = 1_000_000
SPINE_MASS_FLOOR = 1e-12


def lambda_of(model, p):
    """``-abscissa(-Phi_tag(p - 1))``."""
    return -spectral_abscissa(-tagged_bernstein(model)(p - 1.0)).abscissa


@dataclass(frozen=True)
class MalthusData:
    """Malthusian exponent, Malthus vector (min entry 1) and the lambda curve."""

    p_star: float
    b: np.ndarray
    lambda_curve: object

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if np.any(b <= 0):
            raise NumericError("Malthus vector must be strictly positive", residual=float(b.min()))
        object.__setattr__(self, "b", b)


def _lambda_curve(model):
    phi = tagged_bernstein(model)

    @functools.lru_cache(maxsize=None)
    def curve(p):
        return -spectral_abscissa(-phi(float(p) - 1.0)).abscissa

    return curve


def malthusian_exponent(model):
    """Bisect ``lambda`` on ``[0, 1]`` for ``p*`` and return :class:`MalthusData`.

    Raises:
        ParameterError: reducible type graph, or no sign change on ``[0, 1]``
            (``lambda(0) >= 0``: not Malthusian in scope).
        NumericError: eigenvector check failed at ``p*``.
    """
    phi = tagged_bernstein(model)
    if model.K > 1 and not is_irreducible(-phi(0.0)):
        raise ParameterError("model is not irreducible: some type never produces another")
    curve = _lambda_curve(model)
    lo, hi = 0.0, 1.0
    f_lo, f_hi = curve(lo), curve(hi)
    if f_lo >= 0:
        raise ParameterError(f"not Malthusian in scope: lambda(0) = {f_lo!r} >= 0")
    if f_hi < 0:
        raise ParameterError(f"not Malthusian in scope: lambda(1) = {f_hi!r} < 0")
    p = hi
    if f_hi > ROOT_TOL:
        while True:
            p = 0.5 * (lo + hi)
            f = curve(p)
            if abs(f) <= ROOT_TOL or hi - lo <= BRACKET_TOL:
                break
            if f < 0:
                lo = p
            else:
                hi = p
    A = -phi(p - 1.0)
    b = perron_pair(A).right_vector if model.K > 1 else np.ones(1)
    b = b / b.min()
    res = float(np.abs(A @ b).max())
    if res > EIGVEC_TOL * max(1.0, np.abs(A).max()):
        raise NumericError(f"Malthus vector residual {res:.3e} above tolerance", residual=res)
    return MalthusData(p, b, curve)


def additive_martingale(front, malthus, start_type):
    """``(1/b_i) sum b_type mass**p*`` over a front of ``(mass, type)`` pairs."""
    front = list(front)
    if not front:
        return 0.0
    mass = np.array([m for m, _ in front], dtype=float)
    typ = np.array([t for _, t in front], dtype=int)
    b = malthus.b
    return float(np.sum(b[typ] * mass ** malthus.p_star) / b[start_type])


def martingale_samples(model, malthus, start_type, t, n_runs, rng=None):
    """``M(t)`` for ``n_runs`` independent homogeneous runs (vectorized)."""
    forest = simulate_forest(model, 0.0, start_type, n_runs, rng, horizon=t)
    run, mass, typ = forest.front(t)
    w = malthus.b[typ] * mass ** malthus.p_star
    return np.bincount(run, weights=w, minlength=n_runs) / malthus.b[start_type]


def check_mq(model, q, malthus):
    """``int |1 - sum_n s_n**p*|**q d nu_i`` for each type ``i``."""
    if not q > 1:
        raise ParameterError("q must exceed 1")
    out = np.zeros(model.K)
    for i, row in enumerate(model.atoms):
        for w, part in row:
            out[i] += w * abs(1.0 - float(np.sum(part.masses ** malthus.p_star))) ** q
    return out


def biased_bernstein(model, malthus):
    """``Phi*(p) = diag(b)^{-1} Phi_tag(p + p* - 1) diag(b)``."""
    phi = tagged_bernstein(model)
    b = malthus.b
    shift = malthus.p_star - 1.0

    def phi_star(p):
        return phi(p + shift) * b[None, :] / b[:, None]

    return phi_star


def biased_map_params(model, malthus):
    """MAP whose Bernstein matrix is :func:`biased_bernstein`."""
    return tagged_map_params(model, malthus.p_star - 1.0, malthus.b)


# ------------------------------------------------------------- spine


@dataclass
class SpinePath:
    """Spine block states ``(height, mass, type)`` after each change, plus death time."""

    states: list
    death_time: float
    truncated: bool


def _spine_tables(model, malthus):
    """Per-type biased atom weights, child-choice probabilities and partitions."""
    b, ps = malthus.b, malthus.p_star
    tables = []
    for j, row in enumerate(model.atoms):
        weights, choices, parts = [], [], []
        for w, part in row:
            if not len(part):
                continue
            score = b[part.types] * part.masses ** ps
            weights.append(w * score.sum() / b[j])
            choices.append(score / score.sum())
            parts.append(part)
        tables.append((np.array(weights), choices, parts))
    return tables


def spine_child_probabilities(partition, malthus):
    """Probability that the spine enters each part of ``partition``."""
    score = malthus.b[partition.types] * partition.masses ** malthus.p_star
    return score / score.sum()


def sample_biased_spine(model, alpha, malthus, start_type, rng=None, mass_floor=SPINE_MASS_FLOOR):
    """Follow the marked leaf's ancestral block under the biased measure.

    At a dislocation of the spine block (type ``j``, mass ``x``) the atom is
    drawn with weight ``w sum_n b_{i_n} s_n**p* / b_j`` and the spine enters
    part ``n`` with probability proportional to ``b_{i_n} s_n**p*``. Models
    with erosion are rejected. The path stops once
    ``mass**|alpha| < mass_floor``; the residual lifetime is then of order
    ``mass_floor`` and is dropped (``truncated`` is set).
    """
    if not alpha < 0:
        raise ParameterError("spine death time needs alpha < 0")
    if np.any(model.erosion > 0):
        raise ParameterError("spine sampler supports erosion-free models only")
    rng = np.random.default_rng(rng)
    tables = _spine_tables(model, malthus)
    rates = np.array([t[0].sum() for t in tables])
    h, mass, typ = 0.0, 1.0, int(start_type)
    states = [(0.0, 1.0, typ)]
    while True:
        if rates[typ] <= 0:
            raise ParameterError(f"type {typ} never dislocates under the biased measure")
        if mass ** (-alpha) < mass_floor:
            return SpinePath(states, h, True)
        h += rng.exponential() / (rates[typ] * mass ** alpha)
        weights, choices, parts = tables[typ]
        a = int(rng.choice(weights.size, p=weights / weights.sum()))
        part = parts[a]
        n = int(rng.choice(len(part), p=choices[a]))
        s, typ = part.parts[n]
        mass *= s
        states.append((h, mass, typ))


def spine_death_times(model, alpha, malthus, start_type, n, seed, key=()):
    """Vectorized spine death times ``I_{|alpha| xi*}`` via the biased MAP."""
    if not alpha < 0:
        raise ParameterError("spine death time needs alpha < 0")
    params = biased_map_params(model, malthus)
    return sample_functional(params, start_type, n, seed, scale=-alpha, key=key)


# --------------------------------------------------------- truncation


def _truncate_partition(part, N, eps):
    if not len(part):
        return part
    keep = part.parts[:1] if part.parts[0][0] > 1 - eps else part.parts[:N]
    return MassPartition(keep)


def truncate_model(model, N, eps):
    """Image of each dislocation measure under ``G^{N, eps}``.

    Keeps the ``N`` largest parts when ``s_1 <= 1 - eps``, else only the
    largest; discarded mass becomes dust. Weights are unchanged.
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ParameterError("N must be an integer >= 1")
    if not 0 < eps < 1 + 1e-15:
        raise ParameterError("eps must lie in (0, 1]")
    atoms = tuple(
        tuple((w, _truncate_partition(part, N, eps)) for w, part in row) for row in model.atoms
    )
    return DislocationMeasure(atoms, model.erosion.copy())


def truncated_exponents(model, Ns):
    """``p*`` of ``G^{N, 1/N}``-truncated models; ``nan`` when out of scope."""
    out = []
    for N in Ns:
        try:
            out.append(malthusian_exponent(truncate_model(model, N, 1.0 / N)).p_star)
        except ParameterError:
            out.append(math.nan)
    return np.array(out)


# ------------------------------------------------------ Galton-Watson


@dataclass(frozen=True)
class GwModel:
    """Multi-type offspring laws: ``laws[i]`` lists ``(probability, counts)``."""

    laws: tuple

    def __post_init__(self):
        K = len(self.laws)
        fixed = []
        for i, law in enumerate(self.laws):
            rows = [(float(q), np.asarray(c, dtype=int)) for q, c in law]
            if any(q < 0 for q, _ in rows) or any(c.shape != (K,) or np.any(c < 0) for _, c in rows):
                raise ParameterError(f"offspring law of type {i} is malformed")
            total = math.fsum(q for q, _ in rows)
            if abs(total - 1.0) > 1e-12:
                raise ParameterError(f"offspring probabilities of type {i} sum to {total!r}")
            fixed.append(tuple(rows))
        object.__setattr__(self, "laws", tuple(fixed))

    @property
    def K(self):
        return len(self.laws)

    def generating(self, x):
        """``f_i(x) = E_i[prod_j x_j**Z_j]`` for every ``i``."""
        x = np.asarray(x, dtype=float)
        return np.array([sum(q * np.prod(x ** c) for q, c in law) for law in self.laws])

    def mean_matrix(self):
        return np.array([sum(q * c for q, c in law) for law in self.laws], dtype=float)


def gw_from_model(model):
    """Exact per-dislocation skeleton: each block is replaced by its children.

    A type-``j`` block picks an atom with probability ``w / nu_j(total)`` and
    has one child per part. Its extinction event (finitely many blocks ever)
    is reduction to dust in finite time, as for the unit-time process. A
    type that never dislocates reproduces itself.
    """
    K = model.K
    laws = []
    for j, row in enumerate(model.atoms):
        W = sum(w for w, _ in row)
        if W == 0:
            e = np.zeros(K, dtype=int)
            e[j] = 1
            laws.append(((1.0, e),))
            continue
        merged = {}
        for w, part in row:
            c = tuple(np.bincount(part.types, minlength=K)) if len(part) else (0,) * K
            merged[c] = merged.get(c, 0.0) + w / W
        laws.append(tuple((q, np.array(c)) for c, q in sorted(merged.items())))
    return GwModel(tuple(laws))


def gw_from_simulation(model, n_runs, rng=None):
    """Empirical offspring law of the block counts at time 1 (``alpha = 0``)."""
    K = model.K
    laws = []
    rng = np.random.default_rng(rng)
    for i in range(K):
        forest = simulate_forest(model, 0.0, i, n_runs, rng, horizon=1.0)
        run, _, typ = forest.front(1.0)
        counts = np.zeros((n_runs, K), dtype=int)
        np.add.at(counts, (run, typ), 1)
        uniq, freq = np.unique(counts, axis=0, return_counts=True)
        laws.append(tuple((f / n_runs, u) for u, f in zip(uniq, freq)))
    return GwModel(tuple(laws))


def gw_extinction(gw):
    """Smallest fixed point of ``q = f(q)``, iterating from ``q = 0``.

    Raises:
        NumericError: no convergence in ``10**6`` iterations or residual
            above ``1e-12``.
    """
    q = np.zeros(gw.K)
    for _ in range(GW_MAX_ITER):
        nxt = gw.generating(q)
        step = float(np.abs(nxt - q).max())
        q = nxt
        if step <= GW_STEP_TOL:
            break
    else:
        res = float(np.abs(gw.generating(q) - q).max())
        raise NumericError("extinction iteration did not converge", residual=res)
    res = float(np.abs(gw.generating(q) - q).max())
    if res > GW_RESIDUAL_TOL:
        raise NumericError(f"extinction fixed-point residual {res:.3e}", residual=res)
    return q
