"""Fragmentation trees, leaf measures, extinction times and dimension estimates.

A tree is the genealogy of one mass-tree run with ``alpha < 0``: node ``k``
is the edge ``[birth_k, death_k)`` of a block, its subtree mass under ``mu``
is the block mass. Covering counts are taken on mass levels: the blocks
whose mass first drops to ``eps`` or below form a cover of the leaves by
balls of radius of order ``eps**|alpha|``.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import DataError, ParameterError
from .fragmentation import MassForest, simulate_forest
from .malthus import spine_death_times

MASS_RTOL = 1e-12
TAIL_FRACTION = 0.1
MIN_TAIL = 100


@dataclass(frozen=True)
class FragTree:
    """Validated single-run genealogy (node arrays share indices)."""

    alpha: float
    mass_floor: float
    parent: np.ndarray
    mass: np.ndarray
    type: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    censored: np.ndarray

    def __len__(self):
        return self.parent.size

    @property
    def children(self):
        kids = [[] for _ in range(len(self))]
        for k, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(k)
        return kids

    @property
    def leaves(self):
        """Censored blocks and blocks reduced to dust (no children)."""
        has_child = np.zeros(len(self), dtype=bool)
        has_child[self.parent[self.parent >= 0]] = True
        return np.flatnonzero(~has_child)

    @property
    def height(self):
        """Largest finite death height or freeze height of a censored block."""
        end = np.where(self.censored, self.birth, self.death)
        return float(end.max())

    def rows(self):
        """Node-table rows ``(id, parent, mass, type, birth, death, censored)``."""
        for k in range(len(self)):
            yield (k, int(self.parent[k]), float(self.mass[k]), int(self.type[k]),
                   float(self.birth[k]), float(self.death[k]), bool(self.censored[k]))


def build_tree(forest):
    """Assemble a :class:`FragTree` from a single-run forest and check it.

    Raises:
        DataError: several runs, a child listed before its parent, heights
            not increasing, child masses exceeding the parent mass, or a
            child born away from its parent's death.
    """
    if not isinstance(forest, MassForest):
        raise DataError("expected a MassForest")
    if np.unique(forest.run).size > 1:
        raise DataError("forest holds several runs; select one first")
    n = len(forest)
    if n == 0:
        raise DataError("empty forest")
    par = forest.parent
    if par[0] != -1 or np.any(par[1:] < 0):
        raise DataError("node 0 must be the only root")
    idx = np.arange(n)
    bad = np.flatnonzero(par >= idx)
    if bad.size:
        k = int(bad[0])
        raise DataError(f"node {k} appears before its parent {int(par[k])}")
    finite = np.isfinite(forest.death)
    if np.any(forest.death[finite] <= forest.birth[finite]):
        k = int(np.flatnonzero(finite & (forest.death <= forest.birth))[0])
        raise DataError(f"node {k} dies at or before its birth")
    kids = idx[1:]
    if np.any(forest.birth[kids] != forest.death[par[kids]]):
        k = int(kids[forest.birth[kids] != forest.death[par[kids]]][0])
        raise DataError(f"node {k} is not born at its parent's death")
    total = np.bincount(par[kids], weights=forest.mass[kids], minlength=n)
    over = total > forest.mass * (1 + MASS_RTOL)
    if np.any(over):
        k = int(np.flatnonzero(over)[0])
        raise DataError(f"children of node {k} carry more mass than their parent")
    return FragTree(
        float(forest.alpha), forest.mass_floor, par.copy(), forest.mass.copy(), forest.type.copy(),
        forest.birth.copy(), forest.death.copy(), forest.censored.copy(),
    )


def mu_subtree_mass(tree, node):
    """``mu`` of the subtree above ``node``: the block's mass."""
    if not 0 <= node < len(tree):
        raise ParameterError(f"node {node} out of range")
    return float(tree.mass[node])


def _forest_chunks(model, alpha, start_type, n_runs, rng, mass_floor, chunk):
    """Independent forests of at most ``chunk`` runs each."""
    done = 0
    while done < n_runs:
        size = min(chunk, n_runs - done)
        yield simulate_forest(model, alpha, start_type, size, rng, mass_floor=mass_floor)
        done += size


def extinction_times(model, alpha, start_type, n_runs, rng=None, mass_floor=1e-3, chunk=256):
    """Per-run extinction time ``zeta`` (floor-censored blocks end at their freeze height)."""
    if not alpha < 0:
        raise ParameterError("extinction times need alpha < 0")
    rng = np.random.default_rng(rng)
    out = []
    for forest in _forest_chunks(model, alpha, start_type, n_runs, rng, mass_floor, chunk):
        end = np.where(forest.censored, forest.birth, forest.death)
        z = np.full(forest.n_runs, -np.inf)
        np.maximum.at(z, forest.run, end)
        out.append(z)
    return np.concatenate(out)


@dataclass(frozen=True)
class TailReport:
    """Log-survival slope of ``zeta`` over its upper tail, with a 95% band."""

    zeta: np.ndarray
    slope: float
    band: tuple
    tail_size: int
    correction_bound: float

    @property
    def negative(self):
        return self.band[1] < 0


def _tail_slope(z, fraction):
    z = np.sort(z)
    n = z.size
    surv = 1.0 - np.arange(1, n + 1) / (n + 1)
    k0 = int(math.floor(n * (1 - fraction)))
    x, y = z[k0:], np.log(surv[k0:])
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def extinction_time_stats(model, alpha, n_runs, rng=None, start_type=0, mass_floor=1e-3,
                          n_boot=200, fraction=TAIL_FRACTION):
    """Simulate ``zeta`` and fit the log-survival slope over the upper tail.

    ``correction_bound`` bounds the time lost to floor censoring:
    ``mass_floor**|alpha|`` times the sample mean of ``zeta`` (residual
    lifetimes scale as ``mass**|alpha|``). The band is a bootstrap 95%
    percentile interval; fewer than 100 tail points triggers a warning.
    """
    rng = np.random.default_rng(rng)
    z = extinction_times(model, alpha, start_type, n_runs, rng, mass_floor)
    tail = int(z.size * fraction)
    if tail < MIN_TAIL:
        warnings.warn(f"only {tail} tail samples; the slope band is wide", RuntimeWarning, stacklevel=2)
    slope = _tail_slope(z, fraction)
    boot = np.array([_tail_slope(rng.choice(z, z.size), fraction) for _ in range(n_boot)])
    band = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))
    bound = mass_floor ** abs(alpha) * float(z.mean())
    return TailReport(z, slope, band, tail, bound)


def leaf_sample_mu_star(model, alpha, malthus, start_type, n_samples, seed):
    """Heights of ``mu*``-distributed leaves, via the biased spine."""
    return spine_death_times(model, alpha, malthus, start_type, n_samples, seed)


# ----------------------------------------------------------- covering


@dataclass(frozen=True)
class CoveringProfile:
    """``counts[r, m]``: blocks of run ``r`` whose mass first drops to ``<= thresholds[m]``."""

    alpha: float
    thresholds: np.ndarray
    counts: np.ndarray

    @property
    def radii(self):
        return self.thresholds ** abs(self.alpha)


def _check_levels(levels, mass_floor):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size == 0 or np.any(levels <= 0) or np.any(levels >= 1):
        raise ParameterError("levels must lie in (0, 1)")
    if np.any(np.diff(levels) >= 0):
        raise ParameterError("levels must be strictly decreasing")
    if mass_floor is not None and levels.min() < mass_floor:
        raise ParameterError(f"level {float(levels.min())!r} is below the simulation floor {mass_floor!r}")
    return levels


def first_passage_counts(forest, levels):
    """Per-run counts of blocks whose mass first drops to ``<= level``."""
    par = forest.parent
    pm = np.where(par >= 0, forest.mass[np.maximum(par, 0)], math.inf)
    counts = np.zeros((forest.n_runs, levels.size), dtype=np.int64)
    for m, eps in enumerate(levels):
        hit = (forest.mass <= eps) & (pm > eps)
        counts[:, m] = np.bincount(forest.run[hit], minlength=forest.n_runs)
    return counts


def covering_profile(forest, levels):
    """Covering counts of one forest (all runs) at decreasing mass ``levels``.

    Raises:
        ParameterError: a level below the forest's mass floor.
    """
    if not forest.alpha < 0:
        raise ParameterError("covering needs alpha < 0")
    levels = _check_levels(levels, forest.mass_floor)
    return CoveringProfile(float(forest.alpha), levels, first_passage_counts(forest, levels))


def simulate_covering(model, alpha, start_type, n_runs, levels, mass_floor, rng=None, chunk=64):
    """Covering counts over ``n_runs`` runs, simulated in bounded-memory chunks."""
    if not alpha < 0:
        raise ParameterError("covering needs alpha < 0")
    levels = _check_levels(levels, mass_floor)
    rng = np.random.default_rng(rng)
    parts = [
        first_passage_counts(f, levels)
        for f in _forest_chunks(model, alpha, start_type, n_runs, rng, mass_floor, chunk)
    ]
    return CoveringProfile(float(alpha), levels, np.concatenate(parts))


@dataclass(frozen=True)
class DimensionEstimate:
    slope: float
    band: tuple
    x: np.ndarray
    y: np.ndarray


def _weighted_slope(x, y, w):
    X = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return float(coef[1])


def dimension_estimate(profile, n_boot=200, rng=None):
    """Slope of ``log E[count]`` against ``-|alpha| log eps``.

    Points are weighted by the inverse delta-method variance of the log mean
    count (equal weights when counts do not vary). The band is a bootstrap
    95% percentile interval over runs.

    Raises:
        ParameterError: fewer than 3 levels, less than two decades, or a
            level where no run has any block.
    """
    eps = profile.thresholds
    if eps.size < 3:
        raise ParameterError("need at least 3 mass levels")
    if math.log10(eps.max() / eps.min()) < 2 - 1e-12:
        raise ParameterError("mass levels must span at least two decades")
    c = profile.counts.astype(float)
    n = c.shape[0]
    x = -abs(profile.alpha) * np.log(eps)

    def fit(cc):
        mean = cc.mean(axis=0)
        if np.any(mean <= 0):
            raise ParameterError("a mass level has no blocks in any run")
        var = cc.var(axis=0, ddof=1) if cc.shape[0] > 1 else np.zeros_like(mean)
        v = var / (cc.shape[0] * mean ** 2)
        w = np.ones_like(mean) if np.all(v == 0) else 1.0 / np.maximum(v, v[v > 0].min() if np.any(v > 0) else 1.0)
        return _weighted_slope(x, np.log(mean), w)

    slope = fit(c)
    rng = np.random.default_rng(rng)
    boot = []
    for _ in range(n_boot):
        try:
            boot.append(fit(c[rng.integers(0, n, n)]))
        except ParameterError:
            continue
    band = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975))) if boot else (slope, slope)
    return DimensionEstimate(slope, band, x, np.log(c.mean(axis=0)))
