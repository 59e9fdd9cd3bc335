"""Closed-form moments of exponential functionals and death-time transforms.

With ``N(p)_i = E_i[I^p]`` for ``I = int_0^inf exp(-xi_t) dt`` the moments obey
``Phi(p) N(p) = p N(p - 1)``. Upward this gives every positive integer moment
from ``N(0) = 1``; downward, for unkilled MAPs, every negative integer moment
from ``N(-1)``. ``N(-1)`` itself involves ``E_i[ln I]`` and is estimated by
Monte Carlo along two independent routes.

Every function taking ``params`` also accepts a plain callable
``p -> Phi(p)``, e.g. a biased or rescaled Bernstein matrix.
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg

from .errors import DomainError, NumericError, ParameterError
from .map_model import MapParams, bernstein_derivative_at_zero, bernstein_matrix
from .map_sim import sample_functional
from .matrix_core import spectral_abscissa

RADIUS_TOL = 1e-10
RADIUS_MAX_K = 2.0 ** 40


@dataclass(frozen=True)
class MomentVector:
    """Per-type moment values; ``std_error`` is None for exact values."""

    order: float
    values: np.ndarray
    exact: bool = True
    std_error: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.std_error is not None:
            object.__setattr__(self, "std_error", np.asarray(self.std_error, dtype=float))


def _phi(params):
    if isinstance(params, MapParams):
        return lambda p: bernstein_matrix(params, p)
    if callable(params):
        return lambda p: np.atleast_2d(np.asarray(params(p), dtype=float))
    raise ParameterError(f"expected MapParams or a Bernstein-matrix callable, got {type(params)!r}")


def _solve(A, b, what):
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericError(f"cannot factor {what}: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) <= np.finfo(float).eps * max(1.0, np.abs(A).max())):
        raise NumericError(f"{what} is singular")
    return scipy.linalg.lu_solve(lu, b)


def death_moment_vector(params, p):
    """``F(p)_i = E_i[exp(-p xi_{T-})]`` where ``T`` is the death time.

    ``F(p) = Phi(p)^{-1} k`` with ``k`` the column of kill rates, valid when
    ``-lambda(-Phi(p)) > 0``; this includes all ``p >= 0`` and some ``p < 0``.

    Raises:
        ParameterError: no killing, or reducible chain.
        DomainError: ``p`` outside the validity region; carries the abscissa.
        NumericError: ``Phi(p)`` singular.
    """
    if not params.has_killing():
        raise ParameterError("death moments need at least one positive kill rate")
    if not params.is_irreducible():
        raise ParameterError("death moments need an irreducible type chain")
    Phi = bernstein_matrix(params, p)
    ab = spectral_abscissa(-Phi).abscissa
    if not -ab > 0:
        raise DomainError(f"p = {p} outside validity region: lambda(-Phi(p)) = {ab!r}", abscissa=ab)
    return MomentVector(p, _solve(Phi, params.kills, f"Phi({p})"))


def positive_integer_moments(params, k_max):
    """``[N(0), ..., N(k_max)]`` via ``N(k) = k Phi(k)^{-1} N(k-1)``."""
    if k_max < 0:
        raise ParameterError("k_max must be >= 0")
    if isinstance(params, MapParams) and not params.is_irreducible():
        raise ParameterError("positive moments need an irreducible type chain")
    phi = _phi(params)
    K = phi(1.0).shape[0]
    N = np.ones(K)
    out = [MomentVector(0, N.copy())]
    for k in range(1, k_max + 1):
        N = k * _solve(phi(float(k)), N, f"Phi({k})")
        out.append(MomentVector(k, N.copy()))
    return out


def exponential_moment_radius(params):
    """Spectral radius of ``lim_k Phi(k)^{-1}``.

    ``E_i[exp(a I)]`` is finite for every ``a`` below the returned value. The
    limit is approached by doubling ``k`` until the radius moves by less than
    ``1e-10``.

    Raises:
        NumericError: no convergence by ``k = 2**40``; ``residual`` carries
            the last radius, which is still a valid lower bound.
    """
    if isinstance(params, MapParams) and not params.is_irreducible():
        raise ParameterError("radius needs an irreducible type chain")
    phi = _phi(params)

    def radius(k):
        inv = np.linalg.inv(phi(k))
        return float(np.abs(np.linalg.eigvals(inv)).max())

    k = 1.0
    prev = radius(k)
    while k < RADIUS_MAX_K:
        k *= 2
        cur = radius(k)
        if abs(cur - prev) < RADIUS_TOL:
            return cur
        prev = cur
    raise NumericError(f"radius did not converge by k = 2**40 (last value {prev!r})", residual=prev)


def negative_integer_moments(params, k_min, n_minus_one):
    """``[N(-1), N(-2), ..., N(k_min)]`` from ``N(p-1) = Phi(p) N(p) / p``.

    ``n_minus_one`` is the anchor ``N(-1)`` (a :class:`MomentVector` or an
    array). Exactness of the outputs follows that of the anchor.
    """
    if isinstance(params, MapParams) and params.has_killing():
        raise ParameterError("negative moments need a MAP without killing")
    if not k_min < 0:
        raise ParameterError("k_min must be negative")
    phi = _phi(params)
    if isinstance(n_minus_one, MomentVector):
        exact = n_minus_one.exact
        N = n_minus_one.values.copy()
    else:
        exact = True
        N = np.asarray(n_minus_one, dtype=float).copy()
    out = [MomentVector(-1, N.copy(), exact)]
    for p in range(-1, k_min, -1):
        N = phi(float(p)) @ N / p
        out.append(MomentVector(p - 1, N.copy(), exact))
    return out


def moments_from_negative(params, moments):
    """Climb back up one step: ``N(p) = p Phi(p)^{-1} N(p-1)`` for ``p < 0``."""
    phi = _phi(params)
    low = moments[-1]
    p = low.order + 1
    return MomentVector(p, p * _solve(phi(float(p)), low.values, f"Phi({p})"), low.exact)


@dataclass(frozen=True)
class NegativeFirstMoment:
    """``N(-1)`` along two routes.

    ``direct`` is the Monte Carlo mean of ``1/I``; ``identity`` is
    ``Phi'(0) 1 - Lambda E[ln I]`` with ``E[ln I]`` estimated by Monte Carlo.
    ``gap_se`` is their difference in units of the combined standard error.
    """

    direct: MomentVector
    identity: MomentVector
    log_mean: np.ndarray
    log_se: np.ndarray
    gap_se: np.ndarray
    threshold: float = 4.0

    @property
    def consistent(self):
        return bool(np.all(np.abs(self.gap_se) <= self.threshold))


def negative_first_moment(params, n_samples, seed, threshold=4.0):
    """Estimate ``N(-1)`` by direct Monte Carlo and by the derivative identity.

    Both routes use the same exact samples of ``I`` per start type; the
    combined standard error accounts for the shared samples.
    """
    if params.has_killing():
        raise ParameterError("N(-1) needs a MAP without killing")
    if not params.is_irreducible():
        raise ParameterError("N(-1) needs an irreducible type chain")
    K = params.K
    G = params.generator
    D1 = bernstein_derivative_at_zero(params) @ np.ones(K)
    inv, logs = [], []
    for i in range(K):
        I = sample_functional(params, i, n_samples, seed, key=(1,))
        inv.append(1.0 / I)
        logs.append(np.log(I))
    n = n_samples
    m_inv = np.array([x.mean() for x in inv])
    m_log = np.array([x.mean() for x in logs])
    v_log = np.array([x.var(ddof=1) for x in logs])
    se_inv = np.array([x.std(ddof=1) for x in inv]) / math.sqrt(n)
    identity = D1 - G @ m_log
    se_identity = np.sqrt((G ** 2) @ v_log / n)
    gap = m_inv - identity
    se_gap = np.empty(K)
    for i in range(K):
        own = np.var(inv[i] + G[i, i] * logs[i], ddof=1) / n
        others = sum(G[i, j] ** 2 * v_log[j] / n for j in range(K) if j != i)
        se_gap[i] = math.sqrt(own + others)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap_se = np.where(se_gap > 0, gap / np.where(se_gap > 0, se_gap, 1.0), np.where(gap == 0, 0.0, np.inf))
    return NegativeFirstMoment(
        MomentVector(-1, m_inv, False, se_inv),
        MomentVector(-1, identity, False, se_identity),
        m_log,
        np.sqrt(v_log / n),
        gap_se,
        threshold,
    )
