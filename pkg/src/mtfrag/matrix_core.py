"""Small dense spectral toolkit for ML-matrices.

An ML-matrix is a square real matrix whose off-diagonal entries are
nonnegative. Adding ``sigma * I`` with ``sigma`` large enough turns it into a
nonnegative matrix, so Perron-Frobenius theory applies: the spectral abscissa
is an eigenvalue and, under irreducibility, it carries strictly positive left
and right eigenvectors.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericError, ParameterError

EIGEN_RTOL = 1e-12
MAX_POWER_ITER = 10_000


@dataclass(frozen=True)
class SpectralData:
    """Spectral abscissa of a matrix with its Perron vectors.

    ``right_vector`` and ``left_vector`` are normalized to sum to one.
    ``residual`` is ``max(|A v - l v|_inf, |u A - l u|_inf)``.
    """

    abscissa: float
    right_vector: np.ndarray
    left_vector: np.ndarray
    residual: float


def as_ml_matrix(A, check_ml=True):
    """Return ``A`` as a float square matrix, validating the ML property."""
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ParameterError(f"expected a nonempty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix has non-finite entries")
    if check_ml:
        off = A - np.diag(np.diag(A))
        bad = np.argwhere(off < 0)
        if bad.size:
            i, j = bad[0]
            raise ParameterError(
                f"not an ML-matrix: entry ({i}, {j}) = {float(A[i, j])!r} is negative off the diagonal"
            )
    return A


def _reach(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def _unreachable_pair(A):
    """First ``(i, j)`` with ``j`` not reachable from ``i``, or None."""
    K = A.shape[0]
    adj = A > 0
    np.fill_diagonal(adj, False)
    for i in range(K):
        seen = _reach(adj, i)
        if len(seen) < K:
            j = min(set(range(K)) - seen)
            return i, j
    return None


def is_irreducible(A):
    """True iff the graph of positive off-diagonal entries is strongly connected."""
    A = as_ml_matrix(A)
    return _unreachable_pair(A) is None


def _normalize(v):
    v = np.asarray(v, dtype=float)
    nz = np.flatnonzero(np.abs(v) > 0)
    if nz.size and v[nz[0]] < 0:
        v = -v
    s = v.sum()
    return v / s if s != 0 else v


def _power_iteration(B, tol, max_iter):
    """Dominant eigenpair of the nonnegative matrix ``B``.

    Returns ``(value, vector, converged)``.
    """
    K = B.shape[0]
    v = np.full(K, 1.0 / K)
    scale = max(1.0, np.abs(B).max())
    lam = 0.0
    for _ in range(max_iter):
        w = B @ v
        norm = w.sum()
        if norm <= 0:
            return 0.0, v, False
        w = w / norm
        lam = float(w @ (B @ w) / (w @ w))
        if np.abs(B @ w - lam * w).max() <= tol * scale:
            return lam, w, True
        v = w
    return lam, v, False


def _dense_pair(A, transpose=False):
    M = A.T if transpose else A
    vals, vecs = np.linalg.eig(M)
    k = int(np.argmax(vals.real))
    v = vecs[:, k].real
    return float(vals[k].real), _normalize(v)


def _eigenpair(A, sigma, transpose=False):
    M = A.T if transpose else A
    B = M + sigma * np.eye(A.shape[0])
    lam, v, ok = _power_iteration(B, EIGEN_RTOL, MAX_POWER_ITER)
    if ok:
        return lam - sigma, _normalize(v)
    return _dense_pair(A, transpose)


def _residual(A, lam, v, u):
    return float(
        max(np.abs(A @ v - lam * v).max(), np.abs(u @ A - lam * u).max())
    )


def spectral_abscissa(A, check_ml=True):
    """Maximal real part of the spectrum of an ML-matrix.

    The matrix is shifted by ``max_i |A_ii| + 1`` to a nonnegative one and the
    Perron root is found by power iteration; when that stalls (e.g. a
    reducible or nearly periodic matrix) a dense eigensolve takes over.

    Raises:
        ParameterError: negative off-diagonal entry.
        NumericError: final residual above tolerance.
    """
    A = as_ml_matrix(A, check_ml)
    K = A.shape[0]
    if K == 1:
        one = np.ones(1)
        return SpectralData(float(A[0, 0]), one, one, 0.0)
    sigma = float(np.abs(np.diag(A)).max()) + 1.0
    lam, v = _eigenpair(A, sigma)
    lam_l, u = _eigenpair(A, sigma, transpose=True)
    res = _residual(A, lam, v, u)
    tol = EIGEN_RTOL * max(1.0, np.abs(A).max())
    if res > tol:
        # the two power iterations may have stopped on slightly different
        # values; retry with the dense solver for both sides
        lam, v = _dense_pair(A)
        _, u = _dense_pair(A, transpose=True)
        res = _residual(A, lam, v, u)
        if res > tol:
            raise NumericError(
                f"eigen-solve did not reach tolerance (residual {res:.3e})", residual=res
            )
    return SpectralData(lam, v, u, res)


def perron_pair(A):
    """Perron root and strictly positive left/right eigenvectors.

    Raises:
        ParameterError: ``A`` is reducible; the message names a type pair
            ``(i, j)`` such that ``j`` cannot be reached from ``i``.
    """
    A = as_ml_matrix(A)
    pair = _unreachable_pair(A)
    if pair is not None:
        i, j = pair
        raise ParameterError(f"matrix is reducible: type {j} is not reachable from type {i}")
    sd = spectral_abscissa(A)
    if np.any(sd.right_vector <= 0) or np.any(sd.left_vector <= 0):
        raise NumericError("Perron vectors not strictly positive", residual=sd.residual)
    return sd


def mat_exp(A, t=1.0):
    """``exp(t A)`` by scaling and squaring with a degree-13 Pade approximant.

    Raises:
        ParameterError: ``t < 0`` or non-finite entries.
        NumericError: the result overflowed.
    """
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    A = as_ml_matrix(A, check_ml=False)
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(E)):
        raise NumericError(f"matrix exponential overflowed at t*|A| = {t * np.abs(A).max():.3e}")
    return E
