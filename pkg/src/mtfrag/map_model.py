"""Parameters and Laplace calculus of nondecreasing Markov additive processes.

A MAP ``(xi, J)`` here has a finite type chain ``J`` with generator ``Lambda``.
While ``J = i`` the position ``xi`` moves as a subordinator with killing rate
``kill``, drift ``drift`` and a finite Levy measure given as atoms
``(size, rate)``. When ``J`` jumps from ``i`` to ``j`` the position jumps by an
independent amount drawn from the finite law ``jump_laws[i][j]``.

The Bernstein matrix ``Phi(p)`` satisfies
``E_i[exp(-p xi_t), J_t = j] = expm(-t Phi(p))[i, j]``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .matrix_core import as_ml_matrix, is_irreducible

ROW_SUM_TOL = 1e-12
PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SubordinatorParams:
    kill: float = 0.0
    drift: float = 0.0
    levy_atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.levy_atoms)
        object.__setattr__(self, "levy_atoms", atoms)
        object.__setattr__(self, "kill", float(self.kill))
        object.__setattr__(self, "drift", float(self.drift))
        if not (np.isfinite(self.kill) and self.kill >= 0):
            raise ParameterError(f"kill rate must be finite and >= 0, got {self.kill}")
        if not (np.isfinite(self.drift) and self.drift >= 0):
            raise ParameterError(f"drift must be finite and >= 0, got {self.drift}")
        for x, w in atoms:
            if not (np.isfinite(x) and x > 0 and np.isfinite(w) and w > 0):
                raise ParameterError(f"Levy atom (size={x}, rate={w}) must have size > 0 and rate > 0")

    @property
    def levy_rate(self):
        return sum(w for _, w in self.levy_atoms)

    @property
    def levy_mean(self):
        """Integral of ``x`` against the Levy measure."""
        return sum(w * x for x, w in self.levy_atoms)

    def is_trivial(self):
        return self.drift == 0 and not self.levy_atoms


@dataclass(frozen=True)
class JumpLaw:
    """Finite law of the position jump at a type change."""

    atoms: tuple = ((0.0, 1.0),)

    def __post_init__(self):
        atoms = tuple((float(x), float(q)) for x, q in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ParameterError("jump law needs at least one atom")
        for x, q in atoms:
            if not (np.isfinite(x) and x >= 0):
                raise ParameterError(f"jump size must be finite and >= 0, got {x}")
            if not (0 < q <= 1):
                raise ParameterError(f"jump probability must lie in (0, 1], got {q}")
        total = sum(q for _, q in atoms)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ParameterError(f"jump probabilities sum to {total!r}, not 1")

    def transform(self, p):
        """Laplace transform ``E[exp(-p B)]``."""
        return sum(q * np.exp(-p * x) for x, q in self.atoms)

    @property
    def mean(self):
        return sum(q * x for x, q in self.atoms)

    def charges_positive(self):
        return any(x > 0 for x, _ in self.atoms)


DIRAC_ZERO = JumpLaw()


@dataclass(frozen=True)
class MapParams:
    """Full parameter set of a nondecreasing MAP.

    Args:
        generator: ``K x K`` conservative generator of the type chain.
        subordinators: one :class:`SubordinatorParams` per type.
        jump_laws: ``K x K`` nested sequence of :class:`JumpLaw` (or None for
            Dirac at 0). Diagonal entries must be Dirac at 0.
        allow_degenerate: accept a position component that is a.s. constant.
            Meant only for chain-marginal tests.
    """

    generator: np.ndarray
    subordinators: tuple
    jump_laws: tuple = None
    allow_degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        G = as_ml_matrix(self.generator)
        K = G.shape[0]
        rows = G.sum(axis=1)
        for i, r in enumerate(rows):
            if abs(r) > ROW_SUM_TOL:
                raise ParameterError(f"generator row {i} sums to {float(r)!r}, not 0")
        G.setflags(write=False)
        object.__setattr__(self, "generator", G)

        subs = tuple(
            s if isinstance(s, SubordinatorParams) else SubordinatorParams(**s)
            for s in self.subordinators
        )
        if len(subs) != K:
            raise ParameterError(f"expected {K} subordinators, got {len(subs)}")
        object.__setattr__(self, "subordinators", subs)

        laws = self.jump_laws
        if laws is None:
            laws = [[None] * K for _ in range(K)]
        if len(laws) != K or any(len(row) != K for row in laws):
            raise ParameterError(f"jump_laws must be {K} x {K}")
        fixed = []
        for i, row in enumerate(laws):
            out = []
            for j, law in enumerate(row):
                if law is None:
                    law = DIRAC_ZERO
                elif not isinstance(law, JumpLaw):
                    law = JumpLaw(law)
                if i == j and law.charges_positive():
                    raise ParameterError(f"diagonal jump law ({i}, {i}) must be Dirac at 0")
                out.append(law)
            fixed.append(tuple(out))
        object.__setattr__(self, "jump_laws", tuple(fixed))

        if not self.allow_degenerate and self.is_degenerate():
            raise ParameterError(
                "position component is a.s. constant: every subordinator is trivial "
                "and no charged type-change jump law is reachable"
            )

    @property
    def K(self):
        return self.generator.shape[0]

    @property
    def kills(self):
        return np.array([s.kill for s in self.subordinators])

    @property
    def drifts(self):
        return np.array([s.drift for s in self.subordinators])

    def is_degenerate(self):
        if not all(s.is_trivial() for s in self.subordinators):
            return False
        G = self.generator
        for i in range(self.K):
            for j in range(self.K):
                if i != j and G[i, j] > 0 and self.jump_laws[i][j].charges_positive():
                    return False
        return True

    def is_irreducible(self):
        return is_irreducible(self.generator)

    def has_killing(self):
        return bool(np.any(self.kills > 0))

    def _check_type(self, i):
        if not (isinstance(i, (int, np.integer)) and 0 <= i < self.K):
            raise ParameterError(f"type index {i!r} out of range [0, {self.K})")


def laplace_exponent(params, i, p):
    """``kill + drift * p + sum_w w (1 - exp(-p x))`` for type ``i``."""
    params._check_type(i)
    s = params.subordinators[i]
    val = s.kill + s.drift * p
    for x, w in s.levy_atoms:
        val += -w * np.expm1(-p * x)
    return float(val)


def bernstein_matrix(params, p):
    """``Phi(p) = diag(psi_i(p)) - Lambda * Bhat(p)`` (entrywise product)."""
    K = params.K
    G = params.generator
    Phi = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            if i == j:
                Phi[i, j] = laplace_exponent(params, i, p) - G[i, i]
            else:
                Phi[i, j] = -G[i, j] * params.jump_laws[i][j].transform(p) if G[i, j] else 0.0
    return Phi


def bernstein_derivative_at_zero(params):
    """Analytic derivative of ``Phi`` at ``p = 0``.

    Entry ``(i, j)`` is ``(drift_i + int x Pi_i(dx)) 1{i=j} + lambda_ij E[B_ij]``.

    Raises:
        ParameterError: some kill rate is positive.
    """
    if params.has_killing():
        raise ParameterError("derivative at 0 requires a MAP without killing")
    K = params.K
    G = params.generator
    D = np.zeros((K, K))
    for i, s in enumerate(params.subordinators):
        D[i, i] = s.drift + s.levy_mean
        for j in range(K):
            if j != i and G[i, j] > 0:
                D[i, j] = G[i, j] * params.jump_laws[i][j].mean
    return D


def domain_lower_bound(params):
    """Lower end of the domain of analytic continuation of ``Phi``.

    With finitely many atoms every exponential moment is finite, so the
    bound is always ``-inf``. Heavy-tailed families are not representable.
    """
    assert all(np.isfinite(x) for s in params.subordinators for x, _ in s.levy_atoms)
    return -np.inf


def stationary_law(params):
    """Stationary distribution of the type chain (requires irreducibility)."""
    from .matrix_core import perron_pair

    return perron_pair(params.generator).left_vector


def asymptotic_speed(params):
    """Almost-sure limit of ``xi_t / t`` for an unkilled irreducible MAP."""
    pi = stationary_law(params)
    G = params.generator
    rate = np.empty(params.K)
    for i, s in enumerate(params.subordinators):
        jumps = sum(G[i, j] * params.jump_laws[i][j].mean for j in range(params.K) if j != i)
        rate[i] = s.drift + s.levy_mean + jumps
    return float(pi @ rate)
