import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mtfrag.errors import NumericError, ParameterError
from mtfrag.matrix_core import is_irreducible, mat_exp, perron_pair, spectral_abscissa


def test_identity_abscissa():
    sd = spectral_abscissa(np.eye(2))
    assert sd.abscissa == pytest.approx(1.0, abs=1e-12)
    assert np.all(sd.right_vector > 0)


def test_symmetric_generator():
    sd = perron_pair([[-1.0, 1.0], [1.0, -1.0]])
    assert sd.abscissa == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(sd.right_vector, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sd.left_vector, [0.5, 0.5], atol=1e-12)


def test_nonsymmetric_two_by_two():
    # trace -3, determinant 0: eigenvalues {0, -3}
    assert spectral_abscissa([[-2.0, 1.0], [2.0, -1.0]]).abscissa == pytest.approx(0.0, abs=1e-12)


def test_perron_root_sqrt_two():
    sd = perron_pair([[0.0, 2.0], [1.0, 0.0]])
    assert sd.abscissa == pytest.approx(math.sqrt(2), abs=1e-12)
    v = sd.right_vector
    assert v[0] / v[1] == pytest.approx(math.sqrt(2), abs=1e-10)
    assert v.sum() == pytest.approx(1.0)


def test_reducible_perron_names_pair():
    with pytest.raises(ParameterError, match="type 0 is not reachable from type 1"):
        perron_pair([[-1.0, 1.0], [0.0, 0.0]])


def test_non_ml_rejected():
    with pytest.raises(ParameterError, match=r"entry \(0, 1\)"):
        spectral_abscissa([[0.0, -1.0], [1.0, 0.0]])


def test_residual_within_tolerance():
    A = np.array([[-3.0, 1.0, 0.5], [0.2, -1.0, 0.7], [1.0, 0.0, -2.0]])
    sd = spectral_abscissa(A)
    assert sd.residual <= 1e-12 * np.abs(A).max()
    assert np.abs(A @ sd.right_vector - sd.abscissa * sd.right_vector).max() <= sd.residual + 1e-15


@pytest.mark.parametrize(
    "A, expected",
    [
        ([[-1, 1], [1, -1]], True),
        ([[-1, 1], [0, 0]], False),
        ([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], True),
    ],
)
def test_irreducibility(A, expected):
    assert is_irreducible(A) is expected


def test_mat_exp_zero_is_identity():
    np.testing.assert_array_equal(mat_exp(np.zeros((3, 3)), 7.0), np.eye(3))


@pytest.mark.parametrize("t", [0.1, 1.0, 3.0])
def test_mat_exp_symmetric_generator(t):
    E = mat_exp([[-1.0, 1.0], [1.0, -1.0]], t)
    d, o = (1 + math.exp(-2 * t)) / 2, (1 - math.exp(-2 * t)) / 2
    np.testing.assert_allclose(E, [[d, o], [o, d]], atol=1e-14)


def test_mat_exp_diagonal():
    np.testing.assert_allclose(mat_exp(np.diag([-1.0, -2.0]), 1.0), np.diag([math.exp(-1), math.exp(-2)]), rtol=1e-14)


def test_mat_exp_rejects_negative_time():
    with pytest.raises(ParameterError):
        mat_exp(np.eye(2), -1.0)


def test_mat_exp_overflow():
    with pytest.raises(NumericError):
        mat_exp(np.eye(2) * 1e3, 10.0)


# ------------------------------------------------------------ properties


def ml_matrices(k_min=2, k_max=5, positive=True):
    @st.composite
    def build(draw):
        K = draw(st.integers(k_min, k_max))
        lo = 0.05 if positive else 0.0
        off = draw(arrays(float, (K, K), elements=st.floats(lo, 3.0)))
        diag = draw(arrays(float, (K,), elements=st.floats(-5.0, 5.0)))
        A = off.copy()
        np.fill_diagonal(A, diag)
        return A

    return build()


@given(ml_matrices(), st.floats(-10, 10))
def test_shift_equivariance(A, c):
    a = spectral_abscissa(A).abscissa
    b = spectral_abscissa(A + c * np.eye(A.shape[0])).abscissa
    assert b == pytest.approx(a + c, abs=1e-9 * max(1.0, abs(a) + abs(c)))


@given(ml_matrices(), st.data())
def test_monotone_dominance(A, data):
    K = A.shape[0]
    i = data.draw(st.integers(0, K - 1))
    j = data.draw(st.integers(0, K - 1))
    B = A.copy()
    B[i, j] -= data.draw(st.floats(0.01, 0.04))
    assert spectral_abscissa(A).abscissa > spectral_abscissa(B).abscissa
    assert np.all(mat_exp(A, 1.0) > mat_exp(B, 1.0))


@given(ml_matrices())
def test_continuity(A):
    a = spectral_abscissa(A).abscissa
    b = spectral_abscissa(A + 1e-8 * np.ones_like(A)).abscissa
    assert abs(b - a) <= 1e-5


@given(ml_matrices(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_mat_exp_semigroup(A, s, t):
    A = A / max(1.0, np.abs(A).max())
    np.testing.assert_allclose(mat_exp(A, s + t), mat_exp(A, s) @ mat_exp(A, t), atol=1e-10)


@given(ml_matrices())
def test_perron_vectors_positive_and_normalized(A):
    sd = perron_pair(A)
    assert np.all(sd.right_vector > 0) and np.all(sd.left_vector > 0)
    assert sd.right_vector.sum() == pytest.approx(1.0) and sd.left_vector.sum() == pytest.approx(1.0)


@given(ml_matrices(positive=True), st.floats(0.01, 2.0))
def test_generator_exponential_rows_sum_to_one(A, t):
    G = A.copy()
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    E = mat_exp(G, t)
    np.testing.assert_allclose(E.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(E > 0)
