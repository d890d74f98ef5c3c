import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from preintqmc.brownian import (
    CovarianceMatrix,
    TimeGrid,
    build_covariance,
    eigenpairs_closed_form,
    factorize,
    pca_matvec_fast,
)
from preintqmc.errors import ContractError, FactorizationError

METHODS = ("standard", "brownian-bridge", "pca")


def test_time_grid():
    g = TimeGrid(4, 2.0)
    np.testing.assert_allclose(g.times, [0.5, 1.0, 1.5, 2.0])
    assert g.times[-1] == g.T
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(3, 0.0)


def test_covariance_examples():
    np.testing.assert_array_equal(build_covariance(TimeGrid(2)).matrix, [[0.5, 0.5], [0.5, 1.0]])
    np.testing.assert_array_equal(build_covariance(TimeGrid(1)).matrix, [[1.0]])
    idx = np.arange(1, 4)
    np.testing.assert_allclose(build_covariance(TimeGrid(3, 1.5)).matrix, 0.5 * np.minimum.outer(idx, idx))


def test_pca_eigenvalues_d2():
    # roots of lambda^2 - 1.5 lambda + 0.25
    expected = [(1.5 + np.sqrt(1.25)) / 2, (1.5 - np.sqrt(1.25)) / 2]
    np.testing.assert_allclose(factorize(TimeGrid(2), "pca").eigenvalues, expected, rtol=1e-14)
    np.testing.assert_allclose(expected, [1.309017, 0.190983], atol=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_scalar_case(method):
    np.testing.assert_allclose(factorize(TimeGrid(1), method).matrix, [[1.0]], rtol=1e-15)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("d", [1, 2, 3, 8, 13, 64, 256])
def test_factorization_residual(method, d):
    grid = TimeGrid(d)
    a = factorize(grid, method).matrix
    assert np.abs(a @ a.T - build_covariance(grid).matrix).max() <= 1e-9


def test_standard_is_cholesky():
    a = factorize(TimeGrid(5), "standard").matrix
    assert np.allclose(a, np.tril(a))
    np.testing.assert_allclose(a, np.tril(np.full((5, 5), np.sqrt(0.2))), rtol=1e-14)


def test_bridge_terminal_point_first():
    grid = TimeGrid(8, 2.0)
    a = factorize(grid, "bridge").matrix
    # column 0 alone fixes W(T); its contribution to W(t) is linear interpolation
    np.testing.assert_allclose(a[:, 0], grid.times / np.sqrt(grid.T), rtol=1e-14)
    # column 1 refines the midpoint t = T/2 and leaves W(T) untouched
    assert a[-1, 1] == 0.0 and a[3, 1] > 0
    # the final columns only touch their own midpoints
    assert np.count_nonzero(a[:, -1]) == 1


def test_bridge_differs_from_standard_with_same_covariance():
    grid = TimeGrid(6)
    a = factorize(grid, "bridge").matrix
    b = factorize(grid, "standard").matrix
    assert not np.allclose(a, b)
    np.testing.assert_allclose(a @ a.T, b @ b.T, atol=1e-14)


def test_eigen_residuals_and_sign():
    for d in (1, 2, 8, 100):
        grid = TimeGrid(d)
        lam, u = eigenpairs_closed_form(grid)
        c = build_covariance(grid).matrix
        assert np.abs(c @ u - u * lam).max() <= 1e-9 * lam[0]
        np.testing.assert_allclose(np.linalg.norm(u, axis=0), 1.0, rtol=1e-13)
        assert np.all(np.diff(lam) <= 0) and np.all(lam > 0)
        assert np.all(u[:, 0] > 0)
        np.testing.assert_allclose(lam.sum(), grid.dt * d * (d + 1) / 2, rtol=1e-9)


def test_first_column_positive_up_to_1024():
    for d in (1, 5, 64, 333, 1024):
        assert np.all(factorize(TimeGrid(d), "pca").column(0) > 0)


def test_dense_fallback_matches_closed_form():
    grid = TimeGrid(12)
    fast = factorize(grid, "pca")
    dense = factorize(build_covariance(grid).matrix, "pca")
    assert not dense.fast
    np.testing.assert_allclose(dense.eigenvalues, fast.eigenvalues, rtol=1e-12)
    np.testing.assert_allclose(dense.matrix, fast.matrix, atol=1e-12)


def test_bridge_from_bare_matrix():
    grid = TimeGrid(7, 3.0)
    a = factorize(build_covariance(grid).matrix, "bridge").matrix
    np.testing.assert_allclose(a, factorize(grid, "bridge").matrix, atol=1e-15)


def test_factorization_errors():
    with pytest.raises(FactorizationError):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]), "standard")
    with pytest.raises(FactorizationError):
        factorize(np.array([[1.0, 0.5], [0.4, 1.0]]), "pca")
    with pytest.raises(FactorizationError):
        factorize(np.array([[1.0, 0.2], [0.2, 1.0]]), "bridge")  # not of min(t, s) form
    with pytest.raises(ValueError):
        factorize(TimeGrid(2), "cholesky-ish")


def test_fast_matvec_examples():
    fact = factorize(TimeGrid(2), "pca")
    np.testing.assert_array_equal(pca_matvec_fast(fact, np.zeros(2)), [0.0, 0.0])
    lam, u = eigenpairs_closed_form(TimeGrid(2))
    np.testing.assert_allclose(pca_matvec_fast(fact, [1.0, 0.0]), np.sqrt(lam[0]) * u[:, 0], rtol=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3, 17, 256, 1000])
def test_fast_matvec_matches_dense(d, rng):
    fact = factorize(TimeGrid(d), "pca")
    lam, u = eigenpairs_closed_form(TimeGrid(d))
    dense = u * np.sqrt(lam)
    x = rng.standard_normal((5, d))
    got = pca_matvec_fast(fact, x)
    want = x @ dense.T
    assert np.abs(got - want).max() <= 1e-10 * np.abs(want).max()
    v = rng.standard_normal((5, d))
    np.testing.assert_allclose(fact.rmatvec(v), v @ dense, atol=1e-12 * np.abs(v @ dense).max())


def test_fast_matvec_requires_pca():
    with pytest.raises(ContractError):
        pca_matvec_fast(factorize(TimeGrid(4), "standard"), np.ones(4))
    with pytest.raises(ContractError):
        pca_matvec_fast(factorize(CovarianceMatrix(build_covariance(TimeGrid(4)).matrix), "pca"), np.ones(4))


@pytest.mark.parametrize("method", METHODS)
def test_empirical_covariance(method):
    d, n = 6, 2**14
    grid = TimeGrid(d)
    c = build_covariance(grid).matrix
    z = np.random.default_rng(7).standard_normal((n, d))
    w = factorize(grid, method).matvec(z)
    emp = w.T @ w / n
    se = np.sqrt((np.outer(np.diag(c), np.diag(c)) + c**2) / n)
    assert np.all(np.abs(emp - c) <= 5 * se)


@settings(max_examples=30, deadline=None)
@given(
    hnp.arrays(np.float64, 9, elements=st.floats(-10, 10)),
    hnp.arrays(np.float64, 9, elements=st.floats(-10, 10)),
    st.floats(-5, 5),
)
def test_fast_matvec_is_linear(x, y, a):
    fact = factorize(TimeGrid(9), "pca")
    lhs = fact.matvec(a * x + y)
    rhs = a * fact.matvec(x) + fact.matvec(y)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))
