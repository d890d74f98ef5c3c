"""Brownian path construction on an equally spaced time grid.

The covariance of ``(W(t_1), ..., W(t_d))`` is ``C = dt * min(l, k)``. A path is
``w = A x`` for standard normal ``x`` and any ``A`` with ``A A^T = C``. Three
choices are provided:

* ``standard``: lower-triangular Cholesky factor (cumulative sums of increments);
* ``brownian-bridge``: terminal value first, then recursive midpoints;
* ``pca``: ``A = U diag(sqrt(lambda))`` with eigenvalues in non-increasing order.

For the uniform grid the PCA eigenpairs are known in closed form,

    lambda_k = dt / (4 sin^2((2k-1) pi / (2(2d+1))))
    U[l, k]  = 2 / sqrt(2d+1) * sin((2k-1) l pi / (2d+1)),

so ``A x`` is a sine transform and costs O(d log d) through a real FFT of
length ``2d+1``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from ._accel import worker_count
from .errors import ContractError, FactorizationError

METHODS = ("standard", "brownian-bridge", "pca")
_ALIASES = {"cholesky": "standard", "bridge": "brownian-bridge", "bb": "brownian-bridge"}


def canonical_method(method: str) -> str:
    method = _ALIASES.get(method, method)
    if method not in METHODS:
        raise ValueError(f"unknown factorization {method!r}; expected one of {METHODS}")
    return method


@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced monitoring times ``t_l = l * T / d``, ``l = 1..d``."""

    d: int
    T: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.d

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.d + 1)


@dataclass(frozen=True)
class CovarianceMatrix:
    matrix: np.ndarray
    grid: TimeGrid | None = None

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def build_covariance(grid: TimeGrid) -> CovarianceMatrix:
    """Dense Brownian covariance ``dt * min(l, k)``."""
    idx = np.arange(1, grid.d + 1)
    return CovarianceMatrix(grid.dt * np.minimum.outer(idx, idx).astype(float), grid)


def eigenpairs_closed_form(grid: TimeGrid):
    """Eigenvalues (non-increasing) and unit eigenvectors (as columns) of the grid covariance."""
    d = grid.d
    m = 2 * d + 1
    odd = 2 * np.arange(1, d + 1) - 1
    lam = grid.dt / (4.0 * np.sin(odd * np.pi / (2 * m)) ** 2)
    ell = np.arange(1, d + 1)
    u = (2.0 / np.sqrt(m)) * np.sin(np.outer(ell, odd) * np.pi / m)
    return lam, u


@dataclass(eq=False)
class PathFactorization:
    """A covariance factor ``A`` (``A A^T = C``) together with its construction method.

    For ``pca`` on a uniform grid the dense matrix is built lazily; products go
    through the sine transform.
    """

    method: str
    d: int
    grid: TimeGrid | None = None
    eigenvalues: np.ndarray | None = None
    _matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def fast(self) -> bool:
        return self.method == "pca" and self.grid is not None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            lam, u = eigenpairs_closed_form(self.grid)
            self._matrix = u * np.sqrt(lam)
            self._matrix.setflags(write=False)
        return self._matrix

    def column(self, k: int) -> np.ndarray:
        """Column ``k`` (0-based) of ``A``."""
        if self.fast and self._matrix is None:
            e = np.zeros(self.d)
            e[k] = 1.0
            return pca_matvec_fast(self, e)
        return np.array(self.matrix[:, k])

    def matvec(self, x) -> np.ndarray:
        """``A x`` applied along the last axis of ``x``."""
        x = np.asarray(x, dtype=float)
        if self.fast:
            return pca_matvec_fast(self, x)
        return x @ self.matrix.T

    def rmatvec(self, v) -> np.ndarray:
        """``A^T v`` applied along the last axis of ``v``."""
        v = np.asarray(v, dtype=float)
        if self.fast:
            return _pca_rmatvec_fast(self, v)
        return v @ self.matrix


def _check_spd(c):
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise FactorizationError("covariance must be a square matrix")
    if not np.allclose(c, c.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(c).max(initial=0.0))):
        raise FactorizationError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise FactorizationError("covariance is not positive definite") from None


def _bridge_matrix(times):
    """Brownian bridge factor: column 0 sets W(t_d), later columns fill midpoints breadth-first."""
    d = times.size
    t = np.concatenate(([0.0], times))
    paths = np.zeros((d + 1, d))  # row p: coefficients of W(t_p); W(0) = 0
    paths[d, 0] = np.sqrt(t[d])
    col = 1
    queue = deque([(0, d)])
    while queue:
        left, right = queue.popleft()
        if right - left < 2:
            continue
        mid = (left + right) // 2
        tl, tm, tr = t[left], t[mid], t[right]
        paths[mid] = ((tr - tm) * paths[left] + (tm - tl) * paths[right]) / (tr - tl)
        paths[mid, col] = np.sqrt((tm - tl) * (tr - tm) / (tr - tl))
        col += 1
        queue.append((left, mid))
        queue.append((mid, right))
    return paths[1:]


def _pca_dense(c):
    lam, u = np.linalg.eigh(c)
    lam, u = lam[::-1], u[:, ::-1]
    if lam[-1] <= 0:
        raise FactorizationError("covariance is not positive definite")
    # sign convention shared with the closed form: first nonzero entry positive
    lead = np.argmax(np.abs(u) > 1e-12, axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    return lam, u * signs


def factorize(cov, method: str = "pca") -> PathFactorization:
    """Factor a Brownian covariance as ``C = A A^T``.

    Parameters
    ----------
    cov : CovarianceMatrix, TimeGrid, or ndarray
        With a uniform grid attached, ``pca`` uses the closed-form eigenpairs and
        the fast sine transform. A bare matrix falls back to a dense symmetric
        eigensolver; ``brownian-bridge`` then reads the times off the diagonal.
    method : {"standard", "brownian-bridge", "pca"}

    Raises
    ------
    FactorizationError
        If the matrix is not symmetric positive definite.
    """
    method = canonical_method(method)
    if isinstance(cov, TimeGrid):
        cov = build_covariance(cov)
    if isinstance(cov, CovarianceMatrix):
        grid, c = cov.grid, np.asarray(cov.matrix, dtype=float)
    else:
        grid, c = None, np.asarray(cov, dtype=float)
    d = c.shape[0]

    if method == "pca" and grid is not None:
        lam, _ = eigenpairs_closed_form(grid)
        return PathFactorization("pca", d, grid, lam)

    chol = _check_spd(c)
    if method == "standard":
        return PathFactorization("standard", d, grid, None, chol)
    if method == "brownian-bridge":
        times = np.diag(c).copy()
        if np.any(np.diff(times) <= 0) or not np.allclose(
            c, np.minimum.outer(times, times), rtol=1e-12, atol=0.0
        ):
            raise FactorizationError("Brownian bridge needs a covariance of the form min(t_l, t_k)")
        return PathFactorization("brownian-bridge", d, grid, None, _bridge_matrix(times))
    lam, u = _pca_dense(c)
    return PathFactorization("pca", d, None, lam, u * np.sqrt(lam))


def pca_matvec_fast(fact: PathFactorization, x) -> np.ndarray:
    """``A x`` for the closed-form PCA factor in O(d log d) per vector.

    ``x`` may be a single vector or a stack with the path dimension last.
    """
    if not fact.fast:
        raise ContractError("fast matvec needs a pca factorization on a uniform grid")
    x = np.asarray(x, dtype=float)
    d = fact.d
    if x.shape[-1] != d:
        raise ValueError(f"last axis has length {x.shape[-1]}, expected {d}")
    m = 2 * d + 1
    buf = np.zeros(x.shape[:-1] + (m,))
    buf[..., 1:d + 1] = x * np.sqrt(fact.eigenvalues)
    spec = scipy.fft.rfft(buf, axis=-1, workers=worker_count())[..., 1:]
    ell = np.arange(1, d + 1)
    twiddle = np.exp(1j * np.pi * ell / m)
    return -(2.0 / np.sqrt(m)) * (spec * twiddle).imag


def _pca_rmatvec_fast(fact, v):
    v = np.asarray(v, dtype=float)
    d = fact.d
    m = 2 * d + 1
    buf = np.zeros(v.shape[:-1] + (2 * m,))
    buf[..., 1:d + 1] = v
    spec = scipy.fft.rfft(buf, axis=-1, workers=worker_count())[..., 1:2 * d:2]
    return -(2.0 / np.sqrt(m)) * np.sqrt(fact.eigenvalues) * spec.imag
