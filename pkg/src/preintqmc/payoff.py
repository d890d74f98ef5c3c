"""Integrands of the form ``f(x) = theta(x) * ind(phi(x) > 0)`` on R^d.

:class:`JumpIntegrand` bundles ``theta``, ``phi`` and the partial derivatives
of ``phi``, together with the coordinate ``j`` along which ``phi`` is
increasing. :class:`DigitalAsian` is the digital arithmetic-average Asian
call under geometric Brownian motion.

All callables act on arrays whose last axis holds the ``d`` coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .brownian import PathFactorization, TimeGrid
from .errors import MonotonicityError


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market; defaults are the digital Asian study parameters."""

    S0: float = 100.0
    K: float = 100.0
    r: float = 0.1
    sigma: float = 0.1
    T: float = 1.0

    def __post_init__(self):
        for name in ("S0", "K", "sigma", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def drift(self) -> float:
        return self.r - 0.5 * self.sigma**2

    @property
    def discount(self) -> float:
        return float(np.exp(-self.r * self.T))


def asset_path(params: MarketParams, w, grid: TimeGrid) -> np.ndarray:
    """``S(t_l) = S0 exp(drift * t_l + sigma * w_l)`` along the last axis of ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != grid.d:
        raise ValueError(f"path has {w.shape[-1]} steps, grid has {grid.d}")
    return params.S0 * np.exp(params.drift * grid.times + params.sigma * w)


def as_rows(y, width):
    """View ``y`` as an (n, width) array; a single point becomes one row."""
    y = np.asarray(y, dtype=float)
    if width == 0:
        n = y.shape[0] if y.ndim >= 2 else 1
        return np.zeros((n, 0))
    return y.reshape(-1, width)


class JumpIntegrand:
    """``f = theta * ind(phi)`` with ``phi`` increasing in coordinate ``j``.

    Parameters
    ----------
    d : int
    phi : callable
        ``phi(x)`` for ``x`` of shape (..., d).
    dphi : callable
        ``dphi(x, k)``, the partial derivative of ``phi`` in coordinate ``k``.
    j : int
        Preintegration coordinate (0-based).
    theta : float or callable
        A float makes ``theta`` constant and enables the closed-form tail
        ``theta * (1 - Phi(root))``.
    dtheta : callable, optional
        ``dtheta(x, k)``; only needed for derivative probes with non-constant theta.
    closed_form_tail : callable, optional
        ``closed_form_tail(root, y)`` returning ``int_root^inf theta rho``.
        Overrides the constant-theta default.
    phi_scale : float
        Typical magnitude of ``phi``; the root residual tolerance is
        ``1e-12 * (1 + phi_scale)``.
    """

    def __init__(
        self,
        d,
        phi,
        dphi,
        j=0,
        theta=1.0,
        dtheta=None,
        closed_form_tail=None,
        phi_scale=1.0,
    ):
        if not 0 <= j < d:
            raise ValueError(f"j={j} outside 0..{d - 1}")
        self.d = d
        self.j = j
        self._phi = phi
        self._dphi = dphi
        self._dtheta = dtheta
        self.phi_scale = float(phi_scale)
        if callable(theta):
            self.theta_constant = None
            self._theta = theta
        else:
            self.theta_constant = float(theta)
            self._theta = None
        if closed_form_tail is None and self.theta_constant is not None:
            closed_form_tail = self._constant_tail
        self.closed_form_tail = closed_form_tail

    # -- evaluation -------------------------------------------------------

    def phi(self, x):
        return self._phi(np.asarray(x, dtype=float))

    def dphi(self, x, k):
        return self._dphi(np.asarray(x, dtype=float), k)

    def dphi_j(self, x):
        return self.dphi(x, self.j)

    def theta(self, x):
        x = np.asarray(x, dtype=float)
        if self.theta_constant is not None:
            return np.full(x.shape[:-1], self.theta_constant)
        return self._theta(x)

    def dtheta(self, x, k):
        x = np.asarray(x, dtype=float)
        if self.theta_constant is not None:
            return np.zeros(x.shape[:-1])
        if self._dtheta is None:
            h = 1e-6 * np.maximum(1.0, np.abs(x[..., k]))
            xp, xm = x.copy(), x.copy()
            xp[..., k] += h
            xm[..., k] -= h
            return (self._theta(xp) - self._theta(xm)) / (2 * h)
        return self._dtheta(x, k)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self.phi(x) > 0.0, self.theta(x), 0.0)

    @property
    def root_tol(self) -> float:
        return 1e-12 * (1.0 + self.phi_scale)

    def _constant_tail(self, root, y=None):
        return self.theta_constant * special.ndtr(-np.asarray(root, dtype=float))

    # -- coordinates ------------------------------------------------------

    def join(self, xj, y) -> np.ndarray:
        """Full points from preintegration coordinates ``xj`` (...) and the rest ``y`` (..., d-1)."""
        y = np.asarray(y, dtype=float)
        xj = np.broadcast_to(np.asarray(xj, dtype=float), y.shape[:-1])
        return np.insert(y, self.j, xj, axis=-1) if y.shape[-1] else xj[..., None].copy()

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., self.j], np.delete(x, self.j, axis=-1)

    # -- roots ------------------------------------------------------------

    def roots(self, y):
        """Batched jump locations for rows of ``y`` (n, d-1).

        Returns ``(root, status, iterations, residual)``; status codes are
        those of :mod:`preintqmc._kernels`.
        """
        y = as_rows(y, self.d - 1)

        def evaluate(xj, rows):
            x = self.join(xj, y[rows])
            return self.phi(x), self.dphi_j(x)

        return _kernels.newton_bracketed_numpy(evaluate, y.shape[0], self.root_tol)

    # -- probes -----------------------------------------------------------

    def check_monotone(self, n=1000, box=6.0, seed=0):
        """Randomised guard for ``dphi_j > 0`` and growth as ``x_j`` increases.

        Raises
        ------
        MonotonicityError
            Naming the first violating sample.
        """
        rng = np.random.default_rng(seed)
        x = rng.uniform(-box, box, size=(n, self.d))
        slope = self.dphi_j(x)
        bad = np.flatnonzero(~(slope > 0))
        if bad.size:
            i = bad[0]
            raise MonotonicityError(
                f"d phi / d x_{self.j} = {slope[i]:.3g} <= 0 at sample {i}: x = {x[i]!r}"
            )
        _, y = self.split(x)
        ladder = [self.phi(self.join(np.full(n, t), y)) for t in (0.0, 10.0, 20.0, 40.0)]
        grows = np.all(np.diff(np.stack(ladder), axis=0) > 0, axis=0)
        bad = np.flatnonzero(~grows)
        if bad.size:
            i = bad[0]
            raise MonotonicityError(
                f"phi does not grow along x_{self.j} at sample {i}: y = {y[i]!r}"
            )


class DigitalAsian(JumpIntegrand):
    """Digital Asian call ``exp(-rT) ind(mean_l S(t_l) > K)`` with paths ``w = A x``."""

    def __init__(self, params: MarketParams, fact: PathFactorization, j=0):
        if fact.grid is not None and not np.isclose(fact.grid.T, params.T):
            raise ValueError(f"factorization horizon {fact.grid.T} differs from T={params.T}")
        self.params = params
        self.fact = fact
        self.grid = TimeGrid(fact.d, params.T)
        self._col_j = fact.column(j)
        self._beta = params.sigma * self._col_j
        super().__init__(
            fact.d,
            phi=self._phi_impl,
            dphi=self._dphi_impl,
            j=j,
            theta=params.discount,
            phi_scale=params.K,
        )

    def prices(self, x):
        return asset_path(self.params, self.fact.matvec(x), self.grid)

    def _phi_impl(self, x):
        return self.prices(x).mean(axis=-1) - self.params.K

    def gradient(self, x):
        """All partial derivatives of ``phi``: ``sigma / d * A^T S``."""
        s = self.prices(x)
        return (self.params.sigma / self.d) * self.fact.rmatvec(s)

    def _dphi_impl(self, x, k):
        if k == self.j:
            return (self.params.sigma / self.d) * (self.prices(x) @ self._col_j)
        return self.gradient(x)[..., k]

    def roots(self, y):
        y = as_rows(y, self.d - 1)
        if not (np.all(self._beta >= 0) and np.any(self._beta > 0)):
            return super().roots(y)
        p = self.params
        w0 = self.fact.matvec(self.join(0.0, y))
        coef = (p.S0 / self.d) * np.exp(p.drift * self.grid.times + p.sigma * w0)
        return _kernels.sumexp_roots(coef, self._beta, p.K, self.root_tol)


def make_digital_asian(params: MarketParams, fact: PathFactorization, j=0, probe=True, seed=0):
    """Build the digital Asian integrand and run the monotonicity probe on coordinate ``j``."""
    g = DigitalAsian(params, fact, j)
    if probe:
        g.check_monotone(seed=seed)
    return g


def _as_fact(params, A):
    if isinstance(A, PathFactorization):
        return A
    return PathFactorization("explicit", np.asarray(A).shape[0], None, None, np.asarray(A, float))


def digital_asian_phi(params: MarketParams, A, x):
    """``(1/d) sum_l S(t_l) - K`` for the path ``w = A x``."""
    return DigitalAsian(params, _as_fact(params, A)).phi(x)


def digital_asian_dphi1(params: MarketParams, A, x):
    """Partial derivative of :func:`digital_asian_phi` in the first coordinate."""
    return DigitalAsian(params, _as_fact(params, A)).dphi_j(x)


def digital_asian_exact_1d(params: MarketParams) -> float:
    """Closed-form price for a single monitoring date (d = 1)."""
    root = (np.log(params.K / params.S0) - params.drift * params.T) / (params.sigma * np.sqrt(params.T))
    return params.discount * float(special.ndtr(-root))


# -- integrand with an oscillating zero set ---------------------------------


def _sine_term(x2, m):
    pos = x2 > 0
    safe = np.where(pos, x2, 1.0)
    return np.where(pos, safe**m * np.sin(1.0 / safe), 0.0), pos, safe


def sine_boundary_integrand(m=2) -> JumpIntegrand:
    """``phi = exp(x1) - x2^m sin(1/x2)`` (second term dropped for ``x2 <= 0``), theta = 1.

    The set of ``x2`` with a jump is ``(1/pi, inf)`` together with the
    intervals ``(1/((2k+1)pi), 1/(2k pi))``; elsewhere ``phi > 0``.
    """
    if m < 2:
        raise ValueError("m must be at least 2")

    def phi(x):
        term, _, _ = _sine_term(x[..., 1], m)
        return np.exp(x[..., 0]) - term

    def dphi(x, k):
        if k == 0:
            return np.exp(x[..., 0])
        _, pos, t = _sine_term(x[..., 1], m)
        deriv = m * t ** (m - 1) * np.sin(1.0 / t) - t ** (m - 2) * np.cos(1.0 / t)
        return np.where(pos, -deriv, 0.0)

    return JumpIntegrand(2, phi, dphi, j=0, theta=1.0)


def sine_boundary_root(x2, m=2):
    """Closed-form jump location ``m log(x2) + log(sin(1/x2))``; NaN where there is none."""
    x2 = np.asarray(x2, dtype=float)
    term, pos, t = _sine_term(x2, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = m * np.log(t) + np.log(np.sin(1.0 / t))
    return np.where(pos & (term > 0), psi, np.nan)
