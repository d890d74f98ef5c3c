"""Numerical invariant checks shared by the ``check`` subcommand and the test suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brownian import METHODS as FACTORIZATIONS
from .brownian import TimeGrid, build_covariance, factorize
from .payoff import MarketParams, make_digital_asian, sine_boundary_integrand, sine_boundary_root
from .preint import boundary_decay_probe, dk_preintegrated, find_roots, preintegrate, psi_gradient

FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def factorization_residual(d: int, method: str) -> float:
    """``max |A A^T - C|`` for the dense factor of the uniform-grid covariance."""
    grid = TimeGrid(d)
    a = factorize(grid, method).matrix
    return float(np.abs(a @ a.T - build_covariance(grid).matrix).max())


def root_statistics(d: int, n: int = 10_000, seed: int = 0, market: MarketParams | None = None):
    """Largest residual ``|phi(psi, y)|`` and iteration count over ``n`` random ``y``."""
    market = market or MarketParams()
    g = make_digital_asian(market, factorize(TimeGrid(d, market.T), "pca"))
    y = np.random.default_rng(seed).standard_normal((n, d - 1))
    _, _, iters, resid = find_roots(g, y)
    return float(resid.max()), int(iters.max())


def central_difference(func, y, k, h=FD_STEP):
    yp, ym = np.array(y, dtype=float), np.array(y, dtype=float)
    yp[k] += h
    ym[k] -= h
    return (func(yp) - func(ym)) / (2 * h)


def derivative_errors(d: int, n: int = 100, seed: int = 0, market: MarketParams | None = None):
    """Worst relative gaps between analytic derivatives and central differences.

    Returns ``(psi_error, preintegrated_error)`` over ``n`` random ``y`` and
    every coordinate ``k != j`` (``j = 0``).
    """
    market = market or MarketParams()
    g = make_digital_asian(market, factorize(TimeGrid(d, market.T), "pca"))
    rng = np.random.default_rng(seed)
    ys = rng.standard_normal((n, d - 1))
    psi_err = pre_err = 0.0

    def root_of(y):
        return find_roots(g, y)[0][0]

    for y in ys:
        for k in range(1, d):
            i = k - 1  # position of x_k inside y
            fd_psi = central_difference(root_of, y, i)
            fd_pre = central_difference(lambda yy: preintegrate(g, yy), y, i)
            psi_err = max(psi_err, _rel(psi_gradient(g, y, k), fd_psi))
            pre_err = max(pre_err, _rel(dk_preintegrated(g, y, k), fd_pre))
    return psi_err, pre_err


def _rel(a, b):
    return abs(a - b) / max(abs(b), abs(a), 1e-300)


def boundary_errors(n: int = 1000, m: int = 2, seed: int = 0) -> float:
    """Worst ``|psi - psi_closed|`` over ``n`` points of the jump set with ``x2 > 1/pi``."""
    g = sine_boundary_integrand(m)
    x2 = 1.0 / np.pi + np.random.default_rng(seed).uniform(1e-6, 3.0, n)
    root, status, _, _ = find_roots(g, x2[:, None])
    return float(np.max(np.abs(root - sine_boundary_root(x2, m))))


def run_checks(d: int = 256, market: MarketParams | None = None):
    """The full invariant suite; returns a list of :class:`CheckResult`."""
    market = market or MarketParams()
    out = []
    for method in FACTORIZATIONS:
        res = factorization_residual(d, method)
        out.append(CheckResult(f"factorization residual {method} d={d}", res <= 1e-9, res, 1e-9))
    resid, iters = root_statistics(d, market=market)
    out.append(CheckResult(f"root residual d={d}", resid <= 1e-10, resid, 1e-10))
    out.append(CheckResult(f"root iterations d={d}", iters <= 20, iters, 20))
    for dd in (2, 4, 8):
        psi_err, pre_err = derivative_errors(dd, n=20, market=market)
        out.append(CheckResult(f"psi gradient vs finite differences d={dd}", psi_err <= 1e-6, psi_err, 1e-6))
        out.append(CheckResult(f"D_k P_j f vs finite differences d={dd}", pre_err <= 1e-6, pre_err, 1e-6))
    err = boundary_errors()
    out.append(CheckResult("oscillating boundary: psi vs closed form", err <= 1e-9, err, 1e-9))
    probe = boundary_decay_probe([1.0 / np.pi + 10.0**-q for q in range(1, 9)])
    out.append(CheckResult("oscillating boundary: psi at x2 = 1/pi + 1e-8", probe[-1].psi < -15, probe[-1].psi, -15))
    out.append(
        CheckResult("oscillating boundary: |D_2 P_1 f| at x2 = 1/pi + 1e-8", abs(probe[-1].dk) < 1e-6, abs(probe[-1].dk), 1e-6)
    )
    return out
