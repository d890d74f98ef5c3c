"""Integrating out the monotone coordinate of a jump integrand.

For ``f = theta * ind(phi)`` with ``phi`` increasing in ``x_j``, the
conditional integral over ``x_j`` is ``int_{psi(y)}^inf theta(x_j, y) rho(x_j) dx_j``
where ``psi(y)`` is the jump location. The result is a smooth function of the
remaining ``d - 1`` coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from ._kernels import BRACKET_CAP, NO_ROOT, NOT_CONVERGED, ROOT, ROOT_ABOVE_CAP
from .errors import ContractError, ConvergenceError, DomainError
from .payoff import JumpIntegrand, as_rows, sine_boundary_integrand, sine_boundary_root

STATUS_NAMES = {ROOT: "root", NO_ROOT: "no_root", ROOT_ABOVE_CAP: "root_above_cap"}
MODES = ("auto", "closed_form", "quadrature")
QUAD_NODES = 64
QUAD_PANELS = 8


@dataclass(frozen=True)
class RootResult:
    """Outcome of a jump-location search at one point ``y``.

    ``status`` is ``"root"``, ``"no_root"`` (``phi > 0`` for every ``x_j``) or
    ``"root_above_cap"`` (``phi <= 0`` up to ``x_j = 40``; the tail mass is
    negligible).
    """

    status: str
    root: float
    iterations: int
    residual: float

    @property
    def has_root(self) -> bool:
        return self.status == "root"


def find_roots(g: JumpIntegrand, y):
    """Batched jump locations ``(root, status, iterations, residual)`` for rows of ``y``.

    Raises
    ------
    ConvergenceError
        If any row exceeds the iteration cap.
    """
    rows = as_rows(y, g.d - 1)
    root, status, iters, resid = g.roots(rows)
    bad = np.flatnonzero(status == NOT_CONVERGED)
    if bad.size:
        i = bad[0]
        raise ConvergenceError(
            f"Newton did not converge in {_kernels.MAX_ITER} iterations at row {i}",
            last_iterate=float(root[i]),
        )
    return root, status, iters, resid


def find_root(g: JumpIntegrand, y) -> RootResult:
    """Jump location of ``x_j -> phi(x_j, y)`` by bracketed Newton started at 0."""
    rows = as_rows(y, g.d - 1)[:1]
    root, status, iters, resid = find_roots(g, rows)
    return RootResult(STATUS_NAMES[int(status[0])], float(root[0]), int(iters[0]), float(resid[0]))


@lru_cache(maxsize=8)
def _panel_rule(n_nodes, panels, width):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    h = width / panels
    left = h * np.arange(panels)
    nodes = (left[:, None] + 0.5 * h * (x + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, panels)
    return nodes, weights


def _rho(x):
    return np.exp(-0.5 * x * x) / _kernels.SQRT2PI


def _tail_quadrature(g, lower, y, integrand, n_nodes, panels):
    """``int_lower^{lower+40} integrand(x_j, y) rho(x_j) dx_j`` per row, by panel Gauss-Legendre."""
    nodes, weights = _panel_rule(n_nodes, panels, BRACKET_CAP)
    out = np.empty(lower.shape[0])
    chunk = max(1, 2**18 // (nodes.size * max(g.d, 1)))
    for s in range(0, lower.shape[0], chunk):
        lo = lower[s:s + chunk]
        xj = lo[:, None] + nodes[None, :]
        yy = np.broadcast_to(y[s:s + chunk, None, :], xj.shape + (y.shape[1],))
        vals = integrand(g.join(xj, yy))
        out[s:s + chunk] = (vals * _rho(xj)) @ weights
    return out


def _resolve_mode(g, mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "auto":
        return "closed_form" if g.closed_form_tail is not None else "quadrature"
    if mode == "closed_form" and g.closed_form_tail is None:
        raise ContractError("integrand has no closed-form conditional integral")
    return mode


def preintegrate_batch(g: JumpIntegrand, y, mode="auto", n_nodes=QUAD_NODES, panels=QUAD_PANELS):
    """``(P_j f)(y)`` for each row of ``y`` (n, d-1)."""
    mode = _resolve_mode(g, mode)
    y = as_rows(y, g.d - 1)
    root, status, _, _ = find_roots(g, y)
    if mode == "closed_form":
        lower = np.where(status == ROOT, root, np.where(status == NO_ROOT, -np.inf, np.inf))
        return np.asarray(g.closed_form_tail(lower, y), dtype=float)

    out = np.zeros(y.shape[0])
    hit = status == ROOT
    if hit.any():
        out[hit] = _tail_quadrature(g, root[hit], y[hit], g.theta, n_nodes, panels)
    full = status == NO_ROOT
    if full.any():
        lo = np.full(int(full.sum()), -BRACKET_CAP)
        out[full] = _tail_quadrature(g, lo, y[full], g.theta, n_nodes, panels) + _tail_quadrature(
            g, lo + BRACKET_CAP, y[full], g.theta, n_nodes, panels
        )
    return out


def preintegrate(g: JumpIntegrand, y, mode="auto", n_nodes=QUAD_NODES, panels=QUAD_PANELS):
    """``(P_j f)(y) = int_{psi(y)}^inf theta(x_j, y) rho(x_j) dx_j`` at a single point ``y``.

    ``mode="closed_form"`` uses the integrand's closed-form tail;
    ``"quadrature"`` integrates over ``[psi, psi + 40]`` with ``panels`` Gauss-Legendre
    panels of ``n_nodes`` nodes each. If ``phi > 0`` everywhere the whole line
    is integrated.
    """
    return float(preintegrate_batch(g, as_rows(y, g.d - 1)[:1], mode, n_nodes, panels)[0])


class PreintegratedFunction:
    """``y -> (P_j f)(y)`` as a callable on (..., d-1) arrays."""

    def __init__(self, g: JumpIntegrand, mode="auto", n_nodes=QUAD_NODES, panels=QUAD_PANELS):
        self.g = g
        self.mode = _resolve_mode(g, mode)
        self.n_nodes = n_nodes
        self.panels = panels

    @property
    def d(self):
        return self.g.d - 1

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        vals = preintegrate_batch(self.g, as_rows(y, self.d), self.mode, self.n_nodes, self.panels)
        return vals.reshape(shape)


def _root_point(g, y):
    y = as_rows(y, g.d - 1)[0]
    res = find_root(g, y)
    return res, (g.join(res.root, y) if res.has_root else None)


def psi_gradient(g: JumpIntegrand, y, k: int) -> float:
    """``d psi / d x_k = -(D_k phi) / (D_j phi)`` at ``(psi(y), y)``.

    ``k`` indexes the full coordinate vector and must differ from ``g.j``.
    """
    if k == g.j or not 0 <= k < g.d:
        raise ValueError(f"k must be a coordinate other than j={g.j}")
    res, x = _root_point(g, y)
    if x is None:
        raise DomainError(f"no jump at y={np.asarray(y)!r} (status {res.status})")
    return float(-g.dphi(x, k) / g.dphi_j(x))


def dk_preintegrated(g: JumpIntegrand, y, k: int, n_nodes=QUAD_NODES, panels=QUAD_PANELS) -> float:
    """Derivative of ``P_j f`` in coordinate ``k``.

    ``int_psi^inf D_k theta rho dx_j + theta(psi, y) (D_k phi / D_j phi)(psi, y) rho(psi)``;
    the boundary term vanishes where there is no jump.
    """
    if k == g.j or not 0 <= k < g.d:
        raise ValueError(f"k must be a coordinate other than j={g.j}")
    y = as_rows(y, g.d - 1)[:1]
    res, x = _root_point(g, y)

    def dtheta(pts):
        return g.dtheta(pts, k)

    interior = 0.0
    if g.theta_constant is None:
        if res.has_root:
            interior = _tail_quadrature(g, np.array([res.root]), y, dtheta, n_nodes, panels)[0]
        elif res.status == "no_root":
            lo = np.array([-BRACKET_CAP])
            interior = (
                _tail_quadrature(g, lo, y, dtheta, n_nodes, panels)[0]
                + _tail_quadrature(g, lo + BRACKET_CAP, y, dtheta, n_nodes, panels)[0]
            )
    if x is None:
        return float(interior)
    boundary = g.theta(x) * g.dphi(x, k) / g.dphi_j(x) * _rho(res.root)
    return float(interior + boundary)


@dataclass(frozen=True)
class BoundaryProbe:
    x2: float
    status: str
    psi: float
    psi_closed_form: float
    dk: float


def boundary_decay_probe(x2_path, m=2, g=None):
    """Jump location and ``D_2 P_1 f`` along a path of ``x2`` values.

    Uses :func:`preintqmc.payoff.sine_boundary_integrand` unless ``g`` is given;
    approaching the edge of the jump set, ``psi -> -inf`` and the derivative
    tends to 0.
    """
    g = sine_boundary_integrand(m) if g is None else g
    out = []
    for x2 in np.asarray(x2_path, dtype=float).ravel():
        res = find_root(g, [x2])
        closed = float(sine_boundary_root(x2, m))
        dk = dk_preintegrated(g, [x2], 1)
        psi = res.root if res.has_root else np.nan
        out.append(BoundaryProbe(float(x2), res.status, psi, closed, dk))
    return out
