"""Hot loops: Sobol' digit generation, inverse normal CDF, batched root finding.

Every kernel has a numba body and a vectorised numpy body with identical
semantics; the public wrappers dispatch on ``_accel.USE_NUMBA``.
"""
import math

import numpy as np
from scipy import special

from . import _accel
from ._accel import njit, prange

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
TWO_M32 = 2.0**-32
ZERO_CLAMP = 2.0**-33

# root status codes
ROOT = 0
NO_ROOT = 1  # phi > 0 on the whole axis (down to -BRACKET_CAP)
ROOT_ABOVE_CAP = 2  # phi <= 0 up to +BRACKET_CAP, the remaining mass is negligible
NOT_CONVERGED = 3

BRACKET_CAP = 40.0
MAX_ITER = 50
STEP_TOL = 1e-10

# Moro's refinement of the Beasley-Springer rational approximation
_MORO_A = np.array([2.50662823884, -18.61500062529, 41.39119773534, -25.44106049637])
_MORO_B = np.array([-8.47351093090, 23.08336743743, -21.06224101826, 3.13082909833])
_MORO_C = np.array(
    [
        0.3374754822726147,
        0.9761690190917186,
        0.1607979714918209,
        0.0276438810333863,
        0.0038405729373609,
        0.0003951896511919,
        0.0000321767881768,
        0.0000002888167364,
        0.0000003960315187,
    ]
)


# --------------------------------------------------------------------------
# inverse normal CDF
# --------------------------------------------------------------------------


@njit(cache=True)
def _moro_scalar(u):
    a, b, c = _MORO_A, _MORO_B, _MORO_C
    y = u - 0.5
    if abs(y) < 0.42:
        r = y * y
        num = y * (((a[3] * r + a[2]) * r + a[1]) * r + a[0])
        den = (((b[3] * r + b[2]) * r + b[1]) * r + b[0]) * r + 1.0
        return num / den
    r = u if y < 0.0 else 1.0 - u
    s = math.log(-math.log(r))
    x = c[8]
    for k in range(7, -1, -1):
        x = c[k] + s * x
    return -x if y < 0.0 else x


@njit(cache=True)
def _norm_ppf_scalar(u):
    # work on the lower half, where p and Phi(x) are both represented
    # with full relative precision; 1 - u is exact for u >= 0.5
    p = u if u <= 0.5 else 1.0 - u
    x = _moro_scalar(p)
    dens = math.exp(-0.5 * x * x) / SQRT2PI
    if dens > 0.0:
        x -= (0.5 * math.erfc(-x / SQRT2) - p) / dens
    return x if u <= 0.5 else -x


@njit(cache=True, parallel=True)
def _norm_ppf_numba(u, out):
    for i in prange(u.size):
        out[i] = _norm_ppf_scalar(u[i])


def _moro_numpy(u):
    a, b, c = _MORO_A, _MORO_B, _MORO_C
    y = u - 0.5
    central = np.abs(y) < 0.42
    r = y * y
    num = y * (((a[3] * r + a[2]) * r + a[1]) * r + a[0])
    den = (((b[3] * r + b[2]) * r + b[1]) * r + b[0]) * r + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(y < 0.0, u, 1.0 - u)
        s = np.log(-np.log(np.where(central, 0.25, t)))
    tail = np.polynomial.polynomial.polyval(s, c)
    tail = np.where(y < 0.0, -tail, tail)
    return np.where(central, num / den, tail)


def _norm_ppf_numpy(u):
    lower = u <= 0.5
    p = np.where(lower, u, 1.0 - u)
    x = _moro_numpy(p)
    dens = np.exp(-0.5 * x * x) / SQRT2PI
    err = 0.5 * special.erfc(-x / SQRT2) - p
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(dens > 0.0, x - err / dens, x)
    return np.where(lower, x, -x)


def norm_ppf(u):
    """Inverse standard normal CDF of an array already known to lie in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if _accel.USE_NUMBA:
        flat = np.ascontiguousarray(u).reshape(-1)
        out = np.empty_like(flat)
        _norm_ppf_numba(flat, out)
        return out.reshape(u.shape)
    return _norm_ppf_numpy(u)


# --------------------------------------------------------------------------
# Sobol' points in natural (binary counter) order
# --------------------------------------------------------------------------

_SOBOL_BLOCK = 1024


@njit(cache=True, parallel=True)
def _sobol_numba(v, prefix, shift, start, n, clamp, out):
    s = v.shape[0]
    nblocks = (n + _SOBOL_BLOCK - 1) // _SOBOL_BLOCK
    for blk in prange(nblocks):
        lo = blk * _SOBOL_BLOCK
        hi = min(n, lo + _SOBOL_BLOCK)
        x = np.zeros(s, dtype=np.uint32)
        idx0 = start + lo
        for bit in range(32):
            if (idx0 >> bit) & 1:
                for k in range(s):
                    x[k] ^= v[k, bit]
        for i in range(lo, hi):
            if i > lo:
                idx = start + i
                c = 0
                while ((idx >> c) & 1) == 0:
                    c += 1
                for k in range(s):
                    x[k] ^= prefix[k, c]
            for k in range(s):
                y = x[k] ^ shift[k]
                if y == 0 and clamp:
                    out[i, k] = ZERO_CLAMP
                else:
                    out[i, k] = y * TWO_M32


def _sobol_numpy(v, shift, start, n, clamp):
    s = v.shape[0]
    idx = np.arange(start, start + n, dtype=np.uint64)
    ints = np.zeros((n, s), dtype=np.uint32)
    for bit in range(32):
        mask = ((idx >> np.uint64(bit)) & np.uint64(1)).astype(bool)
        if mask.any():
            ints[mask] ^= v[:, bit]
    ints ^= shift
    out = ints * TWO_M32
    if clamp:
        out[ints == 0] = ZERO_CLAMP
    return out


def sobol_block(v, shift, start, n, clamp):
    """Points ``start .. start+n-1`` as floats, ``v`` holding (s, 32) direction ints."""
    v = np.ascontiguousarray(v, dtype=np.uint32)
    shift = np.ascontiguousarray(shift, dtype=np.uint32)
    s = v.shape[0]
    if n == 0 or s == 0:
        return np.zeros((n, s))
    if _accel.USE_NUMBA:
        prefix = np.bitwise_xor.accumulate(v, axis=1)
        out = np.empty((n, s))
        _sobol_numba(v, prefix, shift, np.int64(start), n, clamp, out)
        return out
    return _sobol_numpy(v, shift, start, n, clamp)


# --------------------------------------------------------------------------
# safeguarded Newton for  sum_l coef_l exp(beta_l x) - level = 0
# --------------------------------------------------------------------------


@njit(cache=True)
def _sumexp_eval(coef, beta, level, x):
    f = -level
    fp = 0.0
    for l in range(coef.size):
        e = coef[l] * math.exp(beta[l] * x)
        f += e
        fp += e * beta[l]
    return f, fp


@njit(cache=True)
def _sumexp_root_one(coef, beta, level, ftol):
    lo = -1.0
    hi = 1.0
    f_hi, _ = _sumexp_eval(coef, beta, level, hi)
    while f_hi <= 0.0:
        if hi >= BRACKET_CAP:
            return BRACKET_CAP, ROOT_ABOVE_CAP, 0, f_hi
        hi = min(2.0 * hi, BRACKET_CAP)
        f_hi, _ = _sumexp_eval(coef, beta, level, hi)
    f_lo, _ = _sumexp_eval(coef, beta, level, lo)
    while f_lo > 0.0:
        if lo <= -BRACKET_CAP:
            return -BRACKET_CAP, NO_ROOT, 0, f_lo
        lo = max(2.0 * lo, -BRACKET_CAP)
        f_lo, _ = _sumexp_eval(coef, beta, level, lo)

    x = 0.0
    step = np.inf
    f = 0.0
    for it in range(1, MAX_ITER + 1):
        f, fp = _sumexp_eval(coef, beta, level, x)
        if f == 0.0:
            return x, ROOT, it, f
        if f > 0.0:
            hi = x
        else:
            lo = x
        if abs(f) <= ftol and abs(step) <= STEP_TOL * (1.0 + abs(x)):
            return x, ROOT, it, f
        xn = x - f / fp if fp > 0.0 else 0.5 * (lo + hi)
        # closed bracket: a sub-ulp update may land exactly on an endpoint
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        step = xn - x
        x = xn
    return x, NOT_CONVERGED, MAX_ITER, f


@njit(cache=True, parallel=True)
def _sumexp_roots_numba(coef, beta, level, ftol, root, status, iters, resid):
    for i in prange(coef.shape[0]):
        r, st, it, f = _sumexp_root_one(coef[i], beta, level, ftol)
        root[i] = r
        status[i] = st
        iters[i] = it
        resid[i] = f


def newton_bracketed_numpy(evaluate, n, ftol):
    """Vectorised safeguarded Newton over ``n`` independent increasing functions.

    ``evaluate(x, rows)`` returns ``(f, df)`` for the functions ``rows`` at
    abscissae ``x``. Returns ``(root, status, iterations, residual)``.
    """
    ftol = np.broadcast_to(np.asarray(ftol, dtype=float), (n,))
    root = np.zeros(n)
    status = np.full(n, ROOT, dtype=np.int64)
    iters = np.zeros(n, dtype=np.int64)
    resid = np.zeros(n)
    lo = np.full(n, -1.0)
    hi = np.full(n, 1.0)
    rows = np.arange(n)

    active = rows
    while active.size:
        f, _ = evaluate(hi[active], active)
        grow = f <= 0.0
        capped = grow & (hi[active] >= BRACKET_CAP)
        status[active[capped]] = ROOT_ABOVE_CAP
        root[active[capped]] = BRACKET_CAP
        resid[active[capped]] = f[capped]
        active = active[grow & ~capped]
        hi[active] = np.minimum(2.0 * hi[active], BRACKET_CAP)

    active = rows[status == ROOT]
    while active.size:
        f, _ = evaluate(lo[active], active)
        grow = f > 0.0
        capped = grow & (lo[active] <= -BRACKET_CAP)
        status[active[capped]] = NO_ROOT
        root[active[capped]] = -BRACKET_CAP
        resid[active[capped]] = f[capped]
        active = active[grow & ~capped]
        lo[active] = np.maximum(2.0 * lo[active], -BRACKET_CAP)

    active = rows[status == ROOT]
    x = np.zeros(n)
    step = np.full(n, np.inf)
    for it in range(1, MAX_ITER + 1):
        if not active.size:
            break
        xa = x[active]
        f, fp = evaluate(xa, active)
        iters[active] = it
        resid[active] = f
        hi[active] = np.where(f > 0.0, xa, hi[active])
        lo[active] = np.where(f < 0.0, xa, lo[active])
        done = (f == 0.0) | (
            (np.abs(f) <= ftol[active]) & (np.abs(step[active]) <= STEP_TOL * (1.0 + np.abs(xa)))
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = np.where(fp > 0.0, xa - f / fp, np.nan)
        mid = 0.5 * (lo[active] + hi[active])
        xn = np.where((xn >= lo[active]) & (xn <= hi[active]), xn, mid)
        keep = ~done
        step[active[keep]] = xn[keep] - xa[keep]
        x[active[keep]] = xn[keep]
        active = active[keep]
    status[active] = NOT_CONVERGED
    root[status == ROOT] = x[status == ROOT]
    root[active] = x[active]
    return root, status, iters, resid


def sumexp_roots(coef, beta, level, ftol):
    """Roots in x of ``sum_l coef[i, l] * exp(beta[l] * x) = level`` per row ``i``.

    ``coef`` must be positive and ``beta`` nonnegative with at least one
    positive entry, so every row is convex and increasing in ``x``.
    """
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    n = coef.shape[0]
    if _accel.USE_NUMBA:
        root = np.empty(n)
        status = np.empty(n, dtype=np.int64)
        iters = np.empty(n, dtype=np.int64)
        resid = np.empty(n)
        _sumexp_roots_numba(coef, beta, float(level), float(ftol), root, status, iters, resid)
        return root, status, iters, resid

    def evaluate(x, rows):
        e = coef[rows] * np.exp(np.outer(x, beta))
        return e.sum(axis=1) - level, e @ beta

    return newton_bracketed_numpy(evaluate, n, ftol)
