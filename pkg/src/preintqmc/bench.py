"""Convergence experiment for the digital Asian option.

Four estimators are compared:

* ``mc``: plain Monte Carlo average of ``f`` over ``N`` pseudo-random points;
* ``qmc``: the same with scrambled Sobol' points;
* ``pre-mc`` / ``pre-qmc``: average of the preintegrated function ``P_j f``
  over ``N`` points in ``d - 1`` dimensions.

Each (method, N) cell is replicated ``R`` times with independent seeds derived
from a master seed, and the relative RMSE against a reference value is fitted
against ``N`` on a log-log scale.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .brownian import TimeGrid, canonical_method, factorize
from .errors import DomainError, FitError
from .lowdisc import UniformStream, load_direction_numbers, to_gaussian
from .payoff import MarketParams, digital_asian_exact_1d, make_digital_asian
from .preint import preintegrate_batch

METHODS = ("mc", "qmc", "pre-mc", "pre-qmc")
DEFAULT_SIZES = (2**12, 2**14, 2**16)
_REFERENCE_KEY = len(METHODS)
_CHUNK = 2**14


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a convergence run.

    Parameters
    ----------
    market : MarketParams
    d : int
        Number of monitoring dates.
    factorization : str
        ``standard``, ``brownian-bridge`` (alias ``bridge``) or ``pca``.
    sample_sizes : tuple of int
        Powers of two.
    replications : int
        At least 2.
    seed : int
        Master seed; replication seeds are split from it.
    methods : tuple of str
    reference : float, optional
        Fixed reference value. By default ``d = 1`` uses the closed-form price
        and larger ``d`` a preintegrated-QMC run of ``ref_size`` points times
        ``ref_reps`` scrambles, doubled up to ``ref_max`` points until three
        standard errors fall below 1/20 of the smallest RMSE.
    dirnums : str, optional
        Path to a direction-number table.
    """

    market: MarketParams = field(default_factory=MarketParams)
    d: int = 256
    factorization: str = "pca"
    sample_sizes: tuple = DEFAULT_SIZES
    replications: int = 10
    seed: int = 20240601
    methods: tuple = METHODS
    reference: float | None = None
    ref_size: int = 2**20
    ref_reps: int = 16
    ref_max: int = 2**22
    dirnums: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "factorization", canonical_method(self.factorization))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not self.sample_sizes:
            raise ValueError("at least one sample size is needed")
        for n in self.sample_sizes + (self.ref_size, self.ref_max):
            if not _is_power_of_two(n):
                raise ValueError(f"sample size {n} is not a power of two")
        if self.replications < 2 or self.ref_reps < 2:
            raise ValueError("at least 2 replications are needed")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; expected a subset of {METHODS}")


@lru_cache(maxsize=8)
def _integrand(market, d, factorization):
    fact = factorize(TimeGrid(d, market.T), factorization)
    return make_digital_asian(market, fact, j=0)


@lru_cache(maxsize=4)
def _direction_numbers(path):
    return None if path is None else load_direction_numbers(path)


def integrand_for(config: ExperimentConfig):
    """The digital Asian integrand described by ``config`` (cached)."""
    return _integrand(config.market, config.d, config.factorization)


def replication_seed(master: int, method_index: int, n: int, rep: int) -> int:
    """Counter-split seed for one replication of one (method, N) cell."""
    seq = np.random.SeedSequence(master, spawn_key=(method_index, int(n).bit_length() - 1, rep))
    return int(seq.generate_state(1, np.uint64)[0])


def _stream(method, dim, seed, dirnums):
    if method.endswith("qmc"):
        return UniformStream.sobol(dim, seed, "linear-affine", _direction_numbers(dirnums))
    return UniformStream.pseudo_random(dim, seed)


def average(method: str, g, gaussian_points) -> float:
    """Estimator value for given standard normal points.

    ``gaussian_points`` has ``g.d`` columns for ``mc``/``qmc`` and ``g.d - 1``
    for the preintegrated methods.
    """
    return float(np.mean(_values(method, g, np.asarray(gaussian_points, dtype=float))))


def _values(method, g, x):
    if method.startswith("pre-"):
        return preintegrate_batch(g, x, mode="closed_form")
    return g(x)


def _stream_sum(method, g, stream, n):
    total = 0.0
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        x = to_gaussian(stream.next_points(m))
        total += math.fsum(_values(method, g, x))
        done += m
    return total


def estimate(method: str, config: ExperimentConfig, N: int, seed: int) -> float:
    """One replication of ``method`` with ``N`` points.

    The preintegrated methods sample ``x_2, ..., x_d``; the first coordinate
    of the sampler feeds ``x_2``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    g = integrand_for(config)
    dim = g.d - 1 if method.startswith("pre-") else g.d
    stream = _stream(method, dim, seed, config.dirnums)
    return _stream_sum(method, g, stream, N) / N


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    stderr: float
    size: int
    reps: int
    source: str
    accurate: bool = True


def _reference(config: ExperimentConfig, min_rmse: float | None) -> ReferenceValue:
    if config.reference is not None:
        return ReferenceValue(float(config.reference), 0.0, 0, 0, "fixed")
    if config.d == 1:
        return ReferenceValue(digital_asian_exact_1d(config.market), 0.0, 0, 0, "analytic")

    g = integrand_for(config)
    streams = [
        _stream("pre-qmc", g.d - 1, replication_seed(config.seed, _REFERENCE_KEY, config.ref_size, r), config.dirnums)
        for r in range(config.ref_reps)
    ]
    sums = np.zeros(config.ref_reps)
    size, drawn = config.ref_size, 0
    while True:
        # extending each scrambled sequence keeps the points already summed
        for r, stream in enumerate(streams):
            sums[r] += _stream_sum("pre-qmc", g, stream, size - drawn)
        drawn = size
        est = sums / size
        value = float(est.mean())
        stderr = float(est.std(ddof=1) / np.sqrt(config.ref_reps))
        rmse = min_rmse(value) if min_rmse is not None else None
        ok = rmse is None or 3.0 * stderr < rmse / 20.0
        if ok or size >= config.ref_max:
            return ReferenceValue(value, stderr, size, config.ref_reps, "pre-qmc", ok)
        size *= 2


def fit_rate(rmse) -> tuple[float, float]:
    """Least-squares slope of ``log2 RMSE`` against ``log2 N``.

    Parameters
    ----------
    rmse : iterable of (N, value)

    Returns
    -------
    slope, stderr
        ``stderr`` is NaN with exactly two sample sizes.

    Raises
    ------
    FitError
        With fewer than two distinct ``N`` carrying a positive RMSE.
    """
    pts = [(float(n), float(v)) for n, v in rmse if float(v) > 0 and float(n) > 0]
    if len({n for n, _ in pts}) < 2:
        raise FitError("need at least two distinct sample sizes with positive RMSE")
    x = np.log2([n for n, _ in pts])
    y = np.log2([v for _, v in pts])
    fit = stats.linregress(x, y)
    stderr = float(fit.stderr) if len(pts) > 2 else float("nan")
    return float(fit.slope), stderr


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-replication estimates, relative RMSEs and fitted rates of a run."""

    config: ExperimentConfig
    reference: ReferenceValue
    estimates: dict  # (method, N) -> array of R estimates
    rmse: dict  # (method, N) -> relative RMSE
    rates: dict  # method -> (slope, stderr)

    def detail_rows(self):
        v = self.reference.value
        for (method, n), est in self.estimates.items():
            for r, e in enumerate(est):
                yield method, n, r, float(e), abs(e - v), abs(e - v) / abs(v)

    def summary_rows(self):
        for (method, n), value in self.rmse.items():
            yield method, n, value

    def rate_rows(self):
        for method, (slope, stderr) in self.rates.items():
            yield method, slope, stderr

    def to_csv(self, out_dir) -> dict:
        """Write ``detail.csv``, ``summary.csv`` and ``rates.csv``; returns their paths."""
        os.makedirs(out_dir, exist_ok=True)
        files = {
            "detail": (("method", "N", "replication", "estimate", "abs_err", "rel_err"), self.detail_rows()),
            "summary": (("method", "N", "rmse_rel"), self.summary_rows()),
            "rates": (("method", "slope", "stderr"), self.rate_rows()),
        }
        paths = {}
        for name, (header, rows) in files.items():
            path = os.path.join(out_dir, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])
            paths[name] = path
        return paths


def relative_rmse(estimates, reference: float) -> float:
    """``sqrt(mean((est - V)^2)) / |V|``."""
    if not abs(reference) > 1e-14:
        raise DomainError("relative error is undefined for a reference value of 0")
    est = np.asarray(estimates, dtype=float)
    return float(np.sqrt(np.mean((est - reference) ** 2)) / abs(reference))


def run_experiment(config: ExperimentConfig, progress=None) -> ConvergenceReport:
    """Run every (method, N, replication) cell, then fix the reference and fit rates.

    Cells run in the fixed order (method, N, replication), so identical
    configurations give identical reports. ``progress``, if given, is called
    with a short message after each cell.
    """
    estimates = {}
    for mi, method in enumerate(METHODS):
        if method not in config.methods:
            continue
        for n in config.sample_sizes:
            est = np.array(
                [estimate(method, config, n, replication_seed(config.seed, mi, n, r)) for r in range(config.replications)]
            )
            estimates[(method, n)] = est
            if progress is not None:
                progress(f"{method} N={n}: mean {est.mean():.10f}")

    def min_rmse(value):
        return min(relative_rmse(e, value) for e in estimates.values()) * abs(value)

    ref = _reference(config, min_rmse)
    if progress is not None:
        progress(f"reference {ref.value:.12f} +- {ref.stderr:.2e} ({ref.source}, N={ref.size})")
    rmse = {key: relative_rmse(e, ref.value) for key, e in estimates.items()}
    rates = {}
    for method in dict.fromkeys(m for m, _ in estimates):
        pts = [(n, rmse[(method, n)]) for n in config.sample_sizes]
        try:
            rates[method] = fit_rate(pts)
        except FitError:
            rates[method] = (float("nan"), float("nan"))
    return ConvergenceReport(config, ref, estimates, rmse, rates)
