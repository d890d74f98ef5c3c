"""Acceptance criteria, one test each, at the stated tolerances.

Every test logs a PASS/FAIL line that is repeated in the pytest summary.
Criteria 1 and 2 share one full default-configuration run (d = 256, R = 10,
N in {2^12, 2^14, 2^16}, reference from a 16 x 2^20 preintegrated-QMC run),
which takes roughly 15-20 minutes on a single core.
"""
import math
import timeit

import mpmath
import numpy as np
import pytest
from scipy import special

from preintqmc.anova import decompose, variance_report
from preintqmc.bench import DEFAULT_SIZES, ExperimentConfig, run_experiment
from preintqmc.brownian import METHODS as FACTORIZATIONS
from preintqmc.brownian import TimeGrid, eigenpairs_closed_form, factorize, pca_matvec_fast
from preintqmc.checks import boundary_errors, derivative_errors, factorization_residual, root_statistics
from preintqmc.lowdisc import SobolSampler, inverse_normal_cdf
from preintqmc.preint import boundary_decay_probe, find_root

PRICE_1D = math.exp(-0.1) * special.ndtr(0.95)


@pytest.fixture(scope="module")
def default_run():
    return run_experiment(ExperimentConfig())


@pytest.mark.slow
def test_criterion_1_rates(default_run, record_criterion):
    rates = {m: s for m, (s, _) in default_run.rates.items()}
    bands = {
        "mc": (-0.65, -0.35),
        "pre-mc": (-0.65, -0.35),
        "qmc": (-0.85, -0.45),
        "pre-qmc": (-math.inf, -0.85),
    }
    ok = {m: lo <= rates[m] <= hi for m, (lo, hi) in bands.items()}
    ref = default_run.reference
    detail = ", ".join(f"{m} {rates[m]:+.3f}" for m in bands)
    detail += f"; V_ref {ref.value:.10f} +- {ref.stderr:.1e} (N={ref.size}, accurate={ref.accurate})"
    record_criterion(1, "convergence rates", all(ok.values()), detail)
    assert all(ok.values()), detail


@pytest.mark.slow
def test_criterion_2_ordering(default_run, record_criterion):
    n = 2**16
    e = {m: default_run.rmse[(m, n)] for m in ("mc", "qmc", "pre-mc", "pre-qmc")}
    margins = {
        "pre-mc/pre-qmc": e["pre-mc"] / e["pre-qmc"],
        "mc/pre-mc": e["mc"] / e["pre-mc"],
        "qmc/pre-qmc": e["qmc"] / e["pre-qmc"],
    }
    passed = all(v >= 2.0 for v in margins.values())
    detail = ", ".join(f"{k} {v:.1f}x" for k, v in margins.items())
    record_criterion(2, "RMSE ordering at N=2^16", passed, detail)
    assert passed, detail


def test_criterion_3_one_dimensional_exactness(record_criterion):
    cfg = ExperimentConfig(d=1, methods=("pre-mc", "pre-qmc"))
    report = run_experiment(cfg)
    worst = max(np.abs(est - PRICE_1D).max() for est in report.estimates.values())
    passed = worst <= 1e-9 and len(report.estimates) == 2 * len(DEFAULT_SIZES)
    record_criterion(3, "d=1 preintegrated estimates are exact", passed, f"max |est - price| {worst:.1e}")
    assert passed


def test_criterion_4_anova(asian, record_criterion):
    rep = variance_report(decompose(asian(3)))
    gap = rep.identity_gap
    strict = rep.projected[0] < rep.total

    def poly(x):
        return x[..., 0] ** 2 * x[..., 1] + 0.5 * x[..., 0] + np.cos(x[..., 1]) + 1

    dec = decompose(poly, 2, n=24)
    x, w = np.polynomial.hermite_e.hermegauss(24)
    w = w / np.sqrt(2 * np.pi)
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    wts = np.outer(w, w).ravel()
    terms = [dec.term(u)(pts) for u in dec.subsets]
    ortho = max(abs(wts @ (terms[a] * terms[b])) for a in range(4) for b in range(a + 1, 4))
    passed = gap <= 1e-4 and strict and ortho <= 1e-8
    detail = (
        f"identity gap {gap:.1e}, var(P_1 f) {rep.projected[0]:.6f} < var(f) {rep.total:.6f}, "
        f"max |<g_u, g_v>| {ortho:.1e}"
    )
    record_criterion(4, "ANOVA identities", passed, detail)
    assert passed, detail


def test_criterion_5_factorizations(record_criterion):
    resid = max(factorization_residual(d, m) for m in FACTORIZATIONS for d in (1, 2, 8, 64, 256))
    fact = factorize(TimeGrid(256), "pca")
    lam, u = eigenpairs_closed_form(TimeGrid(256))
    x = np.random.default_rng(0).standard_normal((100, 256))
    want = x @ (u * np.sqrt(lam)).T
    matvec = np.abs(pca_matvec_fast(fact, x) - want).max() / np.abs(want).max()

    def best(d):
        f = factorize(TimeGrid(d), "pca")
        y = np.random.default_rng(1).standard_normal((64, d))
        pca_matvec_fast(f, y)
        return min(timeit.repeat(lambda: pca_matvec_fast(f, y), number=5, repeat=9))

    ratio = best(4096) / best(1024)
    passed = resid <= 1e-9 and matvec <= 1e-10 and ratio <= 8.0
    detail = f"max |AA^T - C| {resid:.1e}, FST vs dense {matvec:.1e}, time(4096)/time(1024) {ratio:.2f}"
    record_criterion(5, "factorizations", passed, detail)
    assert passed, detail


def test_criterion_6_root_finder(asian, record_criterion):
    root = find_root(asian(1), np.empty(0)).root
    resid, iters = root_statistics(256, n=10_000)
    passed = abs(root + 0.95) <= 1e-10 and resid <= 1e-10 and iters <= 20
    detail = f"d=1 root {root:.12f}, d=256 max residual {resid:.1e}, max iterations {iters}"
    record_criterion(6, "root finder", passed, detail)
    assert passed, detail


def test_criterion_7_derivatives(record_criterion):
    errs = {d: derivative_errors(d, n=100) for d in (2, 4, 8)}
    worst = max(max(e) for e in errs.values())
    passed = worst <= 1e-6
    detail = ", ".join(f"d={d} psi {a:.1e} D_k {b:.1e}" for d, (a, b) in errs.items())
    record_criterion(7, "derivative probes", passed, detail)
    assert passed, detail


def test_criterion_8_pathological_boundary(record_criterion):
    err = boundary_errors(n=1000)
    probe = boundary_decay_probe([1 / np.pi + 10.0**-q for q in range(1, 9)])
    psi = np.array([p.psi for p in probe])
    dk = np.abs([p.dk for p in probe])
    decreasing = bool(np.all(np.diff(psi) < 0) and np.all(np.diff(dk[1:]) < 0))
    passed = err <= 1e-9 and psi[-1] < -15 and dk[-1] < 1e-6 and decreasing
    detail = f"max |psi - closed form| {err:.1e}, psi {psi[-1]:.2f}, |D_2 P_1 f| {dk[-1]:.1e} at x2 = 1/pi + 1e-8"
    record_criterion(8, "oscillating boundary", passed, detail)
    assert passed, detail


def _radical_inverse(i):
    out, scale = 0.0, 0.5
    while i:
        out += (i & 1) * scale
        i >>= 1
        scale /= 2
    return out


def test_criterion_9_sampler(record_criterion):
    first = SobolSampler(1).points(0, 2**12)[:, 0]
    radical = bool(np.array_equal(first, [_radical_inverse(i) for i in range(2**12)]))

    cells = np.floor(SobolSampler(16, "linear-affine", seed=7).points(0, 2**10) * 2**10).astype(int)
    stratified = all(np.array_equal(np.sort(cells[:, k]), np.arange(2**10)) for k in range(16))

    # 10^5 points: a uniform grid plus geometric grids into both tails
    tail = np.geomspace(1e-10, 1e-2, 20_000)
    u = np.concatenate([np.linspace(1e-10, 1 - 1e-10, 60_000), tail, 1 - tail])
    mpmath.mp.dps = 30
    want = np.array([float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(v) - 1)) for v in u])
    ppf_err = float(np.abs(inverse_normal_cdf(u) - want).max())

    passed = radical and stratified and ppf_err <= 1e-9
    detail = f"radical inverse {radical}, stratification {stratified}, inverse normal max error {ppf_err:.1e}"
    record_criterion(9, "sampler properties", passed, detail)
    assert passed, detail
