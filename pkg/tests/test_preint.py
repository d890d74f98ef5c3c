import numpy as np
import pytest
from scipy import integrate, special

from preintqmc import _kernels
from preintqmc.checks import central_difference, derivative_errors
from preintqmc.errors import ContractError, ConvergenceError, DomainError
from preintqmc.payoff import JumpIntegrand, as_rows, sine_boundary_integrand, sine_boundary_root
from preintqmc.preint import (
    PreintegratedFunction,
    boundary_decay_probe,
    dk_preintegrated,
    find_root,
    find_roots,
    preintegrate,
    preintegrate_batch,
    psi_gradient,
)


def linear(weights, theta=1.0):
    w = np.asarray(weights, dtype=float)
    return JumpIntegrand(
        w.size,
        lambda x: x @ w,
        lambda x, k: np.full(np.shape(x)[:-1], w[k]),
        theta=theta,
    )


def test_digital_asian_d1_root(asian):
    res = find_root(asian(1), np.empty(0))
    assert res.status == "root" and res.has_root
    assert abs(res.root + 0.95) <= 1e-10


def test_identity_root():
    res = find_root(linear([1.0]), [])
    assert res.root == 0.0 and res.residual == 0.0


def test_root_statuses():
    always_positive = JumpIntegrand(1, lambda x: np.exp(x[..., 0]) + 1, lambda x, k: np.exp(x[..., 0]))
    res = find_root(always_positive, [])
    assert res.status == "no_root" and not res.has_root
    assert always_positive.phi([-40.0]) > 0
    far = JumpIntegrand(1, lambda x: x[..., 0] - 50, lambda x, k: np.ones(np.shape(x)[:-1]))
    assert find_root(far, []).status == "root_above_cap"
    assert preintegrate(far, []) == 0.0
    assert preintegrate(always_positive, []) == 1.0


def test_iteration_cap_raises(monkeypatch):
    monkeypatch.setattr(_kernels, "MAX_ITER", 1)
    g = JumpIntegrand(1, lambda x: np.exp(x[..., 0]) - 2, lambda x, k: np.exp(x[..., 0]))
    with pytest.raises(ConvergenceError) as err:
        find_root(g, [])
    assert err.value.last_iterate is not None and np.isfinite(err.value.last_iterate)


def test_generic_and_specialised_root_paths_agree(asian):
    g = asian(32)
    y = np.random.default_rng(0).standard_normal((200, 31))
    fast = g.roots(y)
    generic = JumpIntegrand.roots(g, y)
    np.testing.assert_allclose(fast[0], generic[0], atol=1e-12)
    assert np.all(fast[1] == generic[1])


def test_d256_root_residuals(asian):
    g = asian(256)
    y = np.random.default_rng(1).standard_normal((10_000, 255))
    root, status, iters, resid = find_roots(g, y)
    assert np.all(status == _kernels.ROOT)
    assert np.abs(resid).max() <= 1e-10 and iters.max() <= 20
    np.testing.assert_allclose(g.phi(g.join(root, y)), resid, atol=1e-11)


def test_preintegrate_examples(asian, market):
    # exp(-0.1) Phi(0.95) at 30 digits (mpmath)
    exact = 0.750059434367759902955609569368
    assert preintegrate(asian(1), []) == pytest.approx(exact, abs=1e-15)
    assert preintegrate(linear([1.0]), []) == 0.5


def test_quadrature_matches_closed_form(asian):
    g = asian(8)
    y = np.random.default_rng(2).standard_normal((100, 7))
    closed = preintegrate_batch(g, y, "closed_form")
    quad = preintegrate_batch(g, y, "quadrature")
    assert np.abs(closed - quad).max() <= 1e-9


def test_quadrature_nonconstant_theta():
    # theta = x_1^2: int_a^inf x^2 rho = 1 - Phi(a) + a rho(a), with a = -x_2
    g = linear([1.0, 1.0], theta=lambda x: x[..., 0] ** 2)
    for x2 in (-2.0, 0.0, 0.7, 3.0):
        a = -x2
        exact = special.ndtr(-a) + a * np.exp(-a * a / 2) / np.sqrt(2 * np.pi)
        assert preintegrate(g, [x2]) == pytest.approx(exact, rel=1e-10)
    with pytest.raises(ContractError):
        preintegrate(g, [0.0], mode="closed_form")
    with pytest.raises(ValueError):
        preintegrate(g, [0.0], mode="simpson")


def test_quadrature_no_root_integrates_whole_line():
    g = JumpIntegrand(
        2,
        lambda x: np.exp(x[..., 0]) + 1,
        lambda x, k: np.exp(x[..., 0]),
        theta=lambda x: np.cos(x[..., 0]),
    )
    assert preintegrate(g, [0.3]) == pytest.approx(np.exp(-0.5), rel=1e-10)


def test_preintegrated_function_shapes(asian):
    pf = PreintegratedFunction(asian(4))
    assert pf.d == 3 and pf.mode == "closed_form"
    y = np.random.default_rng(3).standard_normal((2, 5, 3))
    out = pf(y)
    assert out.shape == (2, 5)
    np.testing.assert_allclose(out[1, 2], preintegrate(asian(4), y[1, 2]))


def test_preintegrate_is_monotone_for_nonnegative_columns(asian):
    # the Cholesky factor has nonnegative entries, so every y_k pushes prices up
    g = asian(4, "standard")
    y = np.random.default_rng(4).standard_normal((50, 3))
    base = preintegrate_batch(g, y)
    for k in range(3):
        bumped = y.copy()
        bumped[:, k] += 0.3
        assert np.all(preintegrate_batch(g, bumped) >= base)


def test_psi_gradient_linear():
    assert psi_gradient(linear([1.0, 1.0]), [0.4], 1) == pytest.approx(-1.0)
    assert psi_gradient(linear([1.0, 2.0]), [-1.3], 1) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        psi_gradient(linear([1.0, 2.0]), [0.0], 0)


def test_psi_gradient_no_root():
    g = sine_boundary_integrand(2)
    with pytest.raises(DomainError):
        psi_gradient(g, [0.1], 1)


def test_dk_linear():
    g = linear([1.0, 1.0])
    for y2 in (-1.5, 0.0, 0.8):
        assert dk_preintegrated(g, [y2], 1) == pytest.approx(np.exp(-y2 * y2 / 2) / np.sqrt(2 * np.pi), rel=1e-14)
    assert dk_preintegrated(g, [0.0], 1) == pytest.approx(0.398942, abs=1e-6)


def test_dk_no_root_is_zero_for_constant_theta():
    assert dk_preintegrated(sine_boundary_integrand(2), [0.1], 1) == 0.0


def test_dk_nonconstant_theta_matches_finite_differences():
    g = JumpIntegrand(
        2,
        lambda x: x[..., 0] + x[..., 1] ** 3 + x[..., 1],
        lambda x, k: np.ones(np.shape(x)[:-1]) if k == 0 else 3 * x[..., 1] ** 2 + 1,
        theta=lambda x: 1 + x[..., 0] ** 2 * np.exp(0.3 * x[..., 1]),
        dtheta=lambda x, k: 0.3 * x[..., 0] ** 2 * np.exp(0.3 * x[..., 1]),
    )
    for y in (-0.6, 0.2, 1.1):
        fd = central_difference(lambda yy: preintegrate(g, yy), np.array([y]), 0)
        assert dk_preintegrated(g, [y], 1) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("d", [2, 4, 8])
def test_derivatives_match_finite_differences(d):
    psi_err, pre_err = derivative_errors(d, n=100)
    assert psi_err <= 1e-6
    assert pre_err <= 1e-6


def test_boundary_examples():
    probe = boundary_decay_probe([2 / np.pi, 0.1])
    assert probe[0].status == "root"
    assert probe[0].psi == pytest.approx(2 * np.log(2 / np.pi), abs=1e-12)
    assert probe[1].status == "no_root" and np.isnan(probe[1].psi)


def test_boundary_decay():
    probe = boundary_decay_probe([1 / np.pi + 10.0**-q for q in range(1, 9)])
    psi = np.array([p.psi for p in probe])
    dk = np.abs([p.dk for p in probe])
    np.testing.assert_allclose(psi, [p.psi_closed_form for p in probe], atol=1e-9)
    assert np.all(np.diff(psi) < 0) and psi[-1] < -15
    assert np.all(np.diff(dk[1:]) < 0) and dk[-1] < 1e-6


def test_boundary_roots_on_every_branch():
    rng = np.random.default_rng(5)
    # (1/pi, inf) and the first few bands (1/((2k+1) pi), 1/(2k pi))
    parts = [1 / np.pi + rng.uniform(1e-9, 5.0, 400)]
    for k in range(1, 7):
        lo, hi = 1 / ((2 * k + 1) * np.pi), 1 / (2 * k * np.pi)
        parts.append(rng.uniform(lo, hi, 100) * (1 - 1e-12) + lo * 1e-12)
    x2 = np.concatenate(parts)
    root, status, _, _ = find_roots(sine_boundary_integrand(2), x2[:, None])
    assert np.all(status == _kernels.ROOT)
    assert np.abs(root - sine_boundary_root(x2)).max() <= 1e-9


def test_continuity_across_boundary():
    g = sine_boundary_integrand(2)
    inside = preintegrate(g, [1 / np.pi + 1e-8])
    outside = preintegrate(g, [1 / np.pi - 1e-8])
    assert outside == 1.0
    assert inside == pytest.approx(1.0, abs=1e-7)


def test_closed_form_agrees_with_adaptive_quadrature(asian):
    # independent check of the tail integral with scipy's adaptive quad
    g = asian(3)
    y = np.array([0.3, -1.2])
    psi = find_root(g, y).root
    tail, _ = integrate.quad(lambda t: np.exp(-t * t / 2) / np.sqrt(2 * np.pi), psi, np.inf, epsabs=1e-14)
    assert preintegrate(g, y) == pytest.approx(np.exp(-0.1) * tail, rel=1e-10)


def test_as_rows():
    assert as_rows(np.zeros(3), 0).shape == (1, 0)
    assert as_rows(np.zeros((4, 0)), 0).shape == (4, 0)
    assert as_rows(np.arange(6.0), 3).shape == (2, 3)
