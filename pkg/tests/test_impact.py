from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from spt_impact.impact import (ImpactModel, ImpactSpec, KernelSpec, ShapeSpec, bJ_eval,
                               bJ_markov, calibrate_linear_lambda, impact_from_state,
                               kernel_eval, shape_eval, step_impact_state)

KERNELS = [KernelSpec("exponential", beta=1.7), KernelSpec("shifted_power", epsilon=0.5,
                                                             beta_exp=0.4),
           KernelSpec("permanent", C=0.8), KernelSpec("permanent_plus_exponential", beta=0.9,
                                                      C=0.3)]
SHAPES = [ShapeSpec("linear", lam=2e-3), ShapeSpec("asinh", lam=2e-3, scale=3.0),
          ShapeSpec("regularized_power", lam=2e-3, p=0.5, knee=2.0),
          ShapeSpec("linear", lam=1e-3, phi="periodic", phi_amp=0.3, phi_period=5.0)]


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: k.kind)
def test_kernel_partials_match_finite_differences(k):
    t, s, h = 3.0, 1.2, 1e-5
    K, dt, ds, dst = kernel_eval(k, t, s)
    f = lambda a, b: float(kernel_eval(k, a, b)[0])  # noqa: E731
    assert dt == pytest.approx((f(t + h, s) - f(t - h, s)) / (2 * h), rel=1e-7, abs=1e-9)
    assert ds == pytest.approx((f(t, s + h) - f(t, s - h)) / (2 * h), rel=1e-7, abs=1e-9)
    g = lambda a: float(kernel_eval(k, a, s)[2])  # noqa: E731
    assert dst == pytest.approx((g(t + h) - g(t - h)) / (2 * h), rel=1e-6, abs=1e-9)
    assert float(kernel_eval(k, 2.0, 2.0)[0]) == pytest.approx(k.sup_diag())


def test_kernel_rejects_reversed_times_and_plain_power():
    with pytest.raises(ValueError):
        kernel_eval(KERNELS[0], 1.0, 2.0)
    with pytest.raises(ValueError, match="shifted_power"):
        KernelSpec("power")


@pytest.mark.parametrize("sh", SHAPES, ids=lambda s: f"{s.kind}-{s.phi}")
def test_shape_partials_match_finite_differences(sh):
    h = 1e-5
    for t, x in [(0.3, -4.0), (1.1, 0.7), (2.9, 2.5), (4.0, 3.9), (0.0, 9.0)]:
        v, dt, dx, dxx = (float(a) for a in shape_eval(sh, t, x))
        f = lambda a, b: float(shape_eval(sh, a, b)[0])  # noqa: E731
        g = lambda b: float(shape_eval(sh, t, b)[2])  # noqa: E731
        assert dt == pytest.approx((f(t + h, x) - f(t - h, x)) / (2 * h), rel=1e-6, abs=1e-12)
        assert dx == pytest.approx((f(t, x + h) - f(t, x - h)) / (2 * h), rel=1e-6, abs=1e-12)
        assert dxx == pytest.approx((g(x + h) - g(x - h)) / (2 * h), rel=1e-5, abs=1e-10)


def test_regularized_power_is_odd_concave_c2_and_grows_like_power():
    sh = ShapeSpec("regularized_power", lam=1.0, p=0.5, knee=1.0)
    x = np.linspace(0, 50, 20001)
    b, b1, b2 = sh.base(x)
    np.testing.assert_allclose(sh.base(-x)[0], -b)
    assert np.all(np.diff(b) > 0) and np.all(b2 <= 1e-15)
    for knot in (1.0, 2.0):
        lo, hi = sh.base(np.array([knot - 1e-9, knot + 1e-9]))[1:]
        assert abs(lo[0] - lo[1]) < 1e-7 and abs(hi[0] - hi[1]) < 1e-7
    # slope ratio over a decade of large arguments follows the exponent
    r = sh.base(np.array([1000.0]))[1][0] / sh.base(np.array([100.0]))[1][0]
    assert r == pytest.approx(10 ** -0.5, rel=1e-12)


@pytest.mark.parametrize("sh", SHAPES[:3], ids=lambda s: s.kind)
def test_pseudo_inverse_roundtrip(sh):
    for y in (-3e-3, -1e-4, 0.0, 2e-5, 5e-3):
        x = sh.hhat_inverse(y)
        assert float(sh.hhat(x)) == pytest.approx(y, rel=1e-9, abs=1e-15)
        assert math.copysign(1, x) == math.copysign(1, y) or y == 0


def test_asinh_pseudo_inverse_overflow_is_infinite():
    sh = ShapeSpec("asinh", lam=1e-6, scale=1.0)
    assert sh.hhat_inverse(1.0) == math.inf
    assert sh.hhat_inverse(-1.0) == -math.inf


def test_calibration_matches_hand_formula():
    lam = calibrate_linear_lambda(15.0, 11.5, 0.01, 1e8, 2.0)
    avg = 1e6 / 4.0 * (1.0 + math.exp(-2.0))
    assert lam == pytest.approx(15.0 * 11.5e-4 / avg, rel=1e-14)
    with pytest.raises(ValueError):
        calibrate_linear_lambda(15.0, 11.5, 0.0, 1e8, 2.0)


def _smooth_Q(s):
    return 1e5 * (np.sin(0.7 * s) + 0.1 * s * s)


def _smooth_dQ(s):
    return 1e5 * (0.7 * np.cos(0.7 * s) + 0.2 * s)


def _J_true(k, t):
    f = lambda s: float(kernel_eval(k, t, s)[0]) * float(_smooth_dQ(s))  # noqa: E731
    return quad(f, 0.0, t, epsabs=1e-10, epsrel=1e-12, limit=200)[0]


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: k.kind)
def test_bJ_eval_matches_time_derivative_of_convolution(k):
    # oracle: d/dt of J(t) = int_0^t K(t,s) dQ(s), minus the jump term K(t,t) dQ(t)
    spec = ImpactSpec(kernel=k)
    t = 4.0
    grid = np.linspace(0.0, t, 8001)
    Q = _smooth_Q(grid)
    h = 1e-3
    dJ = (8 * (_J_true(k, t + h) - _J_true(k, t - h))
          - (_J_true(k, t + 2 * h) - _J_true(k, t - 2 * h))) / (12 * h)
    expected = dJ - float(kernel_eval(k, t, t)[0]) * float(_smooth_dQ(t))
    got = bJ_eval(spec, t, grid, Q)
    assert got == pytest.approx(expected, rel=1e-5, abs=1e-7 * abs(dJ))


def test_bJ_eval_interpolates_off_grid_and_checks_coverage():
    spec = ImpactSpec(kernel=KERNELS[1])
    grid = np.linspace(0, 2, 2001)
    Q = _smooth_Q(grid)
    a = bJ_eval(spec, 1.0005, grid, Q)
    b = 0.5 * (bJ_eval(spec, 1.0, grid, Q) + bJ_eval(spec, 1.001, grid, Q))
    assert a == pytest.approx(b, rel=1e-3)
    with pytest.raises(ValueError):
        bJ_eval(spec, 3.0, grid, Q)


def test_markov_drift_agrees_with_quadrature():
    for k in (KERNELS[0], KERNELS[3]):
        spec = ImpactSpec(kernel=k)
        t = 3.0
        grid = np.linspace(0, t, 6001)
        Q = _smooth_Q(grid)
        J = _J_true(k, t) + k.C * 0.0
        bm = bJ_markov(spec, t, J, Q[-1], Q[0])
        assert bm == pytest.approx(bJ_eval(spec, t, grid, Q), rel=1e-5)


def test_exact_exponential_step_and_nonzero_initial_trajectory():
    spec = ImpactSpec(kernel=KernelSpec("exponential", beta=1.5), j0=2.0, j0_inf=0.5,
                      j0_rate=0.3)
    J = 1.7
    out = step_impact_state(spec, 1.0, J, 0.25, 0.5)
    assert out == pytest.approx(spec.J0(1.5) + math.exp(-0.75) * (J - spec.J0(1.0)) + 0.25,
                                rel=1e-15)
    h = 1e-6
    assert spec.J0_prime(1.0) == pytest.approx((spec.J0(1 + h) - spec.J0(1 - h)) / (2 * h),
                                               rel=1e-8)
    with pytest.raises(ValueError):
        step_impact_state(ImpactSpec(kernel=KERNELS[1]), 0.0, 0.0, 1.0, 0.5, method="exact")


def test_permanent_kernel_state_tracks_cumulative_trades():
    spec = ImpactSpec(kernel=KernelSpec("permanent", C=2.0))
    J, Q = 0.0, [0.0]
    for k, dq in enumerate([1.0, -0.5, 3.0]):
        J = step_impact_state(spec, 0.5 * k, J, dq, 0.5)
        Q.append(Q[-1] + dq)
    assert J == pytest.approx(2.0 * (Q[-1] - Q[0]))


def test_step_drift_reproduces_exact_decay_update():
    specs = [ImpactSpec(kernel=KernelSpec("exponential", beta=2.0), j0=1.0, j0_rate=0.2),
             ImpactSpec(kernel=KernelSpec("permanent_plus_exponential", beta=0.7, C=0.4))]
    model = ImpactModel(specs)
    grid = np.array([0.0, 0.5, 1.0])
    Q = np.array([[0.0, 0.0], [1.0, 2.0], [1.5, 2.5]])
    J = np.array([1.3, 1.9])
    dt, t = 0.5, 1.0
    drift = model.step_drift(t, dt, J, grid, Q)
    tr0 = J[0] - specs[0].J0(t)
    exact0 = specs[0].J0(t + dt) + math.exp(-2.0 * dt) * tr0
    tr1 = J[1] - 0.4 * (Q[-1, 1] - Q[0, 1])
    exact1 = 0.4 * (Q[-1, 1] - Q[0, 1]) + math.exp(-0.7 * dt) * tr1
    np.testing.assert_allclose(J + drift * dt, [exact0, exact1], rtol=1e-14)


def test_impact_from_state_is_shape_of_state():
    specs = [ImpactSpec(shape=SHAPES[0]), ImpactSpec(shape=SHAPES[1])]
    out = impact_from_state(specs, 0.0, [1.0, 2.0])
    np.testing.assert_allclose(out, [2e-3, 2e-3 * math.asinh(2.0 / 3.0)])
