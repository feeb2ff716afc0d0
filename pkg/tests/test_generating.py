from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import tangent_basis, tangent_fd_errors

from spt_impact.generating import (GeneratorSpec, Ramp, SimplexError, arrow_mat,
                                   arrow_tensor, arrow_vec, check_simplex, entropy_horizon,
                                   g_jet, ramp_psi, target_holdings_initial,
                                   weights_from_prices)


def _centering(x):
    # (I - 1 x^T): row i, column a is delta_ia - x_a
    return np.eye(len(x)) - np.outer(np.ones(len(x)), x)


@st.composite
def simplex_points(draw, lo=2, hi=6):
    d = draw(st.integers(lo, hi))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=d, max_size=d))
    x = np.asarray(raw)
    return x / x.sum()


@settings(max_examples=60, deadline=None)
@given(simplex_points(), st.integers(0, 2**31 - 1))
def test_arrow_operators_equal_centering_products(x, seed):
    rng = np.random.default_rng(seed)
    d = len(x)
    C = _centering(x)
    phi = rng.normal(size=d)
    M = rng.normal(size=(d, d))
    T = rng.normal(size=(d, d, d))
    np.testing.assert_allclose(arrow_vec(phi, x), C @ phi, atol=1e-12)
    np.testing.assert_allclose(arrow_mat(M, x), C @ M @ C.T, atol=1e-12)
    np.testing.assert_allclose(arrow_tensor(T, x),
                               np.einsum("ia,jb,kc,abc->ijk", C, C, C, T), atol=1e-11)
    # centered objects annihilate the weights in every slot
    np.testing.assert_allclose(arrow_mat(M, x) @ x, 0, atol=1e-12)
    np.testing.assert_allclose(np.einsum("ijk,k->ij", arrow_tensor(T, x), x), 0, atol=1e-11)


def test_arrow_shape_checks():
    with pytest.raises(ValueError):
        arrow_mat(np.eye(3), np.ones(2) / 2)
    with pytest.raises(ValueError):
        arrow_tensor(np.zeros((2, 2)), np.ones(2) / 2)


def test_ramp_profile_values_and_derivative():
    T0, T1, T = 21.0, 1281.0, 1302.0
    assert ramp_psi(T0, T1, T, 0.0) == (0.0, 0.0)
    assert ramp_psi(T0, T1, T, T0)[0] == 1.0
    assert ramp_psi(T0, T1, T, 600.0) == (1.0, 0.0)
    assert ramp_psi(T0, T1, T, T)[0] == pytest.approx(0.0, abs=1e-15)
    assert ramp_psi(T0, T1, T, 1400.0) == (0.0, 0.0)
    h = 1e-6
    for t in (0.5, 10.0, 20.9, 21.0, 1281.0, 1290.0, 1301.5):
        fd = (ramp_psi(T0, T1, T, t + h)[0] - ramp_psi(T0, T1, T, t - h)[0]) / (2 * h)
        assert ramp_psi(T0, T1, T, t)[1] == pytest.approx(fd, abs=1e-7)
    with pytest.raises(ValueError):
        Ramp(5.0, 4.0, 10.0)


def test_time_derivative_of_generator_matches_finite_difference():
    spec = GeneratorSpec("quadratic", nu=5.0, ramp=Ramp(21, 1281, 1302))
    mu = np.array([0.3, 0.7])
    h = 1e-5
    for t in (3.0, 1290.0):
        fd = (g_jet(spec, t + h, mu).G - g_jet(spec, t - h, mu).G) / (2 * h)
        assert g_jet(spec, t, mu).dtG == pytest.approx(fd, rel=1e-7)
        fdg = (g_jet(spec, t + h, mu).grad - g_jet(spec, t - h, mu).grad) / (2 * h)
        np.testing.assert_allclose(g_jet(spec, t, mu).grad_dt, fdg, rtol=1e-7)


FAMILY_SPECS = [
    GeneratorSpec("quadratic", nu=2.0),
    GeneratorSpec("entropy", nu=1.0),
    GeneratorSpec("diversity_p", nu=1.0, p=0.3),
    GeneratorSpec("geometric_mean", nu=1.0, weights=(0.2, 0.3, 0.5)),
    GeneratorSpec("additively_symmetric", nu=1.0, g="sqrt(x) - x**2"),
]


@pytest.mark.parametrize("spec", FAMILY_SPECS, ids=lambda s: s.family)
def test_jets_match_tangent_finite_differences(spec):
    rng = np.random.default_rng(4)
    for _ in range(25):
        mu = rng.dirichlet(np.full(3, 3.0))
        if mu.min() < 0.02:
            continue
        err = tangent_fd_errors(spec, 0.0, mu)
        assert max(err.values()) < 1e-6, err


@pytest.mark.parametrize("spec", FAMILY_SPECS, ids=lambda s: s.family)
def test_generators_are_concave_on_the_simplex(spec):
    rng = np.random.default_rng(5)
    B = tangent_basis(3)
    for _ in range(50):
        mu = rng.dirichlet(np.ones(3))
        if mu.min() < 1e-3:
            continue
        H = B.T @ g_jet(spec, 0.0, mu).hess @ B
        assert np.linalg.eigvalsh(0.5 * (H + H.T)).max() <= 1e-10


def test_callable_and_symbolic_additive_generators_agree():
    sym = GeneratorSpec("additively_symmetric", g="-x*log(x)")
    fun = GeneratorSpec("additively_symmetric", g=lambda x: -x * np.log(x))
    ent = GeneratorSpec("entropy")
    mu = np.array([0.2, 0.5, 0.3])
    a, b, c = (g_jet(s, 0.0, mu) for s in (sym, fun, ent))
    np.testing.assert_allclose(a.grad, c.grad, rtol=1e-12)
    np.testing.assert_allclose(a.third, c.third, rtol=1e-12)
    np.testing.assert_allclose(b.grad, c.grad, rtol=1e-6)
    np.testing.assert_allclose(b.hess, c.hess, rtol=1e-5)


def test_generator_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec("unknown")
    with pytest.raises(ValueError):
        GeneratorSpec("diversity_p", p=1.5)
    with pytest.raises(ValueError):
        GeneratorSpec("geometric_mean", weights=(0.5, 0.6))
    with pytest.raises(ValueError):
        GeneratorSpec("additively_symmetric")
    with pytest.raises(Exception):
        GeneratorSpec("additively_symmetric", g="x +* 2")


@pytest.mark.parametrize("mu", [[0.5, 0.6], [1.0, 0.0], [0.5, np.nan, 0.5], [[0.5, 0.5]]])
def test_check_simplex_rejects(mu):
    with pytest.raises(SimplexError):
        check_simplex(mu)


def test_initial_holdings_invest_exactly_the_initial_wealth():
    N = np.array([1e9, 3e8, 5e8])
    p = np.array([12.0, 40.0, 7.0])
    for spec in FAMILY_SPECS:
        Q = target_holdings_initial(spec, 1e8, N, p)
        assert float(Q @ p) == pytest.approx(1e8, rel=1e-13)


def test_constant_generator_holds_the_market_portfolio():
    N = np.array([1e9, 3e8])
    p = np.array([15.0, 50.0])
    Q = target_holdings_initial(GeneratorSpec("constant_one"), 1e8, N, p)
    np.testing.assert_allclose(Q / N, 1e8 / float(N @ p))


def test_weights_and_entropy_horizon():
    mu, cap = weights_from_prices([2.0, 3.0], [1.0, 2.0])
    assert cap == 8.0
    np.testing.assert_allclose(mu, [0.25, 0.75])
    assert entropy_horizon(2, 4e-4, 0.1) == pytest.approx(2 * math.log(2) / (0.1 * 4e-4))
