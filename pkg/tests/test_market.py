from __future__ import annotations

import math

import numpy as np
import pytest

from spt_impact.market import (FundamentalParams, PriceParseError, PriceValidationError,
                               analytic_qv, build_fundamental_path, gaussian_stream,
                               ingest_price_csv, realized_qv_increment, step_jacobi,
                               step_log_cap, write_price_csv)


def test_gaussian_stream_is_prefix_stable_and_keyed():
    a = gaussian_stream(3, 0, (50, 2))
    b = gaussian_stream(3, 0, (80, 2))
    np.testing.assert_array_equal(a, b[:50])
    assert not np.allclose(a, gaussian_stream(4, 0, (50, 2)))
    assert not np.allclose(a, gaussian_stream(3, 1, (50, 2)))


def test_gaussian_stream_moments():
    z = gaussian_stream(11, 0, (200_000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    assert abs(np.mean(z**4) - 3.0) < 0.05


def test_default_params_valid_and_feller_check():
    assert FundamentalParams().violations() == []
    bad = FundamentalParams(eta=0.2)
    assert any("Feller" in v for v in bad.violations())
    assert FundamentalParams(mu0=(0.6, 0.5)).violations()


def test_bounded_volatility_formula():
    p = FundamentalParams()
    expected = 4e-4 + 0.02**2 * 0.8**2 / (4 * 0.1 * 0.9)
    assert p.bounded_volatility() == pytest.approx(expected, rel=1e-15)


def test_jacobi_step_stays_in_band():
    p = FundamentalParams()
    m = 0.5
    for dW in (-50.0, 50.0, 0.0):
        m2 = step_jacobi(m, 0.5, dW, p)
        assert p.delta_S < m2 < 1 - p.delta_S


def test_log_cap_step_matches_hand_formula():
    p = FundamentalParams()
    lc = math.log(3e10)
    gap = lc - math.log(p.kappa_S)
    expected = lc + (p.zeta - 1) / (2 * gap) * 0.5 + math.sqrt(p.eps_S) * 0.3
    assert step_log_cap(lc, 0.5, 0.3, p) == pytest.approx(expected, rel=1e-15)


def test_build_path_initial_point_and_weights():
    p = FundamentalParams(N=(1e9, 3e8))
    fp = build_fundamental_path(p, 0, 400, 0.5)
    np.testing.assert_array_equal(fp.S[0], np.array([1.5e10 / 1e9, 1.5e10 / 3e8]))
    caps = fp.S * np.asarray(p.N)
    np.testing.assert_allclose(caps[:, 0] / caps.sum(axis=1), fp.mu1, rtol=1e-12)
    np.testing.assert_allclose(caps.sum(axis=1), np.exp(fp.logcap), rtol=1e-12)
    assert fp.grid[-1] == 200.0


def test_build_path_rejects_other_dimensions():
    with pytest.raises(ValueError, match="two-asset"):
        build_fundamental_path(FundamentalParams(d=3, N=(1, 1, 1), mu0=(0.3, 0.3, 0.4)),
                               0, 10, 0.5)


def test_analytic_qv_matches_one_step_monte_carlo():
    # sample one Euler step many times from a fixed state and compare covariances
    p = FundamentalParams(N=(1e9, 5e8), mu0=(0.4, 0.6), mu_bar=0.4)
    fp = build_fundamental_path(p, 1, 2, 0.5)
    dt = 1e-3
    z = gaussian_stream(99, 5, (100_000, 2)) * math.sqrt(dt)
    m0, lc0 = fp.mu1[0], fp.logcap[0]
    N = np.asarray(p.N)
    dS = np.empty((len(z), 2))
    for r, (a, b) in enumerate(z):
        m = step_jacobi(m0, dt, a, p)
        cap = math.exp(step_log_cap(lc0, dt, b, p))
        dS[r] = np.array([cap * m, cap * (1 - m)]) / N - fp.S[0]
    emp = np.cov(dS.T, bias=True)
    ana = analytic_qv(fp, 0, dt)
    np.testing.assert_allclose(emp, ana, rtol=0.03)


def test_realized_qv_increment_and_bounds():
    fp = build_fundamental_path(FundamentalParams(), 2, 5, 0.5)
    d = fp.S[3] - fp.S[2]
    assert realized_qv_increment(fp, 0, 1, 3) == d[0] * d[1]
    with pytest.raises(IndexError):
        realized_qv_increment(fp, 0, 1, 0)
    with pytest.raises(IndexError):
        realized_qv_increment(fp, 0, 2, 1)


def test_price_csv_roundtrip(tmp_path):
    fp = build_fundamental_path(FundamentalParams(), 5, 20, 0.5)
    f = tmp_path / "p.csv"
    write_price_csv(f, fp.grid, fp.S)
    back = ingest_price_csv(f)
    np.testing.assert_array_equal(back.grid, fp.grid)
    np.testing.assert_array_equal(back.S, fp.S)
    assert back.source == "ingested"


@pytest.mark.parametrize("text,err", [
    ("time,S_1\n0,1\n", PriceParseError),
    ("t,S_1,S_2\n0,1\n", PriceParseError),
    ("t,S_1\n0,abc\n", PriceParseError),
    ("t,S_1\n", PriceParseError),
    ("t,S_1\n0,1\n0,2\n", PriceValidationError),
    ("t,S_1\n0,1\n1,-2\n", PriceValidationError),
    ("t,S_1\n0,1\n1,nan\n", PriceValidationError),
])
def test_price_csv_errors(tmp_path, text, err):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(err):
        ingest_price_csv(f)
