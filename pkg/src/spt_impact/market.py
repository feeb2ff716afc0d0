"""Fundamental (unperturbed) price paths.

Two-asset Jacobi weight / Bessel log-capitalization model, CSV ingestion for
arbitrary ``d``, and the counter-based Gaussian stream used for all sampling.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

JACOBI_CLIP = 1e-12
BESSEL_FLOOR = 1e-8

# stream tags used as the second Philox key word
STREAM_FUNDAMENTAL = 0


class PriceParseError(ValueError):
    """Malformed row or header in a price CSV."""


class PriceValidationError(ValueError):
    """Price CSV parsed but violates positivity or time ordering."""


@dataclass(frozen=True)
class FundamentalParams:
    """Parameters of the Jacobi/Bessel fundamental market (daily units)."""

    d: int = 2
    N: tuple[float, ...] = (1e9, 1e9)
    mu0: tuple[float, ...] = (0.5, 0.5)
    alpha: float = 0.01
    eta: float = 0.02
    delta_S: float = 0.1
    cap0: float = 30e9
    eps_S: float = 4e-4
    zeta: float | None = None
    kappa_S: float = 1e7
    mu_bar: float | None = None

    def __post_init__(self):
        if self.zeta is None:
            object.__setattr__(self, "zeta", 2.0 * self.eps_S + 1.0)
        if self.mu_bar is None:
            object.__setattr__(self, "mu_bar", float(self.mu0[0]))
        object.__setattr__(self, "N", tuple(float(n) for n in self.N))
        object.__setattr__(self, "mu0", tuple(float(m) for m in self.mu0))

    def violations(self) -> list[str]:
        """Return human-readable constraint violations (empty if valid)."""
        out = []
        if self.d < 2:
            out.append("d must be >= 2")
        if len(self.N) != self.d or min(self.N) <= 0:
            out.append("N must have d positive entries")
        if len(self.mu0) != self.d:
            out.append("mu0 must have d entries")
        elif abs(sum(self.mu0) - 1.0) > 1e-12:
            out.append("mu0 must sum to 1")
        if not 0.0 < self.delta_S < 0.5:
            out.append("delta_S must lie in (0, 1/2)")
        if self.alpha <= 0 or self.eta <= 0 or self.eps_S <= 0 or self.kappa_S <= 0:
            out.append("alpha, eta, eps_S and kappa_S must be positive")
        lo, hi = self.delta_S, 1.0 - self.delta_S
        if any(not lo < m < hi for m in self.mu0):
            out.append("mu0 must lie componentwise in (delta_S, 1 - delta_S)")
        if not lo < self.mu_bar < hi:
            out.append("mu_bar must lie in (delta_S, 1 - delta_S)")
        eta2 = self.eta**2
        if 2 * self.alpha * (self.mu_bar - self.delta_S) < eta2 or 2 * self.alpha * (
            1 - self.delta_S - self.mu_bar
        ) < eta2:
            out.append("Feller conditions 2 alpha (mu_bar - delta_S) >= eta^2 and "
                       "2 alpha (1 - delta_S - mu_bar) >= eta^2 fail")
        if self.zeta < self.eps_S + 1:
            out.append("zeta must be >= eps_S + 1")
        if self.cap0 <= self.kappa_S:
            out.append("cap0 must exceed kappa_S")
        return out

    def bounded_volatility(self) -> float:
        """Per-asset log-price variance-rate bound eps_S + eta^2 (1-2d)^2 / (4 d (1-d))."""
        dl = self.delta_S
        return self.eps_S + self.eta**2 * (1 - 2 * dl) ** 2 / (4 * dl * (1 - dl))


@dataclass
class FundamentalPath:
    grid: np.ndarray
    S: np.ndarray
    source: str = "simulated"
    mu1: np.ndarray | None = None
    logcap: np.ndarray | None = None
    params: FundamentalParams | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.S.shape[1]

    @property
    def steps(self) -> int:
        return len(self.grid) - 1

    def subsample(self, stride: int) -> "FundamentalPath":
        """Every ``stride``-th grid point (keeps the Brownian increments fixed)."""
        if stride == 1:
            return self
        sl = slice(None, None, stride)
        return FundamentalPath(
            grid=self.grid[sl],
            S=self.S[sl],
            source=self.source,
            mu1=None if self.mu1 is None else self.mu1[sl],
            logcap=None if self.logcap is None else self.logcap[sl],
            params=self.params,
        )

    def truncate(self, steps: int) -> "FundamentalPath":
        sl = slice(0, steps + 1)
        return FundamentalPath(
            grid=self.grid[sl],
            S=self.S[sl],
            source=self.source,
            mu1=None if self.mu1 is None else self.mu1[sl],
            logcap=None if self.logcap is None else self.logcap[sl],
            params=self.params,
        )


def gaussian_stream(seed: int, stream: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normals by inverse CDF from a Philox counter stream.

    The key is ``(seed, stream)``; entry ``(step, component)`` consumes counter
    slot ``step * ncomp + component``, so values never depend on how many other
    paths were drawn or in which order.
    """
    bitgen = np.random.Philox(key=np.array([seed % 2**64, stream], dtype=np.uint64))
    n = int(np.prod(shape)) if shape else 1
    raw = bitgen.random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(shape)


def step_jacobi(mu1: float, dt: float, dW: float, params: FundamentalParams) -> float:
    """One full-truncation Euler step of the Jacobi weight, clamped inside the band."""
    lo = params.delta_S
    hi = 1.0 - params.delta_S
    diff = math.sqrt(max(0.0, (mu1 - lo) * (hi - mu1)))
    nxt = mu1 + params.alpha * (params.mu_bar - mu1) * dt + params.eta * diff * dW
    return min(max(nxt, lo + JACOBI_CLIP), hi - JACOBI_CLIP)


def step_log_cap(logcap: float, dt: float, dB: float, params: FundamentalParams) -> float:
    """One Euler step of the shifted, scaled Bessel log-capitalization."""
    gap = max(logcap - math.log(params.kappa_S), BESSEL_FLOOR)
    return logcap + (params.zeta - 1.0) / (2.0 * gap) * dt + math.sqrt(params.eps_S) * dB


def build_fundamental_path(
    params: FundamentalParams, seed: int, M: int, dt: float
) -> FundamentalPath:
    """Simulate ``M`` steps of size ``dt`` of the two-asset model."""
    if params.d != 2:
        raise ValueError(f"the Jacobi/Bessel model is two-asset only (got d={params.d}); "
                         "ingest general-d paths from CSV")
    if M < 0 or dt <= 0:
        raise ValueError("need M >= 0 and dt > 0")
    z = gaussian_stream(seed, STREAM_FUNDAMENTAL, (M, 2)) * math.sqrt(dt)
    mu1 = np.empty(M + 1)
    logcap = np.empty(M + 1)
    mu1[0] = params.mu0[0]
    logcap[0] = math.log(params.cap0)
    m, lc = mu1[0], logcap[0]
    for k in range(M):
        m = step_jacobi(m, dt, z[k, 0], params)
        lc = step_log_cap(lc, dt, z[k, 1], params)
        mu1[k + 1] = m
        logcap[k + 1] = lc
    cap = np.exp(logcap)
    N = np.asarray(params.N)
    S = np.column_stack([cap * mu1 / N[0], cap * (1.0 - mu1) / N[1]])
    # exact initial point, independent of exp/log round trip
    S[0] = np.asarray(params.cap0) * np.asarray(params.mu0) / N
    grid = dt * np.arange(M + 1)
    return FundamentalPath(grid=grid, S=S, source="simulated", mu1=mu1, logcap=logcap,
                           params=params)


def analytic_qv(path: FundamentalPath, step: int, dt: float) -> np.ndarray:
    """Model-implied d[S_j, S_k] over one step, evaluated at the left point."""
    p = path.params
    if path.mu1 is None or p is None:
        raise ValueError("analytic quadratic variation needs a simulated path")
    m = path.mu1[step]
    S = path.S[step]
    jac = p.eta**2 * max(0.0, (m - p.delta_S) * (1 - p.delta_S - m))
    mus = np.array([m, 1.0 - m])
    sign = np.array([1.0, -1.0])
    a = p.eps_S + jac * np.outer(sign / mus, sign / mus)
    return np.outer(S, S) * a * dt


def realized_qv_increment(path: FundamentalPath, j: int, k: int, step: int) -> float:
    """Realized covariation increment dS_j(step) * dS_k(step)."""
    if step < 1 or step > path.steps:
        raise IndexError(f"step {step} outside 1..{path.steps}")
    if not (0 <= j < path.d and 0 <= k < path.d):
        raise IndexError("asset index out of range")
    dS = path.S[step] - path.S[step - 1]
    return float(dS[j] * dS[k])


def ingest_price_csv(file: str | Path) -> FundamentalPath:
    """Read a ``t,S_1,...,S_d`` CSV into a validated path."""
    with open(file, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PriceParseError("empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header[0] != "t" or header[1:] != [f"S_{i}" for i in range(1, d + 1)]:
        raise PriceParseError(f"bad header {header!r}; expected t,S_1,...,S_d")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 1:
            raise PriceParseError(f"line {lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise PriceParseError(f"line {lineno}: {exc}") from None
    if not data:
        raise PriceParseError("no data rows")
    arr = np.asarray(data, dtype=float)
    grid, S = arr[:, 0], arr[:, 1:]
    if not np.all(np.isfinite(arr)):
        raise PriceValidationError("non-finite value")
    if np.any(np.diff(grid) <= 0):
        raise PriceValidationError("time column must be strictly increasing")
    if np.any(S <= 0):
        bad = np.argwhere(S <= 0)[0]
        raise PriceValidationError(f"non-positive price at row {bad[0] + 1}, asset {bad[1] + 1}")
    return FundamentalPath(grid=grid, S=S, source="ingested")


def write_price_csv(file: str | Path, grid: Sequence[float], S: np.ndarray) -> None:
    S = np.asarray(S)
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"S_{i}" for i in range(1, S.shape[1] + 1)])
        for t, row in zip(grid, S):
            w.writerow([format(float(t), ".17g")] + [format(float(v), ".17g") for v in row])
