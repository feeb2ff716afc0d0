"""Wealth accounting, relative wealth and the master-formula decomposition.

Stochastic integrals are left-point sums and covariations are realized
increment products on the simulation grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .generating import F_values, GeneratorSpec, g_jet, weights_from_prices
from .impact import ImpactModel
from .market import FundamentalPath
from .simulator import PathRecord


@dataclass
class WealthSeries:
    """Wealth series of one path.

    ``V`` is the relative wealth from the wealth equation; ``V_master`` is
    ``1 + G - G(0) + Gamma``; ``residual`` is their difference.
    """

    grid: np.ndarray
    W: np.ndarray
    V: np.ndarray
    G_term: np.ndarray
    Gamma: np.ndarray
    Gamma_parts: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def V_master(self) -> np.ndarray:
        return 1.0 + self.G_term - self.G_term[0] + self.Gamma

    @property
    def residual(self) -> np.ndarray:
        return self.V - self.V_master


def _cumsum0(x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x) + 1)
    np.cumsum(x, out=out[1:])
    return out


def wealth_series(path: PathRecord, w: float | None = None) -> np.ndarray:
    """Self-financing wealth ``w + int Q dP + 1/2 [I, Q]``."""
    w = path.w if w is None else w
    dP = np.diff(path.P, axis=0)
    dQ = np.diff(path.Q, axis=0)
    dI = np.diff(path.P - path.S, axis=0)
    inc = np.sum(path.Q[:-1] * dP, axis=1) + 0.5 * np.sum(dI * dQ, axis=1)
    return w + _cumsum0(inc)


def relative_wealth_series(path: PathRecord, w: float | None = None) -> np.ndarray:
    """Relative wealth written directly in terms of market weights."""
    w = path.w if w is None else w
    cap = path.cap
    cap0 = cap[0]
    dmu = np.diff(path.mu, axis=0)
    dQ = np.diff(path.Q, axis=0)
    dI = np.diff(path.P - path.S, axis=0)
    inc = np.sum(path.Q[:-1] * cap0 / (w * path.N) * dmu, axis=1) \
        + 0.5 * np.sum(dI * dQ, axis=1) * cap0 / (w * cap[:-1])
    return 1.0 + _cumsum0(inc)


def relative_wealth_ratio(path: PathRecord, w: float | None = None) -> np.ndarray:
    """Wealth divided by market-portfolio wealth ``w cap(t) / cap(0)``."""
    w = path.w if w is None else w
    cap = path.cap
    return wealth_series(path, w) / (w * cap / cap[0])


def gamma_parts(grid, mu, spec: GeneratorSpec, impact_weight=None):
    """Increments of the three Gamma components along a weight path.

    ``impact_weight[k, i]`` multiplies the squared increment of ``F_i`` over
    step ``k``; ``None`` means no impact. Returns ``(G_term, parts)``.
    """
    n = len(grid)
    d = mu.shape[1]
    G = np.empty(n)
    dtG = np.empty(n)
    F = np.empty((n, d))
    hess = np.empty((n, d, d))
    for k in range(n):
        jet = g_jet(spec, grid[k], mu[k])
        G[k] = jet.G
        dtG[k] = jet.dtG
        hess[k] = jet.hess
        F[k] = F_values(jet, mu[k])
    dt = np.diff(grid)
    dmu = np.diff(mu, axis=0)
    time_inc = -dtG[:-1] * dt
    hess_inc = -0.5 * np.einsum("ki,kij,kj->k", dmu, hess[:-1], dmu)
    if impact_weight is None:
        imp_inc = np.zeros(n - 1)
    else:
        imp_inc = 0.5 * np.sum(impact_weight[: n - 1] * np.diff(F, axis=0) ** 2, axis=1)
    parts = {
        "time_derivative": _cumsum0(time_inc),
        "hessian_qv": _cumsum0(hess_inc),
        "impact_qv": _cumsum0(imp_inc),
    }
    return G, parts


def master_decomposition(path: PathRecord, spec: GeneratorSpec | None = None,
                         w: float | None = None) -> WealthSeries:
    spec = path.generator if spec is None else spec
    w = path.w if w is None else w
    cap = path.cap
    model = ImpactModel(path.impacts)
    n = len(path.grid)
    weight = np.empty((n, len(path.N)))
    for k in range(n):
        _, _, dxh, _ = model.shape_partials(path.grid[k], path.J[k])
        weight[k] = w * path.N**2 / (cap[0] * cap[k]) * dxh * model.kernel_diag(path.grid[k])
    G, parts = gamma_parts(path.grid, path.mu, spec, weight)
    Gamma = parts["time_derivative"] + parts["hessian_qv"] + parts["impact_qv"]
    return WealthSeries(
        grid=path.grid,
        W=wealth_series(path, w),
        V=relative_wealth_series(path, w),
        G_term=G,
        Gamma=Gamma,
        Gamma_parts=parts,
    )


def frictionless_baseline(fpath: FundamentalPath, spec: GeneratorSpec, w: float, N):
    """Relative wealth and holdings of the same strategy without impact.

    Evaluated in closed form on the fundamental weights; no SDE is solved.
    """
    N = np.asarray(N, dtype=float)
    n = len(fpath.grid)
    mu = np.empty((n, len(N)))
    cap = np.empty(n)
    for k in range(n):
        mu[k], cap[k] = weights_from_prices(N, fpath.S[k])
    G, parts = gamma_parts(fpath.grid, mu, spec, None)
    Gamma = parts["time_derivative"] + parts["hessian_qv"] + parts["impact_qv"]
    V = 1.0 + G - G[0] + Gamma
    Q = np.empty((n, len(N)))
    for k in range(n):
        jet = g_jet(spec, fpath.grid[k], mu[k])
        Q[k] = w * N / cap[0] * (jet.grad + V[k] - jet.grad @ mu[k])
    return V, Q


def check_positive_price_condition(Q) -> bool:
    """True when holdings sit at their running maximum at every grid point."""
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        return True
    return bool(np.all(Q == np.maximum.accumulate(Q)))
