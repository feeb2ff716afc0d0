"""Relative-arbitrage constants and ensemble diagnostics for the desk-scale experiment."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .impact import ImpactSpec
from .simulator import EnsembleSummary, PathRecord

WINDOW = 20


class StrideError(ValueError):
    """Daily volume needs exactly two trades per day."""


@dataclass(frozen=True)
class FrictionlessConstants:
    delta_S: float
    eps_S: float
    sigma2_S: float
    kappa_S: float
    ell_S: float

    def validate(self, d: int) -> None:
        if not 0 < self.delta_S < 1:
            raise ValueError("delta_S must lie in (0, 1)")
        if min(self.eps_S, self.sigma2_S, self.kappa_S, self.ell_S) <= 0:
            raise ValueError("eps_S, sigma2_S, kappa_S and ell_S must be positive")
        if d * self.ell_S > 1 + 1e-15:
            raise ValueError("weight floor ell_S must satisfy d * ell_S <= 1")


@dataclass(frozen=True)
class ArbitrageConstants:
    delta_P: float
    eps_P: float
    kappa_P: float
    T_star: float
    nu0: float
    nu1: tuple[float, ...]
    nu2: tuple[float, ...]
    C: float
    nu_bar: float

    def as_dict(self) -> dict:
        return asdict(self)


def horizon_Tstar(d: int, eps: float, delta: float) -> float:
    """Guaranteed outperformance horizon ``2 d / (eps delta^2)``.

    With the entropy generator the shorter bound ``2 log d / (delta eps)``
    applies instead; see :func:`spt_impact.generating.entropy_horizon`.
    """
    if d <= 0 or eps <= 0 or delta <= 0:
        raise ValueError("horizon needs positive inputs")
    return 2.0 * d / (eps * delta * delta)


def derived_constants(fc: FrictionlessConstants, d: int, N: Sequence[float],
                      impacts: Sequence[ImpactSpec], cap0: float, w: float
                      ) -> ArbitrageConstants:
    """Constants of the observed market and the admissible trading-speed bound."""
    fc.validate(d)
    N = np.asarray(N, dtype=float)
    if len(N) != d or len(impacts) != d:
        raise ValueError("N and impact specs must have d entries")
    for s in impacts:
        if s.j0 != 0.0 or (s.j0_rate != 0.0 and s.j0_inf != 0.0):
            raise ValueError("trading-speed bound assumes zero initial impact trajectories")
    dS, kS, lS = fc.delta_S, fc.kappa_S, fc.ell_S
    phibar = np.array([s.shape.phi_sup() for s in impacts])
    hp = np.array([s.shape.hhat_prime_sup() for s in impacts])
    Kbar = np.array([s.kernel.sup_diag() for s in impacts])
    if not (np.all(np.isfinite(phibar)) and np.all(np.isfinite(hp)) and
            np.all(np.isfinite(Kbar))):
        raise ValueError("impact shape must have bounded slope and time factor")

    n_inf = N.max()
    n_inv_inf = (1.0 / N).max()
    delta_P = dS / 4.0
    eps_P = fc.eps_S * lS**2 * (1 - dS / 2) ** d / (4 * n_inf * n_inv_inf * (1 - dS) ** d)
    T_star = horizon_Tstar(d, eps_P, delta_P)
    kappa_P = kS * (1 - dS) / (1 - dS / 2)

    hp_inf, K_inf, phi_inf = hp.max(), Kbar.max(), phibar.max()
    denom0 = 3 * w * n_inf * N.sum() * hp_inf * K_inf * (1 - dS / 4)
    nu0 = math.inf if denom0 == 0 else cap0 * kS * (1 - dS) / denom0

    nu1 = []
    for i, s in enumerate(impacts):
        arg = -kS * lS / (2 * phibar[i] * N[i]) * dS / (1 - dS / 2)
        nu1.append(-2 * cap0 / (5 * w * N[i] * Kbar[i]) * s.shape.hhat_inverse(arg))
    m01 = min(min(nu0, v) for v in nu1)
    if math.isinf(m01):
        lead = math.inf if hp_inf * K_inf > 0 else 0.5
    else:
        lead = 0.5 + m01 * w * (N**2).max() * phi_inf * hp_inf * K_inf / (2 * cap0 * kappa_P)
    C = lead * 4 * d * d * fc.sigma2_S * (1.0 / N).sum() ** 2 * float(N @ N) * kS**2 / kappa_P**2

    nu2 = []
    for i, s in enumerate(impacts):
        arg = dS * (1 - dS) * kS / (4 * N[i] * (1 - dS / 2))
        inv = s.shape.hhat_inverse(arg)
        factor = 1.0 / (2 + C * T_star)
        if math.isinf(inv):
            nu2.append(math.inf if factor > 0 else math.nan)
        else:
            nu2.append(cap0 / (w * N[i] * Kbar[i]) * factor * inv)
    nu_bar = min(min(nu0, a, b) for a, b in zip(nu1, nu2))
    return ArbitrageConstants(delta_P=delta_P, eps_P=eps_P, kappa_P=kappa_P, T_star=T_star,
                              nu0=nu0, nu1=tuple(nu1), nu2=tuple(nu2), C=C, nu_bar=nu_bar)


def _records(ensemble) -> list[PathRecord]:
    if isinstance(ensemble, EnsembleSummary):
        return [r.record for r in ensemble.results]
    if isinstance(ensemble, PathRecord):
        return [ensemble]
    return list(ensemble)


def measure_diversity_nondegeneracy(ensemble, window: tuple[float, float],
                                    use: str = "P") -> tuple[float, float]:
    """Largest weight and smallest realized covariance eigenvalue over a time window.

    The log-price covariance rate is estimated from increments averaged over a
    sliding block of 20 steps. ``use="S"`` measures the fundamental market.
    """
    recs = _records(ensemble)
    if not recs:
        raise ValueError("empty ensemble")
    ta, tb = window
    max_w = -math.inf
    min_eig = math.inf
    for rec in recs:
        X = rec.P if use == "P" else rec.S
        if use == "P":
            mu = rec.mu
        else:
            caps = X * rec.N
            mu = caps / caps.sum(axis=1, keepdims=True)
        sel = (rec.grid >= ta) & (rec.grid <= tb)
        if sel.any():
            max_w = max(max_w, float(mu[sel].max()))
        idx = np.nonzero(sel)[0]
        if len(idx) < WINDOW + 1:
            continue
        lo, hi = idx[0], idx[-1]
        dl = np.diff(np.log(X[lo: hi + 1]), axis=0)
        dt = np.diff(rec.grid[lo: hi + 1])
        outer = np.einsum("ki,kj->kij", dl, dl) / dt[:, None, None]
        csum = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(outer, axis=0)])
        avg = (csum[WINDOW:] - csum[:-WINDOW]) / WINDOW
        ev = np.linalg.eigvalsh(0.5 * (avg + avg.transpose(0, 2, 1)))
        min_eig = min(min_eig, float(ev[:, 0].min()))
    return max_w, min_eig


def daily_volume_samples(rec: PathRecord, T0: float, T1: float, T: float) -> np.ndarray:
    """Gross dollar volume per day over the constant-speed trading period.

    Day ``i`` pairs the trades ending at half-day steps ``2i`` and ``2i+1``,
    each valued at the midpoint of its period's endpoint prices; days run
    from ``T0`` through ``T1``, dropping initiation, liquidation and holding.
    """
    dts = np.diff(rec.grid)
    if len(dts) == 0 or np.any(np.abs(dts - 0.5) > 1e-9):
        raise StrideError("daily volume requires a uniform half-day grid")
    if not 0 <= T0 < T1 <= T:
        raise ValueError("need 0 <= T0 < T1 <= T")
    last = len(rec.grid) - 1
    days = [i for i in range(int(math.ceil(T0)), int(math.floor(T1)) + 1)
            if 2 * i >= 1 and 2 * i + 1 <= last]
    if not days:
        return np.zeros(0)
    i = np.asarray(days)
    Q, P = rec.Q, rec.P
    a = np.abs(Q[2 * i] - Q[2 * i - 1]) * 0.5 * (P[2 * i - 1] + P[2 * i])
    b = np.abs(Q[2 * i + 1] - Q[2 * i]) * 0.5 * (P[2 * i] + P[2 * i + 1])
    return (a + b).sum(axis=1)


def daily_volume_histogram(ensemble, T0: float, T1: float, T: float, bins: int = 50) -> dict:
    recs = _records(ensemble)
    parts = [daily_volume_samples(r, T0, T1, T) for r in recs]
    samples = np.concatenate(parts) if parts else np.zeros(0)
    return dv_stats(samples, bins)


def dv_stats(samples: np.ndarray, bins: int = 50) -> dict:
    if samples.size == 0:
        return {"samples": samples, "count": 0, "median": math.nan, "p5": math.nan,
                "p95": math.nan, "p1": math.nan, "p99": math.nan,
                "hist_edges": np.zeros(0), "hist_counts": np.zeros(0, dtype=int)}
    p1, p5, p50, p95, p99 = np.percentile(samples, [1, 5, 50, 95, 99])
    kept = samples[(samples >= p1) & (samples <= p99)]
    lo, hi = (p1, p99) if p99 > p1 else (p1, p1 + 1.0)
    counts, edges = np.histogram(kept, bins=bins, range=(lo, hi))
    return {"samples": samples, "count": int(samples.size), "median": float(p50),
            "p5": float(p5), "p95": float(p95), "p1": float(p1), "p99": float(p99),
            "hist_edges": edges, "hist_counts": counts}


# reference configuration of the desk-scale experiment
REFERENCE = {
    "market.N": (1e9, 1e9), "market.mu0": (0.5, 0.5), "market.mu_bar": 0.5,
    "market.alpha": 0.01, "market.eta": 0.02, "market.delta_S": 0.1, "market.cap0": 3e10,
    "market.eps_S": 4e-4, "market.kappa_S": 1e7, "generator.w": 1e8, "impact.beta": 2.0,
    "generator.nu": 5.0, "generator.T0": 21.0, "generator.T1": 1281.0, "generator.T": 1302.0,
    "sim.horizon": 1323.0, "sim.dt": 0.5,
}


def config_mismatches(cfg) -> list[str]:
    """Keys where a config departs from the reference experiment."""
    m, g, s = cfg.market, cfg.generator, cfg.sim
    have = {
        "market.N": tuple(m.N), "market.mu0": tuple(m.mu0), "market.mu_bar": m.mu_bar,
        "market.alpha": m.alpha, "market.eta": m.eta, "market.delta_S": m.delta_S,
        "market.cap0": m.cap0, "market.eps_S": m.eps_S, "market.kappa_S": m.kappa_S,
        "generator.w": cfg.w, "generator.nu": g.nu, "sim.horizon": s.horizon, "sim.dt": s.dt,
        "impact.beta": tuple(sp.kernel.beta for sp in cfg.impacts)[0],
        "generator.T0": g.ramp.T0 if g.ramp else None,
        "generator.T1": g.ramp.T1 if g.ramp else None,
        "generator.T": g.ramp.T if g.ramp else None,
    }
    out = []
    for k, ref in REFERENCE.items():
        v = have[k]
        if v is None or not np.allclose(np.asarray(v, dtype=float), np.asarray(ref, dtype=float),
                                        rtol=1e-12, atol=0):
            out.append(f"{k}={v} (reference {ref})")
    if abs(m.zeta - (2 * m.eps_S + 1)) > 1e-15:
        out.append("market.zeta differs from 2 eps_S + 1")
    for sp in cfg.impacts:
        if sp.kernel.kind != "exponential" or sp.shape.kind != "linear" or \
                sp.shape.phi != "constant":
            out.append("impact must be linear with exponential decay")
            break
    if g.family != "quadratic":
        out.append("generator.family must be quadratic")
    return out


def _nanstat(fn, a, axis=0):
    with np.errstate(all="ignore"):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fn(a, axis=axis)


def ensemble_panels(ens: EnsembleSummary) -> dict[str, dict[str, np.ndarray]]:
    """Column dictionaries of the four experiment panels."""
    t = ens.grid
    if ens.n_paths == 0:
        return {}
    V = ens.stacked(lambda r: r.wealth.V)
    Vm = ens.stacked(lambda r: r.wealth.V_master)
    VF = ens.stacked(lambda r: r.frictionless_V)
    G = ens.stacked(lambda r: r.wealth.G_term)
    Gam = ens.stacked(lambda r: r.wealth.Gamma)
    parts = {k: ens.stacked(lambda r, k=k: r.wealth.Gamma_parts[k])
             for k in ("time_derivative", "hessian_qv", "impact_qv")}
    Q = ens.stacked(lambda r: r.record.Q)
    d = Q.shape[2]
    wealth = {"t": t, "V_impact_mean": _nanstat(np.nanmean, V),
              "V_master_mean": _nanstat(np.nanmean, Vm),
              "V_frictionless_mean": _nanstat(np.nanmean, VF),
              "V_impact_min": _nanstat(np.nanmin, V), "V_impact_max": _nanstat(np.nanmax, V)}
    decomp = {"t": t, "V_master_mean": _nanstat(np.nanmean, Vm),
              "G_term_mean": _nanstat(np.nanmean, G), "Gamma_mean": _nanstat(np.nanmean, Gam)}
    for k, v in parts.items():
        decomp[f"{k}_mean"] = _nanstat(np.nanmean, v)
    holdings = {"t": t}
    for i in range(d):
        holdings[f"Q_{i + 1}_mean"] = _nanstat(np.nanmean, Q[:, :, i])
    for i in range(d):
        holdings[f"Q_{i + 1}_path0"] = Q[0, :, i]
    panels = {"wealth": wealth, "decomposition": decomp, "holdings": holdings}
    dv = [r.dv for r in ens.results if r.dv is not None]
    if dv:
        st = dv_stats(np.concatenate(dv))
        e = st["hist_edges"]
        panels["daily_volume"] = {"bin_left": e[:-1], "bin_right": e[1:],
                                  "count": st["hist_counts"].astype(float)}
    return panels


def ensemble_report(ens: EnsembleSummary) -> dict:
    """Scalar summary of an ensemble (no timestamps; deterministic given the seed)."""
    statuses = ens.statuses
    counts = {s: statuses.count(s) for s in sorted(set(statuses))}
    rep: dict = {"n_paths": ens.n_paths, "base_seed": ens.base_seed, "status_counts": counts,
                 "paths": [{"index": r.index, "seed": r.seed, "status": r.record.status,
                            "stop_time": r.record.stop_time} for r in ens.results]}
    if ens.n_paths == 0:
        return rep
    k = int(round(ens.T_eval / (ens.grid[1] - ens.grid[0]))) if len(ens.grid) > 1 else 0
    k = min(k, len(ens.grid) - 1)
    V = ens.stacked(lambda r: r.wealth.V)
    Vm = ens.stacked(lambda r: r.wealth.V_master)
    VF = ens.stacked(lambda r: r.frictionless_V)
    w = ens.results[0].record.w
    vT = float(_nanstat(np.nanmean, V[:, k], 0))
    vmT = float(_nanstat(np.nanmean, Vm[:, k], 0))
    vfT = float(_nanstat(np.nanmean, VF[:, k], 0))

    def drift_after(X):
        after = X[:, k:]
        return float(np.nanmax(np.abs(after - after[:, :1]))) if after.shape[1] else 0.0

    eigs = [np.nanmin(r.record.min_eig) for r in ens.results
            if np.any(np.isfinite(r.record.min_eig))]
    rep.update({
        "T_eval": ens.T_eval,
        "mean_V_impact_T": vT,
        "mean_V_master_T": vmT,
        "mean_V_frictionless_T": vfT,
        "gap_nominal": w * (vfT - vT),
        "gap_nominal_master": w * (vfT - vmT),
        "min_V_impact_T": float(np.nanmin(V[:, k])),
        "max_abs_V_master_change_after_T": drift_after(Vm),
        "max_abs_V_change_after_T": drift_after(V),
        "min_eig_AP": float(min(eigs)) if eigs else math.nan,
        "max_abs_residual": float(max(np.abs(r.wealth.residual).max() for r in ens.results)),
    })
    dv = [r.dv for r in ens.results if r.dv is not None]
    if dv:
        st = dv_stats(np.concatenate(dv))
        rep["daily_volume"] = {k2: st[k2] for k2 in ("count", "median", "p5", "p95", "p1", "p99")}
    return rep


def reproduce_experiment(cfg, n_paths: int | None = None, seed: int | None = None,
                         workers: int | None = None):
    """Run the desk-scale experiment; returns ``(ensemble, report, panels)``."""
    from .simulator import run_monte_carlo

    n = cfg.paths if n_paths is None else n_paths
    s = cfg.seed if seed is None else seed
    wk = cfg.workers if workers is None else workers
    ens = run_monte_carlo(cfg, n, s, workers=wk)
    report = ensemble_report(ens)
    report["config_mismatches"] = config_mismatches(cfg)
    return ens, report, ensemble_panels(ens)
