"""Euler scheme for the coupled price/holdings/impact system and the Monte Carlo driver."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import (CoeffContext, DegenerateError, assemble_coefficients,
                           check_eigen_lower_bound)
from .generating import GeneratorSpec, g_jet, target_holdings_initial, weights_from_prices
from .impact import ImpactModel, ImpactSpec
from .market import FundamentalPath, analytic_qv, build_fundamental_path

STATUSES = ("completed", "stopped_mu_floor", "stopped_cap", "solver_degenerate")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.5
    horizon: float = 1323.0
    mu_floor: float = 1e-6
    cap_floor: float = 1.0
    cap_ceiling: float = 1e18
    record_stride: int = 1
    qv_mode: str = "realized"
    exact_decay: bool = True

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon >= 0:
            raise ValueError("dt must be positive and horizon nonnegative")
        if min(self.mu_floor, self.cap_floor, self.cap_ceiling) <= 0 or \
                self.cap_floor >= self.cap_ceiling:
            raise ValueError("stop thresholds must be positive with cap_floor < cap_ceiling")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.qv_mode not in ("realized", "analytic"):
            raise ValueError("qv_mode must be realized or analytic")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class PathRecord:
    """Full-resolution trajectory of one simulated path.

    Rows ``0..n`` of every series are valid states; when the path stops early
    the breaching state is not stored and ``stop_time`` is the last good time.
    """

    grid: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    J: np.ndarray
    mu: np.ndarray
    S: np.ndarray
    status: str
    stop_time: float
    min_eig: np.ndarray
    w: float
    N: np.ndarray
    impacts: tuple[ImpactSpec, ...]
    generator: GeneratorSpec
    message: str = ""

    @property
    def cap(self) -> np.ndarray:
        return (self.P * self.N).sum(axis=1)

    @property
    def steps(self) -> int:
        return len(self.grid) - 1


def detect_stop(mu: np.ndarray, cap: float, sim: SimConfig) -> str | None:
    """Status tag if the state breaches a threshold, else ``None``."""
    if not (np.all(np.isfinite(mu)) and math.isfinite(cap)):
        return "stopped_cap"
    if mu.min() < sim.mu_floor:
        return "stopped_mu_floor"
    if not sim.cap_floor <= cap <= sim.cap_ceiling:
        return "stopped_cap"
    return None


def _aligned(fpath: FundamentalPath, dt: float, steps: int) -> FundamentalPath:
    """Subsample a finer fundamental grid to step ``dt`` and cut it to ``steps``."""
    base = fpath.grid[1] - fpath.grid[0] if fpath.steps >= 1 else dt
    stride = int(round(dt / base))
    if stride < 1 or abs(stride * base - dt) > 1e-9 * dt:
        raise ValueError(f"fundamental grid step {base} does not divide dt={dt}")
    sub = fpath.subsample(stride)
    return sub.truncate(min(steps, sub.steps))


def simulate_path(exp, fpath: FundamentalPath) -> PathRecord:
    """Run the Euler scheme on one fundamental path.

    ``exp`` supplies ``impacts``, ``generator``, ``w``, ``N`` and ``sim``.
    """
    sim: SimConfig = exp.sim
    gen: GeneratorSpec = exp.generator
    model = ImpactModel(exp.impacts)
    N = np.asarray(exp.N, dtype=float)
    w = float(exp.w)
    dt = sim.dt
    fp = _aligned(fpath, dt, sim.steps)
    M = fp.steps
    d = fp.d
    if model.d != d or len(N) != d:
        raise ValueError("impact specs, shares outstanding and price path disagree on d")
    if sim.qv_mode == "analytic" and fp.mu1 is None:
        raise ValueError("analytic quadratic variation needs a simulated fundamental path")

    grid = fp.grid
    S = fp.S
    P = np.empty((M + 1, d))
    Q = np.empty((M + 1, d))
    J = np.empty((M + 1, d))
    min_eig = np.full(M + 1, np.nan)

    J[0] = model.J0(0.0)
    h0 = model.shape_partials(0.0, J[0])[0]
    P[0] = S[0] + h0
    cap0 = weights_from_prices(N, P[0])[1]
    Q[0] = target_holdings_initial(gen, w, N, P[0])
    status = "completed"
    message = ""
    last = M
    eye = np.eye(d)

    for k in range(M):
        t = grid[k]
        p, q, j = P[k], Q[k], J[k]
        mu, cap = weights_from_prices(N, p)
        _, dth, dxh, dxxh = model.shape_partials(t, j)
        Kd = model.kernel_diag(t)
        bJ = model.step_drift(t, dt, j, grid[: k + 1], Q[: k + 1]) if sim.exact_decay \
            else model.drift(t, j, grid[: k + 1], Q[: k + 1])
        ctx = CoeffContext(t=t, p=p, J=j, w=w, N=N, cap0=cap0, jet=g_jet(gen, t, mu),
                           dth=dth, dxh=dxh, dxxh=dxxh, Kdiag=Kd, bJ=bJ)
        try:
            co = assemble_coefficients(ctx)
        except DegenerateError as exc:
            status, message, last = "solver_degenerate", str(exc), k
            break
        min_eig[k] = check_eigen_lower_bound(co.AP)

        dS = S[k + 1] - S[k]
        if sim.qv_mode == "realized":
            qv = np.outer(dS, dS)
        else:
            qv = analytic_qv(fp, k, dt)
        # update the deviation from the fundamental so zero impact keeps P == S exactly
        dev = (p - S[k]) + co.alphaP * dt + (co.betaP - eye) @ dS \
            + np.einsum("ijk,jk->i", co.gammaP, qv)
        dQ = co.alphaQ * dt + co.betaQ @ dS + np.einsum("ijk,jk->i", co.gammaQ, qv)
        p_new = S[k + 1] + dev
        q_new = q + dQ
        j_new = j + Kd * dQ + bJ * dt

        cap_new = float((N * p_new).sum())
        mu_new = N * p_new / cap_new if cap_new != 0 else np.full(d, np.nan)
        tag = detect_stop(mu_new, cap_new, sim)
        if tag is not None:
            status, last = tag, k
            message = f"threshold breached at t={grid[k + 1]:g}"
            break
        P[k + 1], Q[k + 1], J[k + 1] = p_new, q_new, j_new

    n = last + 1
    P, Q, J = P[:n], Q[:n], J[:n]
    mu = np.array([weights_from_prices(N, row)[0] for row in P]).reshape(P.shape)
    return PathRecord(
        grid=grid[:n].copy(), P=P, Q=Q, J=J, mu=mu, S=S[:n].copy(), status=status,
        stop_time=float(grid[last]), min_eig=min_eig[:n], w=w, N=N,
        impacts=tuple(exp.impacts), generator=gen, message=message,
    )


@dataclass
class PathResult:
    """Per-path reductions kept by the Monte Carlo driver."""

    index: int
    seed: int
    record: PathRecord
    wealth: object  # accounting.WealthSeries
    frictionless_V: np.ndarray
    frictionless_Q: np.ndarray
    dv: np.ndarray | None


@dataclass
class EnsembleSummary:
    results: list[PathResult] = field(default_factory=list)
    base_seed: int = 0
    grid: np.ndarray | None = None
    T_eval: float | None = None

    @property
    def n_paths(self) -> int:
        return len(self.results)

    @property
    def statuses(self) -> list[str]:
        return [r.record.status for r in self.results]

    def stacked(self, getter) -> np.ndarray:
        """Stack a per-path series on the common grid, NaN-padded after a stop."""
        n = len(self.grid)
        rows = []
        for r in self.results:
            v = np.asarray(getter(r), dtype=float)
            pad = np.full((n,) + v.shape[1:], np.nan)
            pad[: len(v)] = v[:n]
            rows.append(pad)
        return np.stack(rows)


def _run_one(args):
    exp, index, seed = args
    from .accounting import frictionless_baseline, master_decomposition
    from .relarb import daily_volume_samples

    fpath = build_fundamental_path(exp.market, seed, exp.sim.steps, exp.sim.dt)
    rec = simulate_path(exp, fpath)
    ws = master_decomposition(rec)
    VF, QF = frictionless_baseline(fpath.truncate(exp.sim.steps), exp.generator, exp.w,
                                   exp.N)
    dv = None
    if abs(exp.sim.dt - 0.5) < 1e-12 and exp.generator.ramp is not None:
        r = exp.generator.ramp
        dv = daily_volume_samples(rec, r.T0, r.T1, r.T)
    return PathResult(index=index, seed=seed, record=rec, wealth=ws, frictionless_V=VF,
                      frictionless_Q=QF, dv=dv)


def run_monte_carlo(exp, n_paths: int, base_seed: int, workers: int = 1) -> EnsembleSummary:
    """Simulate ``n_paths`` paths seeded ``base_seed + index``; results in index order."""
    if n_paths < 0:
        raise ValueError("n_paths must be nonnegative")
    if exp.market.d != 2:
        raise ValueError("Monte Carlo runs use the two-asset fundamental model")
    jobs = [(exp, i, base_seed + i) for i in range(n_paths)]
    if workers > 1 and n_paths > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    grid = exp.sim.dt * np.arange(exp.sim.steps + 1)
    T_eval = exp.generator.ramp.T if exp.generator.ramp is not None else grid[-1]
    return EnsembleSummary(results=results, base_seed=base_seed, grid=grid, T_eval=T_eval)

