"""Drift, diffusion and covariation loadings of the coupled price/holdings/impact system."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .generating import GeneratorJet, arrow_mat, arrow_tensor, arrow_vec

COND_LIMIT = 1e12


class DegenerateError(RuntimeError):
    """The price-response matrix is (numerically) singular."""


@dataclass
class CoeffContext:
    """State at which coefficients are evaluated.

    ``cap0``/``cap`` are the total capitalizations at the initial and current
    observed prices; ``mu`` the current weights; ``bJ`` the impact-state drift.
    """

    t: float
    p: np.ndarray
    J: np.ndarray
    w: float
    N: np.ndarray
    cap0: float
    jet: GeneratorJet
    dth: np.ndarray
    dxh: np.ndarray
    dxxh: np.ndarray
    Kdiag: np.ndarray
    bJ: np.ndarray

    @property
    def cap(self) -> float:
        return float((self.N * self.p).sum())

    @property
    def mu(self) -> np.ndarray:
        m = self.N * self.p / self.cap
        return m / m.sum()


@dataclass
class CoeffSet:
    alphaP: np.ndarray
    betaP: np.ndarray
    gammaP: np.ndarray
    alphaQ: np.ndarray
    betaQ: np.ndarray
    gammaQ: np.ndarray
    alphaJ: np.ndarray
    betaJ: np.ndarray
    gammaJ: np.ndarray
    AP: np.ndarray
    AQ: np.ndarray


def assemble_AQ(ctx: CoeffContext) -> np.ndarray:
    c = ctx.w / (ctx.cap0 * ctx.cap)
    return c * np.outer(ctx.N, ctx.N) * arrow_mat(ctx.jet.hess, ctx.mu)


def assemble_AP(ctx: CoeffContext, AQ: np.ndarray | None = None) -> np.ndarray:
    if AQ is None:
        AQ = assemble_AQ(ctx)
    return np.eye(len(ctx.p)) - (ctx.dxh * ctx.Kdiag)[:, None] * AQ


def assemble_B_upsilon(ctx: CoeffContext) -> tuple[np.ndarray, np.ndarray]:
    mu = ctx.mu
    cap = ctx.cap
    hess = ctx.jet.hess
    # row j of R is the centered gradient of dG/dmu_j
    R = hess - (hess @ mu)[:, None]
    X = ctx.w * ctx.N**2 * ctx.dxh * ctx.Kdiag / (ctx.cap0 * cap)
    B = -2.0 * hess + (R * X) @ R.T
    scale = ctx.w / (ctx.cap0 * cap * cap)
    NNN = np.einsum("i,l,m->ilm", ctx.N, ctx.N, ctx.N)
    Hs = arrow_mat(hess, mu)
    inner = (-Hs[:, None, :]
             + 0.5 * arrow_tensor(ctx.jet.third, mu)
             + 0.5 * arrow_mat(B, mu)[None, :, :])
    return B, scale * NNN * inner


def solve_response(AP: np.ndarray) -> np.ndarray:
    """``AP^{-1}`` via LU with partial pivoting; raises on ill-conditioning."""
    if not np.all(np.isfinite(AP)):
        raise DegenerateError("non-finite response matrix")
    try:
        with warnings.catch_warnings():
            # exact singularity is reported below as DegenerateError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(AP, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DegenerateError(str(exc)) from None
    if np.any(np.diag(lu[0]) == 0):
        raise DegenerateError("singular response matrix")
    X = scipy.linalg.lu_solve(lu, np.eye(len(AP)), check_finite=False)
    cond = np.abs(AP).sum(axis=0).max() * np.abs(X).sum(axis=0).max()
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateError(
            f"response matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}; "
            "the generating function likely violates directional concavity")
    return X


def assemble_coefficients(ctx: CoeffContext) -> CoeffSet:
    mu = ctx.mu
    AQ = assemble_AQ(ctx)
    AP = assemble_AP(ctx, AQ)
    betaP = solve_response(AP)
    _, ups = assemble_B_upsilon(ctx)

    K = ctx.Kdiag
    time_tilt = ctx.w / ctx.cap0 * ctx.N * arrow_vec(ctx.jet.grad_dt, mu)
    alphaP = betaP @ (ctx.dth + ctx.dxh * ctx.bJ + ctx.dxh * K * time_tilt)

    # sum_{l,m} ups[i,l,m] betaP[l,j] betaP[m,k]
    ubb = np.einsum("ilm,lj,mk->ijk", ups, betaP, betaP, optimize=True)
    AQb = AQ @ betaP
    gtilde = (ctx.dxh * K)[:, None, None] * ubb \
        + 0.5 * (ctx.dxxh * K * K)[:, None, None] * AQb[:, :, None] * AQb[:, None, :]
    gammaP = np.einsum("il,ljk->ijk", betaP, gtilde)
    gammaQ = np.einsum("il,ljk->ijk", AQ, gammaP) + ubb
    gammaP = 0.5 * (gammaP + gammaP.transpose(0, 2, 1))
    gammaQ = 0.5 * (gammaQ + gammaQ.transpose(0, 2, 1))

    betaQ = AQb
    alphaQ = AQ @ alphaP + time_tilt
    return CoeffSet(
        alphaP=alphaP,
        betaP=betaP,
        gammaP=gammaP,
        alphaQ=alphaQ,
        betaQ=betaQ,
        gammaQ=gammaQ,
        alphaJ=K * alphaQ + ctx.bJ,
        betaJ=K[:, None] * betaQ,
        gammaJ=K[:, None, None] * gammaQ,
        AP=AP,
        AQ=AQ,
    )


def check_eigen_lower_bound(AP) -> float:
    AP = np.asarray(AP, dtype=float)
    if AP.ndim != 2 or AP.shape[0] != AP.shape[1]:
        raise ValueError("square matrix required")
    try:
        ev = np.linalg.eigvals(AP)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigenvalue computation failed: {exc}") from None
    return float(ev.real.min())
