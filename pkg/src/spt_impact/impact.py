"""Propagator price impact: decay kernels, shape functions, impact state.

Observed price is ``P = S + h(t, J)`` with ``J(t) = J0(t) + int_0^t K(t,s) dQ(s)``.
Shapes are separable, ``h(t, x) = lam * phi(t) * base(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KERNEL_KINDS = ("exponential", "shifted_power", "permanent", "permanent_plus_exponential")
SHAPE_KINDS = ("linear", "asinh", "regularized_power")
PHI_KINDS = ("constant", "periodic")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "exponential"
    beta: float = 2.0
    epsilon: float = 1.0
    beta_exp: float = 0.5
    C: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            hint = ""
            if self.kind == "power":
                hint = (" (the unshifted power law (t-s)^-b is singular on the diagonal; "
                        "use shifted_power)")
            raise ValueError(f"unknown kernel kind {self.kind!r}{hint}")
        if self.kind in ("exponential", "permanent_plus_exponential") and self.beta <= 0:
            raise ValueError("kernel beta must be positive")
        if self.kind == "shifted_power" and (self.epsilon <= 0 or not 0 < self.beta_exp < 1):
            raise ValueError("shifted_power needs epsilon > 0 and beta_exp in (0, 1)")
        if self.kind in ("permanent", "permanent_plus_exponential") and self.C <= 0:
            raise ValueError("permanent kernel constant C must be positive")

    @property
    def markov(self) -> bool:
        return self.kind != "shifted_power"

    def sup_diag(self) -> float:
        """Kbar = sup_t K(t, t)."""
        if self.kind == "exponential":
            return 1.0
        if self.kind == "shifted_power":
            return self.epsilon ** -self.beta_exp
        if self.kind == "permanent":
            return self.C
        return self.C + 1.0

    def diag(self, t: float) -> float:
        # all shipped kernels are convolution type, so K(t,t) = K(0)
        return self.sup_diag()


def kernel_eval(spec: KernelSpec, t, s):
    """Return ``(K, dK/dt, dK/ds, d2K/dsdt)`` at ``(t, s)``; ``t >= s`` required."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tau = t - s
    if np.any(tau < 0):
        raise ValueError("kernel evaluated with t < s")
    kind = spec.kind
    if kind == "permanent":
        one = np.ones_like(tau)
        zero = np.zeros_like(tau)
        return spec.C * one, zero, zero, zero
    if kind == "shifted_power":
        b = spec.beta_exp
        x = tau + spec.epsilon
        K = x**-b
        dt = -b * x ** (-b - 1)
        return K, dt, -dt, -b * (b + 1) * x ** (-b - 2)
    e = np.exp(-spec.beta * tau)
    b = spec.beta
    K = e + (spec.C if kind == "permanent_plus_exponential" else 0.0)
    return K, -b * e, b * e, -b * b * e


@dataclass(frozen=True)
class ShapeSpec:
    kind: str = "linear"
    lam: float = 6.08e-8
    scale: float = 1.0
    p: float = 0.5
    knee: float = 1.0
    phi: str = "constant"
    phi_amp: float = 0.0
    phi_period: float = 1.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            hint = " (pure power law is not differentiable at 0; use regularized_power)" \
                if self.kind == "power" else ""
            raise ValueError(f"unknown shape kind {self.kind!r}{hint}")
        if self.lam < 0:
            raise ValueError("shape scale lam must be nonnegative")
        if self.kind == "asinh" and self.scale <= 0:
            raise ValueError("asinh scale must be positive")
        if self.kind == "regularized_power" and (not 0 < self.p < 1 or self.knee <= 0):
            raise ValueError("regularized_power needs p in (0, 1) and knee > 0")
        if self.phi not in PHI_KINDS:
            raise ValueError(f"unknown time factor {self.phi!r}")
        if self.phi == "periodic" and (not 0 <= self.phi_amp < 1 or self.phi_period <= 0):
            raise ValueError("periodic phi needs amplitude in [0, 1) and positive period")

    # time factor
    def phi_eval(self, t):
        if self.phi == "constant":
            return 1.0, 0.0
        w = 2.0 * math.pi / self.phi_period
        return 1.0 + self.phi_amp * np.cos(w * t), -self.phi_amp * w * np.sin(w * t)

    def phi_sup(self) -> float:
        return 1.0 + (self.phi_amp if self.phi == "periodic" else 0.0)

    # base shape and its first two derivatives, odd in x
    def base(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x, np.ones_like(x), np.zeros_like(x)
        if self.kind == "asinh":
            s = self.scale
            y = x / s
            r = np.sqrt(1.0 + y * y)
            return np.arcsinh(y), 1.0 / (s * r), -y / (s * s * r**3)
        u = np.abs(x)
        sg = np.sign(x)
        b, b1, b2 = _regpow(u, self.p, self.knee)
        return sg * b, b1, sg * b2

    def hhat(self, x):
        """Time-free part ``lam * base(x)``."""
        return self.lam * self.base(x)[0]

    def hhat_prime_sup(self) -> float:
        if self.kind == "asinh":
            return self.lam / self.scale
        # linear, and regularized_power whose slope peaks on the linear segment
        return self.lam

    def hhat_inverse(self, y: float) -> float:
        """Pseudo-inverse: smallest |x| with hhat(x) = y on the side of sign(y)."""
        if y == 0.0:
            return 0.0
        if self.lam == 0.0:
            return math.copysign(math.inf, y)
        if self.kind == "linear":
            return y / self.lam
        if self.kind == "asinh":
            z = y / self.lam
            if abs(z) > 700:
                return math.copysign(math.inf, y)
            return self.scale * math.sinh(z)
        target = abs(y) / self.lam
        hi = max(self.knee, 1.0)
        while _regpow(np.array(hi), self.p, self.knee)[0] < target:
            hi *= 2.0
            if not math.isfinite(hi):
                return math.copysign(math.inf, y)
        lo = 0.0
        # bisect down to adjacent floats
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _regpow(np.array(mid), self.p, self.knee)[0] < target:
                lo = mid
            else:
                hi = mid
        return math.copysign(hi, y)


def _regpow(u, p, k):
    """Linear on [0, k], C^2 Hermite blend on [k, 2k], k/p (u/k)^p growth beyond."""
    u = np.asarray(u, dtype=float)
    y1 = 2.0 ** (p - 1.0)
    m1 = (p - 1.0) * 2.0 ** (p - 2.0)
    b_2k = k * (1.0 + 0.5 + 0.5 * y1 - m1 / 12.0)
    s = np.clip((u - k) / k, 0.0, 1.0)
    s2, s3 = s * s, s * s * s
    f = (2 * s3 - 3 * s2 + 1) + y1 * (-2 * s3 + 3 * s2) + m1 * (s3 - s2)
    F = (0.5 * s2 * s2 - s3 + s) + y1 * (-0.5 * s2 * s2 + s3) + m1 * (0.25 * s2 * s2 - s3 / 3)
    fp = ((6 * s2 - 6 * s) + y1 * (-6 * s2 + 6 * s) + m1 * (3 * s2 - 2 * s)) / k
    r = np.maximum(u, 2 * k) / k
    b = np.where(u <= k, u, np.where(u < 2 * k, k + k * F, b_2k + k / p * (r**p - 2.0**p)))
    b1 = np.where(u <= k, 1.0, np.where(u < 2 * k, f, r ** (p - 1)))
    b2 = np.where(u <= k, 0.0, np.where(u < 2 * k, fp, (p - 1) * r ** (p - 2) / k))
    return b, b1, b2


def shape_eval(spec: ShapeSpec, t, x):
    """Return ``(h, dh/dt, dh/dx, d2h/dx2)``."""
    phi, dphi = spec.phi_eval(t)
    b, b1, b2 = spec.base(x)
    lam = spec.lam
    return lam * phi * b, lam * dphi * b, lam * phi * b1, lam * phi * b2


@dataclass(frozen=True)
class ImpactSpec:
    """Per-asset impact model. ``J0(t) = j0_inf + (j0 - j0_inf) exp(-j0_rate t)``."""

    kernel: KernelSpec = field(default_factory=KernelSpec)
    shape: ShapeSpec = field(default_factory=ShapeSpec)
    j0: float = 0.0
    j0_inf: float = 0.0
    j0_rate: float = 0.0

    def J0(self, t: float) -> float:
        if self.j0_rate == 0.0:
            return self.j0
        return self.j0_inf + (self.j0 - self.j0_inf) * math.exp(-self.j0_rate * t)

    def J0_prime(self, t: float) -> float:
        if self.j0_rate == 0.0:
            return 0.0
        return -self.j0_rate * (self.j0 - self.j0_inf) * math.exp(-self.j0_rate * t)


def bJ_eval(spec: ImpactSpec, t: float, grid: np.ndarray, Q: np.ndarray) -> float:
    """Impact-state drift from the stored holdings path on ``[0, t]``.

    The ``d2K/dsdt`` integral is a trapezoid rule on the grid; ``Q(t)`` is
    linearly interpolated when ``t`` falls between grid points.
    """
    grid = np.asarray(grid, dtype=float)
    Q = np.asarray(Q, dtype=float)
    tol = 1e-9 * max(1.0, abs(t))
    if len(grid) == 0 or abs(grid[0]) > tol or t > grid[-1] + tol or t < -tol:
        raise ValueError(f"holdings path does not cover [0, {t}]")
    k = spec.kernel
    if k.kind == "permanent":
        return spec.J0_prime(t)
    n = int(np.searchsorted(grid, t + tol, side="right"))
    s = np.minimum(grid[:n], t)  # a grid point within rounding of t counts as t
    q = Q[:n]
    if t - s[-1] > tol:
        s = np.append(s, t)
        q = np.append(q, np.interp(t, grid, Q))
    qt = q[-1]
    _, dtK_tt, _, _ = kernel_eval(k, t, t)
    _, dtK_t0, _, _ = kernel_eval(k, t, 0.0)
    if len(s) > 1:
        dst = kernel_eval(k, t, s)[3]
        integral = np.trapezoid(dst * q, s) if hasattr(np, "trapezoid") else np.trapz(dst * q, s)
    else:
        integral = 0.0
    return float(spec.J0_prime(t) + dtK_tt * qt - dtK_t0 * q[0] - integral)


def bJ_markov(spec: ImpactSpec, t: float, J: float, Q: float, Q0: float) -> float:
    """Closed-form drift for kernels whose impact state is Markov.

    Exponential: ``J0' - beta (J - J0)``; permanent: ``J0'``; permanent plus
    exponential: only the decaying part ``J - J0 - C (Q - Q0)`` relaxes.
    """
    k = spec.kernel
    if k.kind == "permanent":
        return spec.J0_prime(t)
    transient = J - spec.J0(t)
    if k.kind == "permanent_plus_exponential":
        transient -= k.C * (Q - Q0)
    elif k.kind != "exponential":
        raise ValueError(f"{k.kind} kernel has no Markov drift")
    return spec.J0_prime(t) - k.beta * transient


def step_impact_state(
    spec: ImpactSpec,
    t: float,
    J: float,
    dQ: float,
    dt: float,
    grid: np.ndarray | None = None,
    Q: np.ndarray | None = None,
    method: str = "auto",
) -> float:
    """Advance the impact state over ``[t, t + dt]`` with a trade ``dQ``.

    ``method="auto"`` uses exact decay for the exponential kernel and the
    Euler step ``J + K(t,t) dQ + bJ dt`` otherwise.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    k = spec.kernel
    if method == "exact" or (method == "auto" and k.kind == "exponential"):
        if k.kind != "exponential":
            raise ValueError("exact decay only exists for the exponential kernel")
        return spec.J0(t + dt) + math.exp(-k.beta * dt) * (J - spec.J0(t)) + dQ
    if k.kind == "permanent" and grid is None:
        bJ = spec.J0_prime(t)
    else:
        if grid is None or Q is None:
            raise ValueError("generic step needs the holdings path")
        bJ = bJ_eval(spec, t, grid, Q)
    return J + k.diag(t) * dQ + bJ * dt


def impact_from_state(specs: Sequence[ImpactSpec], t: float, J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    return np.array([float(shape_eval(s.shape, t, j)[0]) for s, j in zip(specs, J)])


def calibrate_linear_lambda(
    S0: float, target_bp: float, adv_frac: float, ADV: float, beta: float
) -> float:
    """Linear impact scale such that a day of TWAP at ``adv_frac * ADV`` per day
    under exponential decay averages ``target_bp`` basis points of ``S0``."""
    if min(S0, target_bp, adv_frac, ADV, beta) <= 0:
        raise ValueError("all calibration inputs must be positive")
    avg_state_per_lam = adv_frac * ADV / beta**2 * (beta - 1.0 + math.exp(-beta))
    return S0 * target_bp * 1e-4 / avg_state_per_lam


class ImpactModel:
    """Vector view over per-asset impact specs, used in the hot loop."""

    def __init__(self, specs: Sequence[ImpactSpec]):
        self.specs = tuple(specs)
        self.d = len(self.specs)
        self.Kbar = np.array([s.kernel.sup_diag() for s in self.specs])
        self.all_markov = all(s.kernel.markov for s in self.specs)
        self.zero = all(s.shape.lam == 0.0 for s in self.specs)

    def J0(self, t: float) -> np.ndarray:
        return np.array([s.J0(t) for s in self.specs])

    def kernel_diag(self, t: float) -> np.ndarray:
        return np.array([s.kernel.diag(t) for s in self.specs])

    def shape_partials(self, t: float, J: np.ndarray):
        """Arrays ``(h, dth, dxh, dxxh)`` at ``(t, J_i)`` per asset."""
        out = np.empty((4, self.d))
        for i, s in enumerate(self.specs):
            out[:, i] = [float(v) for v in shape_eval(s.shape, t, J[i])]
        return out[0], out[1], out[2], out[3]

    def step_drift(self, t: float, dt: float, J: np.ndarray, grid: np.ndarray,
                   Q: np.ndarray) -> np.ndarray:
        """Drift to use over ``[t, t + dt]`` in the Euler scheme.

        For decaying exponential parts this is the exact relaxation over the
        step divided by ``dt``, so ``J + K dQ + drift dt`` is the exact decay
        update; other kernels use the instantaneous drift.
        """
        out = self.drift(t, J, grid, Q)
        for i, s in enumerate(self.specs):
            k = s.kernel
            if k.kind not in ("exponential", "permanent_plus_exponential"):
                continue
            transient = J[i] - s.J0(t)
            if k.kind == "permanent_plus_exponential":
                transient -= k.C * (Q[-1, i] - Q[0, i])
            out[i] = (s.J0(t + dt) - s.J0(t) + math.expm1(-k.beta * dt) * transient) / dt
        return out

    def drift(self, t: float, J: np.ndarray, grid: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """``b^J`` at time ``t``; ``grid``/``Q`` hold the path up to and including t."""
        out = np.empty(self.d)
        for i, s in enumerate(self.specs):
            if s.kernel.markov:
                out[i] = bJ_markov(s, t, J[i], Q[-1, i], Q[0, i])
            else:
                out[i] = bJ_eval(s, t, grid, Q[:, i])
        return out
