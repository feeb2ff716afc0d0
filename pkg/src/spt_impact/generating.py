"""Generating functions, their derivative jets, the ramp, and centering operators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FAMILIES = (
    "constant_one",
    "quadratic",
    "entropy",
    "diversity_p",
    "geometric_mean",
    "additively_symmetric",
)
SIMPLEX_TOL = 1e-12


class SimplexError(ValueError):
    """Weight vector is not a strictly positive probability vector."""


@dataclass(frozen=True)
class Ramp:
    T0: float
    T1: float
    T: float

    def __post_init__(self):
        if not 0 < self.T0 < self.T1 < self.T:
            raise ValueError(f"ramp times must satisfy 0 < T0 < T1 < T, got "
                             f"({self.T0}, {self.T1}, {self.T})")


def _chi(u: float) -> tuple[float, float]:
    if u >= 1.0:
        return 1.0, 0.0
    if u <= 0.0:
        return 0.0, 0.0
    return 3 * u * u - 2 * u**3, 6 * u - 6 * u * u


def ramp_psi(T0: float, T1: float, T: float, t: float) -> tuple[float, float]:
    """Smooth on/off profile: rises from 0 to 1 on [0, T0], flat to T1, back to 0 at T."""
    Ramp(T0, T1, T)
    if t <= T1:
        c, dc = _chi(t / T0)
        return c, dc / T0
    L = T - T1
    c, dc = _chi((t - T1) / L)
    return 1.0 - c, -dc / L


@dataclass
class GeneratorJet:
    G: float
    dtG: float
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray
    grad_dt: np.ndarray


class _SymbolicScalar:
    """Scalar function g(x) from an expression string with exact derivatives.

    Lambdified callables are rebuilt after unpickling so specs can cross
    process boundaries.
    """

    def __init__(self, expr: str):
        self.expr = expr
        self._fns = None

    def __getstate__(self):
        return {"expr": self.expr}

    def __setstate__(self, state):
        self.expr = state["expr"]
        self._fns = None

    def fns(self):
        if self._fns is None:
            import sympy

            x = sympy.Symbol("x", positive=True)
            e = sympy.sympify(self.expr, locals={"x": x})
            ds = [e]
            for _ in range(3):
                ds.append(sympy.diff(ds[-1], x))
            self._fns = [sympy.lambdify(x, di, "numpy") for di in ds]
        return self._fns

    def __call__(self, x, order: int = 0):
        v = self.fns()[order](x)
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(x)).copy()


def _fd_scalar(g: Callable, x: np.ndarray, order: int) -> np.ndarray:
    """Central differences of a scalar callable, used when g has no derivatives."""
    if order == 0:
        return np.asarray(g(x), dtype=float)
    h = 1e-3 * np.maximum(np.abs(x), 1e-3) if order == 3 else 1e-4 * np.maximum(np.abs(x), 1e-3)
    if order == 1:
        return (g(x + h) - g(x - h)) / (2 * h)
    if order == 2:
        return (g(x + h) - 2 * g(x) + g(x - h)) / (h * h)
    return (g(x + 2 * h) - 2 * g(x + h) + 2 * g(x - h) - g(x - 2 * h)) / (2 * h**3)


@dataclass(frozen=True)
class GeneratorSpec:
    """Generating function ``G(t, mu) = nu * psi(t) * H(mu)`` (``psi = 1`` without ramp).

    ``g`` for the additively symmetric family is either an expression in ``x``
    (exact derivatives) or a callable (finite-difference derivatives).
    """

    family: str = "quadratic"
    nu: float = 1.0
    ramp: Ramp | None = None
    p: float = 0.5
    weights: tuple[float, ...] | None = None
    g: str | Callable | None = None
    _gfun: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown generator family {self.family!r}")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.family == "diversity_p" and not 0 < self.p < 1:
            raise ValueError("diversity_p needs p in (0, 1)")
        if self.family == "geometric_mean":
            if self.weights is None or min(self.weights) <= 0 or \
                    abs(sum(self.weights) - 1.0) > 1e-12:
                raise ValueError("geometric_mean needs positive weights summing to 1")
            object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        if self.family == "additively_symmetric":
            if self.g is None:
                raise ValueError("additively_symmetric needs a scalar function g")
            gf = _SymbolicScalar(self.g) if isinstance(self.g, str) else None
            if gf is not None:
                gf.fns()  # surface parse errors at construction
            object.__setattr__(self, "_gfun", gf)

    def scale(self, t: float) -> tuple[float, float]:
        if self.ramp is None:
            return self.nu, 0.0
        psi, dpsi = ramp_psi(self.ramp.T0, self.ramp.T1, self.ramp.T, t)
        return self.nu * psi, self.nu * dpsi

    def _g(self, x, order):
        if self._gfun is not None:
            return self._gfun(x, order)
        return _fd_scalar(self.g, x, order)

    def base_jet(self, mu: np.ndarray):
        """``(H, grad, hess, third)`` of the time-free generating function."""
        d = len(mu)
        fam = self.family
        hess = np.zeros((d, d))
        third = np.zeros((d, d, d))
        idx = np.arange(d)
        if fam == "constant_one":
            return 1.0, np.zeros(d), hess, third
        if fam == "quadratic":
            return 1.0 - 0.5 * float(mu @ mu), -mu.copy(), -np.eye(d), third
        if fam in ("entropy", "additively_symmetric"):
            if fam == "entropy":
                lm = np.log(mu)
                H = -float(mu @ lm)
                g1, g2, g3 = -lm - 1.0, -1.0 / mu, 1.0 / mu**2
            else:
                H = float(np.sum(self._g(mu, 0)))
                g1, g2, g3 = (self._g(mu, k) for k in (1, 2, 3))
            hess[idx, idx] = g2
            third[idx, idx, idx] = g3
            return H, np.asarray(g1, dtype=float), hess, third
        if fam == "diversity_p":
            p = self.p
            s = float(np.sum(mu**p))
            D = s ** (1.0 / p)
            a = mu ** (p - 1)
            b = mu ** (p - 2)
            e = mu ** (p - 3)
            c1, c2, c3 = D / s, D / s**2, D / s**3
            grad = c1 * a
            hess = (1 - p) * c2 * np.outer(a, a)
            hess[idx, idx] += (p - 1) * c1 * b
            third = (1 - p) * (1 - 2 * p) * c3 * np.einsum("i,j,k->ijk", a, a, a)
            ba = np.einsum("ij,k->ijk", np.diag(b), a)  # delta_ij b_i a_k
            third -= (1 - p) ** 2 * c2 * (ba + ba.transpose(0, 2, 1) + ba.transpose(2, 0, 1))
            third[idx, idx, idx] += (p - 1) * (p - 2) * c1 * e
            return D, grad, hess, third
        # geometric_mean
        pw = np.asarray(self.weights)
        if len(pw) != d:
            raise ValueError("geometric_mean weights length differs from d")
        G = float(np.exp(pw @ np.log(mu)))
        r = pw / mu
        q = pw / mu**2
        hess = G * (np.outer(r, r) - np.diag(q))
        dq = np.einsum("ij,k->ijk", np.diag(q), r)  # delta_ij q_i r_k
        third = G * (np.einsum("i,j,k->ijk", r, r, r) - dq - dq.transpose(0, 2, 1)
                     - dq.transpose(2, 0, 1))
        third[idx, idx, idx] += G * 2 * pw / mu**3
        return G, G * r, hess, third


def check_simplex(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or np.any(~np.isfinite(mu)) or np.any(mu <= 0) or \
            abs(mu.sum() - 1.0) > SIMPLEX_TOL * max(1, len(mu)):
        raise SimplexError(f"not a point of the open simplex: {mu}")
    return mu


def g_jet(spec: GeneratorSpec, t: float, mu) -> GeneratorJet:
    mu = check_simplex(mu)
    H, grad, hess, third = spec.base_jet(mu)
    sc, dsc = spec.scale(t)
    return GeneratorJet(
        G=sc * H,
        dtG=dsc * H,
        grad=sc * grad,
        hess=sc * hess,
        third=sc * third,
        grad_dt=dsc * grad,
    )


def arrow_vec(phi, x) -> np.ndarray:
    """Center a vector against weights: ``phi_i - phi . x``."""
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    if phi.shape != x.shape or phi.ndim != 1:
        raise ValueError("arrow_vec needs equal-length vectors")
    return phi - phi @ x


def arrow_mat(M, x) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    d = len(x)
    if M.shape != (d, d):
        raise ValueError("arrow_mat needs a square matrix matching x")
    Mx = M @ x
    xM = x @ M
    return M - Mx[:, None] - xM[None, :] + x @ Mx


def arrow_tensor(T, x) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    x = np.asarray(x, dtype=float)
    d = len(x)
    if T.shape != (d, d, d):
        raise ValueError("arrow_tensor needs a cubic tensor matching x")
    one = (np.einsum("ljk,l->jk", T, x)[None, :, :]
           + np.einsum("ilk,l->ik", T, x)[:, None, :]
           + np.einsum("ijl,l->ij", T, x)[:, :, None])
    two = (np.einsum("ilm,l,m->i", T, x, x)[:, None, None]
           + np.einsum("ljm,l,m->j", T, x, x)[None, :, None]
           + np.einsum("lmk,l,m->k", T, x, x)[None, None, :])
    three = np.einsum("lmn,l,m,n->", T, x, x, x)
    return T - one + two - three


def target_holdings_initial(spec: GeneratorSpec, w: float, N, p0) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0 <= 0) or w <= 0:
        raise ValueError("need positive prices and wealth")
    mu, cap = weights_from_prices(N, p0)
    jet = g_jet(spec, 0.0, mu)
    return w * N / cap * (jet.grad + 1.0 - jet.grad @ mu)


def weights_from_prices(N, p) -> tuple[np.ndarray, float]:
    """Market weights and total capitalization; weights renormalized to sum to 1."""
    cap_parts = np.asarray(N) * np.asarray(p)
    cap = float(cap_parts.sum())
    mu = cap_parts / cap
    return mu / mu.sum(), cap


def F_values(jet: GeneratorJet, mu: np.ndarray) -> np.ndarray:
    """``dG_i + G - grad . mu``, the bracket whose variation drives the impact cost."""
    return jet.grad + jet.G - jet.grad @ mu


def entropy_horizon(d: int, eps: float, delta: float) -> float:
    """Alternative horizon for the entropy generator, ``2 log d / (delta eps)``."""
    return 2.0 * math.log(d) / (delta * eps)
