"""Flat ``section.key=value`` experiment configuration.

Blank lines and ``#`` comments are ignored; lists are comma separated.
Unindexed ``impact.*`` keys apply to every asset and ``impact.<i>.*``
(1-based) overrides a single asset. An empty file yields the reference
desk-scale experiment.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .generating import GeneratorSpec, Ramp
from .impact import ImpactSpec, KernelSpec, ShapeSpec, calibrate_linear_lambda
from .market import FundamentalParams
from .relarb import FrictionlessConstants
from .simulator import SimConfig


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.split(",") if x.strip())


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _str(v: str) -> str:
    return v.strip()


def _lam(v: str):
    return "calibrate" if v.strip() == "calibrate" else float(v)


MARKET_KEYS: dict[str, Callable] = {
    "d": _int, "N": _floats, "mu0": _floats, "alpha": _float, "eta": _float,
    "delta_S": _float, "cap0": _float, "eps_S": _float, "zeta": _float, "kappa_S": _float,
    "mu_bar": _float,
}
IMPACT_KEYS: dict[str, Callable] = {
    "kernel": _str, "beta": _float, "epsilon": _float, "beta_exp": _float, "C": _float,
    "shape": _str, "lambda": _lam, "scale": _float, "p": _float, "knee": _float,
    "phi": _str, "phi_amp": _float, "phi_period": _float,
    "j0": _float, "j0_inf": _float, "j0_rate": _float,
    "target_bp": _float, "adv_frac": _float, "adv": _float,
}
GENERATOR_KEYS: dict[str, Callable] = {
    "family": _str, "nu": _float, "ramp": _bool, "T0": _float, "T1": _float, "T": _float,
    "p": _float, "weights": _floats, "g": _str, "w": _float,
}
SIM_KEYS: dict[str, Callable] = {
    "dt": _float, "horizon": _float, "mu_floor": _float, "cap_floor": _float,
    "cap_ceiling": _float, "record_stride": _int, "qv_mode": _str, "seed": _int,
    "paths": _int, "workers": _int,
}
RELARB_KEYS: dict[str, Callable] = {"theta": _float, "ell_S": _float, "sigma2_S": _float}
OUTPUT_KEYS: dict[str, Callable] = {"dir": _str, "max_path_csv": _int}
SECTIONS = {"market": MARKET_KEYS, "impact": IMPACT_KEYS, "generator": GENERATOR_KEYS,
            "sim": SIM_KEYS, "relarb": RELARB_KEYS, "output": OUTPUT_KEYS}

IMPACT_DEFAULTS: dict[str, Any] = {
    "kernel": "exponential", "beta": 2.0, "epsilon": 1.0, "beta_exp": 0.5, "C": 1.0,
    "shape": "linear", "lambda": "calibrate", "scale": 1.0, "p": 0.5, "knee": 1.0,
    "phi": "constant", "phi_amp": 0.0, "phi_period": 1.0,
    "j0": 0.0, "j0_inf": 0.0, "j0_rate": 0.0,
    "target_bp": 11.5, "adv_frac": 0.01, "adv": 1e8,
}


@dataclass
class ExperimentConfig:
    market: FundamentalParams = field(default_factory=FundamentalParams)
    impacts: tuple[ImpactSpec, ...] = ()
    generator: GeneratorSpec = field(
        default_factory=lambda: GeneratorSpec("quadratic", nu=5.0, ramp=Ramp(21, 1281, 1302)))
    w: float = 1e8
    sim: SimConfig = field(default_factory=SimConfig)
    seed: int = 0
    paths: int = 100
    workers: int = 1
    theta: float = 1.0
    ell_S: float | None = None
    sigma2_S: float | None = None
    out_dir: str = "out"
    max_path_csv: int = 10
    raw: dict[str, str] = field(default_factory=dict)

    @property
    def N(self) -> tuple[float, ...]:
        return self.market.N

    def frictionless_constants(self) -> FrictionlessConstants:
        m = self.market
        return FrictionlessConstants(
            delta_S=m.delta_S, eps_S=m.eps_S,
            sigma2_S=m.bounded_volatility() if self.sigma2_S is None else self.sigma2_S,
            kappa_S=m.kappa_S, ell_S=m.delta_S if self.ell_S is None else self.ell_S)

    def digest(self) -> str:
        """SHA-256 of the explicit settings, independent of key order."""
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key=value, got {s!r}")
        k, v = (x.strip() for x in s.split("=", 1))
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k}")
        raw[k] = v
    return raw


def _typed(raw: dict[str, str]):
    vals: dict[str, dict] = {s: {} for s in SECTIONS}
    per_asset: dict[int, dict] = {}
    for key, v in raw.items():
        parts = key.split(".")
        sec = parts[0]
        if sec not in SECTIONS:
            raise ConfigError(f"{key}: unknown section {sec!r}")
        table = SECTIONS[sec]
        if sec == "impact" and len(parts) == 3:
            try:
                idx = int(parts[1])
            except ValueError:
                raise ConfigError(f"{key}: asset index must be an integer") from None
            name, target = parts[2], per_asset.setdefault(idx, {})
        elif len(parts) == 2:
            name, target = parts[1], vals[sec]
        else:
            raise ConfigError(f"{key}: unknown key")
        if name not in table:
            raise ConfigError(f"{key}: unknown key")
        try:
            target[name] = table[name](v)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return vals, per_asset


def _impact_spec(key: str, o: dict, S0: float) -> ImpactSpec:
    if o["kernel"] == "power":
        raise ConfigError(f"{key}.kernel: the unshifted power kernel is singular on the "
                          "diagonal and not supported; use shifted_power")
    lam = o["lambda"]
    try:
        if lam == "calibrate":
            if o["kernel"] != "exponential" or o["shape"] != "linear":
                raise ConfigError(f"{key}.lambda: calibration needs linear shape and "
                                  "exponential kernel")
            lam = calibrate_linear_lambda(S0, o["target_bp"], o["adv_frac"], o["adv"],
                                          o["beta"])
        kern = KernelSpec(kind=o["kernel"], beta=o["beta"], epsilon=o["epsilon"],
                          beta_exp=o["beta_exp"], C=o["C"])
        shape = ShapeSpec(kind=o["shape"], lam=lam, scale=o["scale"], p=o["p"],
                          knee=o["knee"], phi=o["phi"], phi_amp=o["phi_amp"],
                          phi_period=o["phi_period"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: {exc}") from None
    return ImpactSpec(kernel=kern, shape=shape, j0=o["j0"], j0_inf=o["j0_inf"],
                      j0_rate=o["j0_rate"])


def build_config(raw: dict[str, str]) -> ExperimentConfig:
    vals, per_asset = _typed(raw)
    mk = vals["market"]
    try:
        market = FundamentalParams(**mk)
    except TypeError as exc:
        raise ConfigError(f"market: {exc}") from None
    bad = market.violations()
    if bad:
        raise ConfigError("market: " + "; ".join(bad))
    d = market.d
    for idx in per_asset:
        if not 1 <= idx <= d:
            raise ConfigError(f"impact.{idx}: asset index outside 1..{d}")
    impacts = []
    for i in range(d):
        o = dict(IMPACT_DEFAULTS)
        o.update(vals["impact"])
        o.update(per_asset.get(i + 1, {}))
        S0 = market.cap0 * market.mu0[i] / market.N[i]
        impacts.append(_impact_spec(f"impact.{i + 1}", o, S0))

    gk = {"family": "quadratic", "nu": 5.0, "ramp": True, "T0": 21.0, "T1": 1281.0,
          "T": 1302.0, "p": 0.5, "weights": None, "g": None, "w": 1e8}
    gk.update(vals["generator"])
    try:
        ramp = Ramp(gk["T0"], gk["T1"], gk["T"]) if gk["ramp"] else None
        gen = GeneratorSpec(family=gk["family"], nu=gk["nu"], ramp=ramp, p=gk["p"],
                            weights=gk["weights"], g=gk["g"])
    except Exception as exc:  # sympy parse errors are not ValueErrors
        raise ConfigError(f"generator: {exc}") from None
    if gk["w"] <= 0:
        raise ConfigError("generator.w: initial wealth must be positive")
    if gen.family == "geometric_mean" and len(gen.weights) != d:
        raise ConfigError("generator.weights: need d entries")

    sk = dict(vals["sim"])
    seed = sk.pop("seed", 0)
    paths = sk.pop("paths", 100)
    workers = sk.pop("workers", 1)
    if "horizon" not in sk:
        sk["horizon"] = (ramp.T + 21.0) if ramp is not None else 1323.0
    try:
        sim = SimConfig(**sk)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None
    if paths < 0 or workers < 1 or seed < 0:
        raise ConfigError("sim: paths >= 0, workers >= 1 and seed >= 0 required")

    rk = vals["relarb"]
    ok = vals["output"]
    cfg = ExperimentConfig(market=market, impacts=tuple(impacts), generator=gen, w=gk["w"],
                           sim=sim, seed=seed, paths=paths, workers=workers,
                           theta=rk.get("theta", 1.0), ell_S=rk.get("ell_S"),
                           sigma2_S=rk.get("sigma2_S"), out_dir=ok.get("dir", "out"),
                           max_path_csv=ok.get("max_path_csv", 10), raw=dict(raw))
    if cfg.theta <= 0:
        raise ConfigError("relarb.theta: must be positive")
    if cfg.max_path_csv < 0:
        raise ConfigError("output.max_path_csv: must be nonnegative")
    try:
        cfg.frictionless_constants().validate(d)
    except ValueError as exc:
        raise ConfigError(f"relarb: {exc}") from None
    return cfg


def parse_config(file: str | Path | None) -> ExperimentConfig:
    """Read and fully validate a configuration file (``None`` gives the defaults)."""
    if file is None:
        return build_config({})
    try:
        text = Path(file).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {file}: {exc}") from None
    return build_config(parse_text(text))


def default_config() -> ExperimentConfig:
    return build_config({})
