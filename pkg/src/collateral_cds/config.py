"""Experiment configuration: a JSON document with nested sections.

Schema (every key except ``parties`` is optional)::

    {
      "parties": [
        {"id": 0, "spread_bp": 200, "recovery": 0.4},
        {"id": 1, "intensity": [0.01, 0.02], "knots": [3.0], "recovery": 0.4}
      ],
      "copula": {"family": "clayton", "alpha": 2.0},
      "deal": {"maturities": [1, 5, 10, 20], "collateral_rate": 0.02,
               "collateral_return": 0.0, "foreign_collateral_spread": 0.0,
               "coverage_buyer": 1.0, "coverage_seller": 1.0,
               "protection_seller": 2, "premium_bp": null},
      "quadrature": {"rtol": 1e-10, "atol": 1e-12},
      "simulation": {"paths": 1000000, "seed": 20110411, "batch": 50000, "jobs": 1,
                     "validate_alphas": [1, 3], "validate_maturity": 5},
      "output": "fig1.csv"
    }

Each party gives either ``spread_bp`` (effective spread, converted with
``intensity = spread / (1 - recovery)``) or a raw ``intensity``; either may be
a list with one more entry than ``knots``.  ``copula`` takes a single
``alpha`` or an ``alpha_grid``, which is a list or ``{"start", "stop", "step"}``.
Party ids must be ``0..n-1`` with 0 the reference entity and 1 the buyer.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .copula import CopulaFamily
from .curves import MarginalCurve
from .mc.estimators import SimConfig
from .pricer import ATOL, RTOL, DealSpec

DEFAULT_ALPHA_GRID = {"start": 0.0, "stop": 5.0, "step": 0.25}
DEFAULT_MATURITIES = (1.0, 5.0, 10.0, 20.0)

PRESETS: dict[str, dict] = {
    "fig1": {
        "parties": [
            {"id": 0, "spread_bp": 200, "recovery": 0.4},
            {"id": 1, "spread_bp": 100, "recovery": 0.4},
            {"id": 2, "spread_bp": 120, "recovery": 0.4},
        ],
        "copula": {"family": "clayton", "alpha_grid": DEFAULT_ALPHA_GRID},
        "deal": {"maturities": list(DEFAULT_MATURITIES), "collateral_rate": 0.02},
    },
    "fig2": {
        "parties": [
            {"id": 0, "spread_bp": 200, "recovery": 0.4},
            {"id": 1, "spread_bp": 30, "recovery": 0.4},
            {"id": 2, "spread_bp": 150, "recovery": 0.4},
            {"id": 3, "spread_bp": 75, "recovery": 0.4},
        ],
        "copula": {"family": "clayton", "alpha_grid": DEFAULT_ALPHA_GRID},
        "deal": {"maturities": list(DEFAULT_MATURITIES), "collateral_rate": 0.02},
    },
}

_TOP_KEYS = {"parties", "copula", "deal", "quadrature", "simulation", "output"}
_PARTY_KEYS = {"id", "spread_bp", "intensity", "knots", "recovery"}
_COPULA_KEYS = {"family", "alpha", "alpha_grid"}
_DEAL_KEYS = {"maturities", "collateral_rate", "collateral_return", "foreign_collateral_spread",
              "coverage_buyer", "coverage_seller", "protection_seller", "premium_bp"}
_QUAD_KEYS = {"rtol", "atol"}
_SIM_KEYS = {"paths", "seed", "batch", "jobs", "validate_alphas", "validate_maturity"}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    curves: tuple[MarginalCurve, ...]
    family: CopulaFamily
    alphas: tuple[float, ...]
    maturities: tuple[float, ...]
    deal: DealSpec
    premium_bp: float | None
    rtol: float
    atol: float
    sim: SimConfig
    validate_alphas: tuple[float, ...]
    validate_maturity: float
    output: str | None

    @property
    def parties(self) -> int:
        return len(self.curves)

    def deal_at(self, maturity: float) -> DealSpec:
        return self.deal.replace(maturity=maturity)


def _section(doc: dict, key: str, allowed: set[str], path: str) -> dict:
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(path, "must be an object")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    return sec


def _number(value: Any, path: str, *, lo: float | None = None, hi: float | None = None,
            lo_open: bool = False, hi_open: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "must be a number")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    if lo is not None and (x < lo or (lo_open and x == lo)):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo:g}")
    if hi is not None and (x > hi or (hi_open and x == hi)):
        raise ConfigError(path, f"must be {'<' if hi_open else '<='} {hi:g}")
    return x


def _integer(value: Any, path: str, lo: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, "must be an integer")
    if value < lo:
        raise ConfigError(path, f"must be >= {lo}")
    return value


def _numbers(value: Any, path: str, **bounds) -> tuple[float, ...]:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError(path, "must not be empty")
    return tuple(_number(v, f"{path}[{k}]" if isinstance(value, list) else path, **bounds)
                 for k, v in enumerate(items))


def _party(doc: Any, k: int) -> MarginalCurve:
    path = f"parties[{k}]"
    if not isinstance(doc, dict):
        raise ConfigError(path, "must be an object")
    unknown = sorted(set(doc) - _PARTY_KEYS)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    if "id" in doc and _integer(doc["id"], f"{path}.id", 0) != k:
        raise ConfigError(f"{path}.id", f"must equal the list position {k}")
    recovery = _number(doc.get("recovery", 0.4), f"{path}.recovery", lo=0.0, hi=1.0)
    knots = _numbers(doc["knots"], f"{path}.knots", lo=0.0, lo_open=True) if "knots" in doc else ()
    if ("spread_bp" in doc) == ("intensity" in doc):
        raise ConfigError(path, "give exactly one of spread_bp or intensity")
    if "spread_bp" in doc:
        if recovery >= 1.0:
            raise ConfigError(f"{path}.recovery", "must be < 1 when spread_bp is given")
        spreads = _numbers(doc["spread_bp"], f"{path}.spread_bp", lo=0.0)
        lams = tuple(s * 1e-4 / (1.0 - recovery) for s in spreads)
        field = "spread_bp"
    else:
        lams = _numbers(doc["intensity"], f"{path}.intensity", lo=0.0)
        field = "intensity"
    if len(lams) != len(knots) + 1:
        raise ConfigError(f"{path}.{field}", "needs exactly one more value than knots")
    if any(b <= a for a, b in zip(knots, knots[1:])):
        raise ConfigError(f"{path}.knots", "must be strictly increasing")
    return MarginalCurve(lams, knots, recovery, k)


def _alpha_grid(value: Any, path: str) -> tuple[float, ...]:
    if isinstance(value, dict):
        unknown = sorted(set(value) - {"start", "stop", "step"})
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
        for key in ("start", "stop", "step"):
            if key not in value:
                raise ConfigError(f"{path}.{key}", "is required")
        start = _number(value["start"], f"{path}.start", lo=0.0)
        stop = _number(value["stop"], f"{path}.stop", lo=start)
        step = _number(value["step"], f"{path}.step", lo=0.0, lo_open=True)
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + j * step, 12) for j in range(count))
    if not isinstance(value, list):
        raise ConfigError(path, "must be a list or a start/stop/step object")
    return _numbers(value, path, lo=0.0)


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a decoded JSON document and build an :class:`ExperimentConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "must be an object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    parties = doc.get("parties")
    if not isinstance(parties, list):
        raise ConfigError("parties", "must be a list")
    if len(parties) not in (3, 4):
        raise ConfigError("parties", "must list three or four parties")
    curves = tuple(_party(p, k) for k, p in enumerate(parties))

    cop = _section(doc, "copula", _COPULA_KEYS, "copula")
    try:
        family = CopulaFamily(str(cop.get("family", "clayton")).lower())
    except ValueError:
        raise ConfigError("copula.family", "must be 'clayton' or 'product'") from None
    if "alpha" in cop and "alpha_grid" in cop:
        raise ConfigError("copula", "give alpha or alpha_grid, not both")
    if family is CopulaFamily.PRODUCT:
        alphas = (0.0,)
    elif "alpha" in cop:
        alphas = (_number(cop["alpha"], "copula.alpha", lo=0.0),)
    else:
        alphas = _alpha_grid(cop.get("alpha_grid", DEFAULT_ALPHA_GRID), "copula.alpha_grid")

    deal = _section(doc, "deal", _DEAL_KEYS, "deal")
    maturities = _numbers(deal.get("maturities", list(DEFAULT_MATURITIES)), "deal.maturities",
                          lo=0.0, lo_open=True)
    seller_default = 2
    seller = _integer(deal.get("protection_seller", seller_default), "deal.protection_seller", 2)
    if seller >= len(curves):
        raise ConfigError("deal.protection_seller", "is not a listed party")
    if len(curves) == 3 and seller != 2:
        raise ConfigError("deal.protection_seller", "must be 2 with three parties")
    premium_bp = deal.get("premium_bp")
    if premium_bp is not None:
        premium_bp = _number(premium_bp, "deal.premium_bp", lo=0.0)
    spec = DealSpec(
        maturity=maturities[0],
        premium=0.0 if premium_bp is None else premium_bp * 1e-4,
        collateral_rate=_number(deal.get("collateral_rate", 0.02), "deal.collateral_rate"),
        collateral_return=_number(deal.get("collateral_return", 0.0), "deal.collateral_return"),
        foreign_collateral_spread=_number(deal.get("foreign_collateral_spread", 0.0),
                                          "deal.foreign_collateral_spread"),
        coverage_buyer=_number(deal.get("coverage_buyer", 1.0), "deal.coverage_buyer", lo=0.0),
        coverage_seller=_number(deal.get("coverage_seller", 1.0), "deal.coverage_seller", lo=0.0),
        protection_seller=seller,
    )

    quad = _section(doc, "quadrature", _QUAD_KEYS, "quadrature")
    rtol = _number(quad.get("rtol", RTOL), "quadrature.rtol", lo=0.0, lo_open=True)
    atol = _number(quad.get("atol", ATOL), "quadrature.atol", lo=0.0, lo_open=True)

    simd = _section(doc, "simulation", _SIM_KEYS, "simulation")
    defaults = SimConfig()
    seed = _integer(simd.get("seed", defaults.seed), "simulation.seed", 0)
    if seed >= 2**64:
        raise ConfigError("simulation.seed", "must be below 2**64")
    sim = SimConfig(
        paths=_integer(simd.get("paths", defaults.paths), "simulation.paths", 1),
        seed=seed,
        batch=_integer(simd.get("batch", defaults.batch), "simulation.batch", 1),
        jobs=_integer(simd.get("jobs", defaults.jobs), "simulation.jobs", 1),
    )
    validate_alphas = _numbers(simd.get("validate_alphas", [1.0, 3.0]),
                               "simulation.validate_alphas", lo=0.0)
    validate_maturity = _number(simd.get("validate_maturity", 5.0), "simulation.validate_maturity",
                                lo=0.0, lo_open=True)

    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "must be a string path")
    return ExperimentConfig(curves, family, alphas, maturities, spec, premium_bp, rtol, atol, sim,
                            validate_alphas, validate_maturity, output)


def preset(name: str) -> dict:
    """A deep copy of a built-in configuration document."""
    if name not in PRESETS:
        raise ConfigError("$", f"unknown preset {name!r}")
    return copy.deepcopy(PRESETS[name])


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(doc)
