"""Pricing of collateralised CDS contracts with Clayton default dependence."""
from __future__ import annotations

from .copula import CopulaFamily, CopulaSpec
from .curves import MarginalCurve, common_breakpoints, marginal_survival
from .hazard import (
    ScenarioState,
    SurvivalSet,
    clayton_h0_3party,
    clayton_h0_4party,
    clayton_hazard,
    clayton_hazards,
    conditional_survival,
    q_hazard,
    survival_measure_hazard,
)
from .pricer import (
    DealSpec,
    LegValues,
    ODEConvergenceError,
    ParCell,
    PriceBreakdown,
    b2b_gap,
    backward_ode_value,
    gateaux_cca,
    gateaux_cva,
    legs_3party,
    legs_4party,
    par_curve,
    par_spread,
    price_breakdown,
    risk_free_value,
)

__version__ = "0.1.0"

__all__ = [
    "CopulaFamily",
    "CopulaSpec",
    "DealSpec",
    "LegValues",
    "MarginalCurve",
    "ODEConvergenceError",
    "ParCell",
    "PriceBreakdown",
    "ScenarioState",
    "SurvivalSet",
    "b2b_gap",
    "backward_ode_value",
    "clayton_h0_3party",
    "clayton_h0_4party",
    "clayton_hazard",
    "clayton_hazards",
    "common_breakpoints",
    "conditional_survival",
    "gateaux_cca",
    "gateaux_cva",
    "legs_3party",
    "legs_4party",
    "marginal_survival",
    "par_curve",
    "par_spread",
    "price_breakdown",
    "q_hazard",
    "risk_free_value",
    "survival_measure_hazard",
]
