"""Monte Carlo oracles for the deterministic pricer."""
from .estimators import (
    InsufficientPathsError,
    MCEstimate,
    MCLegEstimate,
    NonFiniteWeightError,
    SimConfig,
    mc_conditional_survival_binned,
    mc_density_mass,
    mc_hazard_binned,
    mc_price_survival_measure,
    mc_price_weighted,
    mc_risk_free_legs,
)
from .rng import batch_stream, standard_gamma
from .sampling import draw_default_times, sample_clayton, sample_clayton_thresholds

__all__ = [
    "InsufficientPathsError",
    "MCEstimate",
    "MCLegEstimate",
    "NonFiniteWeightError",
    "SimConfig",
    "batch_stream",
    "draw_default_times",
    "mc_conditional_survival_binned",
    "mc_density_mass",
    "mc_hazard_binned",
    "mc_price_survival_measure",
    "mc_price_weighted",
    "mc_risk_free_legs",
    "sample_clayton",
    "sample_clayton_thresholds",
    "standard_gamma",
]
