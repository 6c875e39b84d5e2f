from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from collateral_cds import MarginalCurve

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIG1_SPREADS = (200, 100, 120)
FIG2_SPREADS = (200, 30, 150, 75)


def curves_from(spreads, recovery=0.4):
    return tuple(MarginalCurve.from_effective_spread(s, recovery, k) for k, s in enumerate(spreads))


@pytest.fixture(scope="session")
def fig1_curves():
    return curves_from(FIG1_SPREADS)


@pytest.fixture(scope="session")
def fig2_curves():
    return curves_from(FIG2_SPREADS)
