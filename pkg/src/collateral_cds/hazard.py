"""Default hazards implied by marginal intensities and a copula.

Two hazard notions are exposed.  ``q_hazard`` is the intensity of a party under
the pricing measure given the realised default pattern of every party.
``survival_measure_hazard`` is the same copula ratio with the indicator sum
restricted to parties outside a survival set, whose members are held alive.
Both are right-continuous at default times; ``left_limit=True`` ignores defaults
occurring exactly at the clock.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .copula import CopulaSpec, log_generator_sum, log_subset_partial
from .curves import MarginalCurve, marginal_survival

__all__ = [
    "ScenarioState",
    "SurvivalSet",
    "marginal_survival",
    "conditional_survival",
    "q_hazard",
    "survival_measure_hazard",
    "clayton_hazard",
    "clayton_hazards",
    "clayton_h0_3party",
    "clayton_h0_4party",
    "MAX_ENUMERATED_PARTIES",
]

#: Cap on the number of parties whose default patterns are enumerated.
MAX_ENUMERATED_PARTIES = 12


@dataclass(frozen=True, eq=False)
class ScenarioState:
    """Realised defaults up to ``clock``.

    Args:
        clock: Current time in years.
        defaults: Party index to default time; every time must be <= clock.
    """

    clock: float
    defaults: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.clock < 0:
            raise ValueError("clock must be nonnegative")
        d = {int(k): float(v) for k, v in dict(self.defaults).items()}
        for party, tau in d.items():
            if not 0.0 <= tau <= self.clock:
                raise ValueError(f"default time of party {party} must lie in [0, clock]")
        if len(set(d.values())) != len(d):
            raise ValueError("simultaneous defaults are not allowed")
        object.__setattr__(self, "defaults", MappingProxyType(d))

    def with_default(self, party: int, tau: float | None = None) -> ScenarioState:
        tau = self.clock if tau is None else tau
        if party in self.defaults:
            raise ValueError(f"party {party} already defaulted")
        return ScenarioState(self.clock, {**self.defaults, party: tau})

    def at(self, clock: float) -> ScenarioState:
        return ScenarioState(clock, self.defaults)

    def defaulted(self, left_limit: bool = False) -> dict[int, float]:
        if left_limit:
            return {k: v for k, v in self.defaults.items() if v < self.clock}
        return dict(self.defaults)

    def alive(self, dim: int, left_limit: bool = False) -> tuple[int, ...]:
        dead = self.defaulted(left_limit)
        return tuple(k for k in range(dim) if k not in dead)


@dataclass(frozen=True)
class SurvivalSet:
    """Parties conditioned to survive under a survival measure."""

    members: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))

    @classmethod
    def of(cls, *members: int) -> SurvivalSet:
        return cls(frozenset(members))

    def complement(self, dim: int) -> tuple[int, ...]:
        return tuple(k for k in range(dim) if k not in self.members)


def _check_setup(copula: CopulaSpec, curves: Sequence[MarginalCurve]):
    if len(curves) != copula.dim:
        raise ValueError(f"{len(curves)} curves for a {copula.dim}-dimensional copula")


def _log_args(curves, t: float, frozen: Mapping[int, float], override=None) -> np.ndarray:
    out = np.array([float(c.log_survival(frozen.get(k, t))) for k, c in enumerate(curves)])
    if override:
        for k, v in override.items():
            out[k] = v
    return out


def conditional_survival(copula: CopulaSpec, curves: Sequence[MarginalCurve], state: ScenarioState,
                         i: int, T: float) -> float:
    """Probability that alive party ``i`` survives to ``T`` given ``state``."""
    _check_setup(copula, curves)
    t = state.clock
    dead = state.defaulted()
    if i in dead:
        raise ValueError(f"party {i} has already defaulted")
    if T < t:
        raise ValueError("T must not precede the clock")
    D = tuple(sorted(dead))
    base = _log_args(curves, t, dead)
    num = _log_args(curves, t, dead, {i: float(curves[i].log_survival(T))})
    return float(np.exp(log_subset_partial(copula, num, D) - log_subset_partial(copula, base, D)))


def _ratio_hazard(copula, curves, t, i, dead: Mapping[int, float], candidates) -> float:
    """Indicator-weighted sum of ``lambda_i gamma_i d_i d_D C / d_D C`` over subsets D."""
    cand = tuple(sorted(set(candidates) - {i}))
    if len(cand) > MAX_ENUMERATED_PARTIES:
        raise ValueError(f"more than {MAX_ENUMERATED_PARTIES} parties to enumerate")
    lam = float(curves[i].intensity(t))
    log_gi = float(curves[i].log_survival(t))
    total = 0.0
    for r in range(len(cand) + 1):
        for D in itertools.combinations(cand, r):
            if any(j not in dead for j in D) or any(k in dead for k in cand if k not in D):
                continue
            frozen = {j: dead[j] for j in D}
            logu = _log_args(curves, t, frozen)
            ratio = log_subset_partial(copula, logu, D + (i,)) - log_subset_partial(copula, logu, D)
            total += lam * math.exp(log_gi + float(ratio))
    return total


def q_hazard(copula: CopulaSpec, curves: Sequence[MarginalCurve], state: ScenarioState, i: int,
             *, left_limit: bool = False) -> float:
    """Hazard of alive party ``i`` given the full realised default pattern."""
    _check_setup(copula, curves)
    dead = state.defaulted(left_limit)
    if i in dead:
        raise ValueError(f"party {i} has already defaulted")
    return _ratio_hazard(copula, curves, state.clock, i, dead, range(copula.dim))


def survival_measure_hazard(copula: CopulaSpec, curves: Sequence[MarginalCurve],
                            state: ScenarioState, survival_set: SurvivalSet, i: int,
                            *, left_limit: bool = False) -> float:
    """Hazard of party ``i`` under the measure where ``survival_set`` never defaults.

    Only defaults of parties outside the survival set enter the indicator sum;
    survival-set members are evaluated as alive at the clock.
    """
    _check_setup(copula, curves)
    dead = state.defaulted(left_limit)
    inside = survival_set.members & set(dead)
    if inside:
        raise ValueError(f"parties {sorted(inside)} are in the survival set but defaulted")
    if i in dead:
        raise ValueError(f"party {i} has already defaulted")
    return _ratio_hazard(copula, curves, state.clock, i, dead, survival_set.complement(copula.dim))


def clayton_hazards(alpha: float, curves: Sequence[MarginalCurve], parties: Sequence[int], t,
                    frozen: Mapping[int, object] | None = None) -> np.ndarray:
    """Closed-form Clayton hazards ``lambda_i (1 + m alpha) (C / gamma_i)**alpha``.

    ``frozen`` maps each of the ``m`` defaulted parties to its default time;
    times may be arrays broadcasting against ``t``.  The result has shape
    ``broadcast shape + (len(parties),)``.
    """
    frozen = dict(frozen or {})
    for i in parties:
        if i in frozen:
            raise ValueError(f"party {i} is frozen at its default time")
    t = np.asarray(t, dtype=float)
    lams = [curves[i].intensity(t) for i in parties]
    if alpha < 1e-12:
        shape = np.broadcast_shapes(t.shape, *(np.shape(v) for v in frozen.values()))
        return np.stack([np.broadcast_to(lam, shape) for lam in lams], axis=-1).astype(float)
    cols = [c.log_survival(frozen[k]) if k in frozen else c.log_survival(t)
            for k, c in enumerate(curves)]
    logu = np.stack(np.broadcast_arrays(*cols), axis=-1)
    log_c = -log_generator_sum(logu, alpha) / alpha
    scale = 1.0 + len(frozen) * alpha
    return np.stack([lam * scale * np.exp(alpha * (log_c - logu[..., i]))
                     for lam, i in zip(lams, parties)], axis=-1)


def clayton_hazard(alpha: float, curves: Sequence[MarginalCurve], i: int, t,
                   frozen: Mapping[int, object] | None = None):
    """Single-party version of :func:`clayton_hazards`, vectorised in ``t``."""
    return clayton_hazards(alpha, curves, (i,), t, frozen)[..., 0]


def clayton_h0_3party(alpha: float, curves: Sequence[MarginalCurve], t):
    """Reference-entity hazard under the three-party survival measure."""
    if len(curves) != 3:
        raise ValueError("three curves required")
    return clayton_hazard(alpha, curves, 0, t)


def clayton_h0_4party(alpha: float, curves: Sequence[MarginalCurve], t, tau3=None, *,
                      excluded: int = 3):
    """Reference-entity hazard with one party outside the survival set.

    ``tau3`` is the default time of the excluded party (``None`` while alive).
    """
    if len(curves) != 4:
        raise ValueError("four curves required")
    if excluded not in (1, 2, 3):
        raise ValueError("excluded party must be 1, 2 or 3")
    if tau3 is None:
        return clayton_hazard(alpha, curves, 0, t)
    if np.any(np.asarray(tau3) > np.asarray(t)):
        raise ValueError("default time of the excluded party lies after t")
    return clayton_hazard(alpha, curves, 0, t, {excluded: tau3})
