"""Invariant suite run by the ``validate`` command.

Every check reports the measured quantity next to its tolerance.  Reports
contain no timings, so a fixed configuration and seed give identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig
from .copula import CopulaSpec, evaluate, partial, partial2
from .hazard import (
    ScenarioState,
    SurvivalSet,
    clayton_h0_3party,
    clayton_h0_4party,
    q_hazard,
    survival_measure_hazard,
)
from .mc.estimators import (
    MCLegEstimate,
    mc_density_mass,
    mc_price_survival_measure,
    mc_price_weighted,
)
from .pricer import (
    LegValues,
    backward_ode_value,
    legs_3party,
    legs_4party,
    par_curve,
    price_breakdown,
    risk_free_value,
)

Z_999 = 3.29
IDENTITY_ALPHAS = (0.25, 1.0, 4.0)
HAZARD_TIMES = (0.5, 1.0, 2.0, 5.0, 10.0)
HAZARD_ALPHAS = (0.0, 0.5, 1.0, 2.0, 5.0)
DOMINANCE_SLACK_BP = 1e-8
MAX_FOUR_PARTY_ALPHAS = 6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.6e} tolerance={self.tolerance}"


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def copula_identity_errors(alpha: float, dim: int, rng: np.random.Generator,
                           points: int = 1000) -> tuple[float, float]:
    """Largest relative errors of the first and second Clayton ratio identities."""
    spec = CopulaSpec.clayton(alpha, dim)
    u = rng.uniform(1e-3, 1.0, size=(points, dim))
    c = evaluate(spec, u)
    first = second = 0.0
    for i in range(dim):
        d_i = partial(spec, u, i)
        first = max(first, _rel(d_i / c, (c / u[:, i]) ** alpha / u[:, i]))
        for j in range(dim):
            if j != i:
                want = (1.0 + alpha) * (c / u[:, j]) ** alpha / u[:, j]
                second = max(second, _rel(partial2(spec, u, i, j) / d_i, want))
    return first, second


def jump_ratio_errors(cfg: ExperimentConfig, alpha: float, rng: np.random.Generator,
                      scenarios: int = 100) -> float:
    """Largest relative deviation of the post-default to pre-default hazard ratio from 1 + alpha.

    Four parties: the outside party defaults under the survival measure of the
    trading set.  Three parties: the seller defaults under the pricing measure.
    """
    dim = cfg.parties
    spec = CopulaSpec.clayton(alpha, dim)
    worst = 0.0
    for t in rng.uniform(0.05, 10.0, size=scenarios):
        if dim == 4:
            seller = cfg.deal.protection_seller
            outside = 5 - seller
            members = SurvivalSet.of(0, 1, seller)
            state = ScenarioState(float(t), {outside: float(t)})
            after = survival_measure_hazard(spec, cfg.curves, state, members, 0)
            before = survival_measure_hazard(spec, cfg.curves, state, members, 0, left_limit=True)
        else:
            state = ScenarioState(float(t), {2: float(t)})
            after = q_hazard(spec, cfg.curves, state, 0)
            before = q_hazard(spec, cfg.curves, state, 0, left_limit=True)
        worst = max(worst, abs(after / before / (1.0 + alpha) - 1.0))
    return worst


def closed_form_errors(cfg: ExperimentConfig) -> float:
    """Closed-form reference hazards against the generic subset sum on a (t, alpha) grid."""
    dim = cfg.parties
    worst = 0.0
    for alpha in HAZARD_ALPHAS:
        spec = CopulaSpec.clayton(alpha, dim)
        for t in HAZARD_TIMES:
            if dim == 3:
                generic = q_hazard(spec, cfg.curves, ScenarioState(t), 0)
                worst = max(worst, _rel(clayton_h0_3party(alpha, cfg.curves, t), generic))
                continue
            for outside in (2, 3):
                members = SurvivalSet.of(0, 1, 5 - outside)
                generic = survival_measure_hazard(spec, cfg.curves, ScenarioState(t), members, 0)
                closed = clayton_h0_4party(alpha, cfg.curves, t, excluded=outside)
                worst = max(worst, _rel(closed, generic))
                state = ScenarioState(t, {outside: 0.5 * t})
                generic = survival_measure_hazard(spec, cfg.curves, state, members, 0)
                closed = clayton_h0_4party(alpha, cfg.curves, t, 0.5 * t, excluded=outside)
                worst = max(worst, _rel(closed, generic))
    return worst


def _sellers(cfg: ExperimentConfig) -> tuple[int, ...]:
    return (2,) if cfg.parties == 3 else (2, 3)


def _legs(cfg: ExperimentConfig, alpha: float, T: float, seller: int) -> LegValues:
    deal = cfg.deal_at(T).replace(protection_seller=seller)
    if cfg.parties == 3:
        return legs_3party(alpha, cfg.curves, deal, rtol=cfg.rtol, atol=cfg.atol)
    return legs_4party(alpha, cfg.curves, deal, seller, rtol=cfg.rtol, atol=cfg.atol)


def _thin(alphas: tuple[float, ...], count: int) -> tuple[float, ...]:
    if len(alphas) <= count:
        return alphas
    idx = np.unique(np.round(np.linspace(0, len(alphas) - 1, count)).astype(int))
    return tuple(alphas[k] for k in idx)


def dominance_margin(cfg: ExperimentConfig, alphas) -> float:
    """Largest ``par - risk-free par`` in bp over the grid; nonpositive when dominance holds."""
    worst = -math.inf
    for seller in _sellers(cfg):
        cells = par_curve(alphas, cfg.maturities, cfg.curves, cfg.deal, seller_is_party=seller,
                          jobs=cfg.sim.jobs, rtol=cfg.rtol, atol=cfg.atol)
        for cell in cells:
            rf = risk_free_value(cfg.curves, cfg.deal_at(cell.maturity), rtol=cfg.rtol, atol=cfg.atol)
            worst = max(worst, cell.par_bp - rf.par_spread_bp)
    return worst


def mc_separation(cfg: ExperimentConfig, alpha: float, T: float, buy: LegValues,
                  sell: LegValues) -> tuple[MCLegEstimate, MCLegEstimate, float]:
    """Survival-measure MC for both four-party directions.

    Returns both estimates and the z-score of the simulated par separation,
    signed so that a positive value agrees with the deterministic sign.
    """
    estimates = []
    for seller in (2, 3):
        deal = cfg.deal_at(T).replace(protection_seller=seller)
        estimates.append(mc_price_survival_measure(alpha, cfg.curves, deal, cfg.sim))
    mb, ms = estimates
    diff = mb.par.mean - ms.par.mean
    se = math.hypot(mb.par.stderr, ms.par.stderr)
    sign = 1.0 if buy.par_spread >= sell.par_spread else -1.0
    return mb, ms, sign * diff / se if se > 0 else math.inf


def gateaux_residuals(cfg: ExperimentConfig, alpha: float, T: float) -> tuple[float, float, float]:
    """ODE-minus-leg value at full coverage and the two first-order residuals.

    The deal trades at par with collateral return 0.01 and equal coverage
    ``delta`` in {0.95, 0.9}; the residual is ODE value minus the first-order sum.
    """
    base = cfg.deal_at(T).replace(collateral_return=0.01, coverage_buyer=1.0, coverage_seller=1.0,
                                  foreign_collateral_spread=0.0)
    legs = legs_3party(alpha, cfg.curves, base)
    deal = base.replace(premium=legs.par_spread)
    full = abs(backward_ode_value(alpha, cfg.curves, deal) - legs.value(deal.premium))
    residual = []
    for delta in (0.95, 0.9):
        d = deal.replace(coverage_buyer=delta, coverage_seller=delta)
        residual.append(backward_ode_value(alpha, cfg.curves, d) - price_breakdown(alpha, cfg.curves, d).first_order)
    return full, residual[0], residual[1]


def run_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    rng = np.random.default_rng(cfg.sim.seed)
    out: list[CheckResult] = []
    add = out.append
    dim = cfg.parties

    for alpha in IDENTITY_ALPHAS:
        first, second = copula_identity_errors(alpha, dim, rng)
        add(CheckResult(f"copula_first_ratio alpha={alpha:g}", first <= 1e-12, first, "1e-12 rel"))
        add(CheckResult(f"copula_second_ratio alpha={alpha:g}", second <= 1e-12, second, "1e-12 rel"))

    for alpha in cfg.validate_alphas:
        err = jump_ratio_errors(cfg, alpha, rng)
        add(CheckResult(f"hazard_jump alpha={alpha:g}", err <= 1e-10, err, "1e-10 rel"))

    err = closed_form_errors(cfg)
    add(CheckResult("closed_form_hazards", err <= 1e-12, err, "1e-12 rel"))

    for seller in _sellers(cfg):
        worst = 0.0
        for T in cfg.maturities:
            rf = risk_free_value(cfg.curves, cfg.deal_at(T), rtol=cfg.rtol, atol=cfg.atol)
            worst = max(worst, abs(_legs(cfg, 0.0, T, seller).par_spread_bp - rf.par_spread_bp))
        add(CheckResult(f"independence_anchor seller={seller}", worst <= 0.01, worst, "0.01 bp"))

    alphas = cfg.alphas if dim == 3 else _thin(cfg.alphas, MAX_FOUR_PARTY_ALPHAS)
    margin = dominance_margin(cfg, alphas)
    add(CheckResult("dominance_par_below_risk_free", margin <= DOMINANCE_SLACK_BP, margin,
                    f"<= {DOMINANCE_SLACK_BP:g} bp"))

    T = cfg.validate_maturity
    for alpha in cfg.validate_alphas:
        for seller in _sellers(cfg):
            legs = _legs(cfg, alpha, T, seller)
            deal = cfg.deal_at(T).replace(protection_seller=seller)
            est = mc_price_weighted(alpha, cfg.curves, deal, cfg.sim).par
            z = abs(est.zscore(legs.par_spread))
            add(CheckResult(f"mc_weighted_par alpha={alpha:g} T={T:g} seller={seller}", z <= Z_999, z,
                            f"{Z_999} SE"))

    alpha = cfg.validate_alphas[0]
    mass = mc_density_mass(alpha, cfg.curves, cfg.deal_at(T), cfg.sim)
    z = abs(mass.zscore(1.0))
    add(CheckResult(f"density_mass alpha={alpha:g} T={T:g}", z <= Z_999, z, f"{Z_999} SE"))

    if dim == 3:
        full, r95, r90 = gateaux_residuals(cfg, alpha, T)
        add(CheckResult(f"ode_full_coverage alpha={alpha:g} T={T:g}", full <= 1e-8, full, "1e-8"))
        ratio = r90 / r95 if r95 != 0 else math.inf
        add(CheckResult(f"gateaux_order_ratio alpha={alpha:g} T={T:g}", 2.5 <= ratio <= 6.0, ratio,
                        "[2.5, 6]"))
        return out

    twin = cfg.curves[:3] + (replace(cfg.curves[2], party=3),)
    worst = 0.0
    for a in HAZARD_ALPHAS:
        b, s = (legs_4party(a, twin, cfg.deal_at(T), k) for k in (2, 3))
        worst = max(worst, abs(b.value(b.par_spread) - s.value(b.par_spread)))
    add(CheckResult("b2b_identical_counterparties", worst <= 1e-12, worst, "1e-12"))

    worst = 0.0
    for Tm in cfg.maturities:
        b, s = (_legs(cfg, 0.0, Tm, k) for k in (2, 3))
        worst = max(worst, abs(b.value(b.par_spread) - s.value(b.par_spread)))
    add(CheckResult("b2b_independence_zero", worst <= 1e-9, worst, "1e-9"))

    signs = set()
    for a in alphas:
        if a > 0:
            b, s = (_legs(cfg, a, T, k) for k in (2, 3))
            signs.add(np.sign(s.value(b.par_spread)))
    add(CheckResult(f"b2b_sign_stable T={T:g}", len(signs) == 1 and 0 not in signs, len(signs),
                    "one nonzero sign"))

    for a in cfg.validate_alphas:
        b, s = (_legs(cfg, a, T, k) for k in (2, 3))
        *_, z = mc_separation(cfg, a, T, b, s)
        add(CheckResult(f"b2b_mc_sign alpha={a:g} T={T:g}", z > Z_999, z, f"> {Z_999} SE"))
    return out
