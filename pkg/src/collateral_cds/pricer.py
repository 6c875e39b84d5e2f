"""Deterministic valuation of continuously collateralised CDS contracts.

Premiums accrue continuously at rate ``S`` until the first default among the
trading parties or maturity, so a contract is described by two legs: the
protection PV and the annuity (PV of a unit premium).  Under perfect
collateralisation both legs are discounted at ``c + y_ij + h0`` where ``h0`` is
the reference hazard under the measure in which the trading parties survive.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .curves import MarginalCurve, common_breakpoints
from .hazard import clayton_hazard
from .quadrature import CumulativeIntegral, adaptive_simpson, discounted_integrals

RTOL = 1e-10
ATOL = 1e-12
ODE_STEP = 1.0 / 730.0


class ODEConvergenceError(RuntimeError):
    """The backward ODE changed by more than its tolerance under step halving."""


@dataclass(frozen=True)
class DealSpec:
    """Economics of a collateralised CDS.

    Args:
        maturity: Contract maturity in years.
        premium: Running premium per year (decimal, paid by the buyer).
        collateral_rate: Collateral rate ``c``.
        collateral_return: Collateral return ``y = r - c``.
        foreign_collateral_spread: Collateral-currency spread ``y^(i,j)``.
        coverage_buyer: Collateral coverage ratio posted by the buyer.
        coverage_seller: Collateral coverage ratio posted by the seller.
        reference: Reference-entity index (always 0).
        protection_buyer: Investor index.
        protection_seller: Counterparty index.
    """

    maturity: float
    premium: float = 0.0
    collateral_rate: float = 0.02
    collateral_return: float = 0.0
    foreign_collateral_spread: float = 0.0
    coverage_buyer: float = 1.0
    coverage_seller: float = 1.0
    reference: int = 0
    protection_buyer: int = 1
    protection_seller: int = 2

    def __post_init__(self):
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")
        if self.premium < 0:
            raise ValueError("premium must be nonnegative")
        if self.coverage_buyer < 0 or self.coverage_seller < 0:
            raise ValueError("coverage ratios must be nonnegative")
        if self.reference != 0:
            raise ValueError("the reference entity must be party 0")
        if len({self.reference, self.protection_buyer, self.protection_seller}) != 3:
            raise ValueError("reference, buyer and seller must be distinct")

    @property
    def discount_spread(self) -> float:
        return self.collateral_rate + self.foreign_collateral_spread

    def replace(self, **changes) -> DealSpec:
        return replace(self, **changes)


@dataclass(frozen=True)
class LegValues:
    """Protection and annuity PVs with their quadrature error bound."""

    protection: float
    annuity: float
    error: float = 0.0

    def __post_init__(self):
        if self.annuity <= 0:
            raise ValueError("annuity must be positive")

    @property
    def par_spread(self) -> float:
        return self.protection / self.annuity

    @property
    def par_spread_bp(self) -> float:
        return 1e4 * self.par_spread

    def value(self, premium: float) -> float:
        """Buyer's PV at running premium ``premium``."""
        return self.protection - premium * self.annuity


@dataclass(frozen=True)
class PriceBreakdown:
    v_bar: float
    cca: float
    cva: float
    v_rf: float

    @property
    def rf_gap(self) -> float:
        return self.v_rf - self.v_bar

    @property
    def first_order(self) -> float:
        return self.v_bar + self.cca + self.cva


def par_spread(legs: LegValues) -> float:
    if legs.annuity == 0:
        raise ZeroDivisionError("zero annuity")
    return legs.protection / legs.annuity


def _check_three(curves, deal):
    if len(curves) != 3:
        raise ValueError("the three-party case needs exactly three curves")
    if {deal.reference, deal.protection_buyer, deal.protection_seller} != {0, 1, 2}:
        raise ValueError("three-party deals trade between parties 0, 1 and 2")


def _deterministic_legs(h0, curve0: MarginalCurve, deal: DealSpec, breaks, rtol, atol) -> LegValues:
    T = deal.maturity
    lgd = curve0.loss_given_default
    r = deal.discount_spread
    exponent = CumulativeIntegral(lambda s: r + h0(s), 0.0, T, breaks)
    prot = adaptive_simpson(lambda s: math.exp(-exponent(s)) * lgd * h0(s), 0.0, T,
                            rtol=rtol, atol=atol, breakpoints=breaks)
    ann = adaptive_simpson(lambda s: math.exp(-exponent(s)), 0.0, T,
                           rtol=rtol, atol=atol, breakpoints=breaks)
    return LegValues(prot.value, ann.value, prot.error + deal.premium * ann.error)


def legs_3party(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec, *,
                rtol: float = RTOL, atol: float = ATOL) -> LegValues:
    """Legs of a perfectly collateralised CDS among parties 0, 1 and 2."""
    _check_three(curves, deal)
    breaks = common_breakpoints(curves, deal.maturity)
    return _deterministic_legs(lambda s: clayton_hazard(alpha, curves, 0, s), curves[0], deal,
                               breaks, rtol, atol)


def risk_free_value(curves: Sequence[MarginalCurve], deal: DealSpec, *,
                    rtol: float = RTOL, atol: float = ATOL) -> LegValues:
    """Legs of the same collateralised CDS traded between default-free parties."""
    c0 = curves[deal.reference]
    breaks = common_breakpoints([c0], deal.maturity)
    return _deterministic_legs(c0.intensity, c0, deal, breaks, rtol, atol)


def legs_4party(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec,
                seller_is_party: int | None = None, *, rtol: float = RTOL,
                atol: float = ATOL) -> LegValues:
    """Legs of a CDS between party 1 and ``seller_is_party`` with one outside name.

    ``seller_is_party`` defaults to ``deal.protection_seller``.

    The other of parties 2 and 3 is outside the survival set; its default makes
    the reference hazard jump.  The premium- and protection-after-contagion
    terms are written with the outside default time ``v`` as the outer variable
    and the post-contagion leg from ``v`` to maturity as the inner integral.
    """
    if len(curves) != 4:
        raise ValueError("the four-party case needs exactly four curves")
    if seller_is_party is None:
        seller_is_party = deal.protection_seller
    elif seller_is_party != deal.protection_seller:
        deal = deal.replace(protection_seller=seller_is_party)
    if seller_is_party not in (2, 3):
        raise ValueError("seller_is_party must be 2 or 3")
    if deal.protection_buyer != 1:
        raise ValueError("the four-party buyer is party 1")
    k = 5 - seller_is_party
    T = deal.maturity
    r = deal.discount_spread
    lgd = curves[0].loss_given_default
    breaks = common_breakpoints(curves, T)

    def h0_pre(s):
        return clayton_hazard(alpha, curves, 0, s)

    def hk_pre(s):
        return clayton_hazard(alpha, curves, k, s)

    exponent = CumulativeIntegral(lambda s: r + h0_pre(s) + hk_pre(s), 0.0, T, breaks)
    after = {}

    def post_legs(v):
        if v not in after:
            def h0_post(s):
                return clayton_hazard(alpha, curves, 0, s, {k: v})
            after[v] = discounted_integrals(lambda s: r + h0_post(s),
                                            [lambda s: lgd * h0_post(s), np.ones_like],
                                            v, T, breaks)
        return after[v]

    def prot_density(v):
        return math.exp(-exponent(v)) * (lgd * h0_pre(v) + hk_pre(v) * post_legs(v)[0])

    def ann_density(v):
        return math.exp(-exponent(v)) * (1.0 + hk_pre(v) * post_legs(v)[1])

    prot = adaptive_simpson(prot_density, 0.0, T, rtol=rtol, atol=atol, breakpoints=breaks)
    ann = adaptive_simpson(ann_density, 0.0, T, rtol=rtol, atol=atol, breakpoints=breaks)
    return LegValues(prot.value, ann.value, prot.error + deal.premium * ann.error)


def b2b_gap(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec, S_premium: float,
            **quad) -> float:
    """Buyer's PV facing party 2 plus the offsetting sale to party 3, both at ``S_premium``."""
    buy = legs_4party(alpha, curves, deal, 2, **quad)
    sell = legs_4party(alpha, curves, deal, 3, **quad)
    return (buy.protection - sell.protection) - S_premium * (buy.annuity - sell.annuity)


class _ThreePartyPath:
    """Hazards and the perfectly collateralised value path ``V_bar(s)``."""

    def __init__(self, alpha, curves, deal):
        _check_three(curves, deal)
        if deal.foreign_collateral_spread != 0.0:
            raise ValueError("value-dependent discounting is domestic only")
        self.curves = curves
        self.deal = deal
        self.alpha = alpha
        self.T = deal.maturity
        self.breaks = common_breakpoints(curves, self.T)
        self.lgd = [c.loss_given_default for c in curves]
        c, S = deal.collateral_rate, deal.premium
        self.exponent = CumulativeIntegral(lambda s: c + self.h(0, s), 0.0, self.T, self.breaks)
        self.flow = CumulativeIntegral(
            lambda s: np.exp(-self.exponent(s)) * (-S + self.lgd[0] * self.h(0, s)),
            0.0, self.T, self.breaks)

    def h(self, i, s):
        return clayton_hazard(self.alpha, self.curves, i, s)

    def v_bar(self, s):
        return np.exp(self.exponent(s)) * (self.flow.total - self.flow(s))

    def sign_changes(self, n: int = 400) -> list[float]:
        grid = np.linspace(0.0, self.T, n + 1)
        vals = self.v_bar(grid)
        roots = []
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa * fb < 0:
                roots.append(brentq(lambda x: float(self.v_bar(x)), a, b, xtol=1e-14))
        return roots

    def integrate(self, integrand, rtol, atol) -> float:
        breaks = tuple(self.breaks) + tuple(self.sign_changes())
        return adaptive_simpson(lambda s: math.exp(-self.exponent(s)) * integrand(s), 0.0, self.T,
                                rtol=rtol, atol=atol, breakpoints=breaks).value


def gateaux_cca(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec, *,
                rtol: float = RTOL, atol: float = 1e-15) -> float:
    """First-order collateral cost adjustment for imperfect coverage."""
    d1, d2, y = deal.coverage_buyer, deal.coverage_seller, deal.collateral_return
    if y == 0.0 or (d1 == 1.0 and d2 == 1.0):
        return 0.0
    path = _ThreePartyPath(alpha, curves, deal)

    def integrand(s):
        v = float(path.v_bar(s))
        return y * ((1.0 - d1) * max(-v, 0.0) - (1.0 - d2) * max(v, 0.0))

    return path.integrate(integrand, rtol, atol)


def gateaux_cva(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec, *,
                rtol: float = RTOL, atol: float = 1e-15) -> float:
    """First-order credit adjustment for imperfect coverage."""
    d1, d2 = deal.coverage_buyer, deal.coverage_seller
    if d1 == 1.0 and d2 == 1.0:
        return 0.0
    path = _ThreePartyPath(alpha, curves, deal)
    b, s_ = deal.protection_buyer, deal.protection_seller

    def integrand(s):
        v = float(path.v_bar(s))
        pos, neg = max(v, 0.0), max(-v, 0.0)
        buyer = path.lgd[b] * float(path.h(b, s)) * (max(1 - d1, 0) * neg + max(d2 - 1, 0) * pos)
        seller = path.lgd[s_] * float(path.h(s_, s)) * (max(1 - d2, 0) * pos + max(d1 - 1, 0) * neg)
        return buyer - seller

    return path.integrate(integrand, rtol, atol)


def price_breakdown(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec) -> PriceBreakdown:
    legs = legs_3party(alpha, curves, deal)
    rf = risk_free_value(curves, deal)
    return PriceBreakdown(legs.value(deal.premium), gateaux_cca(alpha, curves, deal),
                          gateaux_cva(alpha, curves, deal), rf.value(deal.premium))


def _mu(v, y, d1, d2, lgd1, lgd2, h1, h2):
    if v < 0:
        return y * d1 - lgd1 * max(1 - d1, 0) * h1 + lgd2 * max(d1 - 1, 0) * h2
    return y * d2 - lgd2 * max(1 - d2, 0) * h2 + lgd1 * max(d2 - 1, 0) * h1


def _solve_backward(path: _ThreePartyPath, n: int, table, stride: int) -> float:
    deal = path.deal
    r = deal.collateral_rate + deal.collateral_return
    y, S = deal.collateral_return, deal.premium
    d1, d2 = deal.coverage_buyer, deal.coverage_seller
    b, s_ = deal.protection_buyer, deal.protection_seller
    lgd0, lgd1, lgd2 = path.lgd[0], path.lgd[b], path.lgd[s_]
    T = path.T

    def rhs(hz, v):
        h0, h1, h2 = hz
        mu = _mu(v, y, d1, d2, lgd1, lgd2, h1, h2)
        # d/d(T - t) of V
        return -((r - mu + h0) * v - (-S + lgd0 * h0))

    def hazards_at(t):
        return tuple(float(path.h(i, t)) for i in (0, b, s_))

    def step(v, hz0, hzm, hz1, dt):
        k1 = rhs(hz0, v)
        k2 = rhs(hzm, v + 0.5 * dt * k1)
        k3 = rhs(hzm, v + 0.5 * dt * k2)
        k4 = rhs(hz1, v + dt * k3)
        return v + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    h = T / n
    v = 0.0
    for m in range(n):
        j = m * stride
        hz0, hzm, hz1 = table[j], table[j + stride // 2], table[j + stride]
        new = step(v, hz0, hzm, hz1, h)
        if v != 0.0 and new != 0.0 and (v < 0) != (new < 0):
            theta = v / (v - new)
            t0 = T - m * h
            ta = t0 - theta * h
            hza = hazards_at(ta)
            mid = step(v, hz0, hazards_at(t0 - 0.5 * theta * h), hza, theta * h)
            rest = (1.0 - theta) * h
            new = step(mid, hza, hazards_at(ta - 0.5 * rest), hz1, rest)
        v = new
    return v


def backward_ode_value(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec, *,
                       step: float = ODE_STEP, tol: float = 1e-10) -> float:
    """Pre-default value with value-dependent collateral and credit adjustments.

    Integrates the scalar backward equation from ``V(T) = 0`` with classical RK4
    and checks the result once against half the step size.
    """
    path = _ThreePartyPath(alpha, curves, deal)
    n = max(1, math.ceil(path.T / step - 1e-9))
    fine = np.linspace(path.T, 0.0, 4 * n + 1)
    hz = np.stack([path.h(i, fine) for i in (0, deal.protection_buyer, deal.protection_seller)], -1)
    table = [tuple(row) for row in hz.tolist()]
    coarse = _solve_backward(path, n, table, 4)
    halved = _solve_backward(path, 2 * n, table, 2)
    if not abs(coarse - halved) <= tol:
        raise ODEConvergenceError(
            f"step halving moved the value by {abs(coarse - halved):.3e} (tolerance {tol:.1e})")
    return halved


@dataclass(frozen=True)
class ParCell:
    alpha: float
    maturity: float
    legs: LegValues

    @property
    def par_bp(self) -> float:
        return self.legs.par_spread_bp


def _cell(args) -> ParCell:
    alpha, T, curves, deal, seller, quad = args
    d = deal.replace(maturity=T)
    if len(curves) == 3:
        legs = legs_3party(alpha, curves, d, **quad)
    else:
        legs = legs_4party(alpha, curves, d, seller, **quad)
    return ParCell(alpha, T, legs)


def par_curve(alpha_grid, maturity_grid, curves: Sequence[MarginalCurve], deal: DealSpec, *,
              seller_is_party: int | None = None, jobs: int = 1, rtol: float = RTOL,
              atol: float = ATOL) -> list[ParCell]:
    """Par spreads on an (alpha, maturity) grid, ordered alpha-major.

    Three curves price the three-party case; four price the trade against
    ``seller_is_party`` (default: the deal's seller).  Cells are independent and
    give identical results for any ``jobs``.
    """
    seller = deal.protection_seller if seller_is_party is None else seller_is_party
    quad = {"rtol": rtol, "atol": atol}
    tasks = [(float(a), float(T), tuple(curves), deal, seller, quad)
             for a in alpha_grid for T in maturity_grid]
    if jobs <= 1:
        return [_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell, tasks))
