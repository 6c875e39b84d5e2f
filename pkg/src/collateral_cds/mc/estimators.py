"""Monte Carlo estimators used to cross-check the deterministic pricer.

Paths are simulated under the pricing measure from Clayton frailty samples.  The
weighted estimator restores the survival measure with the density
``1{tau > s} exp(int_0^s sum of trading-party hazards)``; per-path time integrals
are evaluated by Gauss-Legendre rules that break at the simulated default time of
the outside party.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ..curves import MarginalCurve, common_breakpoints
from ..hazard import ScenarioState, SurvivalSet, clayton_hazards
from ..pricer import DealSpec
from ..quadrature import PolynomialCumulative, gauss_legendre_rule, integration_matrix
from .sampling import draw_default_times
from .rng import batch_stream

_TABLE_WIDTH = 1.0 / 32.0
_TABLE_ORDER = 8
_POST_CHUNK = 4096
_PANEL_WIDTH = 2.0
_PANEL_ORDER = 10


class InsufficientPathsError(RuntimeError):
    """No simulated path fell in the conditioning event."""


class NonFiniteWeightError(FloatingPointError):
    """A path weight overflowed, which signals a hazard blow-up."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation size and seeding.

    ``batch`` fixes how paths map to random streams; ``jobs`` only sets the
    number of worker processes and never changes results.
    """

    paths: int = 1_000_000
    seed: int = 20110411
    batch: int = 50_000
    horizon: float | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.paths < 1 or self.batch < 1:
            raise ValueError("paths and batch must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")

    def batches(self) -> list[tuple[int, int]]:
        full, rest = divmod(self.paths, self.batch)
        sizes = [self.batch] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    paths: int

    def interval(self, level: float = 0.999) -> tuple[float, float]:
        z = norm.ppf(0.5 + 0.5 * level)
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    def zscore(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.stderr


@dataclass(frozen=True)
class MCLegEstimate:
    """Sample moments of per-path annuity and protection contributions."""

    paths: int
    annuity_mean: float
    protection_mean: float
    var_annuity: float
    var_protection: float
    cov: float

    @classmethod
    def from_sums(cls, s) -> MCLegEstimate:
        n, sa, sb, saa, sbb, sab = s
        n = int(n)
        ma, mb = sa / n, sb / n
        dof = max(n - 1, 1)
        return cls(n, ma, mb, (saa - n * ma * ma) / dof, (sbb - n * mb * mb) / dof,
                   (sab - n * ma * mb) / dof)

    @property
    def annuity(self) -> MCEstimate:
        return MCEstimate(self.annuity_mean, math.sqrt(max(self.var_annuity, 0) / self.paths), self.paths)

    @property
    def protection(self) -> MCEstimate:
        return MCEstimate(self.protection_mean, math.sqrt(max(self.var_protection, 0) / self.paths),
                          self.paths)

    def value(self, premium: float) -> MCEstimate:
        var = self.var_protection - 2 * premium * self.cov + premium**2 * self.var_annuity
        return MCEstimate(self.protection_mean - premium * self.annuity_mean,
                          math.sqrt(max(var, 0) / self.paths), self.paths)

    @property
    def par(self) -> MCEstimate:
        p = self.protection_mean / self.annuity_mean
        resid = self.value(p)
        return MCEstimate(p, resid.stderr / self.annuity_mean, self.paths)


def _leg_sums(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteWeightError("non-finite path contribution")
    return np.array([a.size, math.fsum(a), math.fsum(b), math.fsum(a * a), math.fsum(b * b),
                     math.fsum(a * b)])


def _run(kind: str, params, sim: SimConfig) -> np.ndarray:
    tasks = [(kind, params, sim.seed, b, n) for b, n in sim.batches()]
    if sim.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=sim.jobs) as pool:
            parts = list(pool.map(_batch, tasks))
    else:
        parts = [_batch(t) for t in tasks]
    parts = np.array(parts)
    return np.array([math.fsum(col) for col in parts.T])


def _batch(task) -> np.ndarray:
    kind, params, seed, b, n = task
    return _BATCHES[kind](params, batch_stream(seed, b), n)


def path_integrals(fields, lo, hi, v, breakpoints=(), panel_width: float = 0.5,
                   order: int = 10):
    """Per-path ``int_lo^hi exp(int_lo^s growth(u, v) du) g(s, v) ds``.

    ``lo``, ``hi`` and ``v`` hold one entry per path.  ``fields(s, v)`` returns
    ``(growth, payoffs)`` at broadcastable arrays, where ``payoffs`` is a list.
    Each path is cut at the global breakpoints and into panels no wider than
    ``panel_width``; the inner exponent uses the spectral integration matrix on
    the same nodes, so the fields are evaluated once per node.  Returns the total
    exponent and one array per payoff.
    """
    x, w = gauss_legendre_rule(order)
    mat = integration_matrix(order)
    n = lo.size
    acc = np.zeros(n)
    outs = None
    edges = [0.0, *breakpoints, np.inf]
    span = np.clip(hi - lo, 0.0, None)
    panels = max(1, int(math.ceil(float(span.max(initial=0.0)) / panel_width)))
    frac = np.arange(panels + 1) / panels
    for b0, b1 in zip(edges[:-1], edges[1:]):
        s0 = np.maximum(lo, b0)
        width = np.clip(np.minimum(hi, b1) - s0, 0.0, None)
        if not np.any(width > 0):
            continue
        pe = s0[:, None] + width[:, None] * frac
        plo, pw = pe[:, :-1], np.diff(pe, axis=1)
        nodes = plo[..., None] + pw[..., None] * x
        growth, payoffs = fields(nodes, v[:, None, None])
        growth = np.broadcast_to(growth, nodes.shape)
        cell = pw * (growth @ w)
        before = acc[:, None] + np.cumsum(cell, axis=1) - cell
        inner = pw[..., None] * (growth @ mat.T)
        weight = np.exp(before[..., None] + inner) * (pw[..., None] * w)
        if outs is None:
            outs = [np.zeros(n) for _ in payoffs]
        for out, g in zip(outs, payoffs):
            out += np.sum(weight * g, axis=(1, 2))
        acc = acc + cell.sum(axis=1)
    if outs is None:
        _, payoffs = fields(np.zeros((0, 1, 1)), np.zeros((0, 1, 1)))
        outs = [np.zeros(n) for _ in payoffs]
    return acc, outs


def _chunked_path_integrals(fields, lo, hi, v, breaks):
    # chunks of similar span keep the panel count per chunk tight
    order = np.argsort(hi - lo, kind="stable")
    acc = np.zeros(lo.size)
    outs = None
    for start in range(0, lo.size, _POST_CHUNK):
        idx = order[start:start + _POST_CHUNK]
        a, parts = path_integrals(fields, lo[idx], hi[idx], v[idx], breaks, _PANEL_WIDTH, _PANEL_ORDER)
        if outs is None:
            outs = [np.zeros(lo.size) for _ in parts]
        acc[idx] = a
        for out, part in zip(outs, parts):
            out[idx] = part
    return acc, outs or []


class _Setup:
    """Parties, hazards and breakpoints shared by the pricing estimators."""

    def __init__(self, alpha, curves, deal: DealSpec):
        dim = len(curves)
        if dim not in (3, 4):
            raise ValueError("Monte Carlo pricing supports three or four parties")
        self.alpha = alpha
        self.curves = tuple(curves)
        self.deal = deal
        self.T = deal.maturity
        self.trading = (deal.reference, deal.protection_buyer, deal.protection_seller)
        outside = [k for k in range(dim) if k not in self.trading]
        self.outside = outside[0] if outside else None
        self.r = deal.discount_spread
        self.lgd = curves[deal.reference].loss_given_default
        self.breaks = common_breakpoints(curves, self.T)

    def hs(self, parties, s, v=None):
        """Stacked hazards of ``parties`` (last axis); ``v`` freezes the outside party."""
        frozen = None if v is None else {self.outside: v}
        return clayton_hazards(self.alpha, self.curves, tuple(parties), s, frozen)

    def h(self, i, s, v=None):
        return self.hs((i,), s, v)[..., 0]

    def table(self, f):
        return PolynomialCumulative(f, 0.0, self.T, self.breaks, _TABLE_WIDTH, _TABLE_ORDER)


class _WeightedModel(_Setup):
    def __init__(self, alpha, curves, deal):
        super().__init__(alpha, curves, deal)
        _, b, s = self.trading
        self.growth = self.table(lambda t: self.hs((b, s), t).sum(axis=-1) - self.r)
        self.ann = self.table(lambda t: np.exp(self.growth(t)))
        self.prot = self.table(lambda t: np.exp(self.growth(t)) * self.lgd * self.h(0, t))
        self.mass = self.table(lambda t: self.hs(self.trading, t).sum(axis=-1))

    def post_fields(self, s, v):
        h = self.hs(self.trading, s, v)
        return h[..., 1] + h[..., 2] - self.r, [np.ones_like(h[..., 0]), self.lgd * h[..., 0]]

    def mass_fields(self, s, v):
        return self.hs(self.trading, s, v).sum(axis=-1), []


@lru_cache(maxsize=16)
def _weighted_model(alpha, curves, deal) -> _WeightedModel:
    return _WeightedModel(alpha, curves, deal)


def _weighted_batch(params, rng, n):
    m = _weighted_model(*params)
    tau = draw_default_times(m.alpha, m.curves, rng, n)
    x = np.minimum(tau[:, list(m.trading)].min(axis=1), m.T)
    v = tau[:, m.outside] if m.outside is not None else np.full(n, np.inf)
    a = np.minimum(v, x)
    ann, prot = m.ann(a), m.prot(a)
    post = np.flatnonzero(v < x)
    if post.size:
        vp = v[post]
        _, (pa, pb) = _chunked_path_integrals(m.post_fields, vp, x[post], vp, m.breaks)
        scale = np.exp(m.growth(vp))
        ann[post] += scale * pa
        prot[post] += scale * pb
    return _leg_sums(ann, prot)


def _mass_batch(params, rng, n):
    m = _weighted_model(*params)
    tau = draw_default_times(m.alpha, m.curves, rng, n)
    alive = tau[:, list(m.trading)].min(axis=1) > m.T
    v = tau[:, m.outside] if m.outside is not None else np.full(n, np.inf)
    a = np.minimum(v, m.T)
    expo = m.mass(a)
    post = np.flatnonzero(alive & (v < m.T))
    if post.size:
        vp = v[post]
        acc, _ = _chunked_path_integrals(m.mass_fields, vp, np.full(vp.size, m.T), vp, m.breaks)
        expo[post] += acc
    weight = np.where(alive, np.exp(expo), 0.0)
    if not np.all(np.isfinite(weight)):
        raise NonFiniteWeightError("density weight overflowed")
    return np.array([n, math.fsum(weight), math.fsum(weight * weight)])


class _SurvivalMeasureModel(_Setup):
    def __init__(self, alpha, curves, deal):
        super().__init__(alpha, curves, deal)
        if self.outside is None:
            raise ValueError("the survival-measure estimator needs an outside party")
        k = self.outside
        self.disc = self.table(lambda t: self.r + self.h(0, t))
        self.ann = self.table(lambda t: np.exp(-self.disc(t)))
        self.prot = self.table(lambda t: np.exp(-self.disc(t)) * self.lgd * self.h(0, t))
        self.cum_k = self.table(lambda t: self.h(k, t))

    def post_fields(self, s, v):
        h0 = self.h(0, s, v)
        return -(self.r + h0), [np.ones_like(h0), self.lgd * h0]

    def outside_default_times(self, e: np.ndarray) -> np.ndarray:
        """Invert the outside party's integrated hazard at exponential levels ``e``."""
        H = self.cum_k
        out = np.full(e.size, np.inf)
        hit = np.flatnonzero(e < H.total)
        if not hit.size:
            return out
        lev = e[hit]
        cell = np.clip(np.searchsorted(H.table, lev, side="right") - 1, 0, H.grid.size - 2)
        lo, hi = H.grid[cell], H.grid[cell + 1]
        rate0 = self.h(self.outside, lo)
        t = np.clip(lo + (lev - H.table[cell]) / np.where(rate0 > 0, rate0, np.inf), lo, hi)
        for _ in range(8):
            rate = self.h(self.outside, t)
            t = np.clip(t - (H(t) - lev) / np.where(rate > 0, rate, np.inf), lo, hi)
        out[hit] = t
        return out


@lru_cache(maxsize=16)
def _survival_measure_model(alpha, curves, deal) -> _SurvivalMeasureModel:
    return _SurvivalMeasureModel(alpha, curves, deal)


def _survival_measure_batch(params, rng, n):
    m = _survival_measure_model(*params)
    v = m.outside_default_times(rng.standard_exponential(n))
    a = np.minimum(v, m.T)
    ann, prot = m.ann(a), m.prot(a)
    post = np.flatnonzero(v < m.T)
    if post.size:
        vp = v[post]
        _, (pa, pb) = _chunked_path_integrals(m.post_fields, vp, np.full(vp.size, m.T), vp,
                                              m.breaks)
        scale = np.exp(-m.disc(vp))
        ann[post] += scale * pa
        prot[post] += scale * pb
    return _leg_sums(ann, prot)


def _risk_free_batch(params, rng, n):
    curve, deal = params
    tau = curve.inverse_cumulative(rng.standard_exponential(n))
    x = np.minimum(tau, deal.maturity)
    r = deal.discount_spread
    ann = -np.expm1(-r * x) / r if r != 0 else x
    prot = np.where(tau <= deal.maturity, curve.loss_given_default * np.exp(-r * np.minimum(tau, deal.maturity)), 0.0)
    return _leg_sums(ann, prot)


def _conditioning_mask(tau, cond: ScenarioState, width: float):
    t = cond.clock
    mask = np.ones(tau.shape[0], dtype=bool)
    for k in range(tau.shape[1]):
        if k in cond.defaults:
            mask &= np.abs(tau[:, k] - cond.defaults[k]) <= 0.5 * width
            mask &= tau[:, k] <= t
        else:
            mask &= tau[:, k] > t
    return mask


def _binned_batch(params, rng, n):
    alpha, curves, cond, i, dt, width = params
    tau = draw_default_times(alpha, curves, rng, n)
    mask = _conditioning_mask(tau, cond, width)
    event = mask & (tau[:, i] <= cond.clock + dt)
    return np.array([mask.sum(), event.sum()], dtype=float)


def _cond_survival_batch(params, rng, n):
    alpha, curves, cond, i, T, width = params
    tau = draw_default_times(alpha, curves, rng, n)
    mask = _conditioning_mask(tau, cond, width)
    return np.array([mask.sum(), (mask & (tau[:, i] > T)).sum()], dtype=float)


_BATCHES = {
    "weighted": _weighted_batch,
    "mass": _mass_batch,
    "survival": _survival_measure_batch,
    "risk_free": _risk_free_batch,
    "binned": _binned_batch,
    "cond_survival": _cond_survival_batch,
}


def _check_deal_horizon(deal: DealSpec, sim: SimConfig):
    if sim.horizon is not None and sim.horizon < deal.maturity:
        raise ValueError("simulation horizon is shorter than the deal maturity")


def mc_price_weighted(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec,
                      sim: SimConfig) -> MCLegEstimate:
    """Legs of the perfectly collateralised CDS by density-weighted simulation."""
    _check_deal_horizon(deal, sim)
    return MCLegEstimate.from_sums(_run("weighted", (float(alpha), tuple(curves), deal), sim))


def mc_price_survival_measure(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec,
                              sim: SimConfig) -> MCLegEstimate:
    """Four-party legs simulating only the outside default time under the survival measure."""
    _check_deal_horizon(deal, sim)
    return MCLegEstimate.from_sums(_run("survival", (float(alpha), tuple(curves), deal), sim))


def mc_density_mass(alpha: float, curves: Sequence[MarginalCurve], deal: DealSpec,
                    sim: SimConfig) -> MCEstimate:
    """Mean of ``1{tau > T} exp(int_0^T sum of trading-party hazards)``; equals one."""
    n, s, ss = _run("mass", (float(alpha), tuple(curves), deal), sim)
    mean = s / n
    var = (ss - n * mean * mean) / max(n - 1, 1)
    return MCEstimate(mean, math.sqrt(max(var, 0) / n), int(n))


def mc_risk_free_legs(curves: Sequence[MarginalCurve], deal: DealSpec, sim: SimConfig) -> MCLegEstimate:
    """Legs between default-free parties from simulated reference default times."""
    _check_deal_horizon(deal, sim)
    return MCLegEstimate.from_sums(_run("risk_free", (curves[deal.reference], deal), sim))


def _ratio(counts, paths, scale=1.0) -> MCEstimate:
    n_cond, n_event = counts
    if n_cond == 0:
        raise InsufficientPathsError("no path fell in the conditioning event")
    p = n_event / n_cond
    return MCEstimate(float(p / scale), float(math.sqrt(p * (1 - p) / n_cond) / scale), int(n_cond))


def mc_hazard_binned(alpha: float, curves: Sequence[MarginalCurve], conditioning: ScenarioState,
                     survival_set: SurvivalSet, i: int, sim: SimConfig, *, dt: float = 0.01,
                     bin_width: float = 0.1) -> MCEstimate:
    """Conditional default frequency of party ``i`` over ``(t, t + dt]``, divided by ``dt``.

    Conditioning: parties recorded in ``conditioning`` defaulted within
    ``bin_width`` of their recorded time; every other party is alive at the clock.
    ``paths`` in the result counts the conditioning hits.
    """
    if survival_set.members & set(conditioning.defaults):
        raise ValueError("survival-set members cannot be conditioned to default")
    if i in conditioning.defaults:
        raise ValueError(f"party {i} is conditioned to have defaulted")
    counts = _run("binned", (float(alpha), tuple(curves), conditioning, i, dt, bin_width), sim)
    return _ratio(counts, sim.paths, dt)


def mc_conditional_survival_binned(alpha: float, curves: Sequence[MarginalCurve],
                                   conditioning: ScenarioState, i: int, T: float, sim: SimConfig,
                                   *, bin_width: float = 0.1) -> MCEstimate:
    """Frequency of ``tau_i > T`` on the conditioning event of :func:`mc_hazard_binned`."""
    if i in conditioning.defaults:
        raise ValueError(f"party {i} is conditioned to have defaulted")
    counts = _run("cond_survival", (float(alpha), tuple(curves), conditioning, i, T, bin_width), sim)
    return _ratio(counts, sim.paths)
