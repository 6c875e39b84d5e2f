"""Numerical integration: adaptive Simpson and composite Gauss-Legendre rules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when an integral fails to converge within the recursion limit."""


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    evaluations: int


def adaptive_simpson(f, a: float, b: float, *, rtol: float = 1e-10, atol: float = 1e-13,
                     breakpoints=(), max_depth: int = 50) -> QuadResult:
    """Integrate a scalar function on [a, b] by adaptive Simpson.

    The interval is first split at every breakpoint inside (a, b); each piece is
    refined until the Richardson error estimate meets its share of
    ``max(atol, rtol * |integral|)``.
    """
    if b < a:
        raise ValueError("need a <= b")
    if b == a:
        return QuadResult(0.0, 0.0, 0)
    cuts = [a, *sorted(p for p in set(breakpoints) if a < p < b), b]
    count = 0

    def fe(x):
        nonlocal count
        count += 1
        return float(f(x))

    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        flo, fmid, fhi = fe(lo), fe(mid), fe(hi)
        whole = (hi - lo) * (flo + 4.0 * fmid + fhi) / 6.0
        pieces.append((lo, hi, flo, fmid, fhi, whole))
    rough = math.fsum(p[-1] for p in pieces)
    target = max(atol, rtol * abs(rough))

    values, errors = [], []

    def refine(lo, hi, flo, fmid, fhi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = fe(lm), fe(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol or hi - lo <= 1e-12 * max(1.0, abs(hi)):
            values.append(left + right + delta / 15.0)
            errors.append(abs(delta) / 15.0)
            return
        if depth >= max_depth:
            raise QuadratureError(f"adaptive Simpson did not converge near t={mid:.6g}")
        refine(lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1)
        refine(mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1)

    span = b - a
    for lo, hi, flo, fmid, fhi, whole in pieces:
        refine(lo, hi, flo, fmid, fhi, whole, target * (hi - lo) / span, 0)
    return QuadResult(math.fsum(values), math.fsum(errors), count)


@lru_cache(maxsize=None)
def gauss_legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def panel_grid(a: float, b: float, breakpoints=(), max_width: float = 0.5) -> np.ndarray:
    """Grid from ``a`` to ``b`` that includes every breakpoint and has no wider cell."""
    cuts = [a, *sorted(p for p in set(breakpoints) if a < p < b), b]
    grid = [a]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((hi - lo) / max_width - 1e-9))
        grid.extend(lo + (hi - lo) * np.arange(1, n + 1) / n)
        grid[-1] = hi
    return np.asarray(grid, dtype=float)


def gauss_legendre(f, lo, hi, order: int = 16):
    """Gauss-Legendre integral of a vectorised ``f`` over [lo, hi], broadcast over arrays."""
    x, w = gauss_legendre_rule(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo
    nodes = lo[..., None] + width[..., None] * x
    return width * np.sum(w * f(nodes), axis=-1)


class CumulativeIntegral:
    """``F(s) = int_a^s f(u) du`` for arbitrary ``s`` in [a, b].

    Cell integrals are tabulated once on a grid containing the breakpoints; a
    query adds a Gauss-Legendre integral over the partial cell.  ``f`` must be
    vectorised and smooth within cells.
    """

    def __init__(self, f, a: float, b: float, breakpoints=(), max_width: float = 0.25,
                 order: int = 16):
        self.f = f
        self.a, self.b = float(a), float(b)
        self.order = order
        self.grid = panel_grid(self.a, self.b, breakpoints, max_width)
        cells = gauss_legendre(f, self.grid[:-1], self.grid[1:], order)
        self.table = np.concatenate(([0.0], np.cumsum(cells)))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.a - 1e-12) or np.any(s > self.b + 1e-12):
            raise ValueError(f"query outside [{self.a}, {self.b}]")
        s = np.clip(s, self.a, self.b)
        k = np.clip(np.searchsorted(self.grid, s, side="right") - 1, 0, self.grid.size - 2)
        return self.table[k] + gauss_legendre(self.f, self.grid[k], s, self.order)

    @property
    def total(self) -> float:
        return float(self.table[-1])


def discounted_integrals(rate, payoffs, a: float, b: float, breakpoints=(),
                         max_width: float = 0.5, order: int = 16) -> np.ndarray:
    """``int_a^b exp(-int_a^s rate) * g(s) ds`` for each ``g`` in ``payoffs``.

    Composite Gauss-Legendre with the inner exponent integrated by a nested rule
    at every outer node.  Returns an array with one entry per payoff.
    """
    if b <= a:
        return np.zeros(len(payoffs))
    grid = panel_grid(a, b, breakpoints, max_width)
    lo, hi = grid[:-1], grid[1:]
    x, w = gauss_legendre_rule(order)
    cell_rate = gauss_legendre(rate, lo, hi, order)
    before = np.concatenate(([0.0], np.cumsum(cell_rate)[:-1]))
    nodes = lo[:, None] + (hi - lo)[:, None] * x
    exponent = before[:, None] + gauss_legendre(rate, np.broadcast_to(lo[:, None], nodes.shape),
                                                nodes, order)
    disc = np.exp(-exponent) * (hi - lo)[:, None] * w
    return np.array([np.sum(disc * g(nodes)) for g in payoffs])


@lru_cache(maxsize=None)
def integration_matrix(order: int) -> np.ndarray:
    """``M`` with ``int_0^{x_j} f = sum_m M[j, m] f(x_m)`` for the degree ``order - 1``
    interpolant of ``f`` at the Gauss-Legendre nodes ``x`` on [0, 1]."""
    x, _ = gauss_legendre_rule(order)
    t = 2.0 * x - 1.0
    coef = np.linalg.solve(np.polynomial.legendre.legvander(t, order - 1), np.eye(order))
    anti = np.polynomial.legendre.legint(coef, lbnd=-1.0, axis=0)
    return 0.5 * np.polynomial.legendre.legval(t, anti).T


class PolynomialCumulative:
    """Tabulated ``F(s) = int_a^s f`` answering queries without calling ``f``.

    On each grid cell ``f`` is replaced by its interpolant at ``order``
    Gauss-Legendre nodes; queries evaluate the exact antiderivative of that
    polynomial.  Suitable for very many queries of a smooth ``f``.
    """

    def __init__(self, f, a: float, b: float, breakpoints=(), max_width: float = 1.0 / 32.0,
                 order: int = 8):
        self.a, self.b = float(a), float(b)
        self.grid = panel_grid(self.a, self.b, breakpoints, max_width)
        lo, width = self.grid[:-1], np.diff(self.grid)
        x, w = gauss_legendre_rule(order)
        values = f(lo[:, None] + width[:, None] * x)
        cells = width * (values @ w)
        self.table = np.concatenate(([0.0], np.cumsum(cells)))
        leg = np.linalg.solve(np.polynomial.legendre.legvander(2.0 * x - 1.0, order - 1), values.T)
        anti = np.polynomial.legendre.legint(leg, lbnd=-1.0, axis=0)
        # monomial coefficients in t = 2 xi - 1, highest power first, scaled by width / 2
        mono = np.stack([np.polynomial.legendre.leg2poly(anti[:, k]) for k in range(anti.shape[1])])
        self.coef = (0.5 * width)[:, None] * mono[:, ::-1]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.a - 1e-12) or np.any(s > self.b + 1e-12):
            raise ValueError(f"query outside [{self.a}, {self.b}]")
        s = np.clip(s, self.a, self.b)
        k = np.clip(np.searchsorted(self.grid, s, side="right") - 1, 0, self.grid.size - 2)
        t = 2.0 * (s - self.grid[k]) / (self.grid[k + 1] - self.grid[k]) - 1.0
        c = self.coef[k]
        acc = c[..., 0]
        for j in range(1, c.shape[-1]):
            acc = acc * t + c[..., j]
        return self.table[k] + acc

    @property
    def total(self) -> float:
        return float(self.table[-1])
