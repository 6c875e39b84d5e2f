"""Clayton-dependent uniforms and default times."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..copula import PRODUCT_ALPHA_CUTOFF
from ..curves import MarginalCurve
from .rng import standard_gamma


def sample_clayton_thresholds(alpha: float, dim: int, rng: np.random.Generator,
                              size: int) -> np.ndarray:
    """``-log U`` for ``size`` Clayton-distributed uniform vectors, shape (size, dim).

    Frailty construction: ``W ~ Gamma(1/alpha)``, ``U_i = (1 + X_i / W)**(-1/alpha)``
    with unit exponentials ``X_i``.  ``alpha = 0`` gives independent uniforms.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha < PRODUCT_ALPHA_CUTOFF:
        return rng.standard_exponential((size, dim))
    w = standard_gamma(rng, 1.0 / alpha, size)
    x = rng.standard_exponential((size, dim))
    return np.log1p(x / w[:, None]) / alpha


def sample_clayton(alpha: float, dim: int, rng: np.random.Generator, size: int | None = None):
    """Uniform vectors with Clayton dependence; one vector when ``size`` is None."""
    e = sample_clayton_thresholds(alpha, dim, rng, 1 if size is None else size)
    u = np.exp(-e)
    return u[0] if size is None else u


def _has_tie(tau: np.ndarray) -> np.ndarray:
    s = np.sort(tau, axis=1)
    return np.any((np.diff(s, axis=1) == 0) & np.isfinite(s[:, 1:]), axis=1)


def draw_default_times(alpha: float, curves: Sequence[MarginalCurve], rng: np.random.Generator,
                       size: int) -> np.ndarray:
    """Default times ``tau_i = inf{t : Lambda_i(t) >= -log U_i}``, shape (size, dim).

    Paths with two equal finite default times are redrawn.
    """
    dim = len(curves)

    def draw(n):
        e = sample_clayton_thresholds(alpha, dim, rng, n)
        return np.stack([c.inverse_cumulative(e[:, k]) for k, c in enumerate(curves)], axis=1)

    tau = draw(size)
    tied = np.flatnonzero(_has_tie(tau))
    while tied.size:
        tau[tied] = draw(tied.size)
        tied = tied[_has_tie(tau[tied])]
    return tau
