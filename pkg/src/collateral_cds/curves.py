"""Piecewise-constant marginal default intensities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MarginalCurve:
    """Marginal default intensity of one party, with its recovery rate.

    ``intensities[k]`` applies on ``[starts[k], starts[k+1])`` where
    ``starts = (0, *knots)``; the last value extends to infinity.

    Args:
        intensities: Intensity values per year, one more than ``knots``.
        knots: Strictly increasing positive times where the intensity changes.
        recovery: Recovery rate in [0, 1].
        party: Optional party index, informational only.
    """

    intensities: tuple[float, ...]
    knots: tuple[float, ...] = ()
    recovery: float = 0.4
    party: int | None = None
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _lams: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lams = np.atleast_1d(np.asarray(self.intensities, dtype=float))
        knots = np.atleast_1d(np.asarray(self.knots, dtype=float))
        if lams.ndim != 1 or lams.size != knots.size + 1:
            raise ValueError("need exactly one more intensity than knots")
        if np.any(~np.isfinite(lams)) or np.any(lams < 0):
            raise ValueError("intensities must be finite and nonnegative")
        if knots.size and (knots[0] <= 0 or np.any(np.diff(knots) <= 0)):
            raise ValueError("knots must be positive and strictly increasing")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValueError("recovery must lie in [0, 1]")
        starts = np.concatenate(([0.0], knots))
        cum = np.concatenate(([0.0], np.cumsum(lams[:-1] * np.diff(starts))))
        object.__setattr__(self, "intensities", tuple(float(x) for x in lams))
        object.__setattr__(self, "knots", tuple(float(x) for x in knots))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_lams", lams)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def flat(cls, intensity: float, recovery: float = 0.4, party: int | None = None) -> MarginalCurve:
        return cls((intensity,), (), recovery, party)

    @classmethod
    def from_effective_spread(cls, spread_bp: float, recovery: float = 0.4,
                              party: int | None = None) -> MarginalCurve:
        """Constant intensity with ``(1 - recovery) * intensity = spread_bp``."""
        if recovery >= 1.0:
            raise ValueError("effective spread needs recovery < 1")
        return cls.flat(spread_bp * 1e-4 / (1.0 - recovery), recovery, party)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.knots

    @property
    def loss_given_default(self) -> float:
        return 1.0 - self.recovery

    @property
    def max_intensity(self) -> float:
        return float(self._lams.max())

    def _segment(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        return t, np.searchsorted(self._starts, t, side="right") - 1

    def intensity(self, t):
        """Right-continuous intensity at ``t``."""
        if not self.knots:
            t = np.asarray(t, dtype=float)
            if np.any(t < 0):
                raise ValueError("time must be nonnegative")
            return np.full(t.shape, self._lams[0])
        t, k = self._segment(t)
        return self._lams[k]

    def cumulative(self, t):
        """Integrated intensity from 0 to ``t``."""
        if not self.knots:
            t = np.asarray(t, dtype=float)
            if np.any(t < 0):
                raise ValueError("time must be nonnegative")
            return self._lams[0] * t
        t, k = self._segment(t)
        return self._cum[k] + self._lams[k] * (t - self._starts[k])

    def log_survival(self, t):
        return -self.cumulative(t)

    def survival(self, t):
        return np.exp(-self.cumulative(t))

    def inverse_cumulative(self, e):
        """First time at which the integrated intensity reaches ``e``.

        Returns ``inf`` where the level is never reached.
        """
        e = np.asarray(e, dtype=float)
        if np.any(e < 0):
            raise ValueError("level must be nonnegative")
        k = np.clip(np.searchsorted(self._cum, e, side="left") - 1, 0, None)
        lam = self._lams[k]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = self._starts[k] + (e - self._cum[k]) / lam
        t = np.where(lam > 0, t, np.inf)
        return np.where(e <= 0, 0.0, t)


def marginal_survival(curve: MarginalCurve, t):
    """Survival probability ``exp(-int_0^t lambda)``, exact for piecewise intensities."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    return curve.survival(t)


def common_breakpoints(curves, horizon: float | None = None) -> tuple[float, ...]:
    """Sorted union of all curves' knots, optionally restricted to (0, horizon)."""
    pts = sorted({k for c in curves for k in c.knots})
    if horizon is not None:
        pts = [p for p in pts if 0.0 < p < horizon]
    return tuple(pts)
