"""Clayton and product copulas with closed-form mixed partial derivatives.

Everything is evaluated in log space: the Clayton generator sum
``sum(u_k**-alpha) - n`` is formed as ``1 + sum(expm1(-alpha * log u_k))``, which
stays accurate for tiny ``alpha`` and for coordinates close to zero.  Inputs may
carry leading batch dimensions; the last axis indexes the parties.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

#: Below this the Clayton copula is evaluated as the product copula.
PRODUCT_ALPHA_CUTOFF = 1e-12


class CopulaFamily(enum.Enum):
    CLAYTON = "clayton"
    PRODUCT = "product"


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family with its dependence parameter and dimension.

    Args:
        family: Copula family.
        alpha: Clayton dependence parameter, ignored for the product family.
        dim: Number of parties, at least 2.
    """

    family: CopulaFamily
    alpha: float
    dim: int

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", CopulaFamily(self.family.lower()))
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and nonnegative, got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim}")

    @classmethod
    def clayton(cls, alpha: float, dim: int) -> CopulaSpec:
        return cls(CopulaFamily.CLAYTON, float(alpha), int(dim))

    @classmethod
    def product(cls, dim: int) -> CopulaSpec:
        return cls(CopulaFamily.PRODUCT, 0.0, int(dim))

    @property
    def is_product(self) -> bool:
        return self.family is CopulaFamily.PRODUCT or self.alpha < PRODUCT_ALPHA_CUTOFF


def _check_u(spec: CopulaSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] != spec.dim:
        raise ValueError(f"expected last dimension {spec.dim}, got shape {u.shape}")
    if np.any(~(u > 0.0)) or np.any(u > 1.0):
        raise ValueError("copula arguments must lie in (0, 1]")
    return u


def _check_logu(spec: CopulaSpec, logu) -> np.ndarray:
    logu = np.asarray(logu, dtype=float)
    if logu.ndim == 0 or logu.shape[-1] != spec.dim:
        raise ValueError(f"expected last dimension {spec.dim}, got shape {logu.shape}")
    if np.any(logu > 0.0) or np.any(np.isnan(logu)) or np.any(np.isneginf(logu)):
        raise ValueError("log-arguments must be finite and <= 0")
    return logu


def _check_parties(spec: CopulaSpec, parties) -> tuple[int, ...]:
    parties = tuple(int(p) for p in parties)
    if len(set(parties)) != len(parties):
        raise ValueError(f"repeated party index in {parties}")
    for p in parties:
        if not 0 <= p < spec.dim:
            raise ValueError(f"party index {p} out of range for dim {spec.dim}")
    return parties


def log_generator_sum(logu: np.ndarray, alpha: float) -> np.ndarray:
    """``log(sum_k u_k**-alpha - (dim - 1))`` without cancellation or overflow."""
    a = -alpha * logu
    n = logu.shape[-1] - 1
    m = a.max(axis=-1)
    small = m < 500.0
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.log1p(np.sum(np.expm1(np.where(small[..., None], a, 0.0)), axis=-1))
        shift = np.where(small, 0.0, m)
        big = shift + np.log(np.sum(np.exp(a - shift[..., None]), axis=-1) - n * np.exp(-shift))
    return np.where(small, direct, big)


def log_evaluate(spec: CopulaSpec, logu) -> np.ndarray:
    """``log C`` from log-arguments."""
    logu = _check_logu(spec, logu)
    if spec.is_product:
        return np.sum(logu, axis=-1)
    return -log_generator_sum(logu, spec.alpha) / spec.alpha


def log_subset_partial(spec: CopulaSpec, logu, parties) -> np.ndarray:
    """Log of the mixed partial of C over ``parties`` (empty gives ``log C``).

    For Clayton with ``m = len(parties)``::

        d^m C / prod du_j = prod_{k<m}(1 + k alpha) * C**(1 + m alpha) / prod u_j**(1 + alpha)
    """
    logu = _check_logu(spec, logu)
    parties = _check_parties(spec, parties)
    if spec.is_product:
        keep = [k for k in range(spec.dim) if k not in parties]
        return np.sum(logu[..., keep], axis=-1)
    m = len(parties)
    alpha = spec.alpha
    log_c = -log_generator_sum(logu, alpha) / alpha
    coef = math.fsum(math.log1p(k * alpha) for k in range(1, m))
    out = coef + (1.0 + m * alpha) * log_c
    if m:
        out = out - (1.0 + alpha) * np.sum(logu[..., list(parties)], axis=-1)
    return out


def evaluate(spec: CopulaSpec, u) -> np.ndarray:
    """Copula value C(u)."""
    u = _check_u(spec, u)
    if spec.is_product:
        return np.prod(u, axis=-1)
    return np.exp(log_evaluate(spec, np.log(u)))


def partial(spec: CopulaSpec, u, i: int) -> np.ndarray:
    """First partial derivative of C in coordinate ``i``."""
    u = _check_u(spec, u)
    return np.exp(log_subset_partial(spec, np.log(u), (i,)))


def partial2(spec: CopulaSpec, u, i: int, j: int) -> np.ndarray:
    """Mixed second partial derivative of C in coordinates ``i != j``."""
    if i == j:
        raise ValueError("partial2 needs two distinct coordinates")
    u = _check_u(spec, u)
    return np.exp(log_subset_partial(spec, np.log(u), (i, j)))


def subset_partial(spec: CopulaSpec, u, parties) -> np.ndarray:
    """Mixed partial derivative of C over a non-empty set of coordinates."""
    parties = tuple(parties)
    if not parties:
        raise ValueError("subset_partial needs at least one coordinate")
    if len(parties) > spec.dim - 1:
        raise ValueError("at most dim - 1 coordinates may be differentiated")
    u = _check_u(spec, u)
    return np.exp(log_subset_partial(spec, np.log(u), parties))
