"""Counter-based random streams and gamma variates.

Every batch of paths draws from its own Philox stream, keyed by the 64-bit seed
and offset by the batch index, so results do not depend on how batches are
spread over workers.
"""
from __future__ import annotations

import numpy as np


def batch_stream(seed: int, batch_index: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(batch_index)))


def standard_gamma(rng: np.random.Generator, shape: float, size: int) -> np.ndarray:
    """Gamma(shape, 1) variates by Marsaglia-Tsang rejection.

    Shapes below one are boosted to ``shape + 1`` and scaled by ``U**(1/shape)``.
    """
    if not shape > 0:
        raise ValueError("gamma shape must be positive")
    if shape < 1.0:
        g = standard_gamma(rng, shape + 1.0, size)
        return g * np.exp(np.log(rng.random(size)) / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        x = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        v = (1.0 + c * x) ** 3
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            ok &= np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v)
        out[pending[ok]] = d * v[ok]
        pending = pending[~ok]
    return out
