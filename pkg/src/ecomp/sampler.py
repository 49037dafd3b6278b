"""Inversion sampling from an ECOMP distribution.

Uniforms come from numpy's PCG64 bit generator (``numpy.random.Generator``)
seeded with a 64-bit integer, so a given seed always reproduces the same
stream. Each uniform ``u`` maps to the smallest ``k`` with ``cdf(k) >= u``.
The cdf is cached and grown on demand with the pmf recurrence.
"""

from __future__ import annotations

import numpy as np

from .distribution import EcompDist, EcompParams
from .errors import NonConvergent

__all__ = ["SamplerState", "draw", "sample"]

CDF_TARGET = 1.0 - 1e-12


class SamplerState:
    """Single-owner sampler: a distribution, its RNG and a growable cdf cache."""

    def __init__(self, dist: EcompDist, rng_seed: int = 0):
        if isinstance(dist, EcompParams):
            dist = EcompDist(dist)
        self.dist = dist
        self.rng_seed = int(rng_seed)
        self.rng = np.random.Generator(np.random.PCG64(self.rng_seed))
        dist._require_table()
        self._cdf = np.empty(0)
        self._log_pk = float(dist.log_pmf(0))
        self._extend(64)

    @property
    def cached_cdf(self) -> np.ndarray:
        view = self._cdf.view()
        view.flags.writeable = False
        return view

    def _extend(self, size: int):
        """Append ``size`` cdf entries using P(k+1) = P(k) p (v+k)^beta / (k+1)^alpha."""
        start = len(self._cdf)
        if start >= self.dist.cfg.max_terms:
            raise NonConvergent(
                f"cdf did not reach {CDF_TARGET} within max_terms={self.dist.cfg.max_terms}"
            )
        size = min(size, self.dist.cfg.max_terms - start)
        k = np.arange(start, start + size, dtype=float)
        # log P(k) for k in [start, start+size): cumulative log ratios from log P(start)
        steps = self.dist.log_ratio(k[:-1])
        log_p = self._log_pk + np.concatenate(([0.0], np.cumsum(steps)))
        probs = np.exp(log_p)
        base = self._cdf[-1] if start else 0.0
        block = np.minimum(base + np.cumsum(probs), 1.0)
        self._cdf = np.concatenate((self._cdf, block))
        self._log_pk = float(log_p[-1] + self.dist.log_ratio(k[-1]))

    def _cover(self, u_max: float):
        target = min(u_max, CDF_TARGET)
        while self._cdf[-1] < target:
            self._extend(max(64, len(self._cdf)))

    def sample(self, n: int) -> np.ndarray:
        """``n`` i.i.d. draws as an int64 array."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        u = self.rng.random(n)
        self._cover(float(u.max()))
        idx = np.searchsorted(self._cdf, u, side="left")
        # u above the cached cdf's last value (< 1e-12 of the mass) maps to the end
        return np.minimum(idx, len(self._cdf) - 1).astype(np.int64)


def sample(state: SamplerState, n: int) -> np.ndarray:
    return state.sample(n)


def draw(dist: EcompDist, n: int, seed: int = 0) -> np.ndarray:
    """One-shot convenience wrapper around :class:`SamplerState`."""
    return SamplerState(dist, seed).sample(n)

