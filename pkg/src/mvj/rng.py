"""Seedable counter-based random streams.

Each ``(seed, index...)`` tuple names an independent Philox stream, so Monte
Carlo replications can be generated in any order (or in parallel) and still
reproduce exactly.
"""

from __future__ import annotations

import numpy as np

from .counts import DispersionMoments


def stream(seed: int | None, *index: int) -> np.random.Generator:
    if seed is None:
        return np.random.Generator(np.random.Philox())
    ss = np.random.SeedSequence([int(seed), *map(int, index)])
    return np.random.Generator(np.random.Philox(ss))


class BetaRSampler:
    """I.i.d. Beta(alpha, beta) draws for the dispersion variable ``r_t``."""

    def __init__(self, alpha: float, beta: float, seed: int | None = None):
        if not (alpha > 0 and beta > 0):
            raise ValueError(f"Beta shapes must be positive, got {(alpha, beta)}")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._rng = stream(seed)

    def draw(self, n: int) -> np.ndarray:
        return self._rng.beta(self.alpha, self.beta, size=n)

    def __iter__(self):
        while True:
            yield from self.draw(1024)

    def moments(self) -> DispersionMoments:
        a, b = self.alpha, self.beta
        return DispersionMoments(a / (a + b), a * (a + 1) / ((a + b) * (a + b + 1)))


def beta_r_sampler(alpha: float, beta: float, seed: int | None = None) -> BetaRSampler:
    return BetaRSampler(alpha, beta, seed)
