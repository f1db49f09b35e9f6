"""Ensemble summaries shared by every Monte-Carlo routine."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnsembleEstimate:
    """Mean of ``n`` i.i.d. replicas with its standard error.

    ``stderr`` is the (ddof=0) sample standard deviation over ``sqrt(n)``, so a
    Bernoulli fraction reports exactly ``sqrt(p(1-p)/n)``.
    """

    mean: float
    stderr: float
    n: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed: int) -> "EnsembleEstimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n < 2:
            raise ValueError("an ensemble estimate needs at least two samples")
        mean = math.fsum(x) / n
        var = math.fsum((x - mean) ** 2) / n
        return cls(float(mean), math.sqrt(var / n), int(n), int(seed))

    @classmethod
    def bernoulli(cls, hits: int, n: int, seed: int) -> "EnsembleEstimate":
        if n < 2:
            raise ValueError("an ensemble estimate needs at least two samples")
        p = hits / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), int(n), int(seed))

    @property
    def rel_err(self) -> float:
        return self.stderr / abs(self.mean) if self.mean != 0 else math.inf

    def within(self, target: float, k: float = 3.0, extra_se: float = 0.0) -> bool:
        """True when ``target`` lies within ``k`` combined standard errors."""
        se = math.hypot(self.stderr, extra_se)
        return abs(self.mean - target) <= k * se

    def scaled(self, c: float) -> "EnsembleEstimate":
        return EnsembleEstimate(self.mean * c, self.stderr * abs(c), self.n, self.seed)
