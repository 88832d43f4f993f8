"""Walker/Vose alias tables for O(1) sampling from a finite distribution."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _build(weights):
    n = weights.shape[0]
    prob = np.empty(n, dtype=np.float64)
    alias = np.empty(n, dtype=np.int64)
    scaled = weights * (n / weights.sum())
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    for j in range(nl):
        prob[large[j]] = 1.0
        alias[large[j]] = large[j]
    # leftovers in `small` are numerically 1
    for j in range(ns):
        prob[small[j]] = 1.0
        alias[small[j]] = small[j]
    return prob, alias


@numba.njit(cache=True)
def draw_index(prob, alias, gen):
    n = prob.shape[0]
    i = int(gen.random() * n)
    if i == n:
        i = n - 1
    if gen.random() < prob[i]:
        return i
    return alias[i]


class AliasTable:
    """Alias table over ``len(weights)`` outcomes; weights need not be normalised."""

    def __init__(self, weights):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError("weights must be non-negative with positive total")
        self.prob, self.alias = _build(weights)

    def __len__(self) -> int:
        return self.prob.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        i = rng.integers(0, len(self), size=size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])

    def implied_probabilities(self) -> np.ndarray:
        """Exact outcome probabilities encoded by the table (for checking the build)."""
        n = len(self)
        p = self.prob / n
        np.add.at(p, self.alias, (1.0 - self.prob) / n)
        return p
