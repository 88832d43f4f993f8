"""Brute-force reference implementations shared by the tests."""

from __future__ import annotations

from collections import defaultdict


def brute_counts(dist, max_n):
    """Plain recursive SAW enumeration: {n: {endpoint: weight}}."""
    steps = dist.support
    out = [defaultdict(float) for _ in range(max_n + 1)]
    origin = (0,) * dist.dimension

    def rec(pos, visited, w, n):
        out[n][pos] += w
        if n == max_n:
            return
        for s, p in steps:
            y = tuple(a + b for a, b in zip(pos, s))
            if y not in visited:
                visited.add(y)
                rec(y, visited, w * p, n + 1)
                visited.remove(y)

    rec(origin, {origin}, 1.0, 0)
    return out
