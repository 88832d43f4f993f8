"""Exact self-avoiding walk weights by inclusion-exclusion over coincidences.

Expanding ``prod_{i<j} (1 - [w_i = w_j])`` and grouping the terms by the
partition of ``{0..n}`` they force gives

    c_n(x) = sum_P mu(P) W_P(x),    mu(P) = prod_B (-1)^{|B|-1} (|B|-1)!,

where ``W_P`` is the weight of (not necessarily self-avoiding) walks that
visit the same site at all times within a block.  Blocks holding two
consecutive times vanish because ``D(0) = 0``; the remaining partitions of
``{0..n}`` are in bijection with all partitions of ``{1..n}``.

Each ``W_P`` is a graph whose vertices are blocks and whose edges are the
steps.  With the origin (and, for resolved output, the endpoint) pinned,
the graph is reduced by summing out degree-1 vertices, convolving through
degree-2 vertices and multiplying parallel edges.  For ``n <= 6`` the
graph with an extra origin-endpoint edge is Eulerian with at most seven
edges, so it has no K4 minor and the reduction always completes.

Functions live on a periodic grid ``(Z/N)^d`` in FFT ordering.  Resolved
output needs ``N >= 2 n R + 1``; totals only need ``N >= n R + 1``.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from math import factorial

import numpy as np
from scipy import fft as sfft


class NotSeriesParallel(RuntimeError):
    pass


def coincidence_partitions(n: int):
    """Restricted growth strings of length n+1 with no equal neighbours."""
    b = [0] * (n + 1)

    def rec(i: int, top: int):
        if i > n:
            yield tuple(b)
            return
        for v in range(top + 2):
            if v == b[i - 1]:
                continue
            b[i] = v
            yield from rec(i + 1, max(top, v))

    if n == 0:
        yield (0,)
        return
    yield from rec(1, 0)


def mobius_weight(blocks) -> int:
    w = 1
    for size in Counter(blocks).values():
        w *= (-1) ** (size - 1) * factorial(size - 1)
    return w


class GridAlgebra:
    """Memoised convolution/product algebra over grid functions.

    Nodes are hashable keys: ``("e", label)`` for leaves, ``("c", a, b)``
    for convolutions and ``("m", a, b)`` for pointwise products.  Reflections
    ``f(z) -> f(-z)`` are pushed down to the leaves through ``flips``.
    """

    def __init__(self, n_grid: int, d: int, leaves: dict, flips: dict, cache_bytes: int = 1 << 30):
        if n_grid % 2 == 0:
            raise ValueError("grid size must be odd")
        self.n = n_grid
        self.d = d
        self.shape = (n_grid,) * d
        self.is_complex = any(np.iscomplexobj(a) for a in leaves.values())
        self.leaves = leaves
        self.flips = flips
        self.cache_bytes = cache_bytes
        self._cache: OrderedDict = OrderedDict()
        self._used = 0
        self._scalars: dict = {}

    # ---------------------------------------------------------- keys

    def leaf(self, label):
        return ("e", label)

    def flip(self, key):
        kind = key[0]
        if kind == "e":
            return ("e", self.flips[key[1]])
        return self._norm(kind, self.flip(key[1]), self.flip(key[2]))

    def conv(self, a, b):
        return self._norm("c", a, b)

    def mul(self, a, b):
        return self._norm("m", a, b)

    @staticmethod
    def _norm(kind, a, b):
        return (kind, a, b) if repr(a) <= repr(b) else (kind, b, a)

    # ---------------------------------------------------------- arrays

    def _get(self, tag, key):
        item = self._cache.get((tag, key))
        if item is not None:
            self._cache.move_to_end((tag, key))
        return item

    def _put(self, tag, key, arr):
        if arr.nbytes > self.cache_bytes:
            return arr
        self._cache[(tag, key)] = arr
        self._used += arr.nbytes
        while self._used > self.cache_bytes:
            _, old = self._cache.popitem(last=False)
            self._used -= old.nbytes
        return arr

    def _fwd(self, a):
        if self.is_complex:
            return sfft.fftn(a)
        return sfft.rfftn(a)

    def _inv(self, f):
        if self.is_complex:
            return sfft.ifftn(f)
        return sfft.irfftn(f, s=self.shape)

    def real(self, key) -> np.ndarray:
        if key[0] == "e":
            return self.leaves[key[1]]
        arr = self._get("r", key)
        if arr is not None:
            return arr
        if key[0] == "m":
            arr = self.real(key[1]) * self.real(key[2])
        else:
            arr = self._inv(self.fourier(key))
        return self._put("r", key, arr)

    def fourier(self, key) -> np.ndarray:
        arr = self._get("f", key)
        if arr is not None:
            return arr
        if key[0] == "c":
            arr = self.fourier(key[1]) * self.fourier(key[2])
        else:
            arr = self._fwd(self.real(key))
        return self._put("f", key, arr)

    # ---------------------------------------------------------- scalars

    def total(self, key):
        """sum_z f(z)"""
        got = self._scalars.get(("t", key))
        if got is None:
            if key[0] == "c":
                got = self.total(key[1]) * self.total(key[2])
            else:
                got = self.real(key).sum()
            self._scalars[("t", key)] = got
        return got

    def at_origin(self, key):
        """f(0)"""
        got = self._scalars.get(("0", key))
        if got is None:
            if key[0] == "c":
                f = self.fourier(key)
                if self.is_complex:
                    got = f.sum() / f.size
                else:
                    got = (f[..., 0].real.sum() + 2.0 * f[..., 1:].real.sum()) / self.n**self.d
            else:
                got = self.real(key)[(0,) * self.d]
            self._scalars[("0", key)] = got
        return got


def reduce_partition(alg: GridAlgebra, blocks, edge_labels, resolved: bool):
    """Reduce ``W_P`` to ``(scalar, key or None)``.

    With ``resolved`` the endpoint block is pinned and the result is
    ``scalar * f(x)`` for the returned key (``None`` meaning ``delta_{x,0}``).
    Otherwise the result is the scalar total.
    """
    root = blocks[0]
    out = blocks[-1]
    terminals = {root}
    if resolved:
        terminals.add(out)
    edges = [(blocks[i - 1], blocks[i], alg.leaf(edge_labels[i - 1])) for i in range(1, len(blocks))]
    scalar = 1.0
    vertices = set(blocks)

    while True:
        merged: dict = {}
        for u, v, k in edges:
            if u == v:
                scalar = scalar * alg.at_origin(k)
                continue
            if u > v:
                u, v, k = v, u, alg.flip(k)
            merged[(u, v)] = alg.mul(merged[(u, v)], k) if (u, v) in merged else k
        edges = [(u, v, k) for (u, v), k in merged.items()]
        incident: dict = {x: [] for x in vertices}
        for idx, (u, v, _) in enumerate(edges):
            incident[u].append(idx)
            incident[v].append(idx)

        progress = False
        for x in sorted(vertices - terminals):
            inc = incident[x]
            if len(inc) == 1:
                scalar = scalar * alg.total(edges[inc[0]][2])
                edges.pop(inc[0])
                vertices.discard(x)
                progress = True
                break
            if len(inc) == 2:
                (a1, b1, k1), (a2, b2, k2) = edges[inc[0]], edges[inc[1]]
                # orient both through x: u -> x -> w
                if b1 == x:
                    u, f = a1, k1
                else:
                    u, f = b1, alg.flip(k1)
                if a2 == x:
                    w, g = b2, k2
                else:
                    w, g = a2, alg.flip(k2)
                for i in sorted(inc, reverse=True):
                    edges.pop(i)
                edges.append((u, w, alg.conv(f, g)))
                vertices.discard(x)
                progress = True
                break
            if len(inc) == 0:
                raise RuntimeError("disconnected coincidence graph")
        if not progress:
            break

    if vertices - terminals:
        raise NotSeriesParallel(f"partition {blocks} does not reduce")
    if not resolved or out == root:
        assert not edges
        return scalar, None
    assert len(edges) == 1
    u, v, k = edges[0]
    if u != root:
        k = alg.flip(k)
    return scalar, k


def walk_weight_sum(alg: GridAlgebra, edge_labels, resolved: bool):
    """Self-avoiding weight with per-step functions ``edge_labels``.

    Returns a grid array (resolved) or a scalar total.
    """
    n = len(edge_labels)
    if resolved:
        acc = np.zeros(alg.shape, dtype=np.complex128 if alg.is_complex else np.float64)
    else:
        acc = 0.0
    if n == 0:
        if resolved:
            acc[(0,) * alg.d] = 1.0
            return acc
        return 1.0
    for blocks in coincidence_partitions(n):
        mu = mobius_weight(blocks)
        scalar, key = reduce_partition(alg, blocks, edge_labels, resolved)
        if not resolved:
            acc += mu * scalar
        elif key is None:
            acc[(0,) * alg.d] += mu * scalar
        else:
            acc += (mu * scalar) * alg.real(key)
    return acc
