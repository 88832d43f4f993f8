"""Exact weighted self-avoiding walk counts.

``c_n(x)`` is the total weight ``prod_i D(w_i - w_{i-1})`` of self-avoiding
``n``-step walks from the origin to ``x``.  Two exact engines compute it:

* ``"dfs"``: depth-first traversal of all walks with pruning on
  self-intersection.  Cost grows like ``|support|^n``, so it only suits
  small supports, but it is the most direct oracle.
* ``"diagram"``: inclusion-exclusion over coincidence partitions with
  FFT convolutions (see :mod:`lrsaw._diagrams`).  Cost is polynomial in the
  grid size and independent of ``|support|``; limited to ``n <= 6``.

Tables are stored densely on the periodic grid ``(Z/N)^d`` in FFT ordering
with ``N = 2 max_n R + 1``, which holds every reachable endpoint exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations, product

import numba
import numpy as np

from lrsaw import _diagrams
from lrsaw.stepdist import StepDistribution

DEFAULT_BUDGET = 10**9
DIAGRAM_MAX_N = 6
FFT_ZERO_TOL = 1e-13  # relative round-off floor of diagram tables
DFS_CHUNKS = 16


class BudgetExceeded(RuntimeError):
    """Raised before starting an enumeration whose estimated cost is too large."""

    def __init__(self, estimate: float, budget: float, what: str = "DFS node visits"):
        super().__init__(f"estimated {estimate:.3g} {what} exceeds budget {budget:.3g}")
        self.estimate = estimate
        self.budget = budget


@dataclass(frozen=True, eq=False)
class WalkCountTable:
    dist_fingerprint: str
    dimension: int
    max_n: int
    grid_size: int
    totals: np.ndarray
    tables: np.ndarray | None = field(default=None, repr=False)
    method: str = "dfs"

    @property
    def resolved(self) -> bool:
        return self.tables is not None

    def c(self, n: int, x=None):
        """``c_n`` (total) or ``c_n(x)``."""
        self._check_n(n)
        if x is None:
            return float(self.totals[n])
        self._need_resolved()
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        if np.abs(x).max(initial=0) > self.grid_size // 2:
            return 0.0
        return float(self.tables[n][tuple(x % self.grid_size)])

    def centered(self, n: int) -> np.ndarray:
        """``c_n`` on the centred box ``[-(N-1)/2, (N-1)/2]^d``."""
        self._check_n(n)
        self._need_resolved()
        return np.fft.fftshift(self.tables[n])

    def nonzero(self, n: int, rel_tol: float | None = None):
        """``(points, values)`` of the nonzero entries of ``c_n``.

        Diagram tables come out of FFTs, so entries below ``rel_tol`` times
        the largest one (default :data:`FFT_ZERO_TOL`) count as zero there.
        """
        self._check_n(n)
        self._need_resolved()
        if rel_tol is None:
            rel_tol = FFT_ZERO_TOL if self.method == "diagram" else 0.0
        arr = self.tables[n]
        idx = np.nonzero(np.abs(arr) > rel_tol * np.abs(arr).max(initial=0.0))
        half = self.grid_size // 2
        pts = np.stack([np.where(i > half, i - self.grid_size, i) for i in idx], axis=1)
        return pts.astype(np.int64), self.tables[n][idx]

    def _check_n(self, n: int):
        if not 0 <= n <= self.max_n:
            raise IndexError(f"n={n} outside 0..{self.max_n}")

    def _need_resolved(self):
        if self.tables is None:
            raise ValueError("table holds totals only")


@dataclass(frozen=True)
class MultiTimeSpec:
    times: tuple
    frequencies: tuple

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        freqs = tuple(np.asarray(k, dtype=np.float64) for k in self.frequencies)
        if not times or len(times) != len(freqs):
            raise ValueError("times and frequencies must be non-empty and of equal length")
        if times[0] < 1 or any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("times must be strictly increasing positive integers")
        if len({k.shape for k in freqs}) != 1 or freqs[0].ndim != 1:
            raise ValueError("frequencies must be vectors of a common dimension")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frequencies", freqs)


# ------------------------------------------------------------------ DFS


@numba.njit(nogil=True, cache=True)
def _flat_index(pos, n_grid, d):
    idx = 0
    for j in range(d):
        idx = idx * n_grid + (pos[j] % n_grid)
    return idx


@numba.njit(nogil=True, cache=True)
def _dfs_tables(offsets, probs, first, max_n, n_grid, out):
    """Accumulate ``c_m(x)`` for ``m <= max_n`` over walks whose first step is in ``first``."""
    d = offsets.shape[1]
    n_steps = offsets.shape[0]
    path = np.zeros((max_n + 1, d), dtype=np.int64)
    weight = np.zeros(max_n + 1)
    choice = np.zeros(max_n + 1, dtype=np.int64)
    weight[0] = 1.0
    for f in first:
        for j in range(d):
            path[1, j] = offsets[f, j]
        weight[1] = probs[f]
        out[1, _flat_index(path[1], n_grid, d)] += weight[1]
        if max_n == 1:
            continue
        level = 1
        choice[1] = 0
        while level >= 1:
            if choice[level] == n_steps:
                level -= 1
                continue
            s = choice[level]
            choice[level] += 1
            nxt = level + 1
            for j in range(d):
                path[nxt, j] = path[level, j] + offsets[s, j]
            hit = False
            for m in range(level - 1, -1, -1):
                same = True
                for j in range(d):
                    if path[m, j] != path[nxt, j]:
                        same = False
                        break
                if same:
                    hit = True
                    break
            if hit:
                continue
            weight[nxt] = weight[level] * probs[s]
            out[nxt, _flat_index(path[nxt], n_grid, d)] += weight[nxt]
            if nxt < max_n:
                level = nxt
                choice[nxt] = 0


@numba.njit(nogil=True, cache=True)
def _dfs_multi(offsets, probs, phases, segment, n_total, first):
    """Sum of weight * exp(i sum_j k_j . increment_j) over SAWs of length ``n_total``.

    ``phases[j, s] = exp(i k_j . offsets[s])``; ``segment[i]`` is the
    frequency index used by step ``i`` (1-based).
    """
    d = offsets.shape[1]
    n_steps = offsets.shape[0]
    path = np.zeros((n_total + 1, d), dtype=np.int64)
    weight = np.zeros(n_total + 1, dtype=np.complex128)
    choice = np.zeros(n_total + 1, dtype=np.int64)
    total = 0.0 + 0.0j
    for f in first:
        for j in range(d):
            path[1, j] = offsets[f, j]
        weight[1] = probs[f] * phases[segment[1], f]
        if n_total == 1:
            total += weight[1]
            continue
        level = 1
        choice[1] = 0
        while level >= 1:
            if choice[level] == n_steps:
                level -= 1
                continue
            s = choice[level]
            choice[level] += 1
            nxt = level + 1
            for j in range(d):
                path[nxt, j] = path[level, j] + offsets[s, j]
            hit = False
            for m in range(level - 1, -1, -1):
                same = True
                for j in range(d):
                    if path[m, j] != path[nxt, j]:
                        same = False
                        break
                if same:
                    hit = True
                    break
            if hit:
                continue
            w = weight[level] * probs[s] * phases[segment[nxt], s]
            if nxt == n_total:
                total += w
            else:
                weight[nxt] = w
                level = nxt
                choice[nxt] = 0
    return total


def dfs_cost(support_size: int, max_n: int) -> float:
    """Upper bound on DFS node visits: ``sum_{m<=max_n} |S|^m``."""
    return float(sum(float(support_size) ** m for m in range(1, max_n + 1)))


def _chunks(count: int, n_chunks: int):
    bounds = np.linspace(0, count, min(n_chunks, count) + 1).astype(np.int64)
    return [np.arange(a, b, dtype=np.int64) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunks(fn, chunks, workers: int):
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _signed_permutations(d: int):
    for perm in permutations(range(d)):
        for signs in product((1, -1), repeat=d):
            yield perm, signs


def _orbit_representatives(offsets: np.ndarray):
    """Indices of canonical first steps (sorted descending absolute values) and orbit sizes."""
    canon = -np.sort(-np.abs(offsets), axis=1)
    is_rep = np.all(offsets == canon, axis=1)
    reps = np.flatnonzero(is_rep)
    sizes = []
    for i in reps:
        a = offsets[i]
        nz = int(np.count_nonzero(a))
        _, mult = np.unique(a, return_counts=True)
        sizes.append(2**nz * math.factorial(len(a)) // int(np.prod([math.factorial(m) for m in mult])))
    return reps, np.array(sizes, dtype=np.float64)


def _symmetrize(arr: np.ndarray, d: int) -> np.ndarray:
    """Sum of ``arr(sigma x)`` over all signed permutations, FFT ordering."""
    acc = np.zeros_like(arr)
    for perm, signs in _signed_permutations(d):
        b = np.transpose(arr, (0, *[p + 1 for p in perm]))
        for j, sg in enumerate(signs):
            if sg < 0:
                b = np.roll(np.flip(b, axis=j + 1), 1, axis=j + 1)
        acc += b
    return acc


def _enumerate_dfs(dist, max_n, n_grid, workers, symmetry):
    d = dist.dimension
    offsets = dist.offsets.astype(np.int64)
    probs = dist.probabilities
    if symmetry:
        reps, sizes = _orbit_representatives(offsets)
        n_group = 2**d * math.factorial(d)
        parts = []
        for i, sz in zip(reps, sizes):
            out = np.zeros((max_n + 1, n_grid**d))
            _dfs_tables(offsets, probs, np.array([i]), max_n, n_grid, out)
            # each orbit element appears n_group / sz times in the full group sum
            parts.append(out.reshape((max_n + 1,) + (n_grid,) * d) * (1.0 / (n_group / sz)))
        tables = _symmetrize(np.sum(parts, axis=0), d)
    else:
        def work(first):
            out = np.zeros((max_n + 1, n_grid**d))
            _dfs_tables(offsets, probs, first, max_n, n_grid, out)
            return out

        # chunking is fixed so the merge order never depends on `workers`
        parts = _run_chunks(work, _chunks(offsets.shape[0], DFS_CHUNKS), workers)
        tables = parts[0]
        for p in parts[1:]:
            tables = tables + p
        tables = tables.reshape((max_n + 1,) + (n_grid,) * d)
    tables[0][(0,) * d] = 1.0
    return tables


# ------------------------------------------------------------------ diagrams


def _step_algebra(dist: StepDistribution, n_grid: int, twists=(), cache_bytes: int = 1 << 30):
    """Grid algebra with leaf 0 = D and, per twist ``k``, leaves for ``D e^{+ik.x}``, ``D e^{-ik.x}``."""
    base = dist.on_grid(n_grid)
    leaves = {0: base}
    flips = {0: 0}
    if twists:
        coords = np.fft.fftfreq(n_grid, 1.0 / n_grid)
        for j, k in enumerate(twists):
            k = np.asarray(k, dtype=np.float64)
            phase = np.ones((n_grid,) * dist.dimension, dtype=np.complex128)
            for ax in range(dist.dimension):
                shape = [1] * dist.dimension
                shape[ax] = n_grid
                phase = phase * np.exp(1j * k[ax] * coords).reshape(shape)
            leaves[("k", j, 1)] = base * phase
            leaves[("k", j, -1)] = base * np.conj(phase)
            flips[("k", j, 1)] = ("k", j, -1)
            flips[("k", j, -1)] = ("k", j, 1)
        leaves[0] = base.astype(np.complex128)
    return _diagrams.GridAlgebra(n_grid, dist.dimension, leaves, flips, cache_bytes)


def diagram_cost(dist: StepDistribution, max_n: int, resolved: bool = True) -> float:
    """Rough count of grid-point operations for the diagram engine."""
    n_grid = (2 if resolved else 1) * max_n * dist.truncation_radius + 1
    bell = [1, 1, 2, 5, 15, 52, 203, 877]
    return float(sum(bell[m - 1] for m in range(2, max_n + 1)) * 6 * n_grid**dist.dimension)


def _check_diagram(dist, max_n):
    if max_n > DIAGRAM_MAX_N:
        raise ValueError(f"diagram engine supports max_n <= {DIAGRAM_MAX_N}")
    if not dist.is_tabulated:
        raise ValueError("diagram engine needs a tabulated step law")


def _enumerate_diagram(dist, max_n, n_grid, resolved, cache_bytes):
    _check_diagram(dist, max_n)
    d = dist.dimension
    alg = _step_algebra(dist, n_grid, cache_bytes=cache_bytes)
    if not resolved:
        return None, np.array([float(_diagrams.walk_weight_sum(alg, [0] * m, False)) for m in range(max_n + 1)])
    tables = np.zeros((max_n + 1,) + (n_grid,) * d)
    for m in range(max_n + 1):
        tables[m] = _diagrams.walk_weight_sum(alg, [0] * m, True)
    return tables, None


def endpoint_weights(dist: StepDistribution, n: int, *, cache_bytes: int = 1 << 29) -> np.ndarray:
    """``c_n(x)`` alone, on the minimal grid ``N = 2 n R + 1`` (FFT ordering)."""
    _check_diagram(dist, n)
    n_grid = 2 * n * dist.truncation_radius + 1
    alg = _step_algebra(dist, n_grid, cache_bytes=cache_bytes)
    return _diagrams.walk_weight_sum(alg, [0] * n, True)


# ------------------------------------------------------------------ public API


def enumerate_walks(
    dist: StepDistribution,
    max_n: int,
    *,
    method: str = "auto",
    resolved: bool = True,
    budget: float = DEFAULT_BUDGET,
    workers: int = 1,
    symmetry: bool = False,
    cache_bytes: int = 1 << 30,
) -> WalkCountTable:
    """Exact ``c_n(x)`` for ``n <= max_n``.

    ``method="auto"`` uses DFS when its node count fits ``budget`` and the
    diagram engine otherwise.  ``resolved=False`` keeps only the totals
    ``c_n`` (diagram engine only), which needs a grid half as wide.
    """
    if max_n < 0:
        raise ValueError("max_n must be non-negative")
    d = dist.dimension
    dfs_est = dfs_cost(dist.support_size, max_n)
    if method == "auto":
        method = "dfs" if dfs_est <= budget and resolved else "diagram"
    if method == "dfs":
        if not resolved:
            raise ValueError("DFS always produces resolved tables")
        if dfs_est > budget:
            raise BudgetExceeded(dfs_est, budget)
        if not dist.is_tabulated:
            raise ValueError("DFS needs a tabulated step law")
        n_grid = 2 * max(max_n, 1) * dist.truncation_radius + 1
        tables = _enumerate_dfs(dist, max_n, n_grid, workers, symmetry)
        totals = tables.reshape(max_n + 1, -1).sum(axis=1)
    elif method == "diagram":
        est = diagram_cost(dist, max_n, resolved)
        if est > budget * 100:
            raise BudgetExceeded(est, budget * 100, "grid-point operations")
        n_grid = (2 if resolved else 1) * max(max_n, 2) * dist.truncation_radius + 1
        n_grid += 1 - n_grid % 2
        tables, totals = _enumerate_diagram(dist, max_n, n_grid, resolved, cache_bytes)
        if resolved:
            totals = tables.reshape(max_n + 1, -1).sum(axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return WalkCountTable(
        dist_fingerprint=dist.fingerprint,
        dimension=d,
        max_n=max_n,
        grid_size=n_grid,
        totals=np.asarray(totals, dtype=np.float64),
        tables=tables,
        method=method,
    )


def fourier_sum(arr: np.ndarray, k) -> float:
    """``sum_x f(x) cos(k.x)`` for a grid array in FFT ordering."""
    n_grid = arr.shape[0]
    coords = np.fft.fftfreq(n_grid, 1.0 / n_grid)
    out = arr.astype(np.complex128)
    for kj in np.asarray(k, dtype=np.float64):
        out = np.tensordot(out, np.exp(1j * kj * coords), axes=([0], [0]))
    return float(np.real(out))


def chat_n(table: WalkCountTable, n: int, k) -> float:
    """``c_hat_n(k) = sum_x c_n(x) cos(k.x)``."""
    table._check_n(n)
    k = np.asarray(k, dtype=np.float64)
    if k.shape != (table.dimension,):
        raise ValueError("frequency dimension mismatch")
    if not np.any(k):
        return float(table.totals[n])
    table._need_resolved()
    return fourier_sum(table.tables[n], k)


def chat_series(dist: StepDistribution, max_n: int, k, *, cache_bytes: int = 1 << 30) -> np.ndarray:
    """``c_hat_n(k)`` for ``n = 0..max_n`` from twisted diagram totals (no resolved table)."""
    _check_diagram(dist, max_n)
    n_grid = max(max_n, 2) * dist.truncation_radius + 1
    n_grid += 1 - n_grid % 2
    alg = _step_algebra(dist, n_grid, twists=[k], cache_bytes=cache_bytes)
    lab = ("k", 0, 1)
    vals = [_diagrams.walk_weight_sum(alg, [lab] * m, False) for m in range(max_n + 1)]
    return np.array([_real_part(v) for v in vals])


def _real_part(v) -> float:
    v = complex(v)
    if abs(v.imag) >= 1e-10:
        raise AssertionError(f"imaginary part {v.imag:.3e} should vanish by symmetry")
    return v.real


def chat_multi(
    dist: StepDistribution,
    spec: MultiTimeSpec,
    *,
    method: str = "auto",
    budget: float = DEFAULT_BUDGET,
    workers: int = 1,
) -> float:
    """``c_hat^(N)``: weighted SAW sum of ``exp(i sum_j k_j.(w_{n_j} - w_{n_{j-1}}))``."""
    d = dist.dimension
    if spec.frequencies[0].shape != (d,):
        raise ValueError("frequency dimension mismatch")
    n_total = spec.times[-1]
    segment = np.zeros(n_total + 1, dtype=np.int64)
    prev = 0
    for j, t in enumerate(spec.times):
        segment[prev + 1:t + 1] = j
        prev = t
    dfs_est = dfs_cost(dist.support_size, n_total)
    if method == "auto":
        method = "dfs" if dfs_est <= budget else "diagram"
    if method == "dfs":
        if dfs_est > budget:
            raise BudgetExceeded(dfs_est, budget)
        offsets = dist.offsets.astype(np.int64)
        phases = np.exp(1j * (np.stack(spec.frequencies) @ offsets.T.astype(np.float64)))

        def work(first):
            return _dfs_multi(offsets, dist.probabilities, phases, segment, n_total, first)

        parts = _run_chunks(work, _chunks(offsets.shape[0], DFS_CHUNKS), workers)
        val = 0.0 + 0.0j
        for p in parts:
            val += p
        return _real_part(val)
    if method != "diagram":
        raise ValueError(f"unknown method {method!r}")
    _check_diagram(dist, n_total)
    n_grid = max(n_total, 2) * dist.truncation_radius + 1
    n_grid += 1 - n_grid % 2
    alg = _step_algebra(dist, n_grid, twists=spec.frequencies)
    labels = [("k", int(segment[i]), 1) for i in range(1, n_total + 1)]
    return _real_part(_diagrams.walk_weight_sum(alg, labels, False))


def susceptibility_partial(table: WalkCountTable, z: float) -> float:
    """Truncated susceptibility ``sum_{n<=max_n} c_n z^n``."""
    if z < 0:
        raise ValueError("z must be non-negative")
    return float(sum(c * z**n for n, c in enumerate(table.totals)))


def estimate_zc(table) -> tuple[float, list[float]]:
    """Ratio estimate of the critical point with Aitken extrapolation.

    ``table`` is a :class:`WalkCountTable` or a sequence of totals ``c_0, c_1, ...``.
    """
    totals = np.asarray(table.totals if isinstance(table, WalkCountTable) else table, dtype=np.float64)
    if totals.size < 5:
        raise ValueError("need max_n >= 4")
    if np.any(totals == 0):
        raise ValueError("some c_n vanish; the truncated model is disconnected")
    ratios = totals[:-1] / totals[1:]
    r0, r1, r2 = ratios[-3:]
    den = (r2 - r1) - (r1 - r0)
    if abs(den) <= 1e-14 * abs(r2) or r2 == r1:
        est = float(r2)
    else:
        est = float(r2 - (r2 - r1) ** 2 / den)
    return est, [float(r) for r in ratios]
