"""Monte Carlo sampling of weighted self-avoiding walks.

Two samplers:

* rejection: draw ``n`` i.i.d. steps from ``D`` and keep the walk iff it is
  self-avoiding.  Accepted walks are exact draws from the self-avoiding
  measure and the acceptance probability is ``c_n``.
* Rosenbluth: grow the walk one step at a time from ``D`` restricted to
  unvisited sites.  The weight ``prod_i (1 - p_i)``, with ``p_i`` the
  ``D``-mass of visited sites seen from the current tip, makes weighted
  averages unbiased and ``E[weight] = c_n``.

Both run as numba kernels over independent Philox streams spawned from one
seed.  The split of samples over streams is fixed, so results do not depend
on how many threads execute them.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from lrsaw.stepdist import StepDistribution, draw_step, kernel_args

DEFAULT_STREAMS = 8
FULL_PATH_LIMIT = 50_000_000  # stored coordinates before falling back to checkpoints
PILOT_TRIALS = 10_000
MIN_ACCEPTANCE = 1e-4
MAX_ATTRITION = 0.99


class AcceptanceTooLow(RuntimeError):
    pass


class AttritionTooHigh(RuntimeError):
    pass


# ------------------------------------------------------------------ data types


@dataclass
class WalkSample:
    path: np.ndarray
    rosenbluth_weight: float = 1.0


@dataclass(eq=False)
class SampleBatch:
    """Walks of a common length ``n``, stored at step indices ``times``."""

    n: int
    method: str
    positions: np.ndarray = field(repr=False)  # (count, len(times), d)
    times: np.ndarray
    weights: np.ndarray = field(repr=False)
    seed_info: dict
    trials: int  # walks started (rejection: proposals; Rosenbluth: starts incl. restarts)
    dead: int = 0

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def has_full_paths(self) -> bool:
        return self.times.shape[0] == self.n + 1

    @property
    def samples(self) -> list[WalkSample]:
        if not self.has_full_paths:
            raise ValueError("batch stores checkpoints only")
        return [WalkSample(self.positions[i].astype(np.int64), float(self.weights[i])) for i in range(self.count)]

    @property
    def ess(self) -> float:
        """Effective sample size ``(sum w)^2 / sum w^2``."""
        w = self.weights
        return float(w.sum() ** 2 / (w * w).sum())

    @property
    def acceptance_rate(self) -> float:
        return self.count / self.trials

    @property
    def attrition(self) -> float:
        return self.dead / self.trials if self.trials else 0.0

    def at(self, step: int) -> np.ndarray:
        """Positions at step index ``step`` (must be a stored index)."""
        j = np.searchsorted(self.times, step)
        if j >= self.times.shape[0] or self.times[j] != step:
            raise KeyError(f"step {step} not stored; stored indices: {self.times.tolist()[:8]}...")
        return self.positions[:, j, :].astype(np.int64)

    @property
    def endpoints(self) -> np.ndarray:
        return self.at(self.n)


def f_alpha(n: int, alpha: float, v_alpha: float) -> float:
    """Displacement scale ``f_alpha(n)``: ``(v n)^{-1/(alpha^2)}``, log-corrected at alpha = 2."""
    if alpha == 2:
        if n < 2:
            raise ValueError("f_alpha at alpha = 2 needs n >= 2")
        return (v_alpha * n * math.log(math.sqrt(n))) ** -0.5
    return (v_alpha * n) ** (-1.0 / min(alpha, 2.0))


@dataclass(frozen=True)
class ScalingContext:
    d: int
    alpha: float
    v_alpha: float
    K_alpha: float
    n: int

    @property
    def alpha_eff(self) -> float:
        return min(self.alpha, 2.0)

    @property
    def f_alpha(self) -> float:
        return f_alpha(self.n, self.alpha, self.v_alpha)

    def k_n(self, k) -> np.ndarray:
        return self.f_alpha * np.asarray(k, dtype=np.float64)

    @property
    def path_scale(self) -> float:
        return (2 * self.d * self.K_alpha) ** (-1.0 / self.alpha_eff) * self.f_alpha

    def endpoint_target(self, k) -> float:
        return math.exp(-self.K_alpha * float(np.linalg.norm(k)) ** self.alpha_eff)

    def multi_target(self, times, freqs) -> float:
        expo, prev = 0.0, 0.0
        for t, k in zip(times, freqs):
            expo += float(np.linalg.norm(k)) ** self.alpha_eff * (t - prev)
            prev = t
        return math.exp(-self.K_alpha * expo)


# ------------------------------------------------------------------ hash sets


@numba.njit(nogil=True, cache=True, inline="always")
def _hash(x, d, mask):
    h = np.int64(0)
    for i in range(d):
        h = (h ^ x[i]) * np.int64(6364136223846793005) + np.int64(1442695040888963407)
    h ^= h >> 31
    return h & mask


@numba.njit(nogil=True, cache=True)
def _find(keys, stamp, tag, x, d, mask):
    """Slot holding ``x`` (found=True) or the empty slot where it would go."""
    slot = _hash(x, d, mask)
    while stamp[slot] == tag:
        same = True
        for i in range(d):
            if keys[slot, i] != x[i]:
                same = False
                break
        if same:
            return True, slot
        slot = (slot + 1) & mask
    return False, slot



# ------------------------------------------------------------------ kernels


@numba.njit(nogil=True, cache=True)
def _rejection_kernel(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, n, count, rec, pilot, min_acc):
    n_rec = 0
    for i in range(n + 1):
        if rec[i] >= 0:
            n_rec += 1
    out = np.zeros((count, n_rec, d), dtype=np.int32)
    size = 1
    while size < 4 * (n + 1):
        size *= 2
    mask = size - 1
    keys = np.zeros((size, d), dtype=np.int64)
    stamp = np.zeros(size, dtype=np.int64)
    pos = np.zeros(d, dtype=np.int64)
    step = np.zeros(d, dtype=np.int64)
    cur = np.zeros((n_rec, d), dtype=np.int64)
    trials = 0
    acc = 0
    tag = 0
    while acc < count:
        trials += 1
        tag += 1
        for i in range(d):
            pos[i] = 0
        _, slot = _find(keys, stamp, tag, pos, d, mask)
        stamp[slot] = tag
        for i in range(d):
            keys[slot, i] = 0
            cur[0, i] = 0
        ok = True
        for t in range(1, n + 1):
            draw_step(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, step)
            for i in range(d):
                pos[i] += step[i]
            found, slot = _find(keys, stamp, tag, pos, d, mask)
            if found:
                ok = False
                break
            stamp[slot] = tag
            for i in range(d):
                keys[slot, i] = pos[i]
            if rec[t] >= 0:
                for i in range(d):
                    cur[rec[t], i] = pos[i]
        if ok:
            for j in range(n_rec):
                for i in range(d):
                    out[acc, j, i] = cur[j, i]
            acc += 1
        if trials == pilot and acc < min_acc * pilot:
            return out, trials, -1
    return out, trials, acc


@numba.njit(nogil=True, cache=True)
def _step_mass(y2, s, L, z):
    r = math.sqrt(y2) / L
    if r < 1.0:
        r = 1.0
    return r ** (-s) / z


@numba.njit(nogil=True, cache=True)
def _rosenbluth_kernel(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, n, count, rec, z_norm, max_att):
    n_rec = 0
    for i in range(n + 1):
        if rec[i] >= 0:
            n_rec += 1
    out = np.zeros((count, n_rec, d), dtype=np.int32)
    weights = np.zeros(count)
    s = d + alpha
    cs = 2 * R + 1
    size = 1
    while size < 4 * (n + 1):
        size *= 2
    mask = size - 1
    keys = np.zeros((size, d), dtype=np.int64)
    stamp = np.zeros(size, dtype=np.int64)
    ckeys = np.zeros((size, d), dtype=np.int64)
    cstamp = np.zeros(size, dtype=np.int64)
    chead = np.zeros(size, dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    visited = np.zeros((n + 1, d), dtype=np.int64)
    pos = np.zeros(d, dtype=np.int64)
    cand = np.zeros(d, dtype=np.int64)
    step = np.zeros(d, dtype=np.int64)
    cell = np.zeros(d, dtype=np.int64)
    lo = np.zeros(d, dtype=np.int64)
    hi = np.zeros(d, dtype=np.int64)
    starts = 0
    dead = 0
    done = 0
    tag = 0
    while done < count:
        starts += 1
        tag += 1
        w = 1.0
        for i in range(d):
            pos[i] = 0
        alive = True
        for t in range(n + 1):
            # record the site at step t
            _, slot = _find(keys, stamp, tag, pos, d, mask)
            stamp[slot] = tag
            for i in range(d):
                keys[slot, i] = pos[i]
                visited[t, i] = pos[i]
                cell[i] = pos[i] // cs
            found, cslot = _find(ckeys, cstamp, tag, cell, d, mask)
            if found:
                nxt[t] = chead[cslot]
            else:
                cstamp[cslot] = tag
                for i in range(d):
                    ckeys[cslot, i] = cell[i]
                nxt[t] = -1
            chead[cslot] = t
            if rec[t] >= 0:
                for i in range(d):
                    out[done, rec[t], i] = pos[i]
            if t == n:
                break
            # D-mass of visited sites reachable in one step
            for i in range(d):
                lo[i] = (pos[i] - R) // cs
                hi[i] = (pos[i] + R) // cs
            p = 0.0
            n_cells = 1 << d
            for combo in range(n_cells):
                skip = False
                for i in range(d):
                    if (combo >> i) & 1:
                        if hi[i] == lo[i]:
                            skip = True
                            break
                        cell[i] = hi[i]
                    else:
                        cell[i] = lo[i]
                if skip:
                    continue
                found, cslot = _find(ckeys, cstamp, tag, cell, d, mask)
                if not found:
                    continue
                v = chead[cslot]
                while v >= 0:
                    m = 0
                    y2 = 0
                    for i in range(d):
                        dy = visited[v, i] - pos[i]
                        if abs(dy) > m:
                            m = abs(dy)
                        y2 += dy * dy
                    if m > 0 and m <= R:
                        p += _step_mass(y2, s, L, z_norm)
                    v = nxt[v]
            if p >= 1.0 - 1e-12:
                alive = False
                break
            w *= 1.0 - p
            while True:
                draw_step(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, step)
                for i in range(d):
                    cand[i] = pos[i] + step[i]
                found, _ = _find(keys, stamp, tag, cand, d, mask)
                if not found:
                    break
            for i in range(d):
                pos[i] = cand[i]
        if alive:
            weights[done] = w
            done += 1
        else:
            dead += 1
            if starts >= 100 and dead > max_att * starts:
                return out, weights, starts, -dead
    return out, weights, starts, dead


# ------------------------------------------------------------------ drivers


def record_indices(n: int, count: int, d: int, extra=()) -> np.ndarray:
    """Step indices to store: all of them when affordable, else a grid of 64ths plus ``extra``."""
    if count * (n + 1) * d <= FULL_PATH_LIMIT:
        return np.arange(n + 1, dtype=np.int64)
    idx = {int(math.floor(n * j / 64)) for j in range(65)} | {int(e) for e in extra} | {0, n}
    return np.array(sorted(idx), dtype=np.int64)


def _streams(seed: int, n_streams: int, count: int):
    children = np.random.SeedSequence(seed).spawn(n_streams)
    sizes = [count // n_streams + (1 if i < count % n_streams else 0) for i in range(n_streams)]
    return [(np.random.Generator(np.random.Philox(c)), sz) for c, sz in zip(children, sizes)]


def _resolve_seed(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    raise TypeError("rng must be an integer seed or a numpy Generator")


def _prepare(dist, n, count, record, extra):
    if n < 1:
        raise ValueError("n must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    times = record_indices(n, count, dist.dimension, extra) if record is None else np.unique(
        np.concatenate([np.asarray(record, dtype=np.int64), [0, n]])
    )
    if times[0] < 0 or times[-1] > n:
        raise ValueError("record indices outside 0..n")
    rec = np.full(n + 1, -1, dtype=np.int64)
    rec[times] = np.arange(times.shape[0])
    return times, rec


def _run(kernel_fn, jobs, workers):
    if workers <= 1:
        return [kernel_fn(g, sz) for g, sz in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: kernel_fn(*job), jobs))


def sample_rejection(
    dist: StepDistribution,
    n: int,
    count: int,
    rng,
    *,
    record=None,
    extra_times=(),
    n_streams: int = DEFAULT_STREAMS,
    workers: int = 1,
) -> SampleBatch:
    """Exact self-avoiding walks by conditioning i.i.d. steps on avoidance."""
    seed = _resolve_seed(rng)
    times, rec = _prepare(dist, n, count, record, extra_times)
    args = kernel_args(dist)

    def work(gen, sz):
        if sz == 0:
            return np.zeros((0, times.shape[0], dist.dimension), dtype=np.int32), 0, 0
        return _rejection_kernel(*args, gen, n, sz, rec, PILOT_TRIALS, MIN_ACCEPTANCE)

    results = _run(work, _streams(seed, n_streams, count), workers)
    for _, trials, acc in results:
        if acc < 0:
            raise AcceptanceTooLow(
                f"acceptance below {MIN_ACCEPTANCE:g} over a {PILOT_TRIALS}-trial pilot at n={n}; use Rosenbluth"
            )
    return SampleBatch(
        n=n,
        method="rejection",
        positions=np.concatenate([r[0] for r in results]),
        times=times,
        weights=np.ones(count),
        seed_info={"seed": seed, "streams": n_streams, "generator": "Philox"},
        trials=int(sum(r[1] for r in results)),
    )


def sample_rosenbluth(
    dist: StepDistribution,
    n: int,
    count: int,
    rng,
    *,
    record=None,
    extra_times=(),
    n_streams: int = DEFAULT_STREAMS,
    workers: int = 1,
) -> SampleBatch:
    """Rosenbluth chain growth with restart on dead ends."""
    seed = _resolve_seed(rng)
    times, rec = _prepare(dist, n, count, record, extra_times)
    args = kernel_args(dist)

    def work(gen, sz):
        if sz == 0:
            return np.zeros((0, times.shape[0], dist.dimension), dtype=np.int32), np.zeros(0), 0, 0
        return _rosenbluth_kernel(*args, gen, n, sz, rec, dist.normalization,
                                  MAX_ATTRITION)

    results = _run(work, _streams(seed, n_streams, count), workers)
    if any(r[3] < 0 for r in results):
        raise AttritionTooHigh(f"more than {MAX_ATTRITION:.0%} of Rosenbluth walks died at n={n}")
    batch = SampleBatch(
        n=n,
        method="rosenbluth",
        positions=np.concatenate([r[0] for r in results]),
        times=times,
        weights=np.concatenate([r[1] for r in results]),
        seed_info={"seed": seed, "streams": n_streams, "generator": "Philox"},
        trials=int(sum(r[2] for r in results)),
        dead=int(sum(r[3] for r in results)),
    )
    if batch.ess < 100:
        warnings.warn(f"effective sample size {batch.ess:.1f} < 100", stacklevel=2)
    return batch


def sample_walks(dist, n, count, rng, method="rosenbluth", **kw) -> SampleBatch:
    if method == "rejection":
        return sample_rejection(dist, n, count, rng, **kw)
    if method == "rosenbluth":
        return sample_rosenbluth(dist, n, count, rng, **kw)
    raise ValueError(f"unknown method {method!r}")


# ------------------------------------------------------------------ estimators


def jackknife_ratio(w: np.ndarray, a: np.ndarray, transform=None):
    """Weighted mean ``sum w a / sum w`` (optionally transformed) and its jackknife error."""
    w = np.asarray(w, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    m = w.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    W = w.sum()
    A = (w * a).sum()
    est = A / W
    if transform is not None:
        est = transform(est)
    if m < 2:
        return float(est), math.inf
    loo = (A - w * a) / (W - w)
    if transform is not None:
        loo = transform(loo)
    se = math.sqrt((m - 1) / m * float(((loo - loo.mean()) ** 2).sum()))
    return float(est), se


def estimate_cn(batch: SampleBatch) -> tuple[float, float]:
    """``c_n`` estimate: acceptance rate (rejection) or mean weight per start (Rosenbluth)."""
    p = batch.weights.sum() / batch.trials
    if batch.method == "rejection":
        return float(p), math.sqrt(p * (1 - p) / batch.trials)
    w = np.concatenate([batch.weights, np.zeros(batch.trials - batch.count)])
    return float(p), float(w.std(ddof=1) / math.sqrt(w.shape[0]))


def estimate_xi_r(batch: SampleBatch, r: float, alpha: float | None = None) -> tuple[float, float]:
    """Mean-r displacement ``(E|w_n|^r)^{1/r}`` with jackknife error."""
    if batch.count == 0:
        raise ValueError("empty batch")
    if not r > 0:
        raise ValueError("r must be positive")
    if alpha is not None and r >= min(alpha, 2.0):
        warnings.warn(f"r={r} outside (0, alpha^2) where the scaling statement holds", stacklevel=2)
    x = batch.endpoints.astype(np.float64)
    a = np.sqrt((x * x).sum(axis=1)) ** r
    return jackknife_ratio(batch.weights, a, lambda m: m ** (1.0 / r))


def empirical_cf(batch: SampleBatch, ctx: ScalingContext, k) -> tuple[float, float]:
    """Weighted average of ``cos(k_n . w_n)`` with ``k_n = f_alpha(n) k``."""
    kn = ctx.k_n(k)
    phase = batch.endpoints.astype(np.float64) @ kn
    return jackknife_ratio(batch.weights, np.cos(phase))


def _time_indices(n: int, times) -> list[int]:
    times = [float(t) for t in times]
    if not times or any(not 0 < t <= 1 for t in times) or any(b <= a for a, b in zip(times[:-1], times[1:])):
        raise ValueError("times must be strictly increasing in (0, 1]")
    return [int(math.floor(n * t)) for t in times]


def empirical_cf_multi(batch: SampleBatch, ctx: ScalingContext, times, freqs) -> tuple[float, float]:
    """Weighted average of ``cos(sum_j k^(j)_n . (w_{[n t_j]} - w_{[n t_{j-1}]}))``."""
    if len(times) != len(freqs):
        raise ValueError("times and freqs must have equal length")
    idx = _time_indices(batch.n, times)
    phase = np.zeros(batch.count)
    prev = batch.at(0)
    for i, k in zip(idx, freqs):
        cur = batch.at(i)
        phase = phase + (cur - prev).astype(np.float64) @ ctx.k_n(k)
        prev = cur
    return jackknife_ratio(batch.weights, np.cos(phase))


def fit_K_alpha(ks, phis, alpha: float) -> float:
    """Least-squares ``K`` in ``-log phi(k) = K |k|^{alpha ^ 2}`` (through the origin)."""
    mags = np.linalg.norm(np.atleast_2d(np.asarray(ks, dtype=np.float64)), axis=1)
    phis = np.asarray(phis, dtype=np.float64)
    keep = (mags > 0) & (phis > 0)
    if keep.sum() < 1:
        raise ValueError("need a nonzero k with positive phi")
    x = mags[keep] ** min(alpha, 2.0)
    y = -np.log(phis[keep])
    return float(x @ y / (x @ x))


def scaled_path(sample: WalkSample, ctx: ScalingContext, grid) -> np.ndarray:
    """``X_n(t) = (2 d K)^{-1/(alpha^2)} f_alpha(n) w([n t])`` on ``grid``."""
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(grid < 0) or np.any(grid > 1) or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted within [0, 1]")
    n = sample.path.shape[0] - 1
    idx = np.floor(n * grid).astype(np.int64)
    return ctx.path_scale * sample.path[idx].astype(np.float64)
