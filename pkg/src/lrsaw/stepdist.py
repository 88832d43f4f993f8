"""Spread-out power-law step distribution on Z^d.

The step law is ``D(x) = h(x/L) / sum_y h(y/L)`` with
``h(x) = (|x| v 1)^{-d-alpha}``, restricted to the box ``0 < ||x||_inf <= R``.
Small boxes are tabulated in full.  Large boxes keep a tabulated core and
treat the remaining shell analytically: its normalisation, moments and
Fourier transform come from theta-function lattice sums, and draws from it
use envelope rejection, so every draw is still exact.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from lrsaw import _latticesum
from lrsaw.alias import AliasTable, draw_index

MAX_TABLE_POINTS = 5_000_000
MAX_CORE_POINTS = 1_000_000


def _box_points(d: int, radius: int) -> np.ndarray:
    g = np.arange(-radius, radius + 1, dtype=np.int32)
    pts = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return pts[np.any(pts != 0, axis=1)]


def h_weight(sq_norm, d: int, alpha: float, L: int):
    """``h(x/L)`` as a function of the integer squared norm ``|x|^2``."""
    r = np.sqrt(np.asarray(sq_norm, dtype=np.float64)) / L
    return np.maximum(r, 1.0) ** (-(d + alpha))


@dataclass(frozen=True, eq=False)
class StepDistribution:
    dimension: int
    alpha: float
    spread: int
    truncation_radius: int
    offsets: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    normalization: float
    truncated_mass: float
    core_radius: int
    core_mass: float
    sampler_table: AliasTable = field(repr=False)

    @property
    def is_tabulated(self) -> bool:
        return self.core_radius == self.truncation_radius

    @property
    def support(self):
        """(point, probability) pairs; only available for tabulated laws."""
        if not self.is_tabulated:
            raise ValueError("support of an untabulated law is not materialised")
        return [(tuple(int(c) for c in x), float(p)) for x, p in zip(self.offsets, self.probabilities)]

    @property
    def support_size(self) -> int:
        return (2 * self.truncation_radius + 1) ** self.dimension - 1

    @property
    def decay(self) -> float:
        return self.dimension + self.alpha

    @property
    def max_probability(self) -> float:
        return float(self.probabilities.max())

    @property
    def sup_norm_constant(self) -> float:
        """``C`` in ``||D||_inf <= C L^{-d}`` for this build."""
        return self.max_probability * self.spread**self.dimension

    @property
    def fingerprint(self) -> str:
        key = f"{self.dimension}|{self.alpha!r}|{self.spread}|{self.truncation_radius}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    @property
    def alias_prob(self) -> np.ndarray:
        return self.sampler_table.prob

    @property
    def alias_index(self) -> np.ndarray:
        return self.sampler_table.alias

    def params(self) -> dict:
        return {
            "d": self.dimension,
            "alpha": self.alpha,
            "L": self.spread,
            "R": self.truncation_radius,
        }

    def probability(self, x) -> float:
        return step_probability(self, x)

    def on_grid(self, n_grid: int) -> np.ndarray:
        """Dense array of ``D`` on the periodic grid ``(Z/n_grid)^d``, FFT ordering."""
        if not self.is_tabulated:
            raise ValueError("grid representation needs a tabulated law")
        if n_grid < 2 * self.truncation_radius + 1:
            raise ValueError("grid too small for the support")
        out = np.zeros((n_grid,) * self.dimension, dtype=np.float64)
        idx = tuple((self.offsets % n_grid).T)
        out[idx] = self.probabilities
        return out


def build_step_distribution(
    d: int,
    alpha: float,
    L: int,
    R: int,
    *,
    max_table_points: int = MAX_TABLE_POINTS,
    max_core_points: int = MAX_CORE_POINTS,
) -> StepDistribution:
    """Build ``D_L`` truncated to ``0 < ||x||_inf <= R`` and renormalised."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if L < 1:
        raise ValueError("spread L must be >= 1")
    if R < L:
        raise ValueError(f"truncation radius R={R} < L={L} would cut the plateau of h")

    s = d + alpha
    if (2 * R + 1) ** d <= max_table_points:
        core = R
    else:
        core = 0
        while (2 * (core + 1) + 1) ** d <= max_core_points:
            core += 1
        if core < L:
            raise ValueError("core table cannot contain the plateau; raise max_core_points")

    pts = _box_points(d, core)
    sq = (pts.astype(np.int64) ** 2).sum(axis=1)
    weights = h_weight(sq, d, alpha, L)
    z_core = float(weights.sum())
    z_shell = L**s * _latticesum.shell_power_sum(d, s, core, R) if core < R else 0.0
    z = z_core + z_shell
    z_outside = L**s * _latticesum.shell_power_sum(d, s, R, math.inf)
    return StepDistribution(
        dimension=d,
        alpha=float(alpha),
        spread=int(L),
        truncation_radius=int(R),
        offsets=pts,
        probabilities=weights / z,
        normalization=z,
        truncated_mass=z_outside / (z + z_outside),
        core_radius=core,
        core_mass=z_core / z,
        sampler_table=AliasTable(weights),
    )


def _check_dim(dist: StepDistribution, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[-1] != dist.dimension:
        raise ValueError(f"expected vectors of length {dist.dimension}, got shape {v.shape}")
    return v


def step_probability(dist: StepDistribution, x) -> float:
    x = _check_dim(dist, x).astype(np.int64)
    if x.ndim != 1:
        raise ValueError("single lattice point expected")
    m = int(np.abs(x).max())
    if m == 0 or m > dist.truncation_radius:
        return 0.0
    return float(h_weight(int((x * x).sum()), dist.dimension, dist.alpha, dist.spread) / dist.normalization)


def wrap_frequency(k) -> np.ndarray:
    """Canonical representative of ``k`` in the torus [-pi, pi)^d."""
    k = np.asarray(k, dtype=np.float64)
    return (k + np.pi) % (2 * np.pi) - np.pi


def _core_sums(dist: StepDistribution, ks: np.ndarray, chunk: int = 1 << 20):
    """Tabulated-core sums of p(1 - cos k.x) and p sin k.x for each row of ``ks``."""
    om = np.zeros(ks.shape[0])
    im = np.zeros(ks.shape[0])
    for a in range(0, dist.offsets.shape[0], chunk):
        x = dist.offsets[a:a + chunk].astype(np.float64)
        p = dist.probabilities[a:a + chunk]
        ph = x @ ks.T
        om += p @ (2.0 * np.sin(0.5 * ph) ** 2)
        im += p @ np.sin(ph)
    return om, im


def one_minus_fourier(dist: StepDistribution, k) -> np.ndarray | float:
    """``1 - Dhat(k)``, evaluated without cancellation on the tabulated part."""
    k = _check_dim(dist, k).astype(np.float64)
    ks = np.atleast_2d(k)
    om, _ = _core_sums(dist, ks)
    if not dist.is_tabulated:
        s = dist.decay
        pref = dist.spread**s / dist.normalization
        full = _latticesum.shell_power_sum(dist.dimension, s, dist.core_radius, dist.truncation_radius)
        for i, kk in enumerate(ks):
            cs = _latticesum.shell_cos_sum(dist.dimension, s, dist.core_radius, dist.truncation_radius, kk)
            om[i] += pref * (full - cs)
    return om if k.ndim > 1 else float(om[0])


def fourier_transform(dist: StepDistribution, k, *, debug: bool = False):
    """``Dhat(k) = sum_x D(x) cos(k.x)``; the sine part vanishes by symmetry."""
    k = _check_dim(dist, k).astype(np.float64)
    ks = np.atleast_2d(k)
    if debug:
        _, im = _core_sums(dist, ks)
        if np.max(np.abs(im)) >= 1e-12:
            raise AssertionError(f"imaginary part {np.max(np.abs(im)):.3e} of Dhat")
    out = 1.0 - np.atleast_1d(one_minus_fourier(dist, ks))
    return out if k.ndim > 1 else float(out[0])


@dataclass
class BoundsReport:
    min_far: float
    argmin_far: np.ndarray | None
    max_all: float
    argmax_all: np.ndarray
    n_far: int
    min_positive: bool
    max_below_two: bool

    @property
    def passed(self) -> bool:
        return self.min_positive and self.max_below_two


def one_minus_Dhat_bounds_check(dist: StepDistribution, grid) -> BoundsReport:
    """Scan ``1 - Dhat`` on a grid: min over ``||k||_inf >= 1/L`` and max over the torus."""
    grid = np.atleast_2d(_check_dim(dist, grid)).astype(np.float64)
    if grid.shape[0] == 0:
        raise ValueError("empty frequency grid")
    grid = wrap_frequency(grid)
    vals = np.atleast_1d(one_minus_fourier(dist, grid))
    far = np.abs(grid).max(axis=1) >= 1.0 / dist.spread
    i_max = int(np.argmax(vals))
    if far.any():
        idx = np.flatnonzero(far)
        j = idx[int(np.argmin(vals[idx]))]
        min_far, arg = float(vals[j]), grid[j]
    else:
        min_far, arg = math.inf, None
    return BoundsReport(
        min_far=min_far,
        argmin_far=arg,
        max_all=float(vals[i_max]),
        argmax_all=grid[i_max],
        n_far=int(far.sum()),
        min_positive=min_far > 0,
        max_below_two=float(vals[i_max]) < 2.0,
    )


def second_moment(dist: StepDistribution) -> float:
    """``sum_x |x|^2 D(x)``; diverges with R for alpha <= 2."""
    x = dist.offsets.astype(np.float64)
    m2 = float(dist.probabilities @ (x * x).sum(axis=1))
    if not dist.is_tabulated:
        s = dist.decay
        m2 += dist.spread**s / dist.normalization * _latticesum.shell_power_sum(
            dist.dimension, s - 2.0, dist.core_radius, dist.truncation_radius
        )
    return m2


def absolute_moment(dist: StepDistribution, kappa: float) -> float:
    """``sum_x |x|^kappa D(x)``."""
    x = dist.offsets.astype(np.float64)
    m = float(dist.probabilities @ np.sqrt((x * x).sum(axis=1)) ** kappa)
    if not dist.is_tabulated:
        s = dist.decay
        m += dist.spread**s / dist.normalization * _latticesum.shell_power_sum(
            dist.dimension, s - kappa, dist.core_radius, dist.truncation_radius
        )
    return m


def small_k_window(dist: StepDistribution, num: int = 12) -> np.ndarray:
    """Axis-aligned frequencies spanning a decade inside ``(1/R, 1/L)``.

    The power-law asymptote of ``1 - Dhat`` is only visible between the
    truncation scale and the spread scale.  When that window is narrower
    than a decade the upper end is kept and the lower end is pushed down.
    Untabulated (large-R) laws use five points a decade lower, where the
    quadratic lattice correction is small and each evaluation is costly.
    """
    k_hi = 1.0 / (4.0 * dist.spread)
    if not dist.is_tabulated:
        k_hi /= 10.0
        num = min(num, 5)
    k_lo = min(10.0 / dist.truncation_radius, k_hi / 10.0)
    mags = np.geomspace(k_lo, k_hi, num)
    out = np.zeros((num, dist.dimension))
    out[:, 0] = mags
    return out


def fit_small_k(dist: StepDistribution, k_small, form: str = "power", exponent: float | None = None):
    """Least-squares coefficient of ``1 - Dhat(k)`` against a small-k shape.

    ``form="power"`` fits ``v |k|^exponent``; ``form="log"`` fits
    ``v |k|^2 log(1/|k|)``; ``form="power+quadratic"`` fits
    ``v |k|^exponent + c |k|^2``, absorbing the analytic lattice correction.
    Returns ``(v, max relative deviation)``.
    """
    ks = np.atleast_2d(_check_dim(dist, k_small)).astype(np.float64)
    mags = np.linalg.norm(ks, axis=1)
    if np.unique(np.round(mags, 14)).size < 3:
        raise ValueError("need at least 3 distinct |k| values")
    if np.any(mags <= 0):
        raise ValueError("k = 0 in small-k window")
    y = np.atleast_1d(one_minus_fourier(dist, ks))
    a = exponent if exponent is not None else min(dist.alpha, 2.0)
    if form == "power":
        basis = (mags**a)[:, None]
    elif form == "log":
        basis = (mags**2 * np.log(1.0 / mags))[:, None]
    elif form == "power+quadratic":
        basis = np.stack([mags**a, mags**2], axis=1)
    else:
        raise ValueError(f"unknown form {form!r}")
    # relative least squares, so every |k| in the window counts equally
    coef, *_ = np.linalg.lstsq(basis / y[:, None], np.ones_like(y), rcond=None)
    resid = float(np.max(np.abs(basis @ coef - y) / y))
    return float(coef[0]), resid


def estimate_v_alpha(dist: StepDistribution, k_small=None) -> tuple[float, float]:
    """Constant ``v_alpha`` in ``1 - Dhat(k) ~ v_alpha |k|^{alpha ^ 2}``.

    For alpha > 2 this is the exact second moment ``sum |x|^2 D(x) / 2d``;
    otherwise a least-squares fit over ``k_small`` (with the log correction
    at alpha = 2).  Untabulated laws fit ``v |k|^alpha + c |k|^2`` so that
    the lattice correction does not bias ``v``.
    """
    if not dist.alpha > 0:
        raise ValueError("alpha must be positive")
    if k_small is None:
        k_small = small_k_window(dist)
    ks = np.atleast_2d(_check_dim(dist, k_small)).astype(np.float64)
    mags = np.linalg.norm(ks, axis=1)
    if np.unique(np.round(mags, 14)).size < 3:
        raise ValueError("need at least 3 distinct |k| values")
    if mags.max() / mags.min() < 10.0 - 1e-9:
        warnings.warn("small-k window spans less than a decade", stacklevel=2)
    if mags.max() >= 1.0 / (2 * dist.spread):
        warnings.warn("small-k window reaches |k| >= 1/(2L)", stacklevel=2)

    if dist.alpha > 2:
        v = second_moment(dist) / (2 * dist.dimension)
        y = np.atleast_1d(one_minus_fourier(dist, ks))
        return v, float(np.max(np.abs(v * mags**2 - y) / y))
    if dist.alpha == 2:
        return fit_small_k(dist, ks, "log")
    form = "power" if dist.is_tabulated else "power+quadratic"
    return fit_small_k(dist, ks, form, dist.alpha)


def continuum_v_alpha(dist: StepDistribution) -> float:
    """Small-k constant of the untruncated power-law tail (alpha < 2).

    Replaces the lattice tail ``L^{d+alpha} |x|^{-d-alpha} / Z`` by its
    integral, ``int (1 - cos y_1) |y|^{-d-alpha} dy``; used as an
    independent cross-check of the fitted value.
    """
    d, a = dist.dimension, dist.alpha
    if not 0 < a < 2:
        raise ValueError("continuum constant defined for 0 < alpha < 2")
    c = dist.spread ** (d + a) / dist.normalization
    integral = math.pi ** (d / 2) * math.gamma(1 - a / 2) / (a * 2 ** (a - 1) * math.gamma((d + a) / 2))
    return c * integral


# ---------------------------------------------------------------- sampling


@numba.njit(cache=True)
def _draw_tail(d, alpha, L, core, R, gen, out):
    s = d + alpha
    c = math.sqrt(d) / 2.0
    rho0 = core + 0.5
    u0 = rho0 - c
    cap = (rho0 / u0) ** (d - 1)
    g = np.empty(d)
    while True:
        u = u0 * (1.0 - gen.random()) ** (-1.0 / alpha)
        r = u + c
        if gen.random() * cap > (r / u) ** (d - 1):
            continue
        nrm = 0.0
        for i in range(d):
            g[i] = gen.standard_normal()
            nrm += g[i] * g[i]
        nrm = math.sqrt(nrm)
        m = 0
        sq = 0
        for i in range(d):
            xi = int(math.floor(r * g[i] / nrm + 0.5))
            out[i] = xi
            if abs(xi) > m:
                m = abs(xi)
            sq += xi * xi
        if m <= core or m > R:
            continue
        if gen.random() <= (u / math.sqrt(sq)) ** s:
            return


@numba.njit(cache=True)
def draw_step(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, out):
    """One exact draw from D into ``out``."""
    if core_mass >= 1.0 or gen.random() < core_mass:
        j = draw_index(prob, alias, gen)
        for i in range(d):
            out[i] = offsets[j, i]
    else:
        _draw_tail(d, alpha, L, core, R, gen, out)


@numba.njit(cache=True)
def _draw_many(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, count):
    out = np.empty((count, d), dtype=np.int64)
    buf = np.empty(d, dtype=np.int64)
    for n in range(count):
        draw_step(offsets, prob, alias, core_mass, d, alpha, L, core, R, gen, buf)
        out[n, :] = buf
    return out


def kernel_args(dist: StepDistribution) -> tuple:
    """Positional arguments for :func:`draw_step` (minus ``gen``/``out``)."""
    return (
        dist.offsets.astype(np.int64),
        dist.alias_prob,
        dist.alias_index,
        float(dist.core_mass),
        dist.dimension,
        float(dist.alpha),
        dist.spread,
        dist.core_radius,
        dist.truncation_radius,
    )


def sample_step(dist: StepDistribution, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw steps from D; returns shape ``(d,)`` or ``(size, d)``."""
    out = _draw_many(*kernel_args(dist), rng, 1 if size is None else size)
    return out[0] if size is None else out
