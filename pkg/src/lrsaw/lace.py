"""Lace-expansion coefficients by inverting the walk-count recursion.

The coefficients ``pi_m(x)`` are defined by

    c_{n+1}(x) = (D * c_n)(x) + sum_{m=2}^{n+1} (pi_m * c_{n+1-m})(x),

which determines them uniquely given ``c_0 .. c_{max_n}``.  On the periodic
grid that holds the tables, convolutions are products of discrete Fourier
transforms, so the inversion is a scalar recursion per frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from lrsaw.enumeration import WalkCountTable, chat_series, fourier_sum
from lrsaw.stepdist import StepDistribution, one_minus_fourier


@dataclass(frozen=True, eq=False)
class LaceTable:
    dist_fingerprint: str
    dimension: int
    max_n: int
    grid_size: int
    pi_totals: np.ndarray
    moment2_by_n: np.ndarray | None = None
    pis: np.ndarray | None = field(default=None, repr=False)
    zc_used: float | None = None
    A0: float | None = None
    Xi: float | None = None
    Pi_moment2: float | None = None
    K_alpha: float | None = None

    @property
    def resolved(self) -> bool:
        return self.pis is not None

    def pi(self, n: int, x) -> float:
        if not 0 <= n <= self.max_n:
            raise IndexError(f"n={n} outside 0..{self.max_n}")
        if self.pis is None:
            raise ValueError("lace table holds totals only")
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        if np.abs(x).max(initial=0) > self.grid_size // 2:
            return 0.0
        return float(self.pis[n][tuple(x % self.grid_size)])

    def pi_fourier(self, k) -> np.ndarray:
        """``pi_hat_n(k)`` for ``n = 0..max_n`` (resolved tables only)."""
        k = np.asarray(k, dtype=np.float64)
        if not np.any(k):
            return self.pi_totals.copy()
        if self.pis is None:
            raise ValueError("lace table holds totals only; use a distribution-aware path")
        return np.array([fourier_sum(p, k) for p in self.pis])


def zero_laces(dimension: int, max_n: int) -> LaceTable:
    """Non-interacting coefficients, ``pi_n = 0`` for all ``n``."""
    return LaceTable(
        dist_fingerprint="",
        dimension=dimension,
        max_n=max_n,
        grid_size=1,
        pi_totals=np.zeros(max_n + 1),
        moment2_by_n=np.zeros(max_n + 1),
    )


def _sq_norm_grid(n_grid: int, d: int) -> np.ndarray:
    c = np.fft.fftfreq(n_grid, 1.0 / n_grid) ** 2
    out = np.zeros((n_grid,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n_grid
        out = out + c.reshape(shape)
    return out


def extract_pi(table: WalkCountTable, dist: StepDistribution) -> LaceTable:
    """Solve the recursion for ``pi_2 .. pi_{max_n}``."""
    if table.dist_fingerprint != dist.fingerprint:
        raise ValueError("walk-count table was built from a different step distribution")
    if table.max_n < 2:
        raise ValueError("need max_n >= 2")
    n_max = table.max_n
    c = table.totals
    pt = np.zeros(n_max + 1)
    for n in range(1, n_max):
        pt[n + 1] = c[n + 1] - c[n] - sum(pt[m] * c[n + 1 - m] for m in range(2, n + 1))
    if not table.resolved:
        return LaceTable(table.dist_fingerprint, table.dimension, n_max, table.grid_size, pt)

    shape = table.tables.shape[1:]
    ch = [sfft.rfftn(t) for t in table.tables]
    dh = sfft.rfftn(dist.on_grid(table.grid_size))
    ph = [np.zeros_like(dh) for _ in range(n_max + 1)]
    for n in range(1, n_max):
        acc = ch[n + 1] - dh * ch[n]
        for m in range(2, n + 1):
            acc -= ph[m] * ch[n + 1 - m]
        ph[n + 1] = acc
    pis = np.zeros_like(table.tables)
    for n in range(2, n_max + 1):
        pis[n] = sfft.irfftn(ph[n], s=shape)
    r2 = _sq_norm_grid(table.grid_size, table.dimension)
    m2 = np.array([float((p * r2).sum()) for p in pis])
    return LaceTable(
        table.dist_fingerprint, table.dimension, n_max, table.grid_size, pt, moment2_by_n=m2, pis=pis
    )


def reconstruct_counts(laces: LaceTable, dist: StepDistribution) -> np.ndarray:
    """Run the recursion forward from ``c_0 = delta``, ``c_1 = D``; returns all ``c_n(x)``."""
    if laces.pis is None:
        raise ValueError("reconstruction needs resolved coefficients")
    n_max, n_grid, d = laces.max_n, laces.grid_size, laces.dimension
    shape = (n_grid,) * d
    D = dist.on_grid(n_grid)

    def conv(a, b):
        return sfft.irfftn(sfft.rfftn(a) * sfft.rfftn(b), s=shape)

    cs = np.zeros((n_max + 1,) + shape)
    cs[0][(0,) * d] = 1.0
    cs[1] = D
    for n in range(1, n_max):
        acc = conv(D, cs[n])
        for m in range(2, n + 2):
            acc += conv(laces.pis[m], cs[n + 1 - m])
        cs[n + 1] = acc
    return cs


def reconstruction_residual(laces: LaceTable, table: WalkCountTable, dist: StepDistribution) -> float:
    """``max_{n,x} |c_n(x) - reconstructed c_n(x)|``."""
    return float(np.abs(reconstruct_counts(laces, dist) - table.tables).max())


def _bracket_terms(laces: LaceTable, zc: float) -> np.ndarray:
    n = np.arange(laces.max_n + 1)
    return np.where(n >= 2, n * laces.pi_totals * zc ** np.maximum(n - 1, 0), 0.0)


def A_at_zero(laces: LaceTable, zc: float) -> float:
    """``A(0) = 1 + sum_n n pi_hat_n(0) z_c^{n-1}``; ``Xi = 1/(z_c A(0))``."""
    if not zc > 0:
        raise ValueError("zc must be positive")
    a0 = 1.0 + float(_bracket_terms(laces, zc).sum())
    if not a0 > 0:
        raise ValueError(f"A(0) = {a0:.6g} is not positive; z_c estimate or truncation failed")
    return a0


def xi_constant(laces: LaceTable, zc: float) -> float:
    return 1.0 / (zc * A_at_zero(laces, zc))


def _k_alpha_value(laces: LaceTable, alpha: float, d: int, zc: float, v_alpha: float):
    a0 = A_at_zero(laces, zc)
    k = 1.0 / a0
    factor = 1.0
    if alpha > 2:
        if laces.moment2_by_n is None:
            raise ValueError("alpha > 2 needs second moments of pi (resolved lace table)")
        n = np.arange(laces.max_n + 1)
        m2 = float((laces.moment2_by_n * zc**n).sum())
        factor = 1.0 + m2 / (2 * d * zc * v_alpha)
        k *= factor
    return k, a0, factor


def compute_K_alpha(laces: LaceTable, dist: StepDistribution, zc: float, v_alpha: float):
    """Limit constant ``K_alpha`` with a truncation breakdown.

    Returns ``(K_alpha, terms)``; ``terms`` lists the summands of each
    truncated series, their last-term magnitudes and ``dK/dz_c``.
    """
    if not zc > 0:
        raise ValueError("zc must be positive")
    if not v_alpha > 0:
        raise ValueError("v_alpha must be positive")
    d, alpha = dist.dimension, dist.alpha
    k, a0, factor = _k_alpha_value(laces, alpha, d, zc, v_alpha)
    a_terms = _bracket_terms(laces, zc)
    terms = {
        "A0": a0,
        "A0_terms": a_terms[2:].tolist(),
        "A0_last_term": float(abs(a_terms[-1])),
        "moment_factor": factor,
    }
    if alpha > 2:
        n = np.arange(laces.max_n + 1)
        mt = laces.moment2_by_n * zc**n / (2 * d * zc * v_alpha)
        terms["moment_terms"] = mt[2:].tolist()
        terms["moment_last_term"] = float(abs(mt[-1]))
    h = 1e-6 * zc
    kp, _, _ = _k_alpha_value(laces, alpha, d, zc + h, v_alpha)
    km, _, _ = _k_alpha_value(laces, alpha, d, zc - h, v_alpha)
    terms["dK_dzc"] = (kp - km) / (2 * h)
    return k, terms


def with_constants(laces: LaceTable, dist: StepDistribution, zc: float, v_alpha: float) -> LaceTable:
    """Copy of ``laces`` with ``zc_used``, ``A0``, ``Xi``, ``Pi_moment2`` and ``K_alpha`` filled in."""
    k, terms = compute_K_alpha(laces, dist, zc, v_alpha)
    m2 = None
    if laces.moment2_by_n is not None:
        m2 = float((laces.moment2_by_n * zc ** np.arange(laces.max_n + 1)).sum())
    return replace(laces, zc_used=zc, A0=terms["A0"], Xi=1.0 / (zc * terms["A0"]), Pi_moment2=m2, K_alpha=k)


def _one_minus_cos_sum(arr: np.ndarray, k) -> float:
    """``sum_x f(x) (1 - cos k.x)`` on a grid in FFT ordering, free of cancellation."""
    n_grid = arr.shape[0]
    coords = np.fft.fftfreq(n_grid, 1.0 / n_grid)
    phase = np.zeros(arr.shape)
    for ax, kj in enumerate(np.asarray(k, dtype=np.float64)):
        shape = [1] * arr.ndim
        shape[ax] = n_grid
        phase = phase + (kj * coords).reshape(shape)
    return float((arr * (2.0 * np.sin(0.5 * phase) ** 2)).sum())


def pi_fourier_series(laces: LaceTable, dist: StepDistribution, k) -> np.ndarray:
    """``pi_hat_n(k)``, from the resolved table or else from twisted diagram totals."""
    if laces.resolved or not np.any(k):
        return laces.pi_fourier(k)
    ch = chat_series(dist, laces.max_n, k)
    dk = 1.0 - one_minus_fourier(dist, np.asarray(k, dtype=np.float64))
    ph = np.zeros(laces.max_n + 1)
    for n in range(1, laces.max_n):
        ph[n + 1] = ch[n + 1] - dk * ch[n] - sum(ph[m] * ch[n + 1 - m] for m in range(2, n + 1))
    return ph


def B_over_one_minus_Dhat(laces: LaceTable, dist: StepDistribution, zc: float, k) -> float:
    """``[1 - Dhat(k) + (Pi_hat(0) - Pi_hat(k)) / z_c] / (1 - Dhat(k))`` with truncated ``Pi``."""
    k = np.asarray(k, dtype=np.float64)
    if not np.any(k):
        raise ValueError("k must be nonzero")
    if not zc > 0:
        raise ValueError("zc must be positive")
    omd = one_minus_fourier(dist, k)
    if not np.any(laces.pi_totals):
        return 1.0
    z = zc ** np.arange(laces.max_n + 1)
    if laces.resolved:
        diff = sum(_one_minus_cos_sum(p, k) * zn for p, zn in zip(laces.pis, z))
    else:
        diff = float(((laces.pi_totals - pi_fourier_series(laces, dist, k)) * z).sum())
    return (omd + diff / zc) / omd


def pi_abs_sum(laces: LaceTable, zc: float) -> float:
    """``sum_n sum_x |pi_n(x)| z_c^n``, a size measure of the interaction."""
    if laces.pis is None:
        raise ValueError("needs resolved coefficients")
    per_n = np.abs(laces.pis).reshape(laces.max_n + 1, -1).sum(axis=1)
    return float((per_n * zc ** np.arange(laces.max_n + 1)).sum())
